#pragma once

#include <string>
#include <vector>

#include "reachsos/model.hpp"
#include "reachsos/moments.hpp"
#include "reachsos/poly.hpp"

namespace reachsos {

// The compiler works in an affinely rescaled frame: states are shrunk so the
// working ball becomes the unit ball and time is stretched to [0,1]. Monomial
// Gram matrices over the raw coordinates are numerically hopeless once R or T
// strays from 1, and nothing downstream needs the raw frame until a psi is
// handed back to the caller.
struct ScaledProblem {
  ReachSpec scaled;      // unit ball, unit horizon, same universe
  double x_scale = 1.0;  // x = x_scale * x~, x_scale = sqrt(ball_R)
  double t_scale = 1.0;  // t = t_scale * t~, t_scale = horizon

  // Map a polynomial in scaled variables back to original units
  // (substitutes x~ -> x/x_scale, t~ -> t/t_scale).
  Polynomial unscale(const Polynomial& p) const;
};

ScaledProblem scale_spec(const ReachSpec& spec);

// All monomials of total degree <= degree in the given universe variables,
// graded-lex order, as full-length exponent vectors.
std::vector<ExpVec> monomial_basis(const VarUniverse& u,
                                   const std::vector<int>& vars, int degree);

struct MultiplierSlot {
  std::string label;          // "<identity>.sos" / ".ball" / ".time" / ".distR"
  Polynomial domain;          // 1, ball poly, t(1-t), or h_r
  int degree = 0;             // even degree of the SOS multiplier
  std::vector<ExpVec> basis;  // Gram basis: monomials up to degree/2
};

// One polynomial identity "lhs(w) = sum_slot z'Qz * domain" to be matched
// coefficient-by-coefficient. The left side is affine in psi's coefficient
// vector w: lhs(w) = sum_j w_j * lhs_w[j] + lhs_const.
struct SosConstraint {
  std::string label;  // "lie", "state0", "state1", ..., "target0", ...
  std::vector<int> vars;
  int identity_degree = 0;
  std::vector<Polynomial> lhs_w;
  Polynomial lhs_const;
  std::vector<MultiplierSlot> slots;
};

struct SosProgram {
  ScaledProblem scaled;
  SolveConfig cfg;
  std::vector<ExpVec> psi_basis;  // monomials in (x,t), degree <= k, grlex
  std::vector<SosConstraint> constraints;
};

// Emits one identity for -L(psi) over (x,t,d), one per state constraint for
// psi - g_i over (x,t), and one per target polynomial for psi(.,1) - l_j
// over x. Multiplier degrees follow cfg.policy; kExplicit takes
// [domain degree, disturbance degree] and leaves whatever monomials the
// slots cannot reach as forced-zero rows.
SosProgram build_sos_program(const ReachSpec& spec, const SolveConfig& cfg);

// --- standard-form SDP container -------------------------------------------
//
// Primal:  min c'w + sum_j <C_j, Q_j>
//          s.t. per row i:  sum_j row.w * w + sum <A_ij, Q_j> = rhs_i
//               Q_j psd.
// Matrix entries are stored upper-triangular (i <= j); the inner product
// <A, Q> counts off-diagonal entries twice. Compiled instances have C = 0;
// the cost entries exist so imported problem files fit the same container.

struct SdpEntry {
  int block = 0;
  int i = 0;
  int j = 0;  // i <= j
  double v = 0.0;
};

struct SdpBlock {
  std::string label;
  int dim = 0;
  // >= 0 when this 1x1 block is one diagonal entry of an imported diagonal
  // block; blocks sharing a group id are re-merged on export.
  int diag_group = -1;
};

struct SdpRow {
  std::vector<std::pair<int, double>> w;  // (free var index, coefficient)
  std::vector<SdpEntry> mats;
  double rhs = 0.0;
};

struct SdpInstance {
  std::vector<double> c;  // objective over free vars
  std::vector<SdpBlock> blocks;
  std::vector<SdpEntry> cost;  // <C_j, Q_j> terms; empty for compiled programs
  std::vector<SdpRow> rows;

  int n_free() const { return int(c.size()); }
};

// Coefficient matching. Row order is (constraint index, monomial grlex);
// every monomial reachable by either side of an identity gets exactly one
// row. The objective applies the moment vector through the t=0 restriction,
// so psi monomials containing t carry weight 0.
SdpInstance compile_to_sdp(const SosProgram& prog,
                           const MomentVector& objective);

}  // namespace reachsos
