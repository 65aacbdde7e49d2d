#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachsos/model.hpp"
#include "reachsos/sdp.hpp"
#include "reachsos/soscompile.hpp"

namespace reachsos {

struct CertifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Acceptance thresholds; strict mode divides both by 100.
inline constexpr double kResidualTol = 1e-6;
inline constexpr double kEigTol = 1e-7;

struct GramBlock {
  std::string label;          // "lie.sos", "state0.ball", ...
  std::vector<ExpVec> basis;  // scaled-frame monomials, grlex
  int dim = 0;
  std::vector<double> entries;  // row-major dim*dim, symmetric
  double min_eig = 0.0;
};

struct IdentityResidual {
  std::string label;           // "lie", "state0", "target0", ...
  double residual = 0.0;       // max |coefficient| of lhs - rhs
  std::string worst_monomial;  // where the mismatch peaks; "" when exact
};

// Everything needed to re-verify and query one solved instance. psi is in
// original units; the Gram data and the residuals live in the scaled frame
// recorded by x_scale/t_scale, because that is the frame the identities were
// matched (and are re-checked) in.
struct Certificate {
  explicit Certificate(UniversePtr u)
      : psi(u), psi_scaled(u), psi_t0(u) {}

  std::string spec_name;
  std::string spec_fingerprint;
  SolveConfig config;
  double x_scale = 1.0;
  double t_scale = 1.0;
  double ball_R = 0.0;
  double horizon = 0.0;
  double objective_value = 0.0;  // d*_k
  Polynomial psi;                // original units, over (x,t)
  Polynomial psi_scaled;         // scaled frame; coefficient source for checks
  std::vector<GramBlock> blocks;
  std::vector<IdentityResidual> residuals;
  double residual_tol = kResidualTol;
  double eig_tol = kEigTol;
  std::string solver_status;
  int solver_iterations = 0;
  double solver_p_res = 0.0;
  double solver_d_res = 0.0;
  double solver_rel_gap = 0.0;
  double solver_mu = 0.0;

  // Derived, not serialized. build_certificate and from_json keep these in
  // sync; call refresh_derived() after setting psi by hand.
  Polynomial psi_t0;          // psi with t = 0, original units
  double boundary_tol = 0.0;  // 1e-9 * (1 + |psi(.,0)| coefficient scale)
  void refresh_derived();

  const UniversePtr& universe() const { return psi.universe(); }
  int n_states() const { return universe()->n_states(); }

  nlohmann::ordered_json to_json() const;
  static Certificate from_json(const nlohmann::json& j);
};

// Reconstructs psi and the multipliers from the solution's Gram matrices,
// recomputes every identity residual and Gram eigenvalue by polynomial
// algebra, and rejects the solve unless all of them clear the thresholds
// (cfg.strict tightens both 100x). Requires solution.status == optimal.
Certificate build_certificate(const ReachSpec& spec, const SolveConfig& cfg,
                              const SdpInstance& inst, const SdpSolution& sol);

// Residuals and eigenvalues recomputed from the certificate's own stored
// data (psi_scaled coefficients + Gram entries); independent of any solver
// state. Tests compare these against the stored diagnostics.
struct Reverification {
  std::vector<IdentityResidual> residuals;
  std::vector<double> min_eigs;  // one per stored block
};
Reverification reverify(const Certificate& cert, const ReachSpec& spec);

enum class Membership { kInside, kOutside, kBoundary };
std::string to_string(Membership m);

// Classifies x against {psi(.,0) <= 0} intersected with the closed ball:
// points outside B(0,R) are outside no matter what psi says; within the
// ball, psi decides, with a +-boundary_tol band reported as boundary.
Membership membership(const Certificate& cert, const std::vector<double>& x);

// Axes and pinned values for viewing a >2-state set in a coordinate plane;
// fixed must list one value per state (axis entries are ignored).
struct SliceSpec {
  int axis_x = 0;
  int axis_y = 1;
  std::vector<double> fixed;
};

struct ContourCurve {
  std::vector<std::array<double, 2>> points;
  bool closed = false;
};

struct LevelSetContour {
  std::vector<ContourCurve> curves;
  std::string to_csv() const;  // "curve_id,x,y" rows
};

// Marching-squares extraction of {psi(x,0) = 0} inside B(0,R) on a
// resolution x resolution cell grid over the ball's bounding square, with
// linear interpolation on cell edges and center-sign disambiguation of
// saddle cells. Segments leaving the ball are dropped, so a zero set
// crossing the ball boundary comes back as open polylines.
LevelSetContour contour2d(const Certificate& cert, int resolution);
LevelSetContour contour2d(const Certificate& cert, int resolution,
                          const SliceSpec& slice);

}  // namespace reachsos
