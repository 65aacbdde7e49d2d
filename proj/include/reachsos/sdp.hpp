#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reachsos/soscompile.hpp"

namespace reachsos {

struct SdpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SolveStatus {
  kOptimal,
  kPrimalInfeasible,
  kDualInfeasible,
  kMaxIters,
  kNumericalFailure,
};

std::string to_string(SolveStatus s);

struct IterStat {
  int iter = 0;
  double mu = 0.0;
  double p_res = 0.0;
  double d_res = 0.0;
  double gap = 0.0;  // relative duality gap
  double alpha_p = 0.0;
  double alpha_d = 0.0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
};

struct SdpSolveOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iters = 200;
  bool verbose = false;          // "iter mu p_res d_res gap" lines to stderr
  double time_budget_sec = 0.0;  // 0 = unlimited; exceeded -> kMaxIters
};

// Primal-dual pair reported in the original (unequilibrated) row scaling.
// Blocks are dense symmetric matrices stored row-major.
struct SdpSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  std::vector<double> free_values;               // w
  std::vector<std::vector<double>> psd_blocks;   // Q_j
  std::vector<double> dual_values;               // y, one per row
  std::vector<std::vector<double>> dual_blocks;  // S_j
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double p_res = 0.0;    // ||b - A(x)||_inf / (1 + ||b||_inf)
  double d_res = 0.0;    // dual analogue
  double rel_gap = 0.0;  // |pobj-dobj| / (1+|pobj|+|dobj|)
  double mu = 0.0;       // <Q,S>/dim
  int iterations = 0;
  std::vector<IterStat> trace;
};

// Dense primal-dual interior-point method with Nesterov-Todd scaling and a
// Mehrotra predictor-corrector step. Deterministic: fixed initial point
// (Q = S = identity, w = 0, y = 0), no randomization.
SdpSolution solve(const SdpInstance& inst, const SdpSolveOptions& opts = {});

// SDPA sparse ".dat-s" text. Free variables are encoded as a trailing pair
// of diagonal blocks (w = w+ - w-), announced in a header comment that
// import_sdpa recognizes to undo the split.
std::string export_sdpa(const SdpInstance& inst);

// Inverse of export_sdpa up to block labels. Also accepts foreign files:
// diagonal blocks without the free-pair annotation become runs of 1x1 PSD
// blocks remembering their origin, so export after import reproduces the
// file's structure. Parse errors carry the 1-based line number.
SdpInstance import_sdpa(const std::string& text);

}  // namespace reachsos
