#pragma once

#include <nlohmann/json.hpp>

#include "reachsos/poly.hpp"

namespace reachsos {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One reachability problem instance. Sign conventions follow the usual
// level-set reading and are fixed throughout:
//   target TR          = {x : all target[j] <= 0}
//   state set X_t      = {x : all state_constraints[i](x,t) <= 0}
//   disturbance set D  = {d : all disturbance_set[r] >= 0}
//   ball B             = {x : ball_R - sum x_i^2 >= 0}
// The loader never auto-negates anything.
struct ReachSpec {
  std::string name;
  UniversePtr universe;
  std::vector<Polynomial> dynamics;           // f_i over (x,d), one per state
  std::vector<Polynomial> target;             // l_j over x
  std::vector<Polynomial> state_constraints;  // g_i over (x,t)
  std::vector<Polynomial> disturbance_set;    // h_r over d
  double horizon = 0.0;                       // T
  double ball_R = 0.0;                        // R

  int n_states() const { return universe->n_states(); }
  int n_disturbances() const { return universe->n_disturbances(); }

  // ball_R - sum x_i^2
  Polynomial ball_poly() const;

  // Canonical JSON document (fixed key order, canonical polynomial strings);
  // load_spec of this document reproduces the value exactly.
  nlohmann::ordered_json to_json() const;

  // SHA-256 of the canonical JSON; embedded in certificates and manifests so
  // downstream artifacts can be matched to the spec that produced them.
  std::string fingerprint() const;
};

ReachSpec load_spec(const nlohmann::json& doc, const std::string& source_name);
ReachSpec load_spec_file(const std::string& path);

enum class DegreePolicy { kAuto, kExplicit };

// Knobs for one SOS solve.
struct SolveConfig {
  int psi_degree = 6;  // k: total degree of psi in (x,t)
  DegreePolicy policy = DegreePolicy::kAuto;
  // Explicit mode: [domain multiplier degree, disturbance multiplier degree].
  std::vector<int> explicit_degrees;
  // Solve targets for the pipeline. The gap target matches the certificate
  // acceptance granularity (residual threshold 1e-6); compiled instances are
  // degenerate enough that machine precision cannot always support 1e-8.
  double feas_tol = 1e-8;
  double gap_tol = 1e-6;
  int max_iters = 200;
  uint64_t seed = 0;
  bool strict = false;           // tightens certificate thresholds 100x
  double time_budget_sec = 0.0;  // 0 = unlimited

  nlohmann::ordered_json to_json() const;
  static SolveConfig from_json(const nlohmann::json& j);
};

// Validates psi_degree against the spec (k must cover every target and state
// polynomial's degree) and tolerance positivity. Throws ModelError.
void validate_config(const SolveConfig& cfg, const ReachSpec& spec);

struct GeometryViolation {
  std::string kind;  // "containment" or "boundary_contact"
  std::vector<double> x;
  double t;
};

struct GeometryReport {
  bool ok = true;
  int samples = 0;
  std::vector<GeometryViolation> violations;
};

// Sampled well-posedness check for B(0,R): (a) X_t must lie inside the ball
// (points with all g_i <= 0 but outside B are containment violations), and
// (b) the ball boundary must stay clear of the X_t boundary (|max g_i| within
// 1e-6 at a sampled boundary point is flagged as contact). Sampling-based by
// design: the source conditions are assumptions, and this check only has to
// catch misconfigured specs, not certify geometry.
GeometryReport check_geometry(const ReachSpec& spec, int samples,
                              uint64_t seed);

}  // namespace reachsos
