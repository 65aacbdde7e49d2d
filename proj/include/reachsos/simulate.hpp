#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachsos/certify.hpp"
#include "reachsos/model.hpp"
#include "reachsos/rng.hpp"

namespace reachsos {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis-aligned bounding box of the disturbance set, one [lo, hi] pair per
// disturbance variable, found by bisecting each axis through d = 0 (which
// must be feasible). Exact for interval products; for other 0-centered sets
// it bounds the axis sections and the samplers reject the excess.
std::vector<std::array<double, 2>> disturbance_box(const ReachSpec& spec);

// Piecewise-constant d over a uniform partition of [0, horizon].
struct DisturbanceSignal {
  double horizon = 0.0;
  std::vector<std::vector<double>> values;  // one entry per segment

  int segments() const { return int(values.size()); }
  const std::vector<double>& value_at(double t) const;
};

// One random signal: each segment drawn uniformly from the disturbance box
// with rejection on all h_r >= 0. Fails after 1e5 rejected draws.
DisturbanceSignal sample_disturbance(const ReachSpec& spec, int segments,
                                     Rng& rng);

// The 2^m constant signals holding every component at a box vertex for the
// whole horizon; for dynamics affine in d the adversarial worst case is
// among them. No disturbance variables: the single empty signal.
std::vector<DisturbanceSignal> extreme_signals(const ReachSpec& spec);

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  DisturbanceSignal signal;
  bool left_ball = false;   // aborted: exited B(0,R) or became non-finite
  double exit_time = 0.0;   // meaningful when left_ball
};

// Classical RK4 (or explicit Euler with euler=true) with d held constant per
// segment; segment boundaries are forced step endpoints. Stops recording as
// soon as the state leaves B(0,R): beyond the ball the model dynamics no
// longer stand in for the extended system the certificates reason about.
Trajectory integrate(const ReachSpec& spec, const std::vector<double>& x0,
                     const DisturbanceSignal& signal, double dt,
                     bool euler = false);

struct Violation {
  std::vector<double> x0;
  int signal_index = 0;  // extreme signals first, then sampled ones
  std::string kind;      // "left_X", "missed_TR", "left_B"
  double time = 0.0;
};

struct ValidationReport {
  int samples = 0;
  int signals_per_sample = 0;
  int extreme_count = 0;
  int segments = 0;
  double dt = 0.0;
  uint64_t seed = 0;
  bool empty_set = false;
  bool pass = false;
  std::vector<Violation> violations;

  nlohmann::ordered_json to_json() const;
};

// Monte-Carlo falsification of an accepted certificate: samples start points
// from {psi(x,0) <= -margin} inside B, integrates the extreme signals plus
// signals_per_sample random ones for each, and records every trajectory that
// leaves X, misses the target at the horizon, or exits the ball. The margin
// (1e-6 * psi's coefficient scale) keeps boundary roundoff out of the
// sample; an inner set the sampler cannot hit at all is reported empty and
// passes vacuously. Deterministic: per-sample streams from (seed, index).
ValidationReport validate_inner(const Certificate& cert, const ReachSpec& spec,
                                int n_samples, int signals_per_sample,
                                int segments, double dt, uint64_t seed);

}  // namespace reachsos
