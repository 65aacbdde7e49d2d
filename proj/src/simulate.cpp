#include "reachsos/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "flatpoly.hpp"

namespace reachsos {

namespace {

using detail::FlatPoly;

double sum_sq(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

bool all_finite(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

constexpr long kMaxRejectionDraws = 100000;

}  // namespace

std::vector<std::array<double, 2>> disturbance_box(const ReachSpec& spec) {
  const int m = spec.n_disturbances();
  std::vector<std::array<double, 2>> box(m, {0.0, 0.0});
  if (m == 0) return box;

  std::vector<double> pt(spec.universe->size(), 0.0);
  const int d0 = spec.universe->time_index() + 1;
  auto feasible = [&](int axis, double v) {
    pt[d0 + axis] = v;
    bool ok = true;
    for (const Polynomial& h : spec.disturbance_set)
      if (h.eval(pt) < 0.0) {
        ok = false;
        break;
      }
    pt[d0 + axis] = 0.0;
    return ok;
  };

  if (!feasible(0, 0.0))
    throw SimError("disturbance set does not contain d = 0");

  for (int axis = 0; axis < m; ++axis) {
    for (int dir : {+1, -1}) {
      double good = 0.0;
      double bad = 0.0;
      double step = 1.0;
      bool bracketed = false;
      for (int it = 0; it < 80; ++it) {
        const double cand = dir * step;
        if (feasible(axis, cand)) {
          good = cand;
          step *= 2.0;
        } else {
          bad = cand;
          bracketed = true;
          break;
        }
      }
      if (!bracketed)
        throw SimError("disturbance set appears unbounded along '" +
                       spec.universe->name(d0 + axis) + "'");
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (good + bad);
        (feasible(axis, mid) ? good : bad) = mid;
      }
      // good is the last feasible point, so box vertices on this axis still
      // satisfy the h_r within roundoff.
      (dir > 0 ? box[axis][1] : box[axis][0]) = good;
    }
  }
  return box;
}

const std::vector<double>& DisturbanceSignal::value_at(double t) const {
  if (values.empty()) throw SimError("disturbance signal has no segments");
  const int m = segments();
  int idx = 0;
  if (horizon > 0.0 && t > 0.0)
    idx = std::min(m - 1, int(t / horizon * m));
  return values[idx];
}

DisturbanceSignal sample_disturbance(const ReachSpec& spec, int segments,
                                     Rng& rng) {
  if (segments < 1) throw SimError("segment count must be at least 1");
  const int m = spec.n_disturbances();
  DisturbanceSignal sig;
  sig.horizon = spec.horizon;
  sig.values.assign(segments, std::vector<double>(m));
  if (m == 0) return sig;

  const auto box = disturbance_box(spec);
  std::vector<double> pt(spec.universe->size(), 0.0);
  const int d0 = spec.universe->time_index() + 1;
  long draws = 0;
  for (int s = 0; s < segments; ++s) {
    for (;;) {
      if (++draws > kMaxRejectionDraws)
        throw SimError(
            "disturbance sampling hit the rejection limit (1e5 draws); the "
            "disturbance set is degenerate relative to its bounding box");
      for (int r = 0; r < m; ++r)
        pt[d0 + r] = rng.uniform(box[r][0], box[r][1]);
      bool ok = true;
      for (const Polynomial& h : spec.disturbance_set)
        if (h.eval(pt) < 0.0) {
          ok = false;
          break;
        }
      if (ok) break;
    }
    for (int r = 0; r < m; ++r) sig.values[s][r] = pt[d0 + r];
  }
  return sig;
}

std::vector<DisturbanceSignal> extreme_signals(const ReachSpec& spec) {
  const int m = spec.n_disturbances();
  std::vector<DisturbanceSignal> out;
  if (m == 0) {
    DisturbanceSignal s;
    s.horizon = spec.horizon;
    s.values = {{}};
    out.push_back(std::move(s));
    return out;
  }
  if (m > 20) throw SimError("too many disturbance variables for vertex enumeration");

  const auto box = disturbance_box(spec);
  std::vector<double> pt(spec.universe->size(), 0.0);
  const int d0 = spec.universe->time_index() + 1;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<double> v(m);
    for (int r = 0; r < m; ++r)
      v[r] = ((mask >> r) & 1) ? box[r][1] : box[r][0];
    for (int r = 0; r < m; ++r) pt[d0 + r] = v[r];
    bool ok = true;  // a vertex can fall outside a non-box set
    for (const Polynomial& h : spec.disturbance_set)
      if (h.eval(pt) < -1e-12) {
        ok = false;
        break;
      }
    if (!ok) continue;
    DisturbanceSignal s;
    s.horizon = spec.horizon;
    s.values = {std::move(v)};
    out.push_back(std::move(s));
  }
  return out;
}

Trajectory integrate(const ReachSpec& spec, const std::vector<double>& x0,
                     const DisturbanceSignal& signal, double dt, bool euler) {
  const int n = spec.n_states();
  const int m = spec.n_disturbances();
  const double T = spec.horizon;
  if (int(x0.size()) != n)
    throw SimError("start point has " + std::to_string(x0.size()) +
                   " coordinates, expected " + std::to_string(n));
  if (!(dt > 0.0)) throw SimError("dt must be positive");
  if (dt > T / 100.0 * (1.0 + 1e-12))
    throw SimError("dt must be at most T/100 = " + std::to_string(T / 100.0));
  if (signal.segments() < 1)
    throw SimError("disturbance signal has no segments");
  if (std::abs(signal.horizon - T) > 1e-9 * std::max(1.0, T))
    throw SimError("signal horizon does not match the specification");
  for (const auto& seg : signal.values)
    if (int(seg.size()) != m)
      throw SimError("signal segment has the wrong disturbance arity");
  if (sum_sq(x0) > spec.ball_R * (1.0 + 1e-12))
    throw SimError("start point lies outside B(0,R)");

  std::vector<FlatPoly> f;
  f.reserve(n);
  for (const Polynomial& fi : spec.dynamics) f.push_back(FlatPoly::from(fi));

  std::vector<double> pt(spec.universe->size(), 0.0);
  const int ti = spec.universe->time_index();
  auto deriv = [&](const std::vector<double>& xs, double t,
                   const std::vector<double>& d, std::vector<double>& out) {
    for (int i = 0; i < n; ++i) pt[i] = xs[i];
    pt[ti] = t;
    for (int r = 0; r < m; ++r) pt[ti + 1 + r] = d[r];
    for (int i = 0; i < n; ++i) out[i] = f[i].eval(pt);
  };

  Trajectory traj;
  traj.signal = signal;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  std::vector<double> x = x0, xn(n), xt(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n);
  const int M = signal.segments();
  for (int s = 0; s < M && !traj.left_ball; ++s) {
    // Segment boundaries are forced step endpoints so the discretization
    // never straddles a discontinuity of d.
    const double ta = T * double(s) / M;
    const double tb = T * double(s + 1) / M;
    const std::vector<double>& d = signal.values[s];
    const int nstep = std::max(1, int(std::ceil((tb - ta) / dt - 1e-9)));
    const double h = (tb - ta) / nstep;
    for (int k = 0; k < nstep; ++k) {
      const double t = ta + h * k;
      const double tn = (k + 1 == nstep) ? tb : ta + h * (k + 1);
      deriv(x, t, d, k1);
      if (euler) {
        for (int i = 0; i < n; ++i) xn[i] = x[i] + h * k1[i];
      } else {
        for (int i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * h * k1[i];
        deriv(xt, t + 0.5 * h, d, k2);
        for (int i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * h * k2[i];
        deriv(xt, t + 0.5 * h, d, k3);
        for (int i = 0; i < n; ++i) xt[i] = x[i] + h * k3[i];
        deriv(xt, tn, d, k4);
        for (int i = 0; i < n; ++i)
          xn[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
      x = xn;
      if (!all_finite(x)) {
        // Blow-up inside the step; report the stamp it failed to reach.
        traj.left_ball = true;
        traj.exit_time = tn;
        break;
      }
      if (sum_sq(x) > spec.ball_R) {
        traj.left_ball = true;
        traj.exit_time = tn;
        traj.times.push_back(tn);  // keep the exiting state for reporting
        traj.states.push_back(x);
        break;
      }
      traj.times.push_back(tn);
      traj.states.push_back(x);
    }
  }
  return traj;
}

nlohmann::ordered_json ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["signals_per_sample"] = signals_per_sample;
  j["extreme_signals"] = extreme_count;
  j["segments"] = segments;
  j["dt"] = dt;
  j["seed"] = seed;
  j["empty_set"] = empty_set;
  j["pass"] = pass;
  j["violations"] = nlohmann::ordered_json::array();
  for (const Violation& v : violations) {
    nlohmann::ordered_json jv;
    jv["x0"] = v.x0;
    jv["signal_index"] = v.signal_index;
    jv["kind"] = v.kind;
    jv["time"] = v.time;
    j["violations"].push_back(std::move(jv));
  }
  return j;
}

ValidationReport validate_inner(const Certificate& cert, const ReachSpec& spec,
                                int n_samples, int signals_per_sample,
                                int segments, double dt, uint64_t seed) {
  if (cert.spec_fingerprint != spec.fingerprint())
    throw SimError(
        "certificate does not match the specification (fingerprint mismatch)");
  if (n_samples < 1) throw SimError("need at least one sample");
  if (signals_per_sample < 0) throw SimError("negative signal count");

  const int n = spec.n_states();
  const double R = cert.ball_R;
  const double rad = std::sqrt(R);
  const double margin = 1e-6 * (1.0 + cert.psi_t0.max_abs_coefficient());
  constexpr double kViolTol = 1e-6;

  FlatPoly psi0 = FlatPoly::from(cert.psi_t0);
  std::vector<FlatPoly> g, l;
  for (const Polynomial& gi : spec.state_constraints)
    g.push_back(FlatPoly::from(gi));
  for (const Polynomial& lj : spec.target) l.push_back(FlatPoly::from(lj));

  std::vector<double> pt(spec.universe->size(), 0.0);
  const int ti = spec.universe->time_index();
  auto gmax = [&](const std::vector<double>& xs, double t) {
    for (int i = 0; i < n; ++i) pt[i] = xs[i];
    pt[ti] = t;
    double worst = -std::numeric_limits<double>::infinity();
    for (const FlatPoly& gi : g) worst = std::max(worst, gi.eval(pt));
    return worst;
  };
  auto lmax = [&](const std::vector<double>& xs) {
    for (int i = 0; i < n; ++i) pt[i] = xs[i];
    pt[ti] = 0.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (const FlatPoly& lj : l) worst = std::max(worst, lj.eval(pt));
    return worst;
  };

  ValidationReport report;
  report.signals_per_sample = signals_per_sample;
  report.segments = segments;
  report.dt = dt;
  report.seed = seed;
  const auto extremes = extreme_signals(spec);
  report.extreme_count = int(extremes.size());

  std::vector<double> x0(n), probe(spec.universe->size(), 0.0);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng = Rng::stream(seed, uint64_t(i));
    bool found = false;
    for (long a = 0; a < kMaxRejectionDraws; ++a) {
      double r2 = 0.0;
      for (int j = 0; j < n; ++j) {
        x0[j] = rng.uniform(-rad, rad);
        r2 += x0[j] * x0[j];
      }
      if (r2 > R) continue;
      for (int j = 0; j < n; ++j) probe[j] = x0[j];
      if (psi0.eval(probe) <= -margin) {
        found = true;
        break;
      }
    }
    if (!found) {
      if (i == 0) {
        // No point of B clears the margin: the certified inner set is empty
        // as far as sampling can tell. Reported, and vacuously passing.
        report.empty_set = true;
        break;
      }
      throw SimError("start sampling hit the rejection limit mid-run");
    }
    report.samples++;

    std::vector<DisturbanceSignal> sigs = extremes;
    for (int sgi = 0; sgi < signals_per_sample; ++sgi)
      sigs.push_back(sample_disturbance(spec, segments, rng));

    for (int si = 0; si < int(sigs.size()); ++si) {
      const Trajectory tr = integrate(spec, x0, sigs[si], dt);
      // The last stamp of an aborted trajectory is the exit record; it lies
      // outside B and is judged as left_B, not against the g_i.
      size_t scan = tr.times.size();
      if (tr.left_ball && !tr.times.empty() &&
          tr.times.back() == tr.exit_time)
        scan--;
      bool violated = false;
      for (size_t kk = 0; kk < scan; ++kk) {
        if (gmax(tr.states[kk], tr.times[kk]) > kViolTol) {
          report.violations.push_back(
              {x0, si, "left_X", tr.times[kk]});
          violated = true;
          break;
        }
      }
      if (violated) continue;
      if (tr.left_ball) {
        report.violations.push_back({x0, si, "left_B", tr.exit_time});
        continue;
      }
      if (lmax(tr.states.back()) > kViolTol)
        report.violations.push_back({x0, si, "missed_TR", spec.horizon});
    }
  }
  report.pass = report.violations.empty();
  return report;
}

}  // namespace reachsos
