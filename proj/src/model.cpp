#include "reachsos/model.hpp"

#include <cmath>

#include "reachsos/rng.hpp"
#include "reachsos/util.hpp"

namespace reachsos {

Polynomial ReachSpec::ball_poly() const {
  Polynomial p = Polynomial::constant(universe, ball_R);
  for (int i = 0; i < n_states(); ++i) {
    auto xi = Polynomial::variable(universe, universe->name(i));
    p = p - xi * xi;
  }
  return p;
}

nlohmann::ordered_json ReachSpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["state_vars"] = nlohmann::ordered_json::array();
  for (int i = 0; i < n_states(); ++i) j["state_vars"].push_back(universe->name(i));
  j["disturbance_vars"] = nlohmann::ordered_json::array();
  for (int i : universe->disturbance_indices())
    j["disturbance_vars"].push_back(universe->name(i));
  j["horizon"] = horizon;
  auto strs = [](const std::vector<Polynomial>& ps) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& p : ps) a.push_back(p.str());
    return a;
  };
  j["dynamics"] = strs(dynamics);
  j["target"] = strs(target);
  j["state_constraints"] = strs(state_constraints);
  j["disturbance_set"] = strs(disturbance_set);
  j["ball_R"] = ball_R;
  return j;
}

std::string ReachSpec::fingerprint() const { return sha256_hex(to_json().dump()); }

namespace {

[[noreturn]] void schema_error(const std::string& source, const std::string& path,
                               const std::string& what) {
  throw ModelError(source + ": schema error at " + path + ": " + what);
}

std::vector<std::string> string_list(const nlohmann::json& doc,
                                     const std::string& source,
                                     const std::string& key) {
  if (!doc.contains(key)) schema_error(source, "/" + key, "missing field");
  const auto& v = doc.at(key);
  if (!v.is_array()) schema_error(source, "/" + key, "expected array of strings");
  std::vector<std::string> out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string())
      schema_error(source, "/" + key + "/" + std::to_string(i),
                   "expected string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

double number_field(const nlohmann::json& doc, const std::string& source,
                    const std::string& key) {
  if (!doc.contains(key)) schema_error(source, "/" + key, "missing field");
  if (!doc.at(key).is_number())
    schema_error(source, "/" + key, "expected number");
  return doc.at(key).get<double>();
}

std::vector<Polynomial> parse_list(const std::vector<std::string>& texts,
                                   UniversePtr u, const std::string& source,
                                   const std::string& key,
                                   const std::vector<int>& allowed_vars) {
  std::vector<Polynomial> out;
  for (size_t i = 0; i < texts.size(); ++i) {
    Polynomial p = [&] {
      try {
        return parse_poly(texts[i], u);
      } catch (const PolyError& e) {
        schema_error(source, "/" + key + "/" + std::to_string(i), e.what());
      }
    }();
    if (!p.uses_only(allowed_vars))
      schema_error(source, "/" + key + "/" + std::to_string(i),
                   "polynomial mentions variables outside its allowed set");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

ReachSpec load_spec(const nlohmann::json& doc, const std::string& source) {
  if (!doc.is_object()) schema_error(source, "/", "expected object");
  ReachSpec spec;
  if (!doc.contains("name")) schema_error(source, "/name", "missing field");
  if (!doc.at("name").is_string()) schema_error(source, "/name", "expected string");
  spec.name = doc.at("name").get<std::string>();

  auto states = string_list(doc, source, "state_vars");
  auto dists = string_list(doc, source, "disturbance_vars");
  if (states.empty()) schema_error(source, "/state_vars", "need at least one state");
  try {
    spec.universe = std::make_shared<VarUniverse>(states, "t", dists);
  } catch (const PolyError& e) {
    schema_error(source, "/state_vars", e.what());
  }
  const auto& u = spec.universe;

  spec.horizon = number_field(doc, source, "horizon");
  if (!(spec.horizon > 0)) schema_error(source, "/horizon", "must be > 0");
  spec.ball_R = number_field(doc, source, "ball_R");
  if (!(spec.ball_R > 0)) schema_error(source, "/ball_R", "must be > 0");

  std::vector<int> x_only = u->state_indices();
  std::vector<int> xt = x_only;
  xt.push_back(u->time_index());
  std::vector<int> d_only = u->disturbance_indices();
  std::vector<int> xtd = xt;
  for (int i : d_only) xtd.push_back(i);

  // Dynamics may mention t in principle; the compiler treats them over
  // (x,t,d) uniformly.
  spec.dynamics = parse_list(string_list(doc, source, "dynamics"), u, source,
                             "dynamics", xtd);
  if (int(spec.dynamics.size()) != u->n_states())
    schema_error(source, "/dynamics",
                 "expected one entry per state variable (" +
                     std::to_string(u->n_states()) + ")");

  spec.target = parse_list(string_list(doc, source, "target"), u, source,
                           "target", x_only);
  if (spec.target.empty()) schema_error(source, "/target", "must be non-empty");

  spec.state_constraints = parse_list(
      string_list(doc, source, "state_constraints"), u, source,
      "state_constraints", xt);
  if (spec.state_constraints.empty())
    schema_error(source, "/state_constraints", "must be non-empty");

  spec.disturbance_set = parse_list(string_list(doc, source, "disturbance_set"),
                                    u, source, "disturbance_set", d_only);
  if (spec.disturbance_set.empty() != dists.empty())
    schema_error(source, "/disturbance_set",
                 "must be non-empty exactly when disturbance_vars is");

  return spec;
}

ReachSpec load_spec_file(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(path + ": " + e.what());
  }
  return load_spec(doc, path);
}

nlohmann::ordered_json SolveConfig::to_json() const {
  nlohmann::ordered_json j;
  j["psi_degree"] = psi_degree;
  j["policy"] = policy == DegreePolicy::kAuto ? "auto" : "explicit";
  j["explicit_degrees"] = explicit_degrees;
  j["feas_tol"] = feas_tol;
  j["gap_tol"] = gap_tol;
  j["max_iters"] = max_iters;
  j["seed"] = seed;
  j["strict"] = strict;
  j["time_budget_sec"] = time_budget_sec;
  return j;
}

SolveConfig SolveConfig::from_json(const nlohmann::json& j) {
  SolveConfig c;
  c.psi_degree = j.at("psi_degree").get<int>();
  c.policy = j.at("policy").get<std::string>() == "explicit"
                 ? DegreePolicy::kExplicit
                 : DegreePolicy::kAuto;
  c.explicit_degrees = j.value("explicit_degrees", std::vector<int>{});
  c.feas_tol = j.value("feas_tol", 1e-8);
  c.gap_tol = j.value("gap_tol", 1e-6);
  c.max_iters = j.value("max_iters", 200);
  c.seed = j.value("seed", uint64_t(0));
  c.strict = j.value("strict", false);
  c.time_budget_sec = j.value("time_budget_sec", 0.0);
  return c;
}

void validate_config(const SolveConfig& cfg, const ReachSpec& spec) {
  if (cfg.psi_degree < 2) throw ModelError("psi_degree must be >= 2");
  int need = 0;
  for (const auto& l : spec.target) need = std::max(need, l.degree());
  for (const auto& g : spec.state_constraints) need = std::max(need, g.degree());
  if (cfg.psi_degree < need)
    throw ModelError("psi_degree " + std::to_string(cfg.psi_degree) +
                     " is below the degree of a target/state polynomial (" +
                     std::to_string(need) + ")");
  if (!(cfg.feas_tol > 0) || !(cfg.gap_tol > 0))
    throw ModelError("tolerances must be positive");
  if (cfg.policy == DegreePolicy::kExplicit && cfg.explicit_degrees.size() != 2)
    throw ModelError(
        "explicit degree policy needs [domain_degree, disturbance_degree]");
}

GeometryReport check_geometry(const ReachSpec& spec, int samples,
                              uint64_t seed) {
  if (samples < 1000) throw ModelError("check_geometry needs >= 1000 samples");
  GeometryReport rep;
  rep.samples = samples;
  const int n = spec.n_states();
  const double sqrtR = std::sqrt(spec.ball_R);
  Polynomial gR = spec.ball_poly();
  constexpr double kContactTol = 1e-6;
  constexpr size_t kMaxStored = 100;

  auto flag = [&](const char* kind, const std::vector<double>& pt, double t) {
    rep.ok = false;
    if (rep.violations.size() < kMaxStored) {
      GeometryViolation v;
      v.kind = kind;
      v.x.assign(pt.begin(), pt.begin() + n);
      v.t = t;
      rep.violations.push_back(std::move(v));
    }
  };

  std::vector<double> pt(size_t(spec.universe->size()), 0.0);

  // (a) containment: rejection-sample X_t inside a box 1.5x the ball radius
  // and flag points that fall outside the ball.
  Rng box_rng = Rng::stream(seed, 1);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < n; ++i)
      pt[size_t(i)] = box_rng.uniform(-1.5 * sqrtR, 1.5 * sqrtR);
    double t = box_rng.uniform(0.0, spec.horizon);
    pt[size_t(spec.universe->time_index())] = t;
    bool in_x = true;
    for (const auto& g : spec.state_constraints)
      if (g.eval(pt) > 0) {
        in_x = false;
        break;
      }
    if (in_x && gR.eval(pt) < 0) flag("containment", pt, t);
  }

  // (b) boundary contact: uniform points on the ball surface where some g_i
  // sits within the contact tolerance of zero.
  Rng sph_rng = Rng::stream(seed, 2);
  for (int s = 0; s < samples; ++s) {
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      pt[size_t(i)] = sph_rng.normal();
      norm2 += pt[size_t(i)] * pt[size_t(i)];
    }
    double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;
    for (int i = 0; i < n; ++i) pt[size_t(i)] *= sqrtR / norm;
    double t = sph_rng.uniform(0.0, spec.horizon);
    pt[size_t(spec.universe->time_index())] = t;
    double maxg = -std::numeric_limits<double>::infinity();
    for (const auto& g : spec.state_constraints)
      maxg = std::max(maxg, g.eval(pt));
    if (std::fabs(maxg) <= kContactTol) flag("boundary_contact", pt, t);
  }

  return rep;
}

}  // namespace reachsos
