#include "reachsos/certify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>

#include "marching.hpp"
#include "reachsos/util.hpp"

namespace reachsos {

namespace {

// Both the builder and reverify funnel through the helpers below so the two
// paths do identical arithmetic in identical order; the "recomputed matches
// stored" guarantee is then exact, not approximate.

struct StoredGram {
  const std::vector<ExpVec>* basis = nullptr;
  const double* entries = nullptr;  // row-major dim*dim, symmetric
  int dim = 0;
};

Polynomial gram_polynomial(const UniversePtr& u, const StoredGram& g,
                           const Polynomial& domain) {
  Polynomial acc(u);
  for (int a = 0; a < g.dim; ++a) {
    for (int b = 0; b < g.dim; ++b) {
      double v = g.entries[size_t(a) * g.dim + b];
      if (v == 0.0) continue;
      ExpVec e = (*g.basis)[a];
      const ExpVec& eb = (*g.basis)[b];
      for (size_t i = 0; i < e.size(); ++i) e[i] += eb[i];
      acc = acc + Polynomial::monomial(u, std::move(e), v);
    }
  }
  return acc * domain;
}

IdentityResidual identity_residual(const SosConstraint& c,
                                   const std::vector<double>& w,
                                   const std::vector<StoredGram>& grams) {
  const UniversePtr& u = c.lhs_const.universe();
  Polynomial diff = c.lhs_const;
  for (size_t j = 0; j < w.size(); ++j) {
    if (w[j] != 0.0) diff = diff + c.lhs_w[j].scaled(w[j]);
  }
  for (size_t s = 0; s < c.slots.size(); ++s) {
    diff = diff - gram_polynomial(u, grams[s], c.slots[s].domain);
  }
  IdentityResidual out;
  out.label = c.label;
  for (const auto& [e, v] : diff.terms()) {
    if (std::abs(v) > out.residual) {
      out.residual = std::abs(v);
      out.worst_monomial = Polynomial::monomial(u, e, 1.0).str();
    }
  }
  return out;
}

std::vector<IdentityResidual> compute_residuals(
    const SosProgram& prog, const std::vector<double>& w,
    const std::vector<GramBlock>& blocks) {
  std::vector<IdentityResidual> out;
  size_t bi = 0;
  for (const SosConstraint& c : prog.constraints) {
    if (c.lhs_w.size() != w.size()) {
      throw CertifyError("certificate psi has " + std::to_string(w.size()) +
                         " coefficients but identity '" + c.label +
                         "' expects " + std::to_string(c.lhs_w.size()));
    }
    std::vector<StoredGram> grams;
    grams.reserve(c.slots.size());
    for (const MultiplierSlot& slot : c.slots) {
      if (bi >= blocks.size()) {
        throw CertifyError(
            "certificate is missing multiplier blocks past '" + slot.label +
            "'");
      }
      const GramBlock& gb = blocks[bi++];
      if (gb.label != slot.label || gb.basis != slot.basis ||
          gb.dim != int(slot.basis.size()) ||
          gb.entries.size() != size_t(gb.dim) * gb.dim) {
        throw CertifyError("stored multiplier block '" + gb.label +
                           "' does not line up with program slot '" +
                           slot.label + "'");
      }
      grams.push_back({&slot.basis, gb.entries.data(), gb.dim});
    }
    out.push_back(identity_residual(c, w, grams));
  }
  if (bi != blocks.size()) {
    throw CertifyError("certificate carries " + std::to_string(blocks.size()) +
                       " multiplier blocks, program has " +
                       std::to_string(bi));
  }
  return out;
}

double min_eigenvalue(const double* entries, int dim) {
  if (dim == 0) return 0.0;
  Eigen::MatrixXd M(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) M(a, b) = entries[size_t(a) * dim + b];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

nlohmann::ordered_json poly_terms_json(const Polynomial& p) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [e, v] : p.terms()) {
    arr.push_back(nlohmann::ordered_json::array({e, v}));
  }
  return arr;
}

Polynomial poly_from_terms_json(const nlohmann::json& arr,
                                const UniversePtr& u) {
  Polynomial p(u);
  for (const auto& t : arr) {
    ExpVec e = t.at(0).get<ExpVec>();
    if (int(e.size()) != u->size()) {
      throw CertifyError("certificate monomial has " +
                         std::to_string(e.size()) + " exponents, expected " +
                         std::to_string(u->size()));
    }
    p = p + Polynomial::monomial(u, std::move(e), t.at(1).get<double>());
  }
  return p;
}

std::vector<std::string> names_of(const VarUniverse& u,
                                  const std::vector<int>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(u.name(i));
  return out;
}

}  // namespace

void Certificate::refresh_derived() {
  const UniversePtr& u = psi.universe();
  psi_t0 = psi.substitute(u->time_index(), Polynomial::constant(u, 0.0));
  boundary_tol = 1e-9 * (1.0 + psi_t0.max_abs_coefficient());
}

nlohmann::ordered_json Certificate::to_json() const {
  const VarUniverse& u = *universe();
  nlohmann::ordered_json j;
  j["name"] = spec_name;
  j["spec_fingerprint"] = spec_fingerprint;
  j["config"] = config.to_json();
  j["frame"] = {{"x_scale", x_scale}, {"t_scale", t_scale}};
  j["ball_R"] = ball_R;
  j["horizon"] = horizon;
  j["objective_value"] = objective_value;
  j["solver"] = {{"status", solver_status},   {"iterations", solver_iterations},
                 {"p_res", solver_p_res},     {"d_res", solver_d_res},
                 {"rel_gap", solver_rel_gap}, {"mu", solver_mu}};
  j["state_vars"] = names_of(u, u.state_indices());
  j["time_var"] = u.name(u.time_index());
  j["disturbance_vars"] = names_of(u, u.disturbance_indices());
  j["residual_tol"] = residual_tol;
  j["eig_tol"] = eig_tol;
  j["psi"] = poly_terms_json(psi);
  j["psi_scaled"] = poly_terms_json(psi_scaled);
  auto ids = nlohmann::ordered_json::array();
  for (const IdentityResidual& r : residuals) {
    ids.push_back({{"label", r.label},
                   {"residual", r.residual},
                   {"worst_monomial", r.worst_monomial}});
  }
  j["identities"] = ids;
  auto mults = nlohmann::ordered_json::array();
  for (const GramBlock& b : blocks) {
    auto basis = nlohmann::ordered_json::array();
    for (const ExpVec& e : b.basis) basis.push_back(e);
    auto gram = nlohmann::ordered_json::array();
    for (int a = 0; a < b.dim; ++a) {
      auto row = nlohmann::ordered_json::array();
      for (int c = 0; c < b.dim; ++c)
        row.push_back(b.entries[size_t(a) * b.dim + c]);
      gram.push_back(row);
    }
    mults.push_back({{"label", b.label},
                     {"basis", basis},
                     {"gram", gram},
                     {"min_eig", b.min_eig}});
  }
  j["multipliers"] = mults;
  return j;
}

Certificate Certificate::from_json(const nlohmann::json& j) {
  try {
    auto states = j.at("state_vars").get<std::vector<std::string>>();
    auto dists = j.at("disturbance_vars").get<std::vector<std::string>>();
    auto u = std::make_shared<VarUniverse>(
        states, j.at("time_var").get<std::string>(), dists);

    Certificate cert(u);
    cert.spec_name = j.at("name").get<std::string>();
    cert.spec_fingerprint = j.at("spec_fingerprint").get<std::string>();
    cert.config = SolveConfig::from_json(j.at("config"));
    cert.x_scale = j.at("frame").at("x_scale").get<double>();
    cert.t_scale = j.at("frame").at("t_scale").get<double>();
    cert.ball_R = j.at("ball_R").get<double>();
    cert.horizon = j.at("horizon").get<double>();
    cert.objective_value = j.at("objective_value").get<double>();
    const auto& sv = j.at("solver");
    cert.solver_status = sv.at("status").get<std::string>();
    cert.solver_iterations = sv.at("iterations").get<int>();
    cert.solver_p_res = sv.at("p_res").get<double>();
    cert.solver_d_res = sv.at("d_res").get<double>();
    cert.solver_rel_gap = sv.at("rel_gap").get<double>();
    cert.solver_mu = sv.at("mu").get<double>();
    cert.residual_tol = j.at("residual_tol").get<double>();
    cert.eig_tol = j.at("eig_tol").get<double>();
    cert.psi = poly_from_terms_json(j.at("psi"), u);
    cert.psi_scaled = poly_from_terms_json(j.at("psi_scaled"), u);
    for (const auto& r : j.at("identities")) {
      cert.residuals.push_back(
          {r.at("label").get<std::string>(), r.at("residual").get<double>(),
           r.at("worst_monomial").get<std::string>()});
    }
    for (const auto& m : j.at("multipliers")) {
      GramBlock b;
      b.label = m.at("label").get<std::string>();
      for (const auto& e : m.at("basis")) {
        ExpVec ev = e.get<ExpVec>();
        if (int(ev.size()) != u->size()) {
          throw CertifyError("multiplier block '" + b.label +
                             "' basis monomial has wrong arity");
        }
        b.basis.push_back(std::move(ev));
      }
      b.dim = int(b.basis.size());
      const auto& gram = m.at("gram");
      if (int(gram.size()) != b.dim) {
        throw CertifyError("multiplier block '" + b.label +
                           "' gram row count does not match its basis");
      }
      b.entries.resize(size_t(b.dim) * b.dim);
      for (int a = 0; a < b.dim; ++a) {
        const auto& row = gram.at(a);
        if (int(row.size()) != b.dim) {
          throw CertifyError("multiplier block '" + b.label +
                             "' gram row " + std::to_string(a) +
                             " has wrong length");
        }
        for (int c = 0; c < b.dim; ++c)
          b.entries[size_t(a) * b.dim + c] = row.at(c).get<double>();
      }
      b.min_eig = m.at("min_eig").get<double>();
      cert.blocks.push_back(std::move(b));
    }
    cert.refresh_derived();
    return cert;
  } catch (const nlohmann::json::exception& e) {
    throw CertifyError(std::string("malformed certificate document: ") +
                       e.what());
  }
}

Certificate build_certificate(const ReachSpec& spec, const SolveConfig& cfg,
                              const SdpInstance& inst,
                              const SdpSolution& sol) {
  if (sol.status != SolveStatus::kOptimal) {
    throw CertifyError("cannot certify a non-optimal solve (solver status: " +
                       to_string(sol.status) + ")");
  }
  SosProgram prog = build_sos_program(spec, cfg);
  if (sol.free_values.size() != prog.psi_basis.size()) {
    throw CertifyError("solution carries " +
                       std::to_string(sol.free_values.size()) +
                       " free values, program has " +
                       std::to_string(prog.psi_basis.size()));
  }
  size_t n_slots = 0;
  for (const SosConstraint& c : prog.constraints) n_slots += c.slots.size();
  if (sol.psd_blocks.size() != n_slots || inst.blocks.size() != n_slots) {
    throw CertifyError("solution block layout does not match the program");
  }

  Certificate cert(spec.universe);
  cert.spec_name = spec.name;
  cert.spec_fingerprint = spec.fingerprint();
  cert.config = cfg;
  cert.x_scale = prog.scaled.x_scale;
  cert.t_scale = prog.scaled.t_scale;
  cert.ball_R = spec.ball_R;
  cert.horizon = spec.horizon;
  cert.objective_value = sol.primal_objective;
  cert.solver_status = to_string(sol.status);
  cert.solver_iterations = sol.iterations;
  cert.solver_p_res = sol.p_res;
  cert.solver_d_res = sol.d_res;
  cert.solver_rel_gap = sol.rel_gap;
  cert.solver_mu = sol.mu;
  cert.residual_tol = cfg.strict ? kResidualTol / 100.0 : kResidualTol;
  cert.eig_tol = cfg.strict ? kEigTol / 100.0 : kEigTol;

  Polynomial psi_s(spec.universe);
  for (size_t jx = 0; jx < prog.psi_basis.size(); ++jx) {
    if (sol.free_values[jx] != 0.0) {
      psi_s = psi_s + Polynomial::monomial(spec.universe, prog.psi_basis[jx],
                                           sol.free_values[jx]);
    }
  }
  cert.psi_scaled = psi_s;
  cert.psi = prog.scaled.unscale(psi_s);

  // Store every Gram symmetrized; the solver keeps blocks symmetric up to
  // roundoff, but the residual check below should see exactly what the
  // certificate will carry.
  size_t bi = 0;
  for (const SosConstraint& c : prog.constraints) {
    for (const MultiplierSlot& slot : c.slots) {
      const std::vector<double>& Q = sol.psd_blocks[bi];
      GramBlock gb;
      gb.label = slot.label;
      gb.basis = slot.basis;
      gb.dim = int(slot.basis.size());
      if (Q.size() != size_t(gb.dim) * gb.dim) {
        throw CertifyError("solution block '" + slot.label +
                           "' has the wrong size");
      }
      gb.entries.resize(Q.size());
      for (int a = 0; a < gb.dim; ++a) {
        for (int b = 0; b < gb.dim; ++b) {
          gb.entries[size_t(a) * gb.dim + b] =
              0.5 * (Q[size_t(a) * gb.dim + b] + Q[size_t(b) * gb.dim + a]);
        }
      }
      gb.min_eig = min_eigenvalue(gb.entries.data(), gb.dim);
      cert.blocks.push_back(std::move(gb));
      ++bi;
    }
  }
  cert.residuals = compute_residuals(prog, sol.free_values, cert.blocks);
  cert.refresh_derived();

  for (const IdentityResidual& r : cert.residuals) {
    if (!(r.residual <= cert.residual_tol)) {
      throw CertifyError("residual_exceeded: identity '" + r.label +
                         "' residual " + fmt17(r.residual) + " at " +
                         r.worst_monomial + " exceeds " +
                         fmt17(cert.residual_tol));
    }
  }
  for (const GramBlock& gb : cert.blocks) {
    if (!(gb.min_eig >= -cert.eig_tol)) {
      throw CertifyError("indefinite_gram: block '" + gb.label +
                         "' minimum eigenvalue " + fmt17(gb.min_eig) +
                         " is below -" + fmt17(cert.eig_tol));
    }
  }
  return cert;
}

Reverification reverify(const Certificate& cert, const ReachSpec& spec) {
  if (spec.fingerprint() != cert.spec_fingerprint) {
    throw CertifyError(
        "certificate does not belong to this problem: fingerprint " +
        cert.spec_fingerprint.substr(0, 12) + "... vs spec " +
        spec.fingerprint().substr(0, 12) + "...");
  }
  SosProgram prog = build_sos_program(spec, cert.config);

  // Every psi monomial must live in the program's basis, otherwise part of
  // psi would silently drop out of the identity check.
  std::map<ExpVec, size_t, GrlexLess> index;
  for (size_t jx = 0; jx < prog.psi_basis.size(); ++jx)
    index.emplace(prog.psi_basis[jx], jx);
  for (const auto& [e, v] : cert.psi_scaled.terms()) {
    if (v != 0.0 && index.find(e) == index.end()) {
      throw CertifyError("certificate psi contains monomial " +
                         Polynomial::monomial(cert.universe(), e, 1.0).str() +
                         " outside the degree-" +
                         std::to_string(cert.config.psi_degree) + " basis");
    }
  }
  std::vector<double> w(prog.psi_basis.size(), 0.0);
  for (size_t jx = 0; jx < prog.psi_basis.size(); ++jx)
    w[jx] = cert.psi_scaled.coefficient(prog.psi_basis[jx]);

  Reverification out;
  out.residuals = compute_residuals(prog, w, cert.blocks);
  for (const GramBlock& gb : cert.blocks)
    out.min_eigs.push_back(min_eigenvalue(gb.entries.data(), gb.dim));
  return out;
}

std::string to_string(Membership m) {
  switch (m) {
    case Membership::kInside:
      return "inside";
    case Membership::kOutside:
      return "outside";
    case Membership::kBoundary:
      return "boundary";
  }
  return "unknown";
}

Membership membership(const Certificate& cert, const std::vector<double>& x) {
  const VarUniverse& u = *cert.universe();
  if (int(x.size()) != u.n_states()) {
    throw CertifyError("membership point has " + std::to_string(x.size()) +
                       " coordinates, set lives in " +
                       std::to_string(u.n_states()) + " states");
  }
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  if (r2 > cert.ball_R) return Membership::kOutside;

  std::vector<double> point(size_t(u.size()), 0.0);
  const std::vector<int> sidx = u.state_indices();
  for (size_t i = 0; i < x.size(); ++i) point[size_t(sidx[i])] = x[i];
  double v = cert.psi_t0.eval(point);
  if (v <= -cert.boundary_tol) return Membership::kInside;
  if (std::abs(v) <= cert.boundary_tol) return Membership::kBoundary;
  return Membership::kOutside;
}

std::string LevelSetContour::to_csv() const {
  std::string out = "curve_id,x,y\n";
  for (size_t i = 0; i < curves.size(); ++i) {
    for (const auto& p : curves[i].points) {
      out += std::to_string(i) + "," + fmt17(p[0]) + "," + fmt17(p[1]) + "\n";
    }
  }
  return out;
}

namespace {

LevelSetContour contour_impl(const Certificate& cert, int resolution, int ax,
                             int ay, const std::vector<double>& fixed) {
  if (resolution < 2) {
    throw CertifyError("contour resolution must be at least 2, got " +
                       std::to_string(resolution));
  }
  const VarUniverse& u = *cert.universe();
  const int n = u.n_states();
  double fixed_norm2 = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i != ax && i != ay) fixed_norm2 += fixed[size_t(i)] * fixed[size_t(i)];
  }
  const double plane_R2 = cert.ball_R - fixed_norm2;
  LevelSetContour out;
  if (plane_R2 <= 0.0) return out;  // the slice plane misses the ball
  const double pr = std::sqrt(plane_R2);

  const int nodes = resolution + 1;
  const std::vector<int> sidx = u.state_indices();
  std::vector<double> point(size_t(u.size()), 0.0);
  for (int i = 0; i < n; ++i) point[size_t(sidx[i])] = fixed[size_t(i)];
  auto coord = [&](double k) { return -pr + 2.0 * pr * k / resolution; };
  auto eval_at = [&](double px, double py) {
    point[size_t(sidx[ax])] = px;
    point[size_t(sidx[ay])] = py;
    return cert.psi_t0.eval(point);
  };
  std::vector<double> f(size_t(nodes) * nodes);
  for (int jy = 0; jy < nodes; ++jy)
    for (int ix = 0; ix < nodes; ++ix)
      f[size_t(jy) * nodes + ix] = eval_at(coord(ix), coord(jy));

  detail::MarchGrid grid;
  grid.nx = nodes;
  grid.ny = nodes;
  grid.x = [&](int i) { return coord(i); };
  grid.y = [&](int j) { return coord(j); };
  grid.value = [&](int ix, int jy) { return f[size_t(jy) * nodes + ix]; };
  grid.center = eval_at;  // saddles consult the exact psi, not an interpolant
  // The zero set only means anything inside the working ball; segments with
  // a vertex beyond the slice disc are dropped, which is what turns curves
  // crossing the ball boundary into open polylines.
  grid.clip_r2 = plane_R2 * (1.0 + 1e-12);
  return detail::trace_zero(grid);
}

}  // namespace

LevelSetContour contour2d(const Certificate& cert, int resolution) {
  if (cert.n_states() != 2) {
    throw CertifyError("contour2d needs a 2-state set, this one has " +
                       std::to_string(cert.n_states()) +
                       " states; pass a slice");
  }
  return contour_impl(cert, resolution, 0, 1, {0.0, 0.0});
}

LevelSetContour contour2d(const Certificate& cert, int resolution,
                          const SliceSpec& slice) {
  const int n = cert.n_states();
  if (slice.axis_x < 0 || slice.axis_x >= n || slice.axis_y < 0 ||
      slice.axis_y >= n || slice.axis_x == slice.axis_y) {
    throw CertifyError("slice axes must be two distinct state indices in [0," +
                       std::to_string(n - 1) + "]");
  }
  if (int(slice.fixed.size()) != n) {
    throw CertifyError("slice must pin one value per state (" +
                       std::to_string(n) + " expected, " +
                       std::to_string(slice.fixed.size()) + " given)");
  }
  return contour_impl(cert, resolution, slice.axis_x, slice.axis_y,
                      slice.fixed);
}

}  // namespace reachsos
