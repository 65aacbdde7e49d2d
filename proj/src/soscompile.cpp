#include "reachsos/soscompile.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace reachsos {

namespace {

int even_up(int d) { return d + (d & 1); }
int even_dn(int d) { return d - (d & 1); }

Polynomial var_times(UniversePtr u, int index, double coef) {
  ExpVec e(size_t(u->size()), 0);
  e[size_t(index)] = 1;
  return Polynomial::monomial(std::move(u), std::move(e), coef);
}

Polynomial rescale_vars(const Polynomial& p, const VarUniverse& u,
                        UniversePtr uptr, double x_scale, double t_scale) {
  Polynomial out = p;
  for (int i : u.state_indices())
    out = out.substitute(i, var_times(uptr, i, x_scale));
  out = out.substitute(u.time_index(),
                       var_times(uptr, u.time_index(), t_scale));
  return out;
}

}  // namespace

Polynomial ScaledProblem::unscale(const Polynomial& p) const {
  const VarUniverse& u = *scaled.universe;
  Polynomial out = p;
  for (int i : u.state_indices())
    out = out.substitute(i, var_times(scaled.universe, i, 1.0 / x_scale));
  out = out.substitute(u.time_index(),
                       var_times(scaled.universe, u.time_index(), 1.0 / t_scale));
  return out;
}

ScaledProblem scale_spec(const ReachSpec& spec) {
  ScaledProblem sp;
  sp.x_scale = std::sqrt(spec.ball_R);
  sp.t_scale = spec.horizon;
  const VarUniverse& u = *spec.universe;

  ReachSpec s;
  s.name = spec.name;
  s.universe = spec.universe;
  s.horizon = 1.0;
  s.ball_R = 1.0;
  s.disturbance_set = spec.disturbance_set;  // d is never rescaled
  for (const Polynomial& f : spec.dynamics)
    s.dynamics.push_back(
        rescale_vars(f, u, spec.universe, sp.x_scale, sp.t_scale)
            .scaled(sp.t_scale / sp.x_scale));
  for (const Polynomial& l : spec.target)
    s.target.push_back(
        rescale_vars(l, u, spec.universe, sp.x_scale, sp.t_scale));
  for (const Polynomial& g : spec.state_constraints)
    s.state_constraints.push_back(
        rescale_vars(g, u, spec.universe, sp.x_scale, sp.t_scale));
  sp.scaled = std::move(s);
  return sp;
}

std::vector<ExpVec> monomial_basis(const VarUniverse& u,
                                   const std::vector<int>& vars, int degree) {
  if (degree < 0) throw ModelError("monomial_basis: negative degree");
  std::vector<ExpVec> out;
  ExpVec cur(size_t(u.size()), 0);
  // Depth-first over the chosen variables, then sort into graded-lex order.
  std::function<void(size_t, int)> rec = [&](size_t pos, int used) {
    if (pos == vars.size()) {
      out.push_back(cur);
      return;
    }
    for (int e = 0; e + used <= degree; ++e) {
      cur[size_t(vars[pos])] = e;
      rec(pos + 1, used + e);
    }
    cur[size_t(vars[pos])] = 0;
  };
  rec(0, 0);
  std::sort(out.begin(), out.end(), GrlexLess{});
  return out;
}

namespace {

struct SlotPlan {
  std::string suffix;  // "sos", "ball", "time", "dist0", ...
  Polynomial domain;
  bool disturbance = false;
};

int max_lhs_degree(const SosConstraint& c) {
  int d = c.lhs_const.degree();
  for (const Polynomial& p : c.lhs_w) d = std::max(d, p.degree());
  return std::max(d, 0);
}

void assign_degrees(SosConstraint& c, const std::vector<SlotPlan>& plans,
                    const SolveConfig& cfg, const VarUniverse& u) {
  std::vector<int> degrees(plans.size(), -1);
  int identity_degree = 0;
  if (cfg.policy == DegreePolicy::kAuto) {
    identity_degree = even_up(max_lhs_degree(c));
    for (size_t s = 0; s < plans.size(); ++s) {
      int d = even_dn(identity_degree - plans[s].domain.degree());
      degrees[s] = d;  // negative = slot dropped below
    }
  } else {
    int ds = cfg.explicit_degrees[0];
    int dsp = cfg.explicit_degrees[1];
    int top = 0;
    for (size_t s = 0; s < plans.size(); ++s) {
      degrees[s] = even_dn(plans[s].disturbance ? dsp : ds);
      if (degrees[s] >= 0)
        top = std::max(top, degrees[s] + plans[s].domain.degree());
    }
    identity_degree = even_up(top);
    bool reached = false;
    for (size_t s = 0; s < plans.size(); ++s)
      reached = reached || (degrees[s] >= 0 &&
                            degrees[s] + plans[s].domain.degree() ==
                                identity_degree);
    if (!reached)
      throw ModelError("inconsistent explicit multiplier degrees: no slot "
                       "reaches the identity degree in \"" + c.label + "\"");
  }
  c.identity_degree = identity_degree;
  for (size_t s = 0; s < plans.size(); ++s) {
    if (degrees[s] < 0) continue;  // domain degree exceeds the identity's
    c.slots.push_back(MultiplierSlot{c.label + "." + plans[s].suffix,
                                     plans[s].domain, degrees[s],
                                     monomial_basis(u, c.vars, degrees[s] / 2)});
  }
}

}  // namespace

SosProgram build_sos_program(const ReachSpec& spec, const SolveConfig& cfg) {
  validate_config(cfg, spec);
  SosProgram prog;
  prog.scaled = scale_spec(spec);
  prog.cfg = cfg;
  const ReachSpec& s = prog.scaled.scaled;
  const VarUniverse& u = *s.universe;
  UniversePtr uptr = s.universe;
  const int k = cfg.psi_degree;
  const int t_idx = u.time_index();

  std::vector<int> xt_vars = u.state_indices();
  xt_vars.push_back(t_idx);
  std::vector<int> xtd_vars = xt_vars;
  for (int r : u.disturbance_indices()) xtd_vars.push_back(r);

  prog.psi_basis = monomial_basis(u, xt_vars, k);

  const Polynomial ball = s.ball_poly();  // 1 - sum x~^2
  const Polynomial tvar = var_times(uptr, t_idx, 1.0);
  const Polynomial time_dom = tvar * (Polynomial::constant(uptr, 1.0) - tvar);
  const Polynomial one = Polynomial::constant(uptr, 1.0);

  // Identity 1: -L(psi) = s0 + s1*ball + s2*t(1-t) + sum_r s'_r*h_r
  {
    SosConstraint c{.label = "lie",
                    .vars = xtd_vars,
                    .identity_degree = 0,
                    .lhs_w = {},
                    .lhs_const = Polynomial::constant(uptr, 0.0),
                    .slots = {}};
    for (const ExpVec& b : prog.psi_basis) {
      Polynomial mono = Polynomial::monomial(uptr, b, 1.0);
      c.lhs_w.push_back(-lie_derivative(mono, s.dynamics));
    }
    std::vector<SlotPlan> plans = {{"sos", one, false},
                                   {"ball", ball, false},
                                   {"time", time_dom, false}};
    for (size_t r = 0; r < s.disturbance_set.size(); ++r)
      plans.push_back({"dist" + std::to_string(r), s.disturbance_set[r], true});
    assign_degrees(c, plans, cfg, u);
    prog.constraints.push_back(std::move(c));
  }

  // Identity 2, per state constraint: psi - g_i = s3 + s4*ball + s5*t(1-t)
  for (size_t i = 0; i < s.state_constraints.size(); ++i) {
    SosConstraint c{.label = "state" + std::to_string(i),
                    .vars = xt_vars,
                    .identity_degree = 0,
                    .lhs_w = {},
                    .lhs_const = -s.state_constraints[i],
                    .slots = {}};
    for (const ExpVec& b : prog.psi_basis)
      c.lhs_w.push_back(Polynomial::monomial(uptr, b, 1.0));
    std::vector<SlotPlan> plans = {
        {"sos", one, false}, {"ball", ball, false}, {"time", time_dom, false}};
    assign_degrees(c, plans, cfg, u);
    prog.constraints.push_back(std::move(c));
  }

  // Identity 3, per target polynomial: psi(., 1) - l_j = s6 + s7*ball
  for (size_t j = 0; j < s.target.size(); ++j) {
    SosConstraint c{.label = "target" + std::to_string(j),
                    .vars = u.state_indices(),
                    .identity_degree = 0,
                    .lhs_w = {},
                    .lhs_const = -s.target[j],
                    .slots = {}};
    for (const ExpVec& b : prog.psi_basis)
      c.lhs_w.push_back(
          Polynomial::monomial(uptr, b, 1.0).substitute(t_idx, one));
    std::vector<SlotPlan> plans = {{"sos", one, false}, {"ball", ball, false}};
    assign_degrees(c, plans, cfg, u);
    prog.constraints.push_back(std::move(c));
  }

  return prog;
}

SdpInstance compile_to_sdp(const SosProgram& prog,
                           const MomentVector& objective) {
  const VarUniverse& u = *prog.scaled.scaled.universe;
  UniversePtr uptr = prog.scaled.scaled.universe;
  const int n = u.n_states();
  const int t_idx = u.time_index();

  SdpInstance inst;
  inst.c.assign(prog.psi_basis.size(), 0.0);
  for (size_t j = 0; j < prog.psi_basis.size(); ++j) {
    const ExpVec& b = prog.psi_basis[j];
    if (b[size_t(t_idx)] > 0) continue;  // t=0 kills it
    std::vector<int> alpha(b.begin(), b.begin() + n);
    auto it = objective.entries.find(alpha);
    if (it == objective.entries.end())
      throw ModelError("objective moment vector does not cover psi basis");
    inst.c[j] = it->second;
  }

  int block_index = 0;
  for (const SosConstraint& c : prog.constraints) {
    std::map<ExpVec, SdpRow, GrlexLess> rowmap;
    for (size_t j = 0; j < c.lhs_w.size(); ++j)
      for (const auto& [mu, v] : c.lhs_w[j].terms())
        rowmap[mu].w.push_back({int(j), v});
    for (const auto& [mu, v] : c.lhs_const.terms()) rowmap[mu].rhs -= v;

    for (const MultiplierSlot& slot : c.slots) {
      inst.blocks.push_back({slot.label, int(slot.basis.size()), -1});
      for (size_t a = 0; a < slot.basis.size(); ++a) {
        Polynomial za = Polynomial::monomial(uptr, slot.basis[a], 1.0);
        for (size_t b = a; b < slot.basis.size(); ++b) {
          Polynomial zb = Polynomial::monomial(uptr, slot.basis[b], 1.0);
          Polynomial prod = za * zb * slot.domain;
          for (const auto& [mu, v] : prod.terms())
            rowmap[mu].mats.push_back(
                {block_index, int(a), int(b), -v});
        }
      }
      ++block_index;
    }
    for (auto& [mu, row] : rowmap) inst.rows.push_back(std::move(row));
  }
  return inst;
}

}  // namespace reachsos
