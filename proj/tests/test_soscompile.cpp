#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "reachsos/moments.hpp"
#include "reachsos/rng.hpp"
#include "reachsos/soscompile.hpp"

using namespace reachsos;

namespace {

ReachSpec spec_from_file(const char* name) {
  return load_spec_file(std::string(REACHSOS_SPEC_DIR) + "/" + name);
}

ReachSpec toy_spec() {
  nlohmann::json doc = {{"name", "toy"},
                        {"state_vars", {"x"}},
                        {"disturbance_vars", nlohmann::json::array()},
                        {"horizon", 1.0},
                        {"dynamics", {"-x"}},
                        {"target", {"x^2 - 0.25"}},
                        {"state_constraints", {"x^2 - 1"}},
                        {"disturbance_set", nlohmann::json::array()},
                        {"ball_R", 2.0}};
  return load_spec(doc, "toy");
}

SolveConfig cfg_k(int k) {
  SolveConfig cfg;
  cfg.psi_degree = k;
  return cfg;
}

std::vector<int> slot_degrees(const SosConstraint& c) {
  std::vector<int> d;
  for (const auto& s : c.slots) d.push_back(s.degree);
  return d;
}

std::vector<int> slot_dims(const SosConstraint& c) {
  std::vector<int> d;
  for (const auto& s : c.slots) d.push_back(int(s.basis.size()));
  return d;
}

}  // namespace

TEST_CASE("monomial_basis enumerates graded-lex") {
  ReachSpec spec = spec_from_file("ex1a.json");
  const VarUniverse& u = *spec.universe;
  auto b0 = monomial_basis(u, {0, 1}, 1);
  REQUIRE(b0.size() == 3);
  CHECK(b0[0] == ExpVec({0, 0, 0, 0}));  // 1
  CHECK(b0[1] == ExpVec({1, 0, 0, 0}));  // x
  CHECK(b0[2] == ExpVec({0, 1, 0, 0}));  // y
  CHECK(monomial_basis(u, {0, 1, 2}, 2).size() == 10);
  auto empty_vars = monomial_basis(u, {}, 3);
  REQUIRE(empty_vars.size() == 1);
  CHECK(empty_vars[0] == ExpVec({0, 0, 0, 0}));
}

TEST_CASE("scale_spec maps to the unit ball and unit horizon") {
  ReachSpec spec = spec_from_file("ex1a.json");
  ScaledProblem sp = scale_spec(spec);
  CHECK(sp.scaled.ball_R == 1.0);
  CHECK(sp.scaled.horizon == 1.0);
  CHECK(sp.x_scale == doctest::Approx(std::sqrt(1.21)).epsilon(1e-15));
  CHECK(sp.t_scale == 1.0);
  CHECK(sp.scaled.ball_poly().str() == "1 - 1*x^2 - 1*y^2");

  // f~(p) must equal (T/sqrt(R)) * f(sqrt(R)x, Tt, d) pointwise.
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                             rng.uniform(0, 1), rng.uniform(-0.01, 0.01)};
    std::vector<double> orig = {sp.x_scale * p[0], sp.x_scale * p[1],
                                sp.t_scale * p[2], p[3]};
    for (size_t i = 0; i < spec.dynamics.size(); ++i) {
      double want = sp.t_scale / sp.x_scale * spec.dynamics[i].eval(orig);
      CHECK(sp.scaled.dynamics[i].eval(p) ==
            doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(sp.scaled.target[0].eval(p) ==
          doctest::Approx(spec.target[0].eval(orig)).epsilon(1e-12));
    CHECK(sp.scaled.state_constraints[0].eval(p) ==
          doctest::Approx(spec.state_constraints[0].eval(orig))
              .epsilon(1e-12));
  }

  // unscale round-trips polynomials written in the scaled frame.
  Polynomial q = parse_poly("0.3 + 2*x^2*t - y^3", spec.universe);
  Polynomial back = sp.unscale(q);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> orig = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                                rng.uniform(0, 1), 0.0};
    std::vector<double> tilde = {orig[0] / sp.x_scale, orig[1] / sp.x_scale,
                                 orig[2] / sp.t_scale, 0.0};
    CHECK(back.eval(orig) == doctest::Approx(q.eval(tilde)).epsilon(1e-12));
  }
}

TEST_CASE("degree policy auto sizes the multipliers") {
  ReachSpec spec = spec_from_file("ex1a.json");
  SosProgram prog = build_sos_program(spec, cfg_k(4));
  REQUIRE(prog.constraints.size() == 3);
  CHECK(prog.psi_basis.size() == 35);

  const SosConstraint& lie = prog.constraints[0];
  CHECK(lie.label == "lie");
  CHECK(lie.vars.size() == 4);
  // d(psi)/dx * (-d*y) pushes the raw degree to 5, rounded up to 6.
  CHECK(lie.identity_degree == 6);
  CHECK(slot_degrees(lie) == std::vector<int>({6, 4, 4, 4}));
  CHECK(slot_dims(lie) == std::vector<int>({35, 15, 15, 15}));
  CHECK(lie.slots[0].label == "lie.sos");
  CHECK(lie.slots[1].label == "lie.ball");
  CHECK(lie.slots[2].label == "lie.time");
  CHECK(lie.slots[3].label == "lie.dist0");

  const SosConstraint& st = prog.constraints[1];
  CHECK(st.label == "state0");
  CHECK(st.identity_degree == 4);
  CHECK(slot_degrees(st) == std::vector<int>({4, 2, 2}));
  CHECK(slot_dims(st) == std::vector<int>({10, 4, 4}));

  const SosConstraint& tg = prog.constraints[2];
  CHECK(tg.label == "target0");
  CHECK(tg.identity_degree == 4);
  CHECK(slot_degrees(tg) == std::vector<int>({4, 2}));
  CHECK(slot_dims(tg) == std::vector<int>({6, 3}));
}

TEST_CASE("row and variable counts across degrees") {
  ReachSpec spec = spec_from_file("ex1a.json");
  MomentVector mv4 = objective_vector(4, spec, true);
  SdpInstance i4 = compile_to_sdp(build_sos_program(spec, cfg_k(4)), mv4);
  CHECK(i4.n_free() == 35);
  CHECK(i4.rows.size() == 260);  // C(10,6) + C(7,4) + C(6,4)
  CHECK(i4.blocks.size() == 9);
  CHECK(i4.cost.empty());

  MomentVector mv6 = objective_vector(6, spec, true);
  SdpInstance i6 = compile_to_sdp(build_sos_program(spec, cfg_k(6)), mv6);
  CHECK(i6.n_free() == 84);
  CHECK(i6.rows.size() == 607);  // C(12,8) + C(9,6) + C(8,6)

  MomentVector mv8 = objective_vector(8, spec, true);
  SdpInstance i8 = compile_to_sdp(build_sos_program(spec, cfg_k(8)), mv8);
  CHECK(i8.n_free() == 165);
  CHECK(i8.rows.size() == 1211);  // C(14,10) + C(11,8) + C(10,8)
}

TEST_CASE("7-state instance compiles to the expected shape") {
  ReachSpec spec = spec_from_file("ex3.json");
  SosProgram prog = build_sos_program(spec, cfg_k(4));
  CHECK(prog.psi_basis.size() == 495);  // C(12,4), R_4[x1..x7,t]
  REQUIRE(prog.constraints.size() == 3);
  CHECK(prog.constraints[0].vars.size() == 9);
  CHECK(prog.constraints[0].identity_degree == 6);
  CHECK(slot_dims(prog.constraints[0]) ==
        std::vector<int>({220, 55, 55, 55}));
  CHECK(slot_dims(prog.constraints[1]) == std::vector<int>({45, 9, 9}));
  CHECK(slot_dims(prog.constraints[2]) == std::vector<int>({36, 8}));

  MomentVector mv = objective_vector(4, spec, true);
  SdpInstance inst = compile_to_sdp(prog, mv);
  CHECK(inst.n_free() == 495);
  CHECK(inst.rows.size() == 5830);  // C(15,6) + C(12,4) + C(11,4)
}

TEST_CASE("no disturbance drops the disturbance slots") {
  ReachSpec spec = toy_spec();
  SosProgram prog = build_sos_program(spec, cfg_k(2));
  REQUIRE(prog.constraints.size() == 3);
  const SosConstraint& lie = prog.constraints[0];
  REQUIRE(lie.slots.size() == 3);
  CHECK(lie.slots[0].label == "lie.sos");
  CHECK(lie.slots[1].label == "lie.ball");
  CHECK(lie.slots[2].label == "lie.time");
}

TEST_CASE("explicit degrees honor the table and pad with forced rows") {
  ReachSpec spec = spec_from_file("ex1a.json");
  SolveConfig cfg = cfg_k(4);
  cfg.policy = DegreePolicy::kExplicit;
  cfg.explicit_degrees = {2, 2};
  SosProgram prog = build_sos_program(spec, cfg);
  const SosConstraint& lie = prog.constraints[0];
  CHECK(slot_degrees(lie) == std::vector<int>({2, 2, 2, 2}));
  CHECK(lie.identity_degree == 4);

  MomentVector mv = objective_vector(4, spec, true);
  SdpInstance inst = compile_to_sdp(prog, mv);
  // The raw Lie terms reach degree 5, which no slot can produce, so some
  // rows must pin psi coefficient combinations with no Gram freedom at all.
  int forced = 0;
  for (const SdpRow& row : inst.rows)
    if (row.mats.empty() && !row.w.empty()) ++forced;
  CHECK(forced > 0);

  SolveConfig bad = cfg_k(4);
  bad.policy = DegreePolicy::kExplicit;
  bad.explicit_degrees = {-1, -1};
  CHECK_THROWS_AS(build_sos_program(spec, bad), ModelError);
}

TEST_CASE("objective weights restrict psi to t=0 moments") {
  ReachSpec spec = spec_from_file("ex1a.json");
  SosProgram prog = build_sos_program(spec, cfg_k(4));
  MomentVector mv = objective_vector(4, spec, true);
  SdpInstance inst = compile_to_sdp(prog, mv);
  const double pi = 3.14159265358979323846;
  // psi basis order: 1, x, y, t, x^2, xy, xt, y^2, yt, t^2, ...
  CHECK(inst.c[0] == doctest::Approx(1.21 * pi).epsilon(1e-13));
  CHECK(inst.c[1] == 0.0);  // odd in x
  CHECK(inst.c[3] == 0.0);  // contains t
  CHECK(inst.c[4] == doctest::Approx(1.21 * pi / 4.0).epsilon(1e-13));
  CHECK(inst.c[6] == 0.0);  // x*t
  for (size_t j = 0; j < prog.psi_basis.size(); ++j)
    if (prog.psi_basis[j][2] > 0) CHECK(inst.c[j] == 0.0);

  // c'w equals the original-units integral of the unscaled psi over the ball.
  Rng rng(3);
  MomentVector plain = objective_vector(4, spec, false);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(prog.psi_basis.size());
    Polynomial psi_tilde = Polynomial::constant(spec.universe, 0.0);
    double via_c = 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] = rng.uniform(-1, 1);
      psi_tilde =
          psi_tilde + Polynomial::monomial(spec.universe, prog.psi_basis[j], w[j]);
      via_c += inst.c[j] * w[j];
    }
    Polynomial psi = prog.scaled.unscale(psi_tilde);
    Polynomial psi0 =
        psi.substitute(spec.universe->time_index(),
                       Polynomial::constant(spec.universe, 0.0));
    double integral = 0.0;
    for (const auto& [mu, coef] : psi0.terms()) {
      std::vector<int> alpha(mu.begin(), mu.begin() + 2);
      integral += coef * plain.entries.at(alpha);
    }
    CHECK(via_c == doctest::Approx(integral).epsilon(1e-10));
  }
}

TEST_CASE("rows match the symbolic identities at random points") {
  struct Case {
    ReachSpec spec;
    int k;
  };
  std::vector<Case> cases;
  cases.push_back({spec_from_file("ex1a.json"), 4});
  cases.push_back({spec_from_file("ex2a.json"), 4});
  cases.push_back({toy_spec(), 2});

  for (const Case& tc : cases) {
    CAPTURE(tc.spec.name);
    SosProgram prog = build_sos_program(tc.spec, cfg_k(tc.k));
    MomentVector mv = objective_vector(tc.k, tc.spec, true);
    SdpInstance inst = compile_to_sdp(prog, mv);
    UniversePtr u = tc.spec.universe;

    // Independent union-of-supports row census per constraint.
    std::vector<std::vector<ExpVec>> expected_rows;
    for (const SosConstraint& c : prog.constraints) {
      std::set<ExpVec, GrlexLess> support;
      for (const auto& [mu, v] : c.lhs_const.terms()) support.insert(mu);
      for (const Polynomial& p : c.lhs_w)
        for (const auto& [mu, v] : p.terms()) support.insert(mu);
      for (const MultiplierSlot& slot : c.slots)
        for (size_t a = 0; a < slot.basis.size(); ++a)
          for (size_t b = a; b < slot.basis.size(); ++b) {
            Polynomial prod = Polynomial::monomial(u, slot.basis[a], 1.0) *
                              Polynomial::monomial(u, slot.basis[b], 1.0) *
                              slot.domain;
            for (const auto& [mu, v] : prod.terms()) support.insert(mu);
          }
      expected_rows.push_back(
          std::vector<ExpVec>(support.begin(), support.end()));
    }
    size_t total = 0;
    for (const auto& r : expected_rows) total += r.size();
    REQUIRE(inst.rows.size() == total);

    // Random primal point: w free, Q symmetric (not necessarily psd; the
    // identity matching is linear so that is irrelevant here).
    Rng rng(17);
    std::vector<double> w(size_t(inst.n_free()));
    for (double& v : w) v = rng.uniform(-1, 1);
    std::vector<std::vector<std::vector<double>>> Q;
    for (const SdpBlock& blk : inst.blocks) {
      std::vector<std::vector<double>> m(
          size_t(blk.dim), std::vector<double>(size_t(blk.dim), 0.0));
      for (int i = 0; i < blk.dim; ++i)
        for (int j = i; j < blk.dim; ++j)
          m[size_t(i)][size_t(j)] = m[size_t(j)][size_t(i)] =
              rng.uniform(-1, 1);
      Q.push_back(std::move(m));
    }

    // Row residuals, straight from the instance.
    std::vector<double> row_val(inst.rows.size(), 0.0);
    for (size_t r = 0; r < inst.rows.size(); ++r) {
      double v = -inst.rows[r].rhs;
      for (const auto& [j, a] : inst.rows[r].w) v += a * w[size_t(j)];
      for (const SdpEntry& e : inst.rows[r].mats)
        v += (e.i == e.j ? 1.0 : 2.0) * e.v *
             Q[size_t(e.block)][size_t(e.i)][size_t(e.j)];
      row_val[r] = v;
    }

    // Symbolic residual polynomial per constraint, full double sum.
    size_t row_base = 0;
    size_t block_base = 0;
    for (size_t ci = 0; ci < prog.constraints.size(); ++ci) {
      const SosConstraint& c = prog.constraints[ci];
      Polynomial P = c.lhs_const;
      for (size_t j = 0; j < c.lhs_w.size(); ++j)
        P = P + c.lhs_w[j].scaled(w[j]);
      for (size_t s = 0; s < c.slots.size(); ++s) {
        const MultiplierSlot& slot = c.slots[s];
        const auto& Qs = Q[block_base + s];
        Polynomial acc = Polynomial::constant(u, 0.0);
        for (size_t a = 0; a < slot.basis.size(); ++a)
          for (size_t b = 0; b < slot.basis.size(); ++b)
            acc = acc + (Polynomial::monomial(u, slot.basis[a], 1.0) *
                         Polynomial::monomial(u, slot.basis[b], 1.0))
                            .scaled(Qs[a][b]);
        P = P - acc * slot.domain;
      }
      double worst = 0.0;
      for (size_t r = 0; r < expected_rows[ci].size(); ++r) {
        double want = P.coefficient(expected_rows[ci][r]);
        worst = std::max(worst,
                         std::abs(row_val[row_base + r] - want));
      }
      CHECK(worst <= 1e-11);
      // And nothing outside the row census survives in P.
      for (const auto& [mu, coef] : P.terms()) {
        bool found = std::binary_search(expected_rows[ci].begin(),
                                        expected_rows[ci].end(), mu,
                                        GrlexLess{});
        if (!found) CHECK(std::abs(coef) <= 1e-11);
      }
      row_base += expected_rows[ci].size();
      block_base += c.slots.size();
    }
  }
}

TEST_CASE("psi basis at k is a prefix of the basis at k+2") {
  ReachSpec spec = spec_from_file("ex1a.json");
  SosProgram p4 = build_sos_program(spec, cfg_k(4));
  SosProgram p6 = build_sos_program(spec, cfg_k(6));
  REQUIRE(p4.psi_basis.size() <= p6.psi_basis.size());
  for (size_t j = 0; j < p4.psi_basis.size(); ++j)
    CHECK(p4.psi_basis[j] == p6.psi_basis[j]);
}
