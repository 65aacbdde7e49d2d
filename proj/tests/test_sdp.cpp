#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cstring>
#include <vector>

#include "reachsos/model.hpp"
#include "reachsos/moments.hpp"
#include "reachsos/sdp.hpp"
#include "reachsos/soscompile.hpp"

using namespace reachsos;

namespace {

// min x s.t. [[x,1],[1,x]] psd, with x kept as a free variable and the
// matrix entries pinned to it by three equality rows.
SdpInstance x_fixture_free() {
  SdpInstance inst;
  inst.c = {1.0};
  inst.blocks.push_back({"gram", 2, -1});
  SdpRow r0;
  r0.w.push_back({0, -1.0});
  r0.mats.push_back({0, 0, 0, 1.0});
  r0.rhs = 0.0;
  SdpRow r1;
  r1.w.push_back({0, -1.0});
  r1.mats.push_back({0, 1, 1, 1.0});
  r1.rhs = 0.0;
  SdpRow r2;
  r2.mats.push_back({0, 0, 1, 0.5});
  r2.rhs = 1.0;
  inst.rows = {r0, r1, r2};
  return inst;
}

// Same optimum through the lens of the psd variable alone:
// min (Q11+Q22)/2 s.t. 2*Q12 = 2.  At the optimum Q = [[1,1],[1,1]].
SdpInstance x_fixture_dual() {
  SdpInstance inst;
  inst.blocks.push_back({"gram", 2, -1});
  inst.cost.push_back({0, 0, 0, 0.5});
  inst.cost.push_back({0, 1, 1, 0.5});
  SdpRow r;
  r.mats.push_back({0, 0, 1, 1.0});
  r.rhs = 2.0;
  inst.rows = {r};
  return inst;
}

SdpInstance pinned_scalar_fixture(double rhs) {
  SdpInstance inst;
  inst.blocks.push_back({"x", 1, -1});
  SdpRow r;
  r.mats.push_back({0, 0, 0, 1.0});
  r.rhs = rhs;
  inst.rows = {r};
  return inst;
}

double row_residual_inf(const SdpInstance& inst, const SdpSolution& sol) {
  double worst = 0.0;
  for (size_t i = 0; i < inst.rows.size(); ++i) {
    double v = -inst.rows[i].rhs;
    for (const auto& [idx, a] : inst.rows[i].w)
      v += a * sol.free_values[size_t(idx)];
    for (const SdpEntry& e : inst.rows[i].mats) {
      const int n = inst.blocks[size_t(e.block)].dim;
      double q = sol.psd_blocks[size_t(e.block)][size_t(e.i * n + e.j)];
      v += (e.i == e.j ? 1.0 : 2.0) * e.v * q;
    }
    worst = std::max(worst, std::abs(v));
  }
  return worst;
}

double complementarity(const SdpSolution& sol) {
  double acc = 0.0;
  int dim = 0;
  for (size_t j = 0; j < sol.psd_blocks.size(); ++j) {
    for (size_t t = 0; t < sol.psd_blocks[j].size(); ++t)
      acc += sol.psd_blocks[j][t] * sol.dual_blocks[j][t];
    dim += int(std::lround(std::sqrt(double(sol.psd_blocks[j].size()))));
  }
  return acc / dim;
}

double min_block_eig(const SdpSolution& sol) {
  double worst = 1e300;
  for (const auto& flat : sol.psd_blocks) {
    const int n = int(std::lround(std::sqrt(double(flat.size()))));
    Eigen::Map<const Eigen::MatrixXd> Q(flat.data(), n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Q, Eigen::EigenvaluesOnly);
    worst = std::min(worst, es.eigenvalues().minCoeff());
  }
  return worst;
}

void check_kkt(const SdpInstance& inst, const SdpSolution& sol,
               const SdpSolveOptions& opts) {
  CHECK(row_residual_inf(inst, sol) <= opts.feas_tol);
  CHECK(complementarity(sol) <=
        opts.gap_tol * (1.0 + std::abs(sol.primal_objective)));
  CHECK(min_block_eig(sol) >= -opts.feas_tol);
}

// Early iterates are infeasible, so their objectives can cross; the bound
// only binds once both residuals are small, with slack for the residual
// terms it inherits.
void check_weak_duality(const SdpSolution& sol) {
  for (const IterStat& it : sol.trace)
    if (it.p_res <= 1e-7 && it.d_res <= 1e-7)
      CHECK(it.primal_objective - it.dual_objective >=
            -1e-6 * (1.0 + std::abs(it.primal_objective)));
  CHECK(sol.primal_objective - sol.dual_objective >=
        -1e-7 * (1.0 + std::abs(sol.primal_objective)));
}

SdpInstance compiled_ex1a(int k) {
  ReachSpec spec = load_spec_file(std::string(REACHSOS_SPEC_DIR) + "/ex1a.json");
  SolveConfig cfg;
  cfg.psi_degree = k;
  SosProgram prog = build_sos_program(spec, cfg);
  return compile_to_sdp(prog, objective_vector(k, spec, true));
}

}  // namespace

TEST_CASE("free-variable fixture reaches x = 1") {
  SdpInstance inst = x_fixture_free();
  SdpSolveOptions opts;
  SdpSolution sol = solve(inst, opts);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(std::abs(sol.free_values[0] - 1.0) <= 1e-7);
  CHECK(sol.rel_gap <= 1e-8);
  CHECK(std::abs(sol.primal_objective - 1.0) <= 1e-7);
  CHECK(std::abs(sol.dual_objective - 1.0) <= 1e-7);
  check_kkt(inst, sol, opts);
  check_weak_duality(sol);
}

TEST_CASE("single-row encoding reaches the same optimum") {
  SdpInstance inst = x_fixture_dual();
  SdpSolveOptions opts;
  SdpSolution sol = solve(inst, opts);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(std::abs(sol.primal_objective - 1.0) <= 1e-7);
  const auto& q = sol.psd_blocks[0];
  CHECK(std::abs(q[0] - 1.0) <= 1e-4);
  CHECK(std::abs(q[1] - 1.0) <= 1e-4);
  CHECK(std::abs(q[3] - 1.0) <= 1e-4);
  check_kkt(inst, sol, opts);
  check_weak_duality(sol);
}

TEST_CASE("pinned scalar block returns the prescribed value") {
  SdpInstance inst = pinned_scalar_fixture(5.0);
  SdpSolveOptions opts;
  SdpSolution sol = solve(inst, opts);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(std::abs(sol.psd_blocks[0][0] - 5.0) <= 1e-6);
  CHECK(std::abs(sol.dual_values[0]) <= 1e-6);
  check_kkt(inst, sol, opts);
}

TEST_CASE("compiled degree-4 instance solves to optimality") {
  SdpInstance inst = compiled_ex1a(4);
  SdpSolveOptions opts;
  SdpSolution sol = solve(inst, opts);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(sol.iterations < opts.max_iters);
  // cross-checked against an independent convex-programming setup
  CHECK(sol.primal_objective == doctest::Approx(1.2095).epsilon(5e-3));
  check_kkt(inst, sol, opts);
  check_weak_duality(sol);
  CHECK(sol.trace.size() == size_t(sol.iterations) + 1);
}

TEST_CASE("repeated solves are bit-identical") {
  SdpInstance a = compiled_ex1a(4);
  SdpInstance b = compiled_ex1a(4);
  SdpSolution s1 = solve(a);
  SdpSolution s2 = solve(b);
  REQUIRE(s1.status == s2.status);
  CHECK(s1.iterations == s2.iterations);
  CHECK(std::memcmp(&s1.primal_objective, &s2.primal_objective,
                    sizeof(double)) == 0);
  CHECK(std::memcmp(&s1.dual_objective, &s2.dual_objective,
                    sizeof(double)) == 0);
  REQUIRE(s1.free_values.size() == s2.free_values.size());
  CHECK(std::memcmp(s1.free_values.data(), s2.free_values.data(),
                    s1.free_values.size() * sizeof(double)) == 0);
  for (size_t j = 0; j < s1.psd_blocks.size(); ++j)
    CHECK(std::memcmp(s1.psd_blocks[j].data(), s2.psd_blocks[j].data(),
                      s1.psd_blocks[j].size() * sizeof(double)) == 0);
}

TEST_CASE("option domain is validated") {
  SdpInstance inst = pinned_scalar_fixture(5.0);
  SdpSolveOptions opts;
  opts.feas_tol = 0.0;
  CHECK_THROWS_AS(solve(inst, opts), SdpError);
  opts.feas_tol = 0.02;
  CHECK_THROWS_AS(solve(inst, opts), SdpError);
  opts.feas_tol = 1e-8;
  opts.gap_tol = -1.0;
  CHECK_THROWS_AS(solve(inst, opts), SdpError);
  opts.gap_tol = 1e-8;
  opts.max_iters = 0;
  CHECK_THROWS_AS(solve(inst, opts), SdpError);

  SdpInstance empty;
  empty.c = {1.0};
  CHECK_THROWS_AS(solve(empty), SdpError);
}

TEST_CASE("unsatisfiable pin ends without an optimal flag") {
  SdpInstance inst = pinned_scalar_fixture(-3.0);
  SdpSolveOptions opts;
  opts.max_iters = 40;
  SdpSolution sol = solve(inst, opts);
  CHECK(sol.status != SolveStatus::kOptimal);
  CHECK((sol.status == SolveStatus::kMaxIters ||
         sol.status == SolveStatus::kNumericalFailure));
  CHECK(sol.p_res > 1e-6);
}
