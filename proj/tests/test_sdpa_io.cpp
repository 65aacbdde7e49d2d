#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "reachsos/model.hpp"
#include "reachsos/moments.hpp"
#include "reachsos/sdp.hpp"
#include "reachsos/soscompile.hpp"

using namespace reachsos;

namespace {

SdpInstance x_fixture_free() {
  SdpInstance inst;
  inst.c = {1.0};
  inst.blocks.push_back({"gram", 2, -1});
  SdpRow r0;
  r0.w.push_back({0, -1.0});
  r0.mats.push_back({0, 0, 0, 1.0});
  SdpRow r1;
  r1.w.push_back({0, -1.0});
  r1.mats.push_back({0, 1, 1, 1.0});
  SdpRow r2;
  r2.mats.push_back({0, 0, 1, 0.5});
  r2.rhs = 1.0;
  inst.rows = {r0, r1, r2};
  return inst;
}

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

std::string error_text(const std::string& text) {
  try {
    import_sdpa(text);
  } catch (const SdpError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("single-row fixture exports the expected bytes") {
  const std::string expected =
      "*reachsos sdpa sparse export\n"
      "1\n"
      "1\n"
      "2\n"
      "2\n"
      "0 1 1 1 -0.5\n"
      "0 1 2 2 -0.5\n"
      "1 1 1 2 1\n";
  CHECK(export_sdpa(x_fixture_dual()) == expected);
}

TEST_CASE("free variables export as a documented diagonal pair") {
  const std::string expected =
      "*reachsos sdpa sparse export\n"
      "*reachsos free-pair: blocks 2 3 encode 1 free variables as w+ - w-\n"
      "3\n"
      "3\n"
      "2 -1 -1\n"
      "0 0 1\n"
      "0 2 1 1 -1\n"
      "0 3 1 1 1\n"
      "1 1 1 1 1\n"
      "1 2 1 1 -1\n"
      "1 3 1 1 1\n"
      "2 1 2 2 1\n"
      "2 2 1 1 -1\n"
      "2 3 1 1 1\n"
      "3 1 1 2 0.5\n";
  CHECK(export_sdpa(x_fixture_free()) == expected);
}

TEST_CASE("export and import invert each other") {
  const std::string f1 = export_sdpa(x_fixture_dual());
  CHECK(export_sdpa(import_sdpa(f1)) == f1);

  const std::string f2 = export_sdpa(x_fixture_free());
  SdpInstance back = import_sdpa(f2);
  CHECK(back.n_free() == 1);
  CHECK(back.blocks.size() == 1);
  CHECK(back.blocks[0].dim == 2);
  CHECK(back.rows.size() == 3);
  CHECK(export_sdpa(back) == f2);
}

TEST_CASE("round trip preserves the solution") {
  SdpInstance direct = x_fixture_free();
  SdpInstance routed = import_sdpa(export_sdpa(direct));
  SdpSolution a = solve(direct);
  SdpSolution b = solve(routed);
  REQUIRE(a.status == SolveStatus::kOptimal);
  REQUIRE(b.status == SolveStatus::kOptimal);
  CHECK(std::abs(a.primal_objective - b.primal_objective) <= 1e-8);
  CHECK(std::abs(a.free_values[0] - b.free_values[0]) <= 1e-8);
}

TEST_CASE("empty constraint section is a valid file") {
  SdpInstance inst;
  inst.blocks.push_back({"x", 1, -1});
  inst.cost.push_back({0, 0, 0, 5.0});
  const std::string expected =
      "*reachsos sdpa sparse export\n"
      "0\n"
      "1\n"
      "1\n"
      "\n"
      "0 1 1 1 -5\n";
  const std::string f = export_sdpa(inst);
  CHECK(f == expected);
  SdpInstance back = import_sdpa(f);
  CHECK(back.rows.empty());
  REQUIRE(back.cost.size() == 1);
  CHECK(back.cost[0].v == 5.0);
  CHECK(export_sdpa(back) == f);
}

TEST_CASE("foreign diagonal-block file imports and solves") {
  // Hand-built problem: maximize y1 + 2*y2 over y >= 0 with
  // y1 + y2 = 4 and y1 - y2 = 0, so y = (2,2) and the value is 6.
  // In the minimization convention used here the objective is -6.
  const std::string text =
      "\"tiny diagonal test problem\n"
      "* second comment style\n"
      "2\n"
      "1\n"
      "{-2}\n"
      "4.0, 0.0\n"
      "0 1 1 1 1.0\n"
      "0 1 2 2 2.0\n"
      "1 1 1 1 1.0\n"
      "1 1 2 2 1.0\n"
      "2 1 1 1 1.0\n"
      "2 1 2 2 -1.0\n";
  SdpInstance inst = import_sdpa(text);
  CHECK(inst.n_free() == 0);
  REQUIRE(inst.blocks.size() == 2);
  CHECK(inst.blocks[0].dim == 1);
  CHECK(inst.blocks[0].diag_group == 0);
  CHECK(inst.blocks[1].diag_group == 0);

  SdpSolution sol = solve(inst);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(std::abs(sol.primal_objective - (-6.0)) <= 1e-6);
  CHECK(std::abs(sol.dual_objective - (-6.0)) <= 1e-6);
  CHECK(std::abs(sol.psd_blocks[0][0] - 2.0) <= 1e-5);
  CHECK(std::abs(sol.psd_blocks[1][0] - 2.0) <= 1e-5);

  // The diagonal block survives re-export as one merged block.
  const std::string e1 = export_sdpa(inst);
  CHECK(e1.find("\n-2\n") != std::string::npos);
  CHECK(export_sdpa(import_sdpa(e1)) == e1);
  SdpSolution sol2 = solve(import_sdpa(e1));
  CHECK(std::abs(sol2.primal_objective - (-6.0)) <= 1e-6);
}

TEST_CASE("parse errors carry line numbers") {
  CHECK(error_text("1\nx\n").find("line 2") != std::string::npos);
  CHECK(error_text("2\n3\n2 -1\n").find("line 3") != std::string::npos);
  CHECK(error_text("2\n3\n2 -1\n").find("block sizes") != std::string::npos);

  const std::string bad_entry =
      "1\n"
      "1\n"
      "2\n"
      "1\n"
      "1 1 3 3 1\n";
  CHECK(error_text(bad_entry).find("line 5") != std::string::npos);

  const std::string off_diag =
      "1\n"
      "1\n"
      "-2\n"
      "1\n"
      "1 1 1 2 1\n";
  CHECK(error_text(off_diag).find("diagonal") != std::string::npos);

  CHECK(error_text("2\n1\n").find("end of file") != std::string::npos);
  CHECK(error_text("1\n1\n2\nnope\n").find("line 4") != std::string::npos);
}

TEST_CASE("compiled instance survives a file round trip") {
  ReachSpec spec =
      load_spec_file(std::string(REACHSOS_SPEC_DIR) + "/ex1a.json");
  SolveConfig cfg;
  cfg.psi_degree = 4;
  SosProgram prog = build_sos_program(spec, cfg);
  SdpInstance inst = compile_to_sdp(prog, objective_vector(4, spec, true));

  const std::string f = export_sdpa(inst);
  SdpInstance back = import_sdpa(f);
  CHECK(back.n_free() == inst.n_free());
  CHECK(back.blocks.size() == inst.blocks.size());
  CHECK(back.rows.size() == inst.rows.size());
  CHECK(export_sdpa(back) == f);
}
