#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reachsos/poly.hpp"
#include "reachsos/rng.hpp"

using namespace reachsos;

namespace {

UniversePtr uni_xy_d() {
  return std::make_shared<VarUniverse>(
      std::vector<std::string>{"x", "y"}, "t", std::vector<std::string>{"d"});
}

// Random polynomial with up to `nterms` terms of total degree <= maxdeg over
// the first `nvars` universe variables.
Polynomial random_poly(UniversePtr u, Rng& rng, int nvars, int maxdeg,
                       int nterms) {
  Polynomial p(u);
  for (int k = 0; k < nterms; ++k) {
    ExpVec e(size_t(u->size()), 0);
    int budget = int(rng.uniform() * (maxdeg + 1));
    for (int i = 0; i < budget; ++i) {
      int v = int(rng.uniform() * nvars);
      e[size_t(v)] += 1;
    }
    p = p + Polynomial::monomial(u, e, rng.uniform(-2.0, 2.0));
  }
  return p;
}

double max_coef_diff(const Polynomial& a, const Polynomial& b) {
  return (a - b).max_abs_coefficient();
}

}  // namespace

TEST_CASE("parse: target polynomial of the first 2-D example") {
  auto u = uni_xy_d();
  auto p = parse_poly("x^2 + y^2 - 0.64", u);
  CHECK(p.terms().size() == 3);
  CHECK(p.coefficient({2, 0, 0, 0}) == 1.0);
  CHECK(p.coefficient({0, 2, 0, 0}) == 1.0);
  CHECK(p.coefficient({0, 0, 0, 0}) == -0.64);
  CHECK(p.degree() == 2);
}

TEST_CASE("parse: zero literal gives the zero polynomial") {
  auto u = uni_xy_d();
  auto p = parse_poly("0", u);
  CHECK(p.is_zero());
  CHECK(p.degree() == -1);
  CHECK(p.str() == "0");
}

TEST_CASE("parse: binomial square expands") {
  auto u = uni_xy_d();
  auto p = parse_poly("(x+y)^2", u);
  auto q = parse_poly("x^2 + 2*x*y + y^2", u);
  CHECK(max_coef_diff(p, q) == 0.0);
}

TEST_CASE("parse: errors carry position and kind") {
  auto u = uni_xy_d();
  CHECK_THROWS_WITH_AS(parse_poly("x + z", u),
                       doctest::Contains("unknown variable 'z'"), PolyError);
  CHECK_THROWS_WITH_AS(parse_poly("x^-2", u), doctest::Contains("negative"),
                       PolyError);
  CHECK_THROWS_WITH_AS(parse_poly("x^1.5", u),
                       doctest::Contains("non-negative integer"), PolyError);
  CHECK_THROWS_WITH_AS(parse_poly("x + ", u), doctest::Contains("position"),
                       PolyError);
  CHECK_THROWS_AS(parse_poly("(x", u), PolyError);
}

TEST_CASE("parse: unicode minus accepted") {
  auto u = uni_xy_d();
  auto p = parse_poly("x\xe2\x88\x92y", u);  // x − y
  CHECK(p.coefficient({0, 1, 0, 0}) == -1.0);
}

TEST_CASE("arith: difference of squares, additive identity, annihilation") {
  auto u = uni_xy_d();
  auto x = Polynomial::variable(u, "x");
  auto one = Polynomial::constant(u, 1.0);
  CHECK(max_coef_diff((x + one) * (x - one), parse_poly("x^2 - 1", u)) == 0.0);
  auto p = parse_poly("3*x^2 - 0.5*y + 2", u);
  CHECK(max_coef_diff(p + Polynomial(u), p) == 0.0);
  CHECK((x * x - x * x).is_zero());
}

TEST_CASE("arith: universe mismatch rejected") {
  auto u1 = uni_xy_d();
  auto u2 = std::make_shared<VarUniverse>(std::vector<std::string>{"a"}, "t",
                                          std::vector<std::string>{});
  CHECK_THROWS_AS(Polynomial::variable(u1, "x") +
                      Polynomial::variable(u2, "a"),
                  PolyError);
}

TEST_CASE("partial: power rule, vanishing, disturbance direction") {
  auto u = uni_xy_d();
  CHECK(max_coef_diff(parse_poly("x^2*y", u).partial("x"),
                      parse_poly("2*x*y", u)) == 0.0);
  CHECK(parse_poly("x^2", u).partial("t").is_zero());
  // d/dd of the Van der Pol-style term 5*(x^2-(d+0.2))*y; expanding by hand:
  // 5*x^2*y - 5*d*y - y, so the derivative is -5*y.
  auto p = parse_poly("5*(x^2-(d+0.2))*y", u);
  CHECK(max_coef_diff(p.partial("d"), parse_poly("-5*y", u)) == 0.0);
}

TEST_CASE("lie_derivative: time certificate, gradient flow, single row") {
  auto u = uni_xy_d();
  auto t = Polynomial::variable(u, "t");
  std::vector<Polynomial> f = {parse_poly("y^2", u), parse_poly("x*d", u)};
  CHECK(max_coef_diff(lie_derivative(t, f), Polynomial::constant(u, 1.0)) ==
        0.0);

  std::vector<Polynomial> contract = {parse_poly("-x", u), parse_poly("-y", u)};
  CHECK(max_coef_diff(lie_derivative(parse_poly("x^2+y^2", u), contract),
                      parse_poly("-2*x^2-2*y^2", u)) == 0.0);

  std::vector<Polynomial> f1 = {parse_poly("-0.5*x - (0.5+d)*y + 0.5", u),
                                parse_poly("-0.5*y + 1", u)};
  CHECK(max_coef_diff(lie_derivative(Polynomial::variable(u, "x"), f1),
                      parse_poly("-0.5*x - 0.5*y - d*y + 0.5", u)) == 0.0);

  CHECK_THROWS_AS(lie_derivative(t, {parse_poly("x", u)}), PolyError);
}

TEST_CASE("eval: boundary points and zero polynomial") {
  auto u = uni_xy_d();
  auto tr = parse_poly("x^2 + y^2 - 0.64", u);
  CHECK(tr.eval({0.8, 0.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(Polynomial(u).eval({1.0, 2.0, 3.0, 4.0}) == 0.0);
  auto gR = parse_poly("1.21 - x^2 - y^2", u);
  CHECK(gR.eval({1.1, 0.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("eval: named assignment flags missing variables") {
  auto u = uni_xy_d();
  auto p = parse_poly("x*d + y", u);
  std::map<std::string, double> a{{"x", 1.0}, {"y", 2.0}, {"d", 0.5}};
  CHECK(p.eval(a) == doctest::Approx(2.5));
  a.erase("d");
  CHECK_THROWS_WITH_AS(p.eval(a), doctest::Contains("missing variable"),
                       PolyError);
}

TEST_CASE("ring axioms on random polynomials") {
  auto u = uni_xy_d();
  Rng rng(12345);
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = random_poly(u, rng, 4, 6, 5);
    auto b = random_poly(u, rng, 4, 6, 5);
    auto c = random_poly(u, rng, 4, 6, 5);
    double scale = 1.0 + a.max_abs_coefficient() + b.max_abs_coefficient() +
                   c.max_abs_coefficient();
    CHECK(max_coef_diff((a + b) + c, a + (b + c)) <= 1e-12 * scale);
    double pscale = 1.0 + (a * b).max_abs_coefficient() +
                    (a * c).max_abs_coefficient();
    CHECK(max_coef_diff(a * (b + c), a * b + a * c) <= 1e-12 * pscale);
  }
}

TEST_CASE("product rule on random polynomials") {
  auto u = uni_xy_d();
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = random_poly(u, rng, 4, 5, 4);
    auto b = random_poly(u, rng, 4, 5, 4);
    for (int v = 0; v < 4; ++v) {
      auto lhs = (a * b).partial(v);
      auto rhs = a.partial(v) * b + a * b.partial(v);
      double scale = 1.0 + lhs.max_abs_coefficient();
      CHECK(max_coef_diff(lhs, rhs) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("eval respects products at random points") {
  auto u = uni_xy_d();
  Rng rng(4242);
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_poly(u, rng, 4, 5, 4);
    auto b = random_poly(u, rng, 4, 5, 4);
    std::vector<double> pt;
    for (int i = 0; i < 4; ++i) pt.push_back(rng.uniform(-1.0, 1.0));
    double lhs = (a * b).eval(pt);
    double rhs = a.eval(pt) * b.eval(pt);
    CHECK(std::fabs(lhs - rhs) <= 1e-10 * (1.0 + std::fabs(rhs)));
  }
}

TEST_CASE("canonical string round-trips") {
  auto u = uni_xy_d();
  Rng rng(99);
  std::vector<std::string> cases = {
      "x^2 + y^2 - 0.64", "0", "(x+y)^2", "-0.5*x - (0.5+d)*y + 0.5",
      "1e-3*x - 2.5e2*y^3 + t*d"};
  for (const auto& s : cases) {
    auto p = parse_poly(s, u);
    auto q = parse_poly(p.str(), u);
    CHECK(max_coef_diff(p, q) == 0.0);
    CHECK(q.str() == p.str());
  }
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_poly(u, rng, 4, 6, 6);
    auto q = parse_poly(p.str(), u);
    CHECK(max_coef_diff(p, q) == 0.0);
    CHECK(q.str() == p.str());
  }
}

TEST_CASE("canonical order: graded-lex with leading variables first") {
  auto u = uni_xy_d();
  auto p = parse_poly("y^2 + x^2 + 2*x*y + 1", u);
  CHECK(p.str() == "1 + 1*x^2 + 2*x*y + 1*y^2");
}

TEST_CASE("substitute: restriction and rescaling") {
  auto u = uni_xy_d();
  auto p = parse_poly("x^2*t + y - t^2", u);
  auto at1 = p.substitute(u->time_index(), Polynomial::constant(u, 1.0));
  CHECK(max_coef_diff(at1, parse_poly("x^2 + y - 1", u)) == 0.0);
  auto sx = p.substitute(0, parse_poly("2*x", u));
  CHECK(max_coef_diff(sx, parse_poly("4*x^2*t + y - t^2", u)) == 0.0);
}

TEST_CASE("degree bookkeeping in variable subsets") {
  auto u = uni_xy_d();
  auto p = parse_poly("x^3*d + y*t^2", u);
  CHECK(p.degree() == 4);
  CHECK(p.degree_in({0, 1}) == 3);
  CHECK(p.degree_in({u->time_index()}) == 2);
  CHECK(p.uses_only({0, 1, u->time_index(), 3}));
  CHECK(!p.uses_only({0, 1}));
}
