#include "reachsos/hjgrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "flatpoly.hpp"
#include "marching.hpp"
#include "reachsos/simulate.hpp"
#include "reachsos/util.hpp"

namespace reachsos {

namespace {

using detail::FlatPoly;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_2d(const ReachSpec& spec) {
  if (spec.n_states() != 2)
    throw HjError("grid solver needs a 2-state problem, '" + spec.name +
                  "' has " + std::to_string(spec.n_states()));
}

bool time_free(const std::vector<Polynomial>& ps, int ti) {
  for (const Polynomial& p : ps)
    if (p.degree_in({ti}) > 0) return false;
  return true;
}

bool affine_in_d(const ReachSpec& spec) {
  const std::vector<int> didx = spec.universe->disturbance_indices();
  if (didx.empty()) return true;
  for (const Polynomial& f : spec.dynamics)
    if (f.degree_in(didx) > 1) return false;
  return true;
}

// Product grid over the disturbance box for the sampled Hamiltonian
// fallback; only as sharp as its resolution, which is why the affine path
// exists for every example this repo ships.
std::vector<std::vector<double>> d_sample_grid(
    const ReachSpec& spec, const std::vector<std::array<double, 2>>& box) {
  const int m = int(box.size());
  const int per_axis = (m == 1) ? 21 : (m == 2 ? 11 : 5);
  std::vector<std::vector<double>> out;
  std::vector<int> idx(size_t(m), 0);
  std::vector<double> pt(size_t(spec.universe->size()), 0.0);
  const int d0 = spec.universe->time_index() + 1;
  for (;;) {
    std::vector<double> d(size_t(m), 0.0);
    for (int r = 0; r < m; ++r)
      d[size_t(r)] = box[size_t(r)][0] +
                     (box[size_t(r)][1] - box[size_t(r)][0]) *
                         double(idx[size_t(r)]) / double(per_axis - 1);
    for (int r = 0; r < m; ++r) pt[size_t(d0 + r)] = d[size_t(r)];
    bool ok = true;
    for (const Polynomial& h : spec.disturbance_set)
      if (h.eval(pt) < -1e-9) {
        ok = false;
        break;
      }
    if (ok) out.push_back(std::move(d));
    int r = 0;
    while (r < m && ++idx[size_t(r)] == per_axis) idx[size_t(r++)] = 0;
    if (r == m) break;
  }
  if (out.empty()) throw HjError("no feasible disturbance samples");
  return out;
}

// Node-sampled dynamics at one time level. Affine split f_i = f0_i +
// sum_r c_ir d_r when the dynamics are (jointly) affine in d, otherwise
// values at a fixed d-sample list. alpha holds max |f_i| over grid and D.
struct DynTables {
  bool affine = true;
  int m = 0;
  std::vector<std::array<double, 2>> box;
  std::array<std::vector<double>, 2> f0;
  std::array<std::vector<std::vector<double>>, 2> c;   // [axis][r][node]
  std::array<std::vector<std::vector<double>>, 2> fs;  // [axis][sample][node]
  std::array<double, 2> alpha{0.0, 0.0};
};

DynTables build_dyn(const ReachSpec& spec, const GridField& field, double t) {
  DynTables dyn;
  dyn.m = spec.n_disturbances();
  dyn.box = disturbance_box(spec);
  dyn.affine = affine_in_d(spec);

  const size_t nn = field.u.size();
  const int nx = field.nodes[0], ny = field.nodes[1];
  const int ti = spec.universe->time_index();
  std::vector<double> pt(size_t(spec.universe->size()), 0.0);
  pt[size_t(ti)] = t;

  if (dyn.affine) {
    std::array<FlatPoly, 2> f0p;
    std::array<std::vector<FlatPoly>, 2> cp;
    for (int i = 0; i < 2; ++i) {
      Polynomial base = spec.dynamics[size_t(i)];
      for (int r = 0; r < dyn.m; ++r) {
        // The d-partial of a jointly affine polynomial is d-free.
        cp[size_t(i)].push_back(
            FlatPoly::from(spec.dynamics[size_t(i)].partial(ti + 1 + r)));
        base = base.substitute(ti + 1 + r, Polynomial::constant(
                                               spec.universe, 0.0));
      }
      f0p[size_t(i)] = FlatPoly::from(base);
      dyn.f0[size_t(i)].resize(nn);
      dyn.c[size_t(i)].assign(size_t(dyn.m), std::vector<double>(nn));
    }
    for (int iy = 0; iy < ny; ++iy) {
      pt[1] = field.coord(1, iy);
      for (int ix = 0; ix < nx; ++ix) {
        pt[0] = field.coord(0, ix);
        const size_t n = size_t(iy) * nx + ix;
        for (int i = 0; i < 2; ++i) {
          dyn.f0[size_t(i)][n] = f0p[size_t(i)].eval(pt);
          for (int r = 0; r < dyn.m; ++r)
            dyn.c[size_t(i)][size_t(r)][n] = cp[size_t(i)][size_t(r)].eval(pt);
        }
      }
    }
    for (size_t n = 0; n < nn; ++n) {
      for (int mask = 0; mask < (1 << dyn.m); ++mask) {
        for (int i = 0; i < 2; ++i) {
          double v = dyn.f0[size_t(i)][n];
          for (int r = 0; r < dyn.m; ++r)
            v += dyn.c[size_t(i)][size_t(r)][n] *
                 ((mask >> r) & 1 ? dyn.box[size_t(r)][1]
                                  : dyn.box[size_t(r)][0]);
          dyn.alpha[size_t(i)] = std::max(dyn.alpha[size_t(i)], std::abs(v));
        }
      }
    }
    return dyn;
  }

  const auto samples = d_sample_grid(spec, dyn.box);
  std::array<FlatPoly, 2> fp = {FlatPoly::from(spec.dynamics[0]),
                                FlatPoly::from(spec.dynamics[1])};
  for (int i = 0; i < 2; ++i)
    dyn.fs[size_t(i)].assign(samples.size(), std::vector<double>(nn));
  const int d0 = ti + 1;
  for (size_t s = 0; s < samples.size(); ++s) {
    for (int r = 0; r < dyn.m; ++r) pt[size_t(d0 + r)] = samples[s][size_t(r)];
    for (int iy = 0; iy < ny; ++iy) {
      pt[1] = field.coord(1, iy);
      for (int ix = 0; ix < nx; ++ix) {
        pt[0] = field.coord(0, ix);
        const size_t n = size_t(iy) * nx + ix;
        for (int i = 0; i < 2; ++i) {
          const double v = fp[size_t(i)].eval(pt);
          dyn.fs[size_t(i)][s][n] = v;
          dyn.alpha[size_t(i)] = std::max(dyn.alpha[size_t(i)], std::abs(v));
        }
      }
    }
  }
  return dyn;
}

double cfl_bound(const GridField& field, const DynTables& dyn) {
  const double speed = dyn.alpha[0] + dyn.alpha[1];
  if (speed == 0.0) return kInf;
  return 0.5 * std::min(field.dx(0), field.dx(1)) / speed;
}

// max_i g_i(x, t) per node; -inf when there are no constraints.
std::vector<double> build_floor(const ReachSpec& spec, const GridField& field,
                                double t) {
  std::vector<double> floor_v(field.u.size(), -kInf);
  if (spec.state_constraints.empty()) return floor_v;
  std::vector<FlatPoly> gs;
  for (const Polynomial& g : spec.state_constraints)
    gs.push_back(FlatPoly::from(g));
  std::vector<double> pt(size_t(spec.universe->size()), 0.0);
  pt[size_t(spec.universe->time_index())] = t;
  const int nx = field.nodes[0], ny = field.nodes[1];
  for (int iy = 0; iy < ny; ++iy) {
    pt[1] = field.coord(1, iy);
    for (int ix = 0; ix < nx; ++ix) {
      pt[0] = field.coord(0, ix);
      double worst = -kInf;
      for (const FlatPoly& g : gs) worst = std::max(worst, g.eval(pt));
      floor_v[size_t(iy) * nx + ix] = worst;
    }
  }
  return floor_v;
}

GridField step_core(const GridField& f, const DynTables& dyn,
                    const std::vector<double>& floor_new, double dt,
                    double new_time) {
  GridField out = f;
  out.time = new_time;
  const int nx = f.nodes[0], ny = f.nodes[1];
  const double hx = f.dx(0), hy = f.dx(1);
  const double ax = dyn.alpha[0], ay = dyn.alpha[1];

  auto rows = [&](int y0, int y1) {
    for (int iy = y0; iy < y1; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const size_t n = size_t(iy) * nx + ix;
        const double u0 = f.u[n];
        // One-sided differences at the boundary via linearly extrapolated
        // ghosts (u_{-1} = 2u_0 - u_1), which collapse p- and p+ there.
        const double uxm = ix > 0 ? f.u[n - 1] : 2.0 * u0 - f.u[n + 1];
        const double uxp = ix + 1 < nx ? f.u[n + 1] : 2.0 * u0 - f.u[n - 1];
        const double uym = iy > 0 ? f.u[n - size_t(nx)]
                                  : 2.0 * u0 - f.u[n + size_t(nx)];
        const double uyp = iy + 1 < ny ? f.u[n + size_t(nx)]
                                       : 2.0 * u0 - f.u[n - size_t(nx)];
        const double pxm = (u0 - uxm) / hx, pxp = (uxp - u0) / hx;
        const double pym = (u0 - uym) / hy, pyp = (uyp - u0) / hy;
        const double pbx = 0.5 * (pxm + pxp), pby = 0.5 * (pym + pyp);
        double H;
        if (dyn.affine) {
          H = pbx * dyn.f0[0][n] + pby * dyn.f0[1][n];
          for (int r = 0; r < dyn.m; ++r) {
            const double S =
                pbx * dyn.c[0][size_t(r)][n] + pby * dyn.c[1][size_t(r)][n];
            H += std::max(S * dyn.box[size_t(r)][0],
                          S * dyn.box[size_t(r)][1]);
          }
        } else {
          H = -kInf;
          for (size_t s = 0; s < dyn.fs[0].size(); ++s)
            H = std::max(H, pbx * dyn.fs[0][s][n] + pby * dyn.fs[1][s][n]);
        }
        // Backward in time, the dissipation enters with a plus sign: this
        // is what makes the update monotone in the neighbor values.
        const double v =
            u0 + dt * (H + 0.5 * ax * (pxp - pxm) + 0.5 * ay * (pyp - pym));
        out.u[n] = std::max(v, floor_new[n]);
      }
    }
  };

  // Rows are independent (pure function of the previous level).
  unsigned hw = std::thread::hardware_concurrency();
  int nthreads = (size_t(nx) * size_t(ny) >= (1u << 16) && hw > 1)
                     ? int(std::min(hw, 4u))
                     : 1;
  nthreads = std::min(nthreads, ny);
  if (nthreads <= 1) {
    rows(0, ny);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (ny + nthreads - 1) / nthreads;
    for (int k = 0; k < nthreads; ++k) {
      const int y0 = k * chunk;
      const int y1 = std::min(ny, y0 + chunk);
      if (y0 < y1) pool.emplace_back(rows, y0, y1);
    }
    for (auto& th : pool) th.join();
  }

  for (double v : out.u)
    if (!std::isfinite(v))
      throw HjError("non-finite node value after a step; the field blew up");
  return out;
}

}  // namespace

GridField terminal_field(const ReachSpec& spec, int cells) {
  require_2d(spec);
  if (cells < 2)
    throw HjError("grid needs at least 2 cells per axis, got " +
                  std::to_string(cells));
  const double rad = 1.1 * std::sqrt(spec.ball_R);
  GridField f;
  f.lo = {-rad, -rad};
  f.hi = {rad, rad};
  f.nodes = {cells + 1, cells + 1};
  f.time = spec.horizon;
  f.u.assign(size_t(cells + 1) * size_t(cells + 1), 0.0);

  std::vector<FlatPoly> ls, gs;
  for (const Polynomial& l : spec.target) ls.push_back(FlatPoly::from(l));
  for (const Polynomial& g : spec.state_constraints)
    gs.push_back(FlatPoly::from(g));
  std::vector<double> pt(size_t(spec.universe->size()), 0.0);
  pt[size_t(spec.universe->time_index())] = spec.horizon;
  for (int iy = 0; iy <= cells; ++iy) {
    pt[1] = f.coord(1, iy);
    for (int ix = 0; ix <= cells; ++ix) {
      pt[0] = f.coord(0, ix);
      double worst = -kInf;
      for (const FlatPoly& l : ls) worst = std::max(worst, l.eval(pt));
      for (const FlatPoly& g : gs) worst = std::max(worst, g.eval(pt));
      if (!std::isfinite(worst))
        throw HjError("non-finite terminal value; check the spec polynomials");
      f.at(ix, iy) = worst;
    }
  }
  return f;
}

std::array<double, 2> dissipation_bounds(const ReachSpec& spec,
                                         const GridField& field) {
  require_2d(spec);
  return build_dyn(spec, field, field.time).alpha;
}

double cfl_dt(const ReachSpec& spec, const GridField& field) {
  require_2d(spec);
  return cfl_bound(field, build_dyn(spec, field, field.time));
}

double hamiltonian_max(const ReachSpec& spec, const std::array<double, 2>& x,
                       double t, const std::array<double, 2>& p) {
  require_2d(spec);
  const int m = spec.n_disturbances();
  const auto box = disturbance_box(spec);
  const int ti = spec.universe->time_index();
  std::vector<double> pt(size_t(spec.universe->size()), 0.0);
  pt[0] = x[0];
  pt[1] = x[1];
  pt[size_t(ti)] = t;

  if (affine_in_d(spec)) {
    double H = 0.0;
    std::array<Polynomial, 2> base = {spec.dynamics[0], spec.dynamics[1]};
    for (int i = 0; i < 2; ++i)
      for (int r = 0; r < m; ++r)
        base[size_t(i)] = base[size_t(i)].substitute(
            ti + 1 + r, Polynomial::constant(spec.universe, 0.0));
    for (int i = 0; i < 2; ++i) H += p[size_t(i)] * base[size_t(i)].eval(pt);
    for (int r = 0; r < m; ++r) {
      double S = 0.0;
      for (int i = 0; i < 2; ++i)
        S += p[size_t(i)] * spec.dynamics[size_t(i)].partial(ti + 1 + r).eval(pt);
      H += std::max(S * box[size_t(r)][0], S * box[size_t(r)][1]);
    }
    return H;
  }

  double H = -kInf;
  const int d0 = ti + 1;
  for (const auto& d : d_sample_grid(spec, box)) {
    for (int r = 0; r < m; ++r) pt[size_t(d0 + r)] = d[size_t(r)];
    double v = 0.0;
    for (int i = 0; i < 2; ++i)
      v += p[size_t(i)] * spec.dynamics[size_t(i)].eval(pt);
    H = std::max(H, v);
  }
  return H;
}

GridField step_back(const GridField& field, const ReachSpec& spec, double dt) {
  require_2d(spec);
  if (!(dt > 0.0)) throw HjError("dt must be positive");
  const DynTables dyn = build_dyn(spec, field, field.time);
  const double bound = cfl_bound(field, dyn);
  if (dt > bound * (1.0 + 1e-9))
    throw HjError("CFL violation: dt " + std::to_string(dt) +
                  " exceeds the bound " + std::to_string(bound));
  const double nt = field.time - dt;
  return step_core(field, dyn, build_floor(spec, field, nt), dt, nt);
}

GridField hj_solve(const ReachSpec& spec, int cells) {
  GridField f = terminal_field(spec, cells);
  const double T = spec.horizon;
  const int ti = spec.universe->time_index();
  const bool dyn_tf = time_free(spec.dynamics, ti);
  const bool g_tf = time_free(spec.state_constraints, ti);

  DynTables dyn = build_dyn(spec, f, f.time);
  const double bound = cfl_bound(f, dyn);
  int steps = 1;
  if (std::isfinite(bound))
    steps = std::max(1, int(std::ceil(T / bound - 1e-12)));
  const double dt = T / steps;

  std::vector<double> floor_cache;
  if (g_tf) floor_cache = build_floor(spec, f, 0.0);

  for (int i = 1; i <= steps; ++i) {
    if (!dyn_tf && i > 1) {
      dyn = build_dyn(spec, f, f.time);
      if (dt > cfl_bound(f, dyn) * (1.0 + 1e-9))
        throw HjError("CFL violation: speeds grew along the way; dt " +
                      std::to_string(dt) + " exceeds the bound " +
                      std::to_string(cfl_bound(f, dyn)));
    }
    const double nt = T * double(steps - i) / double(steps);
    if (g_tf) {
      f = step_core(f, dyn, floor_cache, dt, nt);
    } else {
      f = step_core(f, dyn, build_floor(spec, f, nt), dt, nt);
    }
  }
  return f;
}

double value_at(const GridField& field, double x, double y) {
  if (x < field.lo[0] || x > field.hi[0] || y < field.lo[1] ||
      y > field.hi[1])
    throw HjError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                  ") lies outside the grid");
  const int nx = field.nodes[0], ny = field.nodes[1];
  const double sx = (x - field.lo[0]) / field.dx(0);
  const double sy = (y - field.lo[1]) / field.dx(1);
  const int ix = std::min(int(sx), nx - 2);
  const int iy = std::min(int(sy), ny - 2);
  const double fx = sx - ix, fy = sy - iy;
  const double v00 = field.at(ix, iy), v10 = field.at(ix + 1, iy);
  const double v01 = field.at(ix, iy + 1), v11 = field.at(ix + 1, iy + 1);
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) +
         fy * ((1.0 - fx) * v01 + fx * v11);
}

std::string field_csv(const GridField& field) {
  std::string out = "x,y,u\n";
  for (int iy = 0; iy < field.nodes[1]; ++iy) {
    for (int ix = 0; ix < field.nodes[0]; ++ix) {
      out += fmt17(field.coord(0, ix)) + "," + fmt17(field.coord(1, iy)) +
             "," + fmt17(field.at(ix, iy)) + "\n";
    }
  }
  return out;
}

LevelSetContour zero_contour(const GridField& field) {
  detail::MarchGrid grid;
  grid.nx = field.nodes[0];
  grid.ny = field.nodes[1];
  grid.x = [&field](int i) { return field.coord(0, i); };
  grid.y = [&field](int j) { return field.coord(1, j); };
  grid.value = [&field](int ix, int iy) { return field.at(ix, iy); };
  // The saddle rule consults the same bilinear surface value_at reads.
  grid.center = [&field](double cx, double cy) {
    return value_at(field, cx, cy);
  };
  return detail::trace_zero(grid);
}

}  // namespace reachsos
