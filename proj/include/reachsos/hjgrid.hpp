#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachsos/certify.hpp"
#include "reachsos/model.hpp"

namespace reachsos {

struct HjError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Node-centered sample of u(x, t) on a uniform rectangle at one time level.
// Row-major storage, iy * nodes[0] + ix.
struct GridField {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
  std::array<int, 2> nodes{0, 0};  // per axis, >= 3
  double time = 0.0;
  std::vector<double> u;

  double dx(int axis) const {
    return (hi[size_t(axis)] - lo[size_t(axis)]) /
           double(nodes[size_t(axis)] - 1);
  }
  double coord(int axis, int i) const {
    return lo[size_t(axis)] + (hi[size_t(axis)] - lo[size_t(axis)]) *
                                  double(i) /
                                  double(nodes[size_t(axis)] - 1);
  }
  double& at(int ix, int iy) { return u[size_t(iy) * nodes[0] + ix]; }
  double at(int ix, int iy) const { return u[size_t(iy) * nodes[0] + ix]; }
};

// u(x, T) = max(max_j l_j(x), max_i g_i(x, T)) on cells+1 nodes per axis
// over the bounding box of B(0,R) inflated by 10 percent.
GridField terminal_field(const ReachSpec& spec, int cells);

// alpha_i = max over the grid box and D of |f_i|: the dissipation
// coefficients of the scheme, and through them its step bound.
std::array<double, 2> dissipation_bounds(const ReachSpec& spec,
                                         const GridField& field);

// Largest admissible step, 0.5 * min_axis dx / sum_i alpha_i. The 0.5
// leaves half the monotonicity budget as margin.
double cfl_dt(const ReachSpec& spec, const GridField& field);

// max over d in D of p . f(x, t, d). Exact when the dynamics are affine in
// d (the maximizer sits at a box bound, by the sign of p's coefficient);
// otherwise the max is taken over a fixed d-grid, which is only as sharp as
// the grid.
double hamiltonian_max(const ReachSpec& spec, const std::array<double, 2>& x,
                       double t, const std::array<double, 2>& p);

// One backward step of the monotone Lax-Friedrichs scheme:
//   u(t-dt) = u(t) + dt * (H(x, pbar) + sum_i alpha_i (p_i+ - p_i-) / 2)
// followed by the obstacle floor max_i g_i(x, t-dt). Central slopes pbar
// come from one-sided differences against linearly extrapolated ghost
// nodes at the boundary. dt beyond the step bound is a CFL violation.
GridField step_back(const GridField& field, const ReachSpec& spec, double dt);

// Runs the terminal field back to t = 0 with a uniform admissible dt.
GridField hj_solve(const ReachSpec& spec, int cells);

// Bilinear interpolation between the four surrounding nodes.
double value_at(const GridField& field, double x, double y);

// CSV dump, header "x,y,u", one row per node in storage order.
std::string field_csv(const GridField& field);

// Zero level set of the bilinear interpolant, same curve format and CSV
// serialization as the certificate contours.
LevelSetContour zero_contour(const GridField& field);

}  // namespace reachsos
