#include "reachsos/moments.hpp"

#include <cmath>
#include <functional>

namespace reachsos {

double ball_moment(const std::vector<int>& alpha, double radius, int n) {
  if (int(alpha.size()) != n) throw ModelError("moment exponent length != n");
  int total = 0;
  for (int a : alpha) {
    if (a < 0) throw ModelError("negative exponent in moment");
    if (a % 2 == 1) return 0.0;
    total += a;
  }
  double log_num = 0.0;
  for (int a : alpha) log_num += std::lgamma((a + 1) / 2.0);
  double log_den = std::lgamma((total + n) / 2.0 + 1.0);
  return std::pow(radius, total + n) * std::exp(log_num - log_den);
}

namespace {
void enumerate(int n, int k, std::vector<int>& cur, int pos, int used,
               const std::function<void(const std::vector<int>&)>& fn) {
  if (pos == n) {
    fn(cur);
    return;
  }
  for (int e = 0; e + used <= k; ++e) {
    cur[size_t(pos)] = e;
    enumerate(n, k, cur, pos + 1, used + e, fn);
  }
  cur[size_t(pos)] = 0;
}
}  // namespace

MomentVector objective_vector(int k, const ReachSpec& spec, bool scaled_frame) {
  const int n = spec.n_states();
  MomentVector mv;
  mv.dimension = n;
  mv.radius = scaled_frame ? 1.0 : std::sqrt(spec.ball_R);
  const double jacobian =
      scaled_frame ? std::pow(spec.ball_R, n / 2.0) : 1.0;
  std::vector<int> cur(size_t(n), 0);
  enumerate(n, k, cur, 0, 0, [&](const std::vector<int>& alpha) {
    mv.entries[alpha] = jacobian * ball_moment(alpha, mv.radius, n);
  });
  return mv;
}

}  // namespace reachsos
