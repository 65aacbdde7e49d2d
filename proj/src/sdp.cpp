#include "reachsos/sdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <memory>

namespace reachsos {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kPrimalInfeasible: return "primal_infeasible";
    case SolveStatus::kDualInfeasible: return "dual_infeasible";
    case SolveStatus::kMaxIters: return "max_iters";
    case SolveStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LocalEntry {
  int row;  // global row index
  int i, j; // i <= j within the block
  double v; // equilibrated value
};

// Entries of one block grouped by row, so the Schur assembly can walk
// "all rows touching this block" without rescanning.
struct BlockData {
  int dim = 0;
  std::vector<LocalEntry> entries;       // sorted by (row, i, j)
  std::vector<int> group_start;          // offsets into entries, one per row
  std::vector<int> group_row;            // global row per group
};

template <class Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <class Real>
Real sym_dot(const std::vector<LocalEntry>& es, int lo, int hi,
             const MatR<Real>& B) {
  Real acc = 0;
  for (int e = lo; e < hi; ++e)
    acc += Real(es[size_t(e)].i == es[size_t(e)].j ? 1.0 : 2.0) *
           Real(es[size_t(e)].v) * B(es[size_t(e)].i, es[size_t(e)].j);
  return acc;
}

// M = A (W x W) A' assembled blockwise; delta is an optional diagonal bump.
// Templated on the scalar so the endgame can rebuild it in long double once
// double precision stops being enough.
template <class Real>
void build_schur(const std::vector<BlockData>& blk,
                 const std::vector<MatR<Real>>& W, Real delta,
                 MatR<Real>& M) {
  M.setZero();
  for (size_t j = 0; j < blk.size(); ++j) {
    const auto& bd = blk[j];
    const int n = bd.dim;
    MatR<Real> B(n, n);
    const int ngroups = int(bd.group_row.size());
    for (int g = 0; g < ngroups; ++g) {
      B.setZero();
      for (int e = bd.group_start[size_t(g)];
           e < bd.group_start[size_t(g) + 1]; ++e) {
        const LocalEntry& le = bd.entries[size_t(e)];
        const Real v = Real(le.v);
        if (le.i == le.j) {
          B.noalias() += v * (W[j].col(le.i) * W[j].col(le.i).transpose());
        } else {
          B.noalias() += v * (W[j].col(le.i) * W[j].col(le.j).transpose());
          B.noalias() += v * (W[j].col(le.j) * W[j].col(le.i).transpose());
        }
      }
      const int row_g = bd.group_row[size_t(g)];
      for (int g2 = g; g2 < ngroups; ++g2)
        M(row_g, bd.group_row[size_t(g2)]) +=
            sym_dot<Real>(bd.entries, bd.group_start[size_t(g2)],
                          bd.group_start[size_t(g2) + 1], B);
    }
  }
  M.template triangularView<Eigen::StrictlyLower>() = M.transpose();
  if (delta > Real(0)) M.diagonal().array() += delta;
}

// The same operator applied matrix-free; this is the exact reference the
// factored solve is polished against.
template <class Real>
VecR<Real> apply_schur(const std::vector<BlockData>& blk,
                       const std::vector<MatR<Real>>& W,
                       const VecR<Real>& v) {
  VecR<Real> out = VecR<Real>::Zero(v.size());
  for (size_t j = 0; j < blk.size(); ++j) {
    const auto& bd = blk[j];
    if (bd.entries.empty()) continue;
    const int n = bd.dim;
    MatR<Real> V = MatR<Real>::Zero(n, n);
    for (const LocalEntry& e : bd.entries) {
      V(e.i, e.j) += v(e.row) * Real(e.v);
      if (e.i != e.j) V(e.j, e.i) += v(e.row) * Real(e.v);
    }
    MatR<Real> T = W[j] * V * W[j];
    const int ngroups = int(bd.group_row.size());
    for (int g = 0; g < ngroups; ++g)
      out(bd.group_row[size_t(g)]) +=
          sym_dot<Real>(bd.entries, bd.group_start[size_t(g)],
                        bd.group_start[size_t(g) + 1], T);
  }
  return out;
}

// Factorization of the saddle system [M Aw; Aw' 0]. M is scaled to unit
// diagonal first: near convergence its raw diagonal spans many orders of
// magnitude and would drag the Cholesky down with it.
template <class Real>
struct SchurSolver {
  VecR<Real> Dm;
  MatR<Real> M;  // overwritten by the factorization
  MatR<Real> Xw; // M^-1 Aw
  MatR<Real> K;  // Aw' M^-1 Aw
  Eigen::LLT<MatR<Real>> lltK;
  std::unique_ptr<Eigen::LLT<Eigen::Ref<MatR<Real>>>> lltM;
  double diag_max = 0.0;

  bool compute(const std::vector<BlockData>& blk,
               const std::vector<MatR<Real>>& W, const MatR<Real>& Aw,
               Real delta) {
    const int m = int(Aw.rows());
    M.resize(m, m);
    build_schur<Real>(blk, W, delta, M);
    diag_max = m ? double(M.diagonal().cwiseAbs().maxCoeff()) : 0.0;
    const Real floor_d = Real(std::max(diag_max, 1.0)) * Real(1e-18);
    Dm.resize(m);
    for (int i = 0; i < m; ++i)
      Dm(i) = std::sqrt(std::max(M(i, i), floor_d));
    for (int i = 0; i < m; ++i) M.row(i) /= Dm(i);
    for (int i = 0; i < m; ++i) M.col(i) /= Dm(i);
    lltM = std::make_unique<Eigen::LLT<Eigen::Ref<MatR<Real>>>>(M);
    if (lltM->info() != Eigen::Success) return false;
    if (Aw.cols() > 0) {
      Xw = Aw;
      Xw.array().colwise() /= Dm.array();
      Xw = lltM->solve(Xw);
      Xw.array().colwise() /= Dm.array();
      K = Aw.transpose() * Xw;
      K = (Real(0.5) * (K + K.transpose())).eval();
      lltK.compute(K);
      if (lltK.info() != Eigen::Success) return false;
    }
    return true;
  }

  VecR<Real> msolve(VecR<Real> v) const {
    v.array() /= Dm.array();
    v = lltM->solve(v);
    v.array() /= Dm.array();
    return v;
  }

  void saddle(const MatR<Real>& Aw, const VecR<Real>& q1,
              const VecR<Real>& q2, VecR<Real>& oy, VecR<Real>& ow) const {
    VecR<Real> t1 = msolve(q1);
    if (Aw.cols() > 0) {
      ow = lltK.solve(Aw.transpose() * t1 - q2);
      oy = t1 - Xw * ow;
    } else {
      ow.resize(0);
      oy = t1;
    }
  }
};

// Solve the saddle system for (r1, r2), then polish until the defect in the
// caller's row scaling clears err_floor. The centering part of r1 dwarfs the
// feasibility part near convergence, so a merely relative solve would wreck
// the primal residual. Returns the defect it ended on.
template <class Real>
double refine_saddle(const SchurSolver<Real>& ss,
                     const std::vector<BlockData>& blk,
                     const std::vector<MatR<Real>>& W, const MatR<Real>& Aw,
                     const std::vector<double>& scale, const VecR<Real>& r1,
                     const VecR<Real>& r2, double err_floor, int max_pass,
                     double stall_ratio, VecR<Real>& dy, VecR<Real>& dw) {
  const int m = int(r1.size());
  const bool have_w = Aw.cols() > 0;
  ss.saddle(Aw, r1, r2, dy, dw);
  double prev = std::numeric_limits<double>::infinity();
  double err = prev;
  for (int pass = 0; pass < max_pass; ++pass) {
    VecR<Real> res1 = r1 - apply_schur<Real>(blk, W, dy);
    if (have_w) res1.noalias() -= Aw * dw;
    err = 0.0;
    for (int i = 0; i < m; ++i)
      err = std::max(err, double(std::abs(res1(i))) / scale[size_t(i)]);
    VecR<Real> res2;
    if (have_w) {
      res2 = r2 - Aw.transpose() * dy;
      for (int i = 0; i < int(res2.size()); ++i)
        err = std::max(err, double(std::abs(res2(i))));
    }
    if (std::getenv("REACHSOS_SDP_DEBUG"))
      std::fprintf(stderr, "   dbg refine[%d] pass=%d err=%.2e\n",
                   int(sizeof(Real)), pass, err);
    if (err <= err_floor) break;
    if (err > stall_ratio * prev) break;  // refinement stopped helping
    prev = err;
    VecR<Real> ey, ew;
    ss.saddle(Aw, res1, res2, ey, ew);
    dy += ey;
    if (have_w) dw += ew;
  }
  return err;
}

bool chol(const MatrixXd& X, MatrixXd& L) {
  Eigen::LLT<MatrixXd> llt(X);
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
    return true;
  }
  double base = std::max(1.0, X.diagonal().cwiseAbs().maxCoeff());
  for (double d = 1e-14; d <= 1e-6; d *= 100.0) {
    MatrixXd X2 = X;
    X2.diagonal().array() += d * base;
    Eigen::LLT<MatrixXd> retry(X2);
    if (retry.info() == Eigen::Success) {
      L = retry.matrixL();
      return true;
    }
  }
  return false;
}

// Largest step alpha <= 1 keeping X + alpha*dX psd, via the smallest
// eigenvalue of L^-1 dX L^-T; tau < 1 keeps the iterate strictly interior.
double max_step(const MatrixXd& L, const MatrixXd& dX, double tau) {
  MatrixXd Z = L.triangularView<Eigen::Lower>().solve(dX);
  MatrixXd Y = L.triangularView<Eigen::Lower>().solve(Z.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Y, Eigen::EigenvaluesOnly);
  double phi = es.eigenvalues().minCoeff();
  if (phi >= 0.0) return 1.0;
  return std::min(1.0, -tau / phi);
}

}  // namespace

SdpSolution solve(const SdpInstance& inst, const SdpSolveOptions& opts) {
  if (!(opts.feas_tol > 0.0) || opts.feas_tol > 1e-2 ||
      !(opts.gap_tol > 0.0) || opts.gap_tol > 1e-2)
    throw SdpError("feas_tol and gap_tol must lie in (0, 1e-2]");
  if (opts.max_iters < 1) throw SdpError("max_iters must be positive");

  const auto t_start = std::chrono::steady_clock::now();
  const int m = int(inst.rows.size());
  const int nf = inst.n_free();
  const int p = int(inst.blocks.size());

  // --- equilibrate rows to unit inf-norm --------------------------------
  std::vector<double> scale(size_t(m), 1.0);
  for (int i = 0; i < m; ++i) {
    double mx = 0.0;
    for (const auto& [idx, v] : inst.rows[size_t(i)].w)
      mx = std::max(mx, std::abs(v));
    for (const SdpEntry& e : inst.rows[size_t(i)].mats)
      mx = std::max(mx, std::abs(e.v));
    if (mx > 0.0) scale[size_t(i)] = 1.0 / mx;
  }

  VectorXd b_orig(m), b(m);
  for (int i = 0; i < m; ++i) {
    b_orig(i) = inst.rows[size_t(i)].rhs;
    b(i) = b_orig(i) * scale[size_t(i)];
  }
  VectorXd c = VectorXd::Zero(nf);
  for (int j = 0; j < nf; ++j) c(j) = inst.c[size_t(j)];

  MatrixXd Aw = MatrixXd::Zero(m, nf);
  for (int i = 0; i < m; ++i)
    for (const auto& [idx, v] : inst.rows[size_t(i)].w)
      Aw(i, idx) = v * scale[size_t(i)];

  std::vector<BlockData> blk(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) blk[size_t(j)].dim = inst.blocks[size_t(j)].dim;
  for (int i = 0; i < m; ++i)
    for (const SdpEntry& e : inst.rows[size_t(i)].mats)
      blk[size_t(e.block)].entries.push_back(
          {i, e.i, e.j, e.v * scale[size_t(i)]});
  int dim_total = 0;
  for (int j = 0; j < p; ++j) {
    auto& bd = blk[size_t(j)];
    dim_total += bd.dim;
    std::stable_sort(bd.entries.begin(), bd.entries.end(),
                     [](const LocalEntry& a, const LocalEntry& b2) {
                       if (a.row != b2.row) return a.row < b2.row;
                       if (a.i != b2.i) return a.i < b2.i;
                       return a.j < b2.j;
                     });
    for (size_t e = 0; e < bd.entries.size(); ++e)
      if (e == 0 || bd.entries[e].row != bd.entries[e - 1].row) {
        bd.group_start.push_back(int(e));
        bd.group_row.push_back(bd.entries[e].row);
      }
    bd.group_start.push_back(int(bd.entries.size()));
  }
  if (dim_total == 0) throw SdpError("instance has no psd variables");

  std::vector<MatrixXd> C(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j)
    C[size_t(j)] = MatrixXd::Zero(blk[size_t(j)].dim, blk[size_t(j)].dim);
  double c_norm = c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
  for (const SdpEntry& e : inst.cost) {
    C[size_t(e.block)](e.i, e.j) = e.v;
    C[size_t(e.block)](e.j, e.i) = e.v;
    c_norm = std::max(c_norm, std::abs(e.v));
  }
  const double b_norm = m ? b_orig.cwiseAbs().maxCoeff() : 0.0;

  // --- state -------------------------------------------------------------
  VectorXd w = VectorXd::Zero(nf), y = VectorXd::Zero(m);
  std::vector<MatrixXd> Q(static_cast<size_t>(p)), S(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) {
    Q[size_t(j)] = MatrixXd::Identity(blk[size_t(j)].dim, blk[size_t(j)].dim);
    S[size_t(j)] = Q[size_t(j)];
  }

  // Best iterate seen so far, by worst normalized KKT measure. Returned
  // whenever the run ends without convergence, so a late numerical stumble
  // cannot erase an almost-converged point.
  struct BestIterate {
    double merit = std::numeric_limits<double>::infinity();
    VectorXd w, y;
    std::vector<MatrixXd> Q, S;
    double pobj = 0, dobj = 0, p_res = 0, d_res = 0, rel_gap = 0, mu = 0;
  } best;

  SdpSolution sol;
  const double tau = 0.98;

  // Reusable iteration-scope storage (the Schur factorizations own the big
  // allocations).
  SchurSolver<double> ssd;
  std::vector<MatrixXd> L(static_cast<size_t>(p)), LS(static_cast<size_t>(p)),
      W(static_cast<size_t>(p)), G(static_cast<size_t>(p)),
      Ginv(static_cast<size_t>(p)), Rd(static_cast<size_t>(p)),
      Rc(static_cast<size_t>(p)), dQ(static_cast<size_t>(p)),
      dS(static_cast<size_t>(p)), dQa(static_cast<size_t>(p)),
      dSa(static_cast<size_t>(p));
  std::vector<VectorXd> lam(static_cast<size_t>(p));

  // Long-double escalation, engaged (and then kept) once double-precision
  // polishing of the saddle solves can no longer hit the feasibility budget.
  // Capped by row count: the long-double Schur matrix is dense too.
  const int kLdMaxRows = 3000;
  bool use_ld = false, ld_broken = false, awl_ready = false;
  SchurSolver<long double> ssl;
  MatR<long double> Awl;
  std::vector<MatR<long double>> Wl(static_cast<size_t>(p));

  auto fill_solution = [&](SolveStatus st, int iters) {
    sol.status = st;
    sol.iterations = iters;
    sol.free_values.clear();
    for (int j = 0; j < nf; ++j) sol.free_values.push_back(w(j));
    sol.dual_values.resize(size_t(m));
    for (int i = 0; i < m; ++i)
      sol.dual_values[size_t(i)] = y(i) * scale[size_t(i)];
    sol.psd_blocks.clear();
    sol.dual_blocks.clear();
    for (int j = 0; j < p; ++j) {
      const int n = blk[size_t(j)].dim;
      sol.psd_blocks.emplace_back(Q[size_t(j)].data(),
                                  Q[size_t(j)].data() + n * n);
      sol.dual_blocks.emplace_back(S[size_t(j)].data(),
                                   S[size_t(j)].data() + n * n);
    }
  };

  auto restore_best = [&]() {
    if (!std::isfinite(best.merit)) return;
    w = best.w;
    y = best.y;
    Q = best.Q;
    S = best.S;
    sol.primal_objective = best.pobj;
    sol.dual_objective = best.dobj;
    sol.p_res = best.p_res;
    sol.d_res = best.d_res;
    sol.rel_gap = best.rel_gap;
    sol.mu = best.mu;
  };

  int iter = 0;
  SolveStatus status = SolveStatus::kMaxIters;
  for (iter = 0; iter <= opts.max_iters; ++iter) {
    // residuals in the original row scaling
    VectorXd rp = b - Aw * w;  // scaled frame
    for (int j = 0; j < p; ++j) {
      const auto& bd = blk[size_t(j)];
      for (const LocalEntry& e : bd.entries)
        rp(e.row) -= (e.i == e.j ? 1.0 : 2.0) * e.v * Q[size_t(j)](e.i, e.j);
    }
    VectorXd rdw = c - Aw.transpose() * y;
    double d_inf = rdw.size() ? rdw.cwiseAbs().maxCoeff() : 0.0;
    double compl_sum = 0.0;
    double pobj = c.dot(w), dobj = b.dot(y);
    for (int j = 0; j < p; ++j) {
      Rd[size_t(j)] = C[size_t(j)] - S[size_t(j)];
      const auto& bd = blk[size_t(j)];
      for (const LocalEntry& e : bd.entries) {
        Rd[size_t(j)](e.i, e.j) -= y(e.row) * e.v;
        if (e.i != e.j) Rd[size_t(j)](e.j, e.i) -= y(e.row) * e.v;
      }
      d_inf = std::max(d_inf, Rd[size_t(j)].cwiseAbs().maxCoeff());
      compl_sum += Q[size_t(j)].cwiseProduct(S[size_t(j)]).sum();
      pobj += C[size_t(j)].cwiseProduct(Q[size_t(j)]).sum();
    }
    double p_inf = 0.0;
    for (int i = 0; i < m; ++i)
      p_inf = std::max(p_inf, std::abs(rp(i)) / scale[size_t(i)]);

    const double mu = compl_sum / dim_total;
    const double p_res = p_inf / (1.0 + b_norm);
    const double d_res = d_inf / (1.0 + c_norm);
    const double rel_gap =
        std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    // Divergence shows up here as overflow; hand back the best iterate and
    // its diagnostics instead of the wreckage.
    if (!std::isfinite(mu) || !std::isfinite(pobj) || !std::isfinite(dobj) ||
        !std::isfinite(p_inf) || mu < 0.0) {
      restore_best();
      status = SolveStatus::kNumericalFailure;
      break;
    }

    const double merit =
        std::max({p_res / opts.feas_tol, d_res / opts.feas_tol,
                  rel_gap / opts.gap_tol,
                  mu / (opts.gap_tol * (1.0 + std::abs(pobj)))});
    if (merit < best.merit) {
      best.merit = merit;
      best.w = w;
      best.y = y;
      best.Q = Q;
      best.S = S;
      best.pobj = pobj;
      best.dobj = dobj;
      best.p_res = p_res;
      best.d_res = d_res;
      best.rel_gap = rel_gap;
      best.mu = mu;
    }

    sol.primal_objective = pobj;
    sol.dual_objective = dobj;
    sol.p_res = p_res;
    sol.d_res = d_res;
    sol.rel_gap = rel_gap;
    sol.mu = mu;
    sol.trace.push_back({iter, mu, p_res, d_res, rel_gap, 0.0, 0.0, pobj, dobj});
    if (opts.verbose)
      std::fprintf(stderr, "iter %3d mu %.3e p_res %.3e d_res %.3e gap %.3e\n",
                   iter, mu, p_res, d_res, rel_gap);
    if (std::getenv("REACHSOS_SDP_DEBUG"))
      std::fprintf(stderr, "   dbg |y|=%.2e |w|=%.2e\n",
                   m ? y.cwiseAbs().maxCoeff() : 0.0,
                   nf ? w.cwiseAbs().maxCoeff() : 0.0);
    if (p_res <= opts.feas_tol && d_res <= opts.feas_tol &&
        rel_gap <= opts.gap_tol &&
        mu <= opts.gap_tol * (1.0 + std::abs(pobj))) {
      status = SolveStatus::kOptimal;
      break;
    }
    if (iter == opts.max_iters) {
      restore_best();
      status = SolveStatus::kMaxIters;
      break;
    }
    if (opts.time_budget_sec > 0.0) {
      double elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
      if (elapsed > opts.time_budget_sec) {
        restore_best();
        status = SolveStatus::kMaxIters;
        break;
      }
    }

    // --- NT scaling per block -------------------------------------------
    bool scale_ok = true;
    for (int j = 0; j < p && scale_ok; ++j) {
      const int n = blk[size_t(j)].dim;
      if (!chol(Q[size_t(j)], L[size_t(j)]) ||
          !chol(S[size_t(j)], LS[size_t(j)])) {
        scale_ok = false;
        break;
      }
      MatrixXd E = L[size_t(j)].transpose() * S[size_t(j)] * L[size_t(j)];
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(E);
      if (es.info() != Eigen::Success ||
          es.eigenvalues().minCoeff() <= 0.0) {
        scale_ok = false;
        break;
      }
      VectorXd theta = es.eigenvalues();
      lam[size_t(j)] = theta.cwiseSqrt();
      const MatrixXd& U = es.eigenvectors();
      VectorXd tq = theta.array().pow(-0.25);
      G[size_t(j)] = L[size_t(j)] * U * tq.asDiagonal();
      MatrixXd Linv = L[size_t(j)]
                          .triangularView<Eigen::Lower>()
                          .solve(MatrixXd::Identity(n, n));
      VectorXd tq2 = theta.array().pow(0.25);
      Ginv[size_t(j)] = tq2.asDiagonal() * U.transpose() * Linv;
      W[size_t(j)] = G[size_t(j)] * G[size_t(j)].transpose();
    }
    if (!scale_ok) {
      restore_best();
      status = SolveStatus::kNumericalFailure;
      break;
    }

    // --- Schur complement ------------------------------------------------
    auto compute_ld = [&]() {
      if (!awl_ready) {
        Awl = Aw.cast<long double>();
        awl_ready = true;
      }
      for (int j = 0; j < p; ++j)
        Wl[size_t(j)] = W[size_t(j)].cast<long double>();
      bool ok = ssl.compute(blk, Wl, Awl, 0.0L);
      // Jitter escalation, starting barely above the smallest pivots the
      // factorization can hold: a slightly biased factorization still
      // serves, since the refinement polishes against the exact operator
      // and the defect gate rejects bad directions.
      long double regl = 0.0L;
      for (int attempt = 1; attempt < 5 && !ok; ++attempt) {
        regl = (regl == 0.0L
                    ? 1e-18L * std::max<long double>(1.0L, ssl.diag_max)
                    : regl * 100.0L);
        ok = ssl.compute(blk, Wl, Awl, regl);
      }
      return ok;
    };
    bool ld_ready = false;
    if (use_ld && !ld_broken) {
      ld_ready = compute_ld();
      if (!ld_ready) ld_broken = true;
    }
    if (!ld_ready) {
      // On factorization failure rebuild with a diagonal bump and retry.
      double reg = 0.0;
      bool factored = ssd.compute(blk, W, Aw, 0.0);
      for (int attempt = 1; attempt < 4 && !factored; ++attempt) {
        reg = (reg == 0.0 ? 1e-12 * std::max(1.0, ssd.diag_max) : reg * 1e4);
        factored = ssd.compute(blk, W, Aw, reg);
      }
      if (!factored) {
        restore_best();
        status = SolveStatus::kNumericalFailure;
        break;
      }
    }

    const double err_floor = 0.05 * opts.feas_tol * (1.0 + b_norm);

    // Feasibility defect of the assembled direction (dQ, dw), in the
    // caller's row scaling; the step is only safe when this is small.
    auto direction_defect = [&](const VectorXd& dwv) {
      VectorXd chk = rp;
      if (nf > 0) chk.noalias() -= Aw * dwv;
      for (int j = 0; j < p; ++j)
        for (const LocalEntry& e : blk[size_t(j)].entries)
          chk(e.row) -= (e.i == e.j ? 1.0 : 2.0) * e.v *
                        dQ[size_t(j)](e.i, e.j);
      double de = 0.0;
      for (int i2 = 0; i2 < m; ++i2)
        de = std::max(de, std::abs(chk(i2)) / scale[size_t(i2)]);
      de /= 1.0 + b_norm;
      if (std::getenv("REACHSOS_SDP_DEBUG"))
        std::fprintf(stderr, "   dbg dir_feas_err=%.2e\n", de);
      return de;
    };

    // dS = Rd - A'dy, dQ = Rc - W dS W, symmetrized so the later update
    // applies exactly what the defect measurement saw.
    auto reconstruct_d = [&](const VectorXd& dyv) {
      for (int j = 0; j < p; ++j) {
        dS[size_t(j)] = Rd[size_t(j)];
        const auto& bd = blk[size_t(j)];
        for (const LocalEntry& e : bd.entries) {
          dS[size_t(j)](e.i, e.j) -= dyv(e.row) * e.v;
          if (e.i != e.j) dS[size_t(j)](e.j, e.i) -= dyv(e.row) * e.v;
        }
        dQ[size_t(j)] =
            Rc[size_t(j)] - W[size_t(j)] * dS[size_t(j)] * W[size_t(j)];
        dQ[size_t(j)] =
            (0.5 * (dQ[size_t(j)] + dQ[size_t(j)].transpose())).eval();
      }
    };

    // Full direction computation in long double. Once the Schur system is
    // this ill-conditioned, the cancellations in h and in the W dS W
    // reconstruction lose as many digits as the solve itself, so the whole
    // chain stays in extended precision until the final cast.
    auto direction_ld = [&](VectorXd& dy, VectorXd& dw) {
      VecR<long double> hl = VecR<long double>::Zero(m);
      std::vector<MatR<long double>> Rcl(static_cast<size_t>(p)),
          Rdl(static_cast<size_t>(p));
      for (int j = 0; j < p; ++j) {
        Rcl[size_t(j)] = Rc[size_t(j)].cast<long double>();
        Rdl[size_t(j)] = Rd[size_t(j)].cast<long double>();
        MatR<long double> T =
            Rcl[size_t(j)] - Wl[size_t(j)] * Rdl[size_t(j)] * Wl[size_t(j)];
        const auto& bd = blk[size_t(j)];
        for (const LocalEntry& e : bd.entries)
          hl(e.row) += (e.i == e.j ? 1.0L : 2.0L) *
                       static_cast<long double>(e.v) * T(e.i, e.j);
      }
      VecR<long double> r1l = rp.cast<long double>() - hl;
      VecR<long double> rdl = rdw.cast<long double>();
      VecR<long double> dyl, dwl;
      // Passes are cheap at small sizes, and a jittered factorization may
      // contract slowly; let it grind when the instance allows.
      const int ld_passes = 200;
      refine_saddle<long double>(ssl, blk, Wl, Awl, scale, r1l, rdl,
                                 err_floor, ld_passes, 0.97, dyl, dwl);
      for (int j = 0; j < p; ++j) {
        MatR<long double> dSl = Rdl[size_t(j)];
        const auto& bd = blk[size_t(j)];
        for (const LocalEntry& e : bd.entries) {
          dSl(e.i, e.j) -= dyl(e.row) * static_cast<long double>(e.v);
          if (e.i != e.j)
            dSl(e.j, e.i) -= dyl(e.row) * static_cast<long double>(e.v);
        }
        MatR<long double> dQl =
            Rcl[size_t(j)] - Wl[size_t(j)] * dSl * Wl[size_t(j)];
        dQl = (0.5L * (dQl + dQl.transpose())).eval();
        dS[size_t(j)] = dSl.cast<double>();
        dQ[size_t(j)] = dQl.cast<double>();
      }
      dy = dyl.cast<double>();
      dw = dwl.cast<double>();
      return direction_defect(dw);
    };

    auto solve_direction = [&](VectorXd& dy, VectorXd& dw) {
      if (!ld_ready) {
        // h_i = sum_j <A_ij, Rc_j - W Rd_j W>
        VectorXd h = VectorXd::Zero(m);
        for (int j = 0; j < p; ++j) {
          MatrixXd T = Rc[size_t(j)] -
                       W[size_t(j)] * Rd[size_t(j)] * W[size_t(j)];
          const auto& bd = blk[size_t(j)];
          for (const LocalEntry& e : bd.entries)
            h(e.row) += (e.i == e.j ? 1.0 : 2.0) * e.v * T(e.i, e.j);
        }
        VectorXd r1 = rp - h;
        double err = refine_saddle<double>(ssd, blk, W, Aw, scale, r1, rdw,
                                           err_floor, 40, 0.9, dy, dw);
        if (err <= err_floor || m > kLdMaxRows || ld_broken) {
          reconstruct_d(dy);
          return direction_defect(dw);
        }
        // Double precision fell short of the budget: redo this direction in
        // long double and stay there for the rest of the run.
        use_ld = true;
        ld_ready = compute_ld();
        if (!ld_ready) {
          ld_broken = true;
          reconstruct_d(dy);
          return direction_defect(dw);
        }
      }
      return direction_ld(dy, dw);
    };

    // predictor: sigma = 0
    for (int j = 0; j < p; ++j) {
      VectorXd z = -lam[size_t(j)];
      Rc[size_t(j)] =
          G[size_t(j)] * z.asDiagonal() * G[size_t(j)].transpose();
    }
    VectorXd dy, dw;
    solve_direction(dy, dw);
    // Equal primal/dual steps keep feasibility and complementarity shrinking
    // together; letting them drift apart stalls the primal residual.
    double a_aff = 1.0;
    for (int j = 0; j < p; ++j) {
      a_aff = std::min(a_aff, max_step(L[size_t(j)], dQ[size_t(j)], 1.0));
      a_aff = std::min(a_aff, max_step(LS[size_t(j)], dS[size_t(j)], 1.0));
      dQa[size_t(j)] = dQ[size_t(j)];
      dSa[size_t(j)] = dS[size_t(j)];
    }
    double mu_aff = 0.0;
    for (int j = 0; j < p; ++j)
      mu_aff += (Q[size_t(j)] + a_aff * dQa[size_t(j)])
                    .cwiseProduct(S[size_t(j)] + a_aff * dSa[size_t(j)])
                    .sum();
    mu_aff /= dim_total;
    double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

    // corrector
    for (int j = 0; j < p; ++j) {
      const int n = blk[size_t(j)].dim;
      MatrixXd Dq = Ginv[size_t(j)] * dQa[size_t(j)] *
                    Ginv[size_t(j)].transpose();
      MatrixXd Ds = G[size_t(j)].transpose() * dSa[size_t(j)] * G[size_t(j)];
      MatrixXd Rhat = -0.5 * (Dq * Ds + Ds * Dq);
      Rhat.diagonal().array() += sigma * mu;
      Rhat.diagonal().array() -= lam[size_t(j)].array().square();
      MatrixXd Z(n, n);
      for (int a = 0; a < n; ++a)
        for (int b2 = 0; b2 < n; ++b2)
          Z(a, b2) = 2.0 * Rhat(a, b2) /
                     (lam[size_t(j)](a) + lam[size_t(j)](b2));
      Rc[size_t(j)] = G[size_t(j)] * Z * G[size_t(j)].transpose();
    }
    double dir_err = solve_direction(dy, dw);
    const double dir_gate = std::max(0.25 * p_res, 2.0 * opts.feas_tol);
    double a = 1.0;
    if (dir_err <= dir_gate) {
      for (int j = 0; j < p; ++j) {
        a = std::min(a, max_step(L[size_t(j)], dQ[size_t(j)], tau));
        a = std::min(a, max_step(LS[size_t(j)], dS[size_t(j)], tau));
      }
    } else {
      // The second-order term divides by lam_a + lam_b, and near a
      // rank-deficient optimum it amplifies roundoff beyond what the
      // refinement loop can repair. Centering directions keep the scaled
      // residual diagonal (sg*mu/lam - lam) and stay accurate, so pick the
      // one that shrinks mu fastest among a few centering weights before
      // concluding the iterate can't be improved. The factorization is
      // reused; each candidate only costs a solve.
      bool have = false;
      double best_red = 1.0;
      VectorXd dy_c, dw_c;
      std::vector<MatrixXd> dQ_c, dS_c;
      double a_c = 0.0, err_c = 0.0, sg_c = 0.0;
      for (double sg : {sigma, 0.3, 0.1, 0.03}) {
        if (have && sg >= sg_c) continue;
        for (int j = 0; j < p; ++j) {
          VectorXd z = sg * mu * lam[size_t(j)].cwiseInverse() -
                       lam[size_t(j)];
          Rc[size_t(j)] =
              G[size_t(j)] * z.asDiagonal() * G[size_t(j)].transpose();
        }
        double err = solve_direction(dy, dw);
        if (err > dir_gate) continue;
        double ac = 1.0;
        for (int j = 0; j < p; ++j) {
          ac = std::min(ac, max_step(L[size_t(j)], dQ[size_t(j)], tau));
          ac = std::min(ac, max_step(LS[size_t(j)], dS[size_t(j)], tau));
        }
        double cs = 0.0;
        for (int j = 0; j < p; ++j)
          cs += (Q[size_t(j)] + ac * dQ[size_t(j)])
                    .cwiseProduct(S[size_t(j)] + ac * dS[size_t(j)])
                    .sum();
        double red = cs / (dim_total * mu);
        if (!have || red < best_red) {
          have = true;
          best_red = red;
          dy_c = dy;
          dw_c = dw;
          dQ_c = dQ;
          dS_c = dS;
          a_c = ac;
          err_c = err;
          sg_c = sg;
        }
      }
      // Once the Schur system is too ill-conditioned to produce a feasible
      // direction making headway, taking more steps only corrodes the
      // iterate; stop and hand back the best one instead.
      if (!have || best_red > 0.995) {
        restore_best();
        status = SolveStatus::kMaxIters;
        break;
      }
      dy = dy_c;
      dw = dw_c;
      dQ = dQ_c;
      dS = dS_c;
      a = a_c;
      dir_err = err_c;
      if (std::getenv("REACHSOS_SDP_DEBUG"))
        std::fprintf(stderr, "   dbg fallback sg=%.2e red=%.3f a=%.2e\n",
                     sg_c, best_red, a_c);
    }

    w += a * dw;
    y += a * dy;
    for (int j = 0; j < p; ++j) {
      Q[size_t(j)] += a * dQ[size_t(j)];
      S[size_t(j)] += a * dS[size_t(j)];
      Q[size_t(j)] = 0.5 * (Q[size_t(j)] + Q[size_t(j)].transpose()).eval();
      S[size_t(j)] = 0.5 * (S[size_t(j)] + S[size_t(j)].transpose()).eval();
    }
    sol.trace.back().alpha_p = a;
    sol.trace.back().alpha_d = a;
    if (std::getenv("REACHSOS_SDP_DEBUG"))
      std::fprintf(stderr, "   dbg sigma=%.2e a_aff=%.2e a=%.2e |dy|=%.2e\n",
                   sigma, a_aff, a, m ? dy.cwiseAbs().maxCoeff() : 0.0);
  }

  fill_solution(status, iter);
  return sol;
}

}  // namespace reachsos
