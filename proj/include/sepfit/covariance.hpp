#pragma once

// Reduced-Hessian covariance machinery: the shortcut Hessian H*(delta)
// assembled from second shortcut stencils, full finite-difference Hessian
// blocks of chi^2 in all M+N variables, the Schur-complement and
// inverse-block identities connecting them, and the covariance report.

#include "sepfit/shortcut.hpp"

#include <Eigen/Dense>

#include <vector>

namespace sepfit {

struct HessianBlocks {
  Mat H_pp;  // M x M
  Mat H_pq;  // M x N
  Mat H_qp;  // N x M
  Mat H_qq;  // N x N

  Mat full() const {
    const Eigen::Index M = H_pp.rows(), N = H_qq.rows();
    Mat H(M + N, M + N);
    H.topLeftCorner(M, M) = H_pp;
    H.topRightCorner(M, N) = H_pq;
    H.bottomLeftCorner(N, M) = H_qp;
    H.bottomRightCorner(N, N) = H_qq;
    return H;
  }
};

struct ReducedCovariance {
  Mat H_star;
  Mat eta_star;
  double delta_used = 0.0;
};

namespace detail {

inline Mat hessian_concat_fd(const SeparableModel& model, const DataSet& data, const Vec& z0,
                             const StepScheme& steps, Counters* counters) {
  const Eigen::Index M = model.nonlinear_dim;
  const Eigen::Index n = z0.size();
  auto F = [&](const Vec& z) {
    ParamSplit ps{z.head(M), z.tail(n - M)};
    return chi_squared(model, ps, data, counters);
  };
  Mat H(n, n);
  const double f0 = F(z0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = steps.step_for(z0[i], i);
    Vec zp = z0, zm = z0;
    zp[i] += di;
    zm[i] -= di;
    H(i, i) = (F(zp) - 2.0 * f0 + F(zm)) / (di * di);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dj = steps.step_for(z0[j], j);
      Vec a = z0, b = z0, c = z0, d = z0;
      a[i] += di; a[j] += dj;
      b[i] += di; b[j] -= dj;
      c[i] -= di; c[j] += dj;
      d[i] -= di; d[j] -= dj;
      H(i, j) = (F(a) - F(b) - F(c) + F(d)) / (4.0 * di * dj);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

inline HessianBlocks partition(const Mat& H, Eigen::Index M) {
  const Eigen::Index N = H.rows() - M;
  HessianBlocks b;
  b.H_pp = H.topLeftCorner(M, M);
  b.H_pq = H.topRightCorner(M, N);
  b.H_qp = H.bottomLeftCorner(N, M);
  b.H_qq = H.bottomRightCorner(N, N);
  return b;
}

}  // namespace detail

// Plain central second-difference Hessian of chi^2 at (p, q), partitioned.
inline HessianBlocks full_hessian_fd(const SeparableModel& model, const DataSet& data,
                                     const ParamSplit& point, const StepScheme& steps = {},
                                     Counters* counters = nullptr) {
  Vec z(point.p.size() + point.q.size());
  z << point.p, point.q;
  Mat H = detail::hessian_concat_fd(model, data, z, steps, counters);
  return detail::partition(H, point.p.size());
}

// Richardson-refined full Hessian: (4 H(h/2) - H(h)) / 3 on absolute steps.
// Used as the high-accuracy oracle for the covariance-limit and determinant checks.
inline HessianBlocks full_hessian_richardson(const SeparableModel& model, const DataSet& data,
                                             const ParamSplit& point, double h = 1e-3,
                                             Counters* counters = nullptr) {
  Vec z(point.p.size() + point.q.size());
  z << point.p, point.q;
  Mat Hh = detail::hessian_concat_fd(model, data, z, StepScheme::absolute(h), counters);
  Mat Hh2 = detail::hessian_concat_fd(model, data, z, StepScheme::absolute(h / 2.0), counters);
  Mat H = (4.0 * Hh2 - Hh) / 3.0;
  return detail::partition(H, point.p.size());
}

// Schur complement H_pp - H_pq H_qq^{-1} H_qp, the delta -> 0 limit of H*.
inline Mat schur_complement(const HessianBlocks& b) {
  return b.H_pp - b.H_pq * b.H_qq.ldlt().solve(b.H_qp);
}

// H*(delta)[m][m'] = D*_F(delta, m, m') assembled from second shortcut
// stencils at one fixed absolute displacement.
inline ReducedCovariance shortcut_hessian(const SeparableModel& model, const DataSet& data,
                                          const Vec& p, double delta,
                                          Counters* counters = nullptr) {
  if (delta <= 0.0) throw ConfigError("shortcut_hessian requires delta > 0");
  const int M = model.nonlinear_dim;
  StepScheme steps = StepScheme::absolute(delta);
  ReducedCovariance out;
  out.delta_used = delta;
  out.H_star.resize(M, M);
  for (int m = 0; m < M; ++m)
    for (int mp = m; mp < M; ++mp) {
      const double v = shortcut_second(model, data, p, m, mp, steps, counters);
      out.H_star(m, mp) = v;
      out.H_star(mp, m) = v;
    }
  Eigen::PartialPivLU<Mat> lu(out.H_star);
  out.eta_star = lu.inverse();
  if (!out.eta_star.allFinite() ||
      (out.H_star * out.eta_star - Mat::Identity(M, M)).lpNorm<Eigen::Infinity>() > 1e-6)
    throw FitError("shortcut Hessian H*(delta) is singular or too ill-conditioned to invert");
  return out;
}

struct CovarianceLimitReport {
  std::vector<double> deltas;
  std::vector<double> discrepancies;  // ||eta*(delta) - [H^{-1}]_pp||_inf
  std::vector<double> relative;       // discrepancy / ||[H^{-1}]_pp||_inf
  Mat eta_limit;                      // pp block of the full inverse Hessian
  bool monotone = false;
};

// Verifies eta*(delta) -> [H^{-1}]_{pp block} as delta decreases, where H is
// the full (M+N) x (M+N) Hessian of chi^2 at the point. The reference block
// comes from the Richardson-refined Hessian so the oracle floor sits well
// below the stencil errors being measured.
inline CovarianceLimitReport covariance_limit_check(const SeparableModel& model, const DataSet& data,
                                     const ParamSplit& point_opt,
                                     const std::vector<double>& delta_sequence,
                                     double oracle_h = 1e-3, Counters* counters = nullptr) {
  const Eigen::Index M = point_opt.p.size();
  HessianBlocks blocks = full_hessian_richardson(model, data, point_opt, oracle_h, counters);
  Mat H = blocks.full();
  Mat Hinv = H.partialPivLu().inverse();
  if (!Hinv.allFinite()) throw FitError("full Hessian is singular at the supplied point");

  CovarianceLimitReport rep;
  rep.eta_limit = Hinv.topLeftCorner(M, M);
  const double scale = rep.eta_limit.lpNorm<Eigen::Infinity>();
  for (double d : delta_sequence) {
    ReducedCovariance rc = shortcut_hessian(model, data, point_opt.p, d, counters);
    const double disc = (rc.eta_star - rep.eta_limit).lpNorm<Eigen::Infinity>();
    rep.deltas.push_back(d);
    rep.discrepancies.push_back(disc);
    rep.relative.push_back(disc / scale);
  }
  rep.monotone = true;
  for (size_t i = 1; i < rep.discrepancies.size(); ++i)
    if (rep.discrepancies[i] >= rep.discrepancies[i - 1]) rep.monotone = false;
  return rep;
}

struct FitCovariance {
  Mat covariance;      // 2 * H*(delta)^{-1}, valid when w are inverse variances
  Vec stderr_estimates;
  Mat eta_star;        // unscaled inverse shortcut Hessian
  double delta_used = 0.0;
};

// Covariance of the fitted nonlinear parameters from the shortcut Hessian.
// delta = 0 selects the default displacement 1e-3 * max(1, ||p||_inf).
inline FitCovariance fit_covariance(const SeparableModel& model, const DataSet& data,
                                    const Vec& p_opt, double delta = 0.0,
                                    Counters* counters = nullptr) {
  const double d = delta > 0.0 ? delta : 1e-3 * std::max(1.0, p_opt.lpNorm<Eigen::Infinity>());
  ReducedCovariance rc = shortcut_hessian(model, data, p_opt, d, counters);
  FitCovariance out;
  out.eta_star = rc.eta_star;
  out.delta_used = d;
  out.covariance = 2.0 * rc.eta_star;
  out.stderr_estimates.resize(p_opt.size());
  for (Eigen::Index m = 0; m < p_opt.size(); ++m) {
    const double v = out.covariance(m, m);
    if (v < 0.0)
      throw FitError("indefinite shortcut Hessian: negative variance, point is not a minimum");
    out.stderr_estimates[m] = std::sqrt(v);
  }
  return out;
}

}  // namespace sepfit
