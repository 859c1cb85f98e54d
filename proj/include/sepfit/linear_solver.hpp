#pragma once

// Exact minimization of chi^2 over the linear parameters at fixed p.
//
// Convention: chi^2(p, q) = q^T A q + b^T q + c with
//   A[n][n'] = sum_t phi_n phi_n' w_t
//   b[n]     = 2 sum_t (psi - y_t) phi_n w_t
//   c        = sum_t (psi - y_t)^2 w_t
// so grad_q chi^2 = 2 A q + b. The solve path uses an orthogonal
// decomposition of the sqrt(w)-scaled design matrix, not the normal
// equations; A, b, c are formed for identity tests and gradient checks.

#include "sepfit/model.hpp"

#include <Eigen/Dense>

#include <utility>

namespace sepfit {

struct NormalSystem {
  Mat A;
  Vec b;
  double c = 0.0;
};

struct QStarResult {
  Vec q_star;
  double fstar = 0.0;
  bool rank_ok = true;
};

inline NormalSystem build_normal_system(const SeparableModel& model, const Vec& p,
                                        const DataSet& data, Counters* counters = nullptr) {
  if (model.linear_dim < 1) throw ConfigError("build_normal_system requires N >= 1");
  Design d = build_design(model, p, data, counters);
  Vec res0 = d.psi - data.y;
  NormalSystem ns;
  ns.A = d.Phi.transpose() * data.w.asDiagonal() * d.Phi;
  ns.b = 2.0 * d.Phi.transpose() * (data.w.asDiagonal() * res0);
  ns.c = (res0.array().square() * data.w.array()).sum();
  return ns;
}

namespace detail {

// Shared solve on a prebuilt design; returns the residual alongside.
inline std::pair<QStarResult, Vec> solve_qstar_design(const Design& d, const DataSet& data,
                                                      double ridge, Counters* counters) {
  const Eigen::Index N = d.Phi.cols();
  QStarResult out;
  if (N == 0) {
    out.q_star = Vec();
    Vec r = d.psi - data.y;
    out.fstar = (r.array().square() * data.w.array()).sum();
    out.rank_ok = true;
    return {std::move(out), std::move(r)};
  }
  Vec sw = data.w.array().sqrt();
  Mat Aw = sw.asDiagonal() * d.Phi;
  Vec rhs = sw.asDiagonal() * (data.y - d.psi);

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(Aw);
  out.rank_ok = cod.rank() == N;
  if (ridge > 0.0) {
    Mat Awr(Aw.rows() + N, N);
    Awr.topRows(Aw.rows()) = Aw;
    Awr.bottomRows(N) = std::sqrt(ridge) * Mat::Identity(N, N);
    Vec rhsr = Vec::Zero(Awr.rows());
    rhsr.head(Aw.rows()) = rhs;
    Eigen::CompleteOrthogonalDecomposition<Mat> codr(Awr);
    out.q_star = codr.solve(rhsr);
  } else {
    out.q_star = cod.solve(rhs);
  }
  if (counters) counters->qstar_solves += 1;

  Vec r = d.Phi * out.q_star + d.psi - data.y;
  out.fstar = (r.array().square() * data.w.array()).sum();
  return {std::move(out), std::move(r)};
}

}  // namespace detail

inline QStarResult solve_qstar(const SeparableModel& model, const Vec& p, const DataSet& data,
                               double ridge = 0.0, Counters* counters = nullptr) {
  Design d = build_design(model, p, data, counters);
  return detail::solve_qstar_design(d, data, ridge, counters).first;
}

// F*(p) = chi^2(p, q*(p)), the reduced objective.
inline double reduced_chisq(const SeparableModel& model, const Vec& p, const DataSet& data,
                            Counters* counters = nullptr,
                            RankPolicy policy = RankPolicy::minimum_norm, double ridge = 0.0) {
  QStarResult r = solve_qstar(model, p, data, ridge, counters);
  if (policy == RankPolicy::strict && !r.rank_ok)
    throw RankError("rank-deficient design matrix in q* solve for model '" + model.name + "'");
  return r.fstar;
}

}  // namespace sepfit
