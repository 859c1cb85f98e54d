#pragma once

// Shortcut finite differences: derivatives of the reduced objective
// F*(p) = chi^2(p, q*(p)) computed by re-solving for q at every displaced
// probe point, plus the shortcut model Jacobian used by Gauss-Newton and the
// finite-difference q* Jacobian used in identity checks.

#include "sepfit/linear_solver.hpp"

#include <string>

namespace sepfit {

struct ShortcutJacobian {
  Mat J;            // T x M
  long long evals = 0;  // q* solves consumed
};

namespace detail {

inline double probe_fstar(const SeparableModel& model, const DataSet& data, const Vec& p,
                          RankPolicy policy, double ridge, Counters* counters,
                          const std::string& what) {
  QStarResult r = solve_qstar(model, p, data, ridge, counters);
  if (policy == RankPolicy::strict && !r.rank_ok)
    throw RankError("rank-deficient q* solve at probe " + what + " for model '" + model.name +
                    "'");
  return r.fstar;
}

}  // namespace detail

// Component m: D*_F(delta_m, m) = [F*(p + d e_m) - F*(p - d e_m)] / (2 d).
inline Vec shortcut_gradient(const SeparableModel& model, const DataSet& data, const Vec& p,
                             const StepScheme& steps = {}, Counters* counters = nullptr,
                             RankPolicy policy = RankPolicy::minimum_norm, double ridge = 0.0) {
  const int M = model.nonlinear_dim;
  Vec g(M);
  for (int m = 0; m < M; ++m) {
    const double d = steps.step_for(p[m], m);
    Vec pp = p, pm = p;
    pp[m] += d;
    pm[m] -= d;
    const std::string tag = "p +/- delta e_" + std::to_string(m + 1);
    const double fp = detail::probe_fstar(model, data, pp, policy, ridge, counters, tag);
    const double fm = detail::probe_fstar(model, data, pm, policy, ridge, counters, tag);
    g[m] = (fp - fm) / (2.0 * d);
  }
  return g;
}

// Four-point second stencil D*_F(delta, m, m'); for m == m' this degenerates
// to [F*(p + 2d e_m) - 2 F*(p) + F*(p - 2d e_m)] / (4 d^2).
inline double shortcut_second(const SeparableModel& model, const DataSet& data, const Vec& p,
                              int m, int mp, const StepScheme& steps = {},
                              Counters* counters = nullptr,
                              RankPolicy policy = RankPolicy::minimum_norm, double ridge = 0.0) {
  const double dm = steps.step_for(p[m], m);
  const double dmp = steps.step_for(p[mp], mp);
  auto F = [&](const Vec& x, const char* tag) {
    return detail::probe_fstar(model, data, x, policy, ridge, counters, tag);
  };
  if (m == mp) {
    Vec pp = p, pm = p;
    pp[m] += 2.0 * dm;
    pm[m] -= 2.0 * dm;
    const double f0 = F(p, "center");
    return (F(pp, "p + 2 delta") - 2.0 * f0 + F(pm, "p - 2 delta")) / (4.0 * dm * dm);
  }
  Vec a = p, b = p, c = p, d = p;
  a[m] += dm; a[mp] += dmp;
  b[m] += dm; b[mp] -= dmp;
  c[m] -= dm; c[mp] += dmp;
  d[m] -= dm; d[mp] -= dmp;
  return (F(a, "++") - F(b, "+-") - F(c, "-+") + F(d, "--")) / (4.0 * dm * dmp);
}

// J[j][m] = [f(t_j; p+d e_m, q*(p+d e_m)) - f(t_j; p-d e_m, q*(p-d e_m))] / (2 d).
inline ShortcutJacobian shortcut_model_jacobian(const SeparableModel& model, const DataSet& data,
                                                const Vec& p, const StepScheme& steps = {},
                                                Counters* counters = nullptr,
                                                RankPolicy policy = RankPolicy::minimum_norm,
                                                double ridge = 0.0) {
  const int M = model.nonlinear_dim;
  const Eigen::Index T = data.size();
  ShortcutJacobian out;
  out.J.resize(T, M);
  auto values_at = [&](const Vec& x, const std::string& tag) {
    Design dsg = build_design(model, x, data, counters);
    auto [qr, r] = detail::solve_qstar_design(dsg, data, ridge, counters);
    if (policy == RankPolicy::strict && !qr.rank_ok)
      throw RankError("rank-deficient q* solve at probe " + tag + " for model '" + model.name +
                      "'");
    out.evals += 1;
    return Vec(r + data.y);  // f values
  };
  for (int m = 0; m < M; ++m) {
    const double d = steps.step_for(p[m], m);
    Vec pp = p, pm = p;
    pp[m] += d;
    pm[m] -= d;
    const std::string tag = "p +/- delta e_" + std::to_string(m + 1);
    out.J.col(m) = (values_at(pp, tag) - values_at(pm, tag)) / (2.0 * d);
  }
  return out;
}

// Central differences of q*(p) component-wise; N x M.
inline Mat fd_qstar_jacobian(const SeparableModel& model, const DataSet& data, const Vec& p,
                             const StepScheme& steps = {}, Counters* counters = nullptr,
                             double ridge = 0.0) {
  const int M = model.nonlinear_dim;
  const int N = model.linear_dim;
  Mat J(N, M);
  for (int m = 0; m < M; ++m) {
    const double d = steps.step_for(p[m], m);
    Vec pp = p, pm = p;
    pp[m] += d;
    pm[m] -= d;
    Vec qp = solve_qstar(model, pp, data, ridge, counters).q_star;
    Vec qm = solve_qstar(model, pm, data, ridge, counters).q_star;
    J.col(m) = (qp - qm) / (2.0 * d);
  }
  return J;
}

}  // namespace sepfit
