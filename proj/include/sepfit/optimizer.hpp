#pragma once

// Levenberg-Marquardt over the nonlinear parameters minimizing F*(p)
// (shortcut mode) and over the concatenated (p, q) vector (classical mode).
// One engine drives both; the modes differ only in how the objective value,
// residual and Jacobian are produced.
//
// Loop semantics (fixed, instrumented):
//   - damped system (H_GN + lambda diag(H_GN)) dx = -g with g = 2 J^T W r,
//     H_GN = 2 J^T W J
//   - accept when F(x + dx) < F(x): lambda /= lambda_down, rebuild J
//   - reject otherwise: lambda *= lambda_up, retry; every attempt counts as
//     one iteration
//   - converged on gradient test ||g||_inf < gtol (1 + F) right after a J
//     build, or on relative F decrease < ftol on two consecutive accepted
//     steps
//   - a trial point whose evaluation leaves the model domain counts as a
//     rejection

#include "sepfit/shortcut.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <limits>

namespace sepfit {

struct LmStep {
  Vec dp;
  double predicted_decrease = 0.0;
};

// One damped solve: (H_GN + lambda D) dp = -g with D = diag(H_GN) (Marquardt
// scaling) or the identity. predicted_decrease = -g.dp - dp.H_GN.dp / 2.
inline LmStep lm_step(const Mat& H_GN, const Vec& g, double lambda,
                      bool identity_damping = false) {
  const Eigen::Index n = g.size();
  Mat D = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double d = identity_damping ? 1.0 : H_GN(i, i);
    D(i, i) = d > 0.0 ? d : 1.0;
  }
  Mat A = H_GN + lambda * D;
  LmStep s;
  s.dp = A.ldlt().solve(-g);
  if (!s.dp.allFinite()) throw FitError("damped Gauss-Newton system could not be solved");
  s.predicted_decrease = -g.dot(s.dp) - 0.5 * s.dp.dot(H_GN * s.dp);
  return s;
}

namespace detail {

struct EngineResult {
  Vec x;
  double F = 0.0;
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  ConvergenceReason reason = ConvergenceReason::none;
  std::vector<double> trace;
};

template <class Obj>
EngineResult lm_engine(Obj& obj, const Vec& w, Vec x0, const FitOptions& o) {
  constexpr double tiny = 1e-300;
  EngineResult st;
  st.x = std::move(x0);
  st.F = obj.value(st.x);

  Vec r, g;
  Mat J, H;
  auto rebuild = [&](const Vec& x) {
    obj.jacobian(x, r, J);
    g = 2.0 * J.transpose() * (w.asDiagonal() * r);
    H = 2.0 * J.transpose() * (w.asDiagonal() * J);
  };
  auto grad_small = [&]() { return g.lpNorm<Eigen::Infinity>() < o.gtol * (1.0 + std::abs(st.F)); };

  rebuild(st.x);
  if (grad_small()) {
    st.converged = true;
    st.reason = ConvergenceReason::gtol;
    return st;
  }

  double lambda = o.lambda_init;
  int stagnant = 0;
  while (st.iterations < o.max_iterations) {
    LmStep step;
    bool solved = false;
    while (!solved) {
      try {
        step = lm_step(H, g, lambda, o.identity_damping);
        solved = true;
      } catch (const FitError&) {
        lambda *= o.lambda_up;
        if (lambda > o.lambda_cap)
          throw FitError("damped system singular at the lambda cap");
      }
    }

    ++st.iterations;
    Vec x_trial = st.x + step.dp;
    double F_trial = std::numeric_limits<double>::infinity();
    try {
      F_trial = obj.value(x_trial);
    } catch (const EvaluationError&) {
      // out-of-domain probe: treat as a rejected step
    }

    if (std::isfinite(F_trial) && F_trial < st.F) {
      const double decrease = st.F - F_trial;
      st.x = std::move(x_trial);
      st.F = F_trial;
      ++st.accepted;
      st.trace.push_back(st.F);
      lambda = std::max(lambda / o.lambda_down, 1e-12);
      stagnant = decrease < o.ftol * std::max(st.F, tiny) ? stagnant + 1 : 0;
      if (stagnant >= 2) {
        st.converged = true;
        st.reason = ConvergenceReason::ftol;
        break;
      }
      if (st.iterations >= o.max_iterations) break;
      rebuild(st.x);
      if (grad_small()) {
        st.converged = true;
        st.reason = ConvergenceReason::gtol;
        break;
      }
    } else {
      lambda *= o.lambda_up;
      if (lambda > o.lambda_cap) break;  // stalled, report best point so far
    }
  }
  return st;
}

struct ShortcutObjective {
  const SeparableModel& model;
  const DataSet& data;
  const FitOptions& opts;
  Counters& counters;
  Vec last_x, last_q, last_r;
  bool has_last = false;

  double value(const Vec& p) {
    Design d = build_design(model, p, data, &counters);
    auto [qr, r] = solve_qstar_design(d, data, 0.0, &counters);
    if (opts.rank_policy == RankPolicy::strict && !qr.rank_ok)
      throw RankError("rank-deficient q* solve at p probe for model '" + model.name + "'");
    last_x = p;
    last_q = qr.q_star;
    last_r = std::move(r);
    has_last = true;
    return qr.fstar;
  }

  void jacobian(const Vec& p, Vec& r, Mat& J) {
    assert(has_last && last_x == p);
    r = last_r;
    ShortcutJacobian sj =
        shortcut_model_jacobian(model, data, p, opts.steps, &counters, opts.rank_policy);
    J = std::move(sj.J);
  }
};

struct ClassicalObjective {
  const SeparableModel& model;
  const DataSet& data;
  const FitOptions& opts;
  Counters& counters;

  ParamSplit split(const Vec& x) const {
    return ParamSplit{x.head(model.nonlinear_dim), x.tail(model.linear_dim)};
  }

  double value(const Vec& x) { return chi_squared(model, split(x), data, &counters); }

  void jacobian(const Vec& x, Vec& r, Mat& J) {
    const Eigen::Index T = data.size();
    const Eigen::Index n = x.size();
    r = model_values(model, split(x), data, &counters) - data.y;
    J.resize(T, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = opts.steps.step_for(x[i], i);
      Vec xp = x, xm = x;
      xp[i] += d;
      xm[i] -= d;
      Vec fp = model_values(model, split(xp), data, &counters);
      Vec fm = model_values(model, split(xm), data, &counters);
      J.col(i) = (fp - fm) / (2.0 * d);
    }
  }
};

}  // namespace detail

// Shortcut-mode fit: LM over p on the reduced objective; finishes with a
// final q*(p_opt) application.
inline FitReport lm_fit(const SeparableModel& model, const DataSet& data, const Vec& p_init,
                        const FitOptions& options = {}) {
  options.validate();
  if (p_init.size() != model.nonlinear_dim)
    throw ConfigError("lm_fit: p_init length does not match model");
  Counters counters;
  detail::ShortcutObjective obj{model, data, options, counters};
  detail::EngineResult st = detail::lm_engine(obj, data.w, p_init, options);

  FitReport rep;
  rep.p_opt = st.x;
  Design d = build_design(model, st.x, data, &counters);
  auto [qr, r] = detail::solve_qstar_design(d, data, 0.0, &counters);
  if (options.rank_policy == RankPolicy::strict && !qr.rank_ok)
    throw RankError("rank-deficient q* solve at the fitted point");
  rep.q_opt = qr.q_star;
  rep.chisq = qr.fstar;
  rep.iterations = st.iterations;
  rep.accepted_steps = st.accepted;
  rep.converged = st.converged;
  rep.reason = st.reason;
  rep.accepted_chisq = std::move(st.trace);
  rep.model_evals = counters.model_evals;
  rep.qstar_solves = counters.qstar_solves;
  return rep;
}

// Classical baseline: LM over the concatenated (p, q) vector with plain
// central-difference Jacobian.
inline FitReport lm_fit_classical(const SeparableModel& model, const DataSet& data,
                                  const Vec& p_init, const Vec& q_init,
                                  const FitOptions& options = {}) {
  options.validate();
  if (p_init.size() != model.nonlinear_dim || q_init.size() != model.linear_dim)
    throw ConfigError("lm_fit_classical: initial parameter lengths do not match model");
  Counters counters;
  FitOptions opts = options;
  opts.mode = FitMode::classical;
  detail::ClassicalObjective obj{model, data, opts, counters};
  Vec x0(p_init.size() + q_init.size());
  x0 << p_init, q_init;
  detail::EngineResult st = detail::lm_engine(obj, data.w, x0, opts);

  FitReport rep;
  rep.p_opt = st.x.head(model.nonlinear_dim);
  rep.q_opt = st.x.tail(model.linear_dim);
  rep.chisq = st.F;
  rep.iterations = st.iterations;
  rep.accepted_steps = st.accepted;
  rep.converged = st.converged;
  rep.reason = st.reason;
  rep.accepted_chisq = std::move(st.trace);
  rep.model_evals = counters.model_evals;
  rep.qstar_solves = counters.qstar_solves;
  return rep;
}

// Classical fit warm-started with q_init = q*(p_init), the protocol used in
// all baseline comparisons.
inline FitReport lm_fit_classical(const SeparableModel& model, const DataSet& data,
                                  const Vec& p_init, const FitOptions& options = {}) {
  Vec q0 = solve_qstar(model, p_init, data).q_star;
  return lm_fit_classical(model, data, p_init, q0, options);
}

}  // namespace sepfit
