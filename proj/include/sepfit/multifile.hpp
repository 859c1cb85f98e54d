#pragma once

// Simultaneous fitting of K data files sharing the nonlinear parameters p,
// each file carrying its own linear block q^(k). The objective is
//   Phi(p, q^(1..K)) = sum_k chi^2_k(p, q^(k))
// whose block-diagonal structure lets every q^(k)* be solved independently.
// Also builds the classical equivalent: one concatenated model on a shifted
// t-axis where all 6 + sum N_k parameters are treated as nonlinear.

#include "sepfit/covariance.hpp"
#include "sepfit/optimizer.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

namespace sepfit {

struct MultiFileProblem {
  std::vector<SeparableModel> models;
  std::vector<DataSet> data;

  int nonlinear_dim() const { return models.empty() ? 0 : models.front().nonlinear_dim; }
  int files() const { return static_cast<int>(models.size()); }

  void validate() const {
    if (models.empty() || models.size() != data.size())
      throw ConfigError("multi-file problem needs K >= 1 files with one model each");
    for (const auto& m : models)
      if (m.nonlinear_dim != models.front().nonlinear_dim)
        throw ConfigError("all files must share the same nonlinear parameter count");
  }
};

struct MultiQStar {
  std::vector<Vec> q_blocks;
  double phi_star = 0.0;
  bool all_rank_ok = true;
};

inline MultiQStar multifile_qstar(const MultiFileProblem& prob, const Vec& p, double ridge = 0.0,
                                  Counters* counters = nullptr,
                                  RankPolicy policy = RankPolicy::minimum_norm) {
  prob.validate();
  MultiQStar out;
  out.q_blocks.reserve(prob.models.size());
  for (int k = 0; k < prob.files(); ++k) {
    QStarResult r = solve_qstar(prob.models[k], p, prob.data[k], ridge, counters);
    if (!r.rank_ok) {
      out.all_rank_ok = false;
      if (policy == RankPolicy::strict)
        throw RankError("rank-deficient q* solve in file " + std::to_string(k + 1));
    }
    out.phi_star += r.fstar;
    out.q_blocks.push_back(std::move(r.q_star));
  }
  return out;
}

struct MultiFitReport {
  FitReport report;
  std::vector<Vec> q_blocks;
};

namespace detail {

struct MultiShortcutObjective {
  const MultiFileProblem& prob;
  const FitOptions& opts;
  Counters& counters;

  double value(const Vec& p) {
    return multifile_qstar(prob, p, 0.0, &counters, opts.rank_policy).phi_star;
  }

  void jacobian(const Vec& p, Vec& r, Mat& J) {
    Eigen::Index T = 0;
    for (const auto& d : prob.data) T += d.size();
    const int M = prob.nonlinear_dim();
    r.resize(T);
    J.resize(T, M);
    Eigen::Index row = 0;
    for (int k = 0; k < prob.files(); ++k) {
      const auto& model = prob.models[k];
      const auto& data = prob.data[k];
      Design d = build_design(model, p, data, &counters);
      auto [qr, rk] = solve_qstar_design(d, data, 0.0, &counters);
      if (opts.rank_policy == RankPolicy::strict && !qr.rank_ok)
        throw RankError("rank-deficient q* solve in file " + std::to_string(k + 1));
      ShortcutJacobian sj =
          shortcut_model_jacobian(model, data, p, opts.steps, &counters, opts.rank_policy);
      r.segment(row, data.size()) = rk;
      J.middleRows(row, data.size()) = sj.J;
      row += data.size();
    }
  }
};

}  // namespace detail

// Shortcut multi-file fit: LM over the shared p minimizing Phi*(p).
inline MultiFitReport multifile_fit(const MultiFileProblem& prob, const Vec& p_init,
                                    const FitOptions& options = {}) {
  prob.validate();
  options.validate();
  if (p_init.size() != prob.nonlinear_dim())
    throw ConfigError("multifile_fit: p_init length does not match shared model");
  Counters counters;
  Vec w_all(std::accumulate(prob.data.begin(), prob.data.end(), Eigen::Index{0},
                            [](Eigen::Index n, const DataSet& d) { return n + d.size(); }));
  Eigen::Index row = 0;
  for (const auto& d : prob.data) {
    w_all.segment(row, d.size()) = d.w;
    row += d.size();
  }
  detail::MultiShortcutObjective obj{prob, options, counters};
  detail::EngineResult st = detail::lm_engine(obj, w_all, p_init, options);

  MultiFitReport out;
  MultiQStar fin = multifile_qstar(prob, st.x, 0.0, &counters, options.rank_policy);
  out.q_blocks = std::move(fin.q_blocks);
  out.report.p_opt = st.x;
  out.report.q_opt = Vec();
  out.report.chisq = fin.phi_star;
  out.report.iterations = st.iterations;
  out.report.accepted_steps = st.accepted;
  out.report.converged = st.converged;
  out.report.reason = st.reason;
  out.report.accepted_chisq = std::move(st.trace);
  out.report.model_evals = counters.model_evals;
  out.report.qstar_solves = counters.qstar_solves;
  return out;
}

// Covariance of the shared nonlinear parameters from the reduced Hessian of
// Phi*(p) = sum_k F*_k(p). Second-difference stencils are linear in the
// objective, so the stencil of Phi* is exactly the sum of the per-file
// stencils; summing before inversion also keeps per-file blocks that are
// individually singular from poisoning the total.
inline FitCovariance multifile_covariance(const MultiFileProblem& prob, const Vec& p_opt,
                                          double delta = 0.0, Counters* counters = nullptr) {
  prob.validate();
  const int M = prob.nonlinear_dim();
  if (p_opt.size() != M)
    throw ConfigError("multifile_covariance: p length does not match shared model");
  const double d = delta > 0.0 ? delta : 1e-3 * std::max(1.0, p_opt.lpNorm<Eigen::Infinity>());
  StepScheme steps = StepScheme::absolute(d);
  Mat H = Mat::Zero(M, M);
  for (int k = 0; k < prob.files(); ++k)
    for (int m = 0; m < M; ++m)
      for (int mp = m; mp < M; ++mp) {
        const double v =
            shortcut_second(prob.models[k], prob.data[k], p_opt, m, mp, steps, counters);
        H(m, mp) += v;
        if (mp != m) H(mp, m) += v;
      }

  FitCovariance out;
  out.delta_used = d;
  out.eta_star = H.partialPivLu().inverse();
  if (!out.eta_star.allFinite() ||
      (H * out.eta_star - Mat::Identity(M, M)).lpNorm<Eigen::Infinity>() > 1e-6)
    throw FitError("combined shortcut Hessian is singular or too ill-conditioned to invert");
  out.covariance = 2.0 * out.eta_star;
  out.stderr_estimates.resize(M);
  for (int m = 0; m < M; ++m) {
    const double v = out.covariance(m, m);
    if (v < 0.0) throw FitError("indefinite combined shortcut Hessian: negative variance");
    out.stderr_estimates[m] = std::sqrt(v);
  }
  return out;
}

// Index bookkeeping for the concatenated classical problem: global vector is
// [p (M) | q^(1) | q^(2) | ... | q^(K)].
struct PackingMap {
  int shared_dim = 0;
  std::vector<int> q_offsets;   // offset of each file's q block in the global vector
  std::vector<int> q_dims;
  std::vector<double> shifts;   // t-axis shift applied to each file
  int total_params = 0;

  Vec pack(const Vec& p, const std::vector<Vec>& q_blocks) const {
    Vec x(total_params);
    x.head(shared_dim) = p;
    for (size_t k = 0; k < q_blocks.size(); ++k)
      x.segment(q_offsets[k], q_dims[k]) = q_blocks[k];
    return x;
  }

  std::pair<Vec, std::vector<Vec>> unpack(const Vec& x) const {
    std::vector<Vec> blocks;
    for (size_t k = 0; k < q_offsets.size(); ++k)
      blocks.push_back(x.segment(q_offsets[k], q_dims[k]));
    return {x.head(shared_dim), std::move(blocks)};
  }
};

struct ConcatProblem {
  SeparableModel model;  // M = shared + sum N_k nonlinear parameters, N = 0
  DataSet data;
  PackingMap packing;
};

// Builds the single-function classical equivalent: every file's t-range is
// translated onto a disjoint interval and all parameters become nonlinear.
inline ConcatProblem concat_classical(const MultiFileProblem& prob) {
  prob.validate();
  const int K = prob.files();
  const int M = prob.nonlinear_dim();

  ConcatProblem out;
  out.packing.shared_dim = M;
  int offset = M;
  for (int k = 0; k < K; ++k) {
    out.packing.q_offsets.push_back(offset);
    out.packing.q_dims.push_back(prob.models[k].linear_dim);
    offset += prob.models[k].linear_dim;
  }
  out.packing.total_params = offset;

  Eigen::Index T = 0;
  for (const auto& d : prob.data) T += d.size();
  Vec t_all(T), y_all(T), w_all(T);
  std::vector<double> lo(K), hi(K);
  double cursor = 0.0;
  Eigen::Index row = 0;
  for (int k = 0; k < K; ++k) {
    const auto& d = prob.data[k];
    const double tmin = d.t.minCoeff();
    const double tmax = d.t.maxCoeff();
    const double span = tmax - tmin;
    const double shift = cursor - tmin;
    out.packing.shifts.push_back(shift);
    lo[k] = cursor;
    hi[k] = cursor + span;
    cursor += span + 1.0 + 0.1 * span;  // disjoint by construction
    t_all.segment(row, d.size()) = d.t.array() + shift;
    y_all.segment(row, d.size()) = d.y;
    w_all.segment(row, d.size()) = d.w;
    row += d.size();
  }
  for (int k = 1; k < K; ++k)
    if (lo[k] <= hi[k - 1])
      throw FitError("internal error: concatenated t-ranges overlap");

  struct Shared {
    std::vector<SeparableModel> models;
    PackingMap packing;
    std::vector<double> lo, hi;
  };
  auto shared = std::make_shared<Shared>(Shared{prob.models, out.packing, lo, hi});

  ModelFn offset_fn = [shared](const Vec& x, double t) {
    const auto& s = *shared;
    const int K = static_cast<int>(s.models.size());
    int k = static_cast<int>(std::upper_bound(s.lo.begin(), s.lo.end(), t) - s.lo.begin()) - 1;
    if (k < 0) k = 0;
    if (k >= K) k = K - 1;
    const double tk = t - s.packing.shifts[k];
    Vec p = x.head(s.packing.shared_dim);
    auto [phi, psi] = design_row(s.models[k], p, tk);
    double v = psi;
    for (int n = 0; n < s.packing.q_dims[k]; ++n)
      v += x[s.packing.q_offsets[k] + n] * phi[n];
    return v;
  };

  out.model = SeparableModel(out.packing.total_params, 0, {}, std::move(offset_fn),
                             "concat-" + std::to_string(K));
  out.data = DataSet(std::move(t_all), std::move(y_all), std::move(w_all));
  return out;
}

}  // namespace sepfit
