#pragma once

// Core value types shared across the library: datasets, parameter splits,
// step schemes, fit options and reports, error taxonomy.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepfit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Input problems: bad files, bad configs, inconsistent dimensions.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A model function returned a non-finite value inside its declared domain.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank-deficient linear subproblem under the strict policy.
struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer-internal failure (damped system unsolvable at the lambda cap).
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataSet {
  Vec t;
  Vec y;
  Vec w;

  DataSet() = default;
  DataSet(Vec t_, Vec y_, Vec w_) : t(std::move(t_)), y(std::move(y_)), w(std::move(w_)) {
    validate();
  }
  DataSet(Vec t_, Vec y_) : t(std::move(t_)), y(std::move(y_)) {
    w = Vec::Ones(t.size());
    validate();
  }

  Eigen::Index size() const { return t.size(); }

  void validate() const {
    if (t.size() < 1) throw ConfigError("dataset must contain at least one point");
    if (y.size() != t.size() || w.size() != t.size())
      throw ConfigError("dataset columns t, y, w must have equal length");
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      if (!std::isfinite(t[j]) || !std::isfinite(y[j]) || !std::isfinite(w[j]))
        throw ConfigError("dataset contains a non-finite entry at row " + std::to_string(j));
      if (w[j] <= 0.0)
        throw ConfigError("dataset weight must be positive at row " + std::to_string(j));
    }
  }
};

struct ParamSplit {
  Vec p;
  Vec q;
};

// Effective finite-difference step per parameter:
//   delta_m = max(relative_step * |p_m|, absolute_floor)
// with optional per-parameter absolute overrides.
struct StepScheme {
  double relative_step = 1e-4;
  double absolute_floor = 1e-8;
  std::optional<Vec> overrides;

  static StepScheme absolute(double delta) {
    StepScheme s;
    s.relative_step = 0.0;
    s.absolute_floor = delta;
    return s;
  }

  double step_for(double pm, Eigen::Index m) const {
    if (overrides && m < overrides->size() && (*overrides)[m] > 0.0) return (*overrides)[m];
    return std::max(relative_step * std::abs(pm), absolute_floor);
  }

  void validate() const {
    if (relative_step < 0.0 || absolute_floor <= 0.0)
      throw ConfigError("step scheme requires relative_step >= 0 and absolute_floor > 0");
  }
};

enum class FitMode { shortcut, classical };
enum class RankPolicy { minimum_norm, strict };
enum class ConvergenceReason { none, gtol, ftol };

inline const char* to_string(ConvergenceReason r) {
  switch (r) {
    case ConvergenceReason::gtol: return "gtol";
    case ConvergenceReason::ftol: return "ftol";
    default: return "none";
  }
}

inline const char* to_string(FitMode m) {
  return m == FitMode::shortcut ? "shortcut" : "classical";
}

struct FitOptions {
  int max_iterations = 200;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double ftol = 1e-10;
  double gtol = 1e-10;
  StepScheme steps;
  FitMode mode = FitMode::shortcut;
  RankPolicy rank_policy = RankPolicy::minimum_norm;
  bool identity_damping = false;
  double lambda_cap = 1e12;

  void validate() const {
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (lambda_up <= 1.0 || lambda_down <= 1.0)
      throw ConfigError("lambda factors must be > 1");
    if (ftol <= 0.0 || gtol <= 0.0) throw ConfigError("tolerances must be > 0");
    if (lambda_init <= 0.0) throw ConfigError("lambda_init must be > 0");
    steps.validate();
  }
};

// Full-dataset evaluation passes and linear solves, aggregated per call chain.
// One model_eval = the model (all basis columns plus offset) evaluated at all
// T sample points once.
struct Counters {
  long long model_evals = 0;
  long long qstar_solves = 0;
};

struct FitReport {
  Vec p_opt;
  Vec q_opt;
  double chisq = 0.0;
  int iterations = 0;      // step attempts, accepted + rejected
  int accepted_steps = 0;
  long long model_evals = 0;
  long long qstar_solves = 0;
  bool converged = false;
  ConvergenceReason reason = ConvergenceReason::none;
  std::optional<Mat> covariance;
  std::optional<Vec> stderr_estimates;
  std::vector<double> accepted_chisq;  // accepted-step objective trace
};

}  // namespace sepfit
