#pragma once

// Separable model abstraction. A model is
//   f(t) = sum_n q_n * phi_n(p, t) + psi(p, t)
// with M nonlinear parameters p and N linear parameters q. The basis
// functions phi_n and the offset psi may depend on p but never on q.

#include "sepfit/types.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sepfit {

using ModelFn = std::function<double(const Vec& p, double t)>;

struct SeparableModel {
  int nonlinear_dim = 0;           // M
  int linear_dim = 0;              // N
  std::vector<ModelFn> basis;      // N entries, phi_n(p, t)
  ModelFn offset;                  // psi(p, t), zero function by default
  std::string name;

  SeparableModel() = default;
  SeparableModel(int m, int n, std::vector<ModelFn> basis_, ModelFn offset_, std::string name_)
      : nonlinear_dim(m),
        linear_dim(n),
        basis(std::move(basis_)),
        offset(std::move(offset_)),
        name(std::move(name_)) {
    if (!offset) offset = [](const Vec&, double) { return 0.0; };
    validate();
  }

  void validate() const {
    if (nonlinear_dim < 0 || linear_dim < 0)
      throw ConfigError("model dimensions must be non-negative");
    if (static_cast<int>(basis.size()) != linear_dim)
      throw ConfigError("model '" + name + "' declares N=" + std::to_string(linear_dim) +
                        " but has " + std::to_string(basis.size()) + " basis functions");
  }
};

namespace detail {

inline void check_finite(double v, const std::string& model, const std::string& part, double t) {
  if (!std::isfinite(v))
    throw EvaluationError("model '" + model + "': " + part + " returned a non-finite value at t=" +
                          std::to_string(t));
}

inline void check_dims(const SeparableModel& model, const ParamSplit& params) {
  if (params.p.size() != model.nonlinear_dim || params.q.size() != model.linear_dim)
    throw ConfigError("parameter split does not match model '" + model.name + "' dimensions");
}

}  // namespace detail

// All basis values and the offset at a single sample point.
inline std::pair<Vec, double> design_row(const SeparableModel& model, const Vec& p, double t) {
  if (p.size() != model.nonlinear_dim)
    throw ConfigError("design_row: p has wrong length for model '" + model.name + "'");
  Vec phi(model.linear_dim);
  for (int n = 0; n < model.linear_dim; ++n) {
    phi[n] = model.basis[n](p, t);
    detail::check_finite(phi[n], model.name, "basis phi_" + std::to_string(n + 1), t);
  }
  double psi = model.offset ? model.offset(p, t) : 0.0;
  detail::check_finite(psi, model.name, "offset psi", t);
  return {std::move(phi), psi};
}

inline double eval_model(const SeparableModel& model, const ParamSplit& params, double t) {
  detail::check_dims(model, params);
  auto [phi, psi] = design_row(model, params.p, t);
  return phi.dot(params.q) + psi;
}

// Design matrix (T x N) and offset vector over a whole dataset; one
// model-evaluation pass.
struct Design {
  Mat Phi;
  Vec psi;
};

inline Design build_design(const SeparableModel& model, const Vec& p, const DataSet& data,
                           Counters* counters = nullptr) {
  if (p.size() != model.nonlinear_dim)
    throw ConfigError("build_design: p has wrong length for model '" + model.name + "'");
  const Eigen::Index T = data.size();
  Design d;
  d.Phi.resize(T, model.linear_dim);
  d.psi.resize(T);
  for (Eigen::Index j = 0; j < T; ++j) {
    auto [phi, psi] = design_row(model, p, data.t[j]);
    d.Phi.row(j) = phi.transpose();
    d.psi[j] = psi;
  }
  if (counters) counters->model_evals += 1;
  return d;
}

inline Vec model_values(const SeparableModel& model, const ParamSplit& params, const DataSet& data,
                        Counters* counters = nullptr) {
  detail::check_dims(model, params);
  Design d = build_design(model, params.p, data, counters);
  return d.Phi * params.q + d.psi;
}

inline double chi_squared(const SeparableModel& model, const ParamSplit& params,
                          const DataSet& data, Counters* counters = nullptr) {
  Vec r = model_values(model, params, data, counters) - data.y;
  return (r.array().square() * data.w.array()).sum();
}

}  // namespace sepfit
