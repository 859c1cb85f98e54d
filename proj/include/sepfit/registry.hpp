#pragma once

// Built-in model catalogue plus a composable sum-of-Gaussian-peaks builder
// where each peak's center, width and height is flagged fixed, nonlinear, or
// linear. The flag assignment determines the p/q split deterministically:
// nonlinear slots enter p in declaration order (center, width, height per
// peak), linear heights enter q in peak order.

#include "sepfit/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sepfit {

// f(t) = q1 exp(-t/p1) + q2 sin(t/p2)
inline SeparableModel make_exp_sin() {
  std::vector<ModelFn> basis{
      [](const Vec& p, double t) { return std::exp(-t / p[0]); },
      [](const Vec& p, double t) { return std::sin(t / p[1]); },
  };
  return SeparableModel(2, 2, std::move(basis), nullptr, "exp-sin");
}

// f(t) = exp(-(t/p1)^2) + sum_{n=1..N} q_n exp(-((t-n)/width)^2)
// The train of unit-spaced fixed-width peaks carries the linear parameters;
// the variable-width peak at t=0 is the offset term.
inline SeparableModel make_gauss_train(int n_peaks, double width = 5.0) {
  if (n_peaks < 1) throw ConfigError("gauss-train requires at least one peak");
  if (width <= 0.0) throw ConfigError("gauss-train width must be positive");
  std::vector<ModelFn> basis;
  basis.reserve(n_peaks);
  for (int n = 1; n <= n_peaks; ++n) {
    basis.push_back([n, width](const Vec&, double t) {
      const double u = (t - n) / width;
      return std::exp(-u * u);
    });
  }
  ModelFn offset = [](const Vec& p, double t) {
    const double u = t / p[0];
    return std::exp(-u * u);
  };
  return SeparableModel(1, n_peaks, std::move(basis), std::move(offset),
                        "gauss-train-" + std::to_string(n_peaks));
}

// f(t) = sum_{i=1..3} q_i exp(-((t-p_i)/p_{3+i})^2) + q_4 t + q_5
inline SeparableModel make_three_peak_bg() {
  std::vector<ModelFn> basis;
  for (int i = 0; i < 3; ++i) {
    basis.push_back([i](const Vec& p, double t) {
      const double u = (t - p[i]) / p[3 + i];
      return std::exp(-u * u);
    });
  }
  basis.push_back([](const Vec&, double t) { return t; });
  basis.push_back([](const Vec&, double) { return 1.0; });
  return SeparableModel(6, 5, std::move(basis), nullptr, "three-peak-bg");
}

// f(t) = sum_{n=1..N} q_n exp(-(p_{2n-1}/(t-p_{2n}))^2); p:q ratio 2:1.
inline SeparableModel make_gauss_free(int n_peaks) {
  if (n_peaks < 1) throw ConfigError("gauss-free requires at least one peak");
  std::vector<ModelFn> basis;
  for (int i = 0; i < n_peaks; ++i) {
    basis.push_back([i](const Vec& p, double t) {
      const double a = p[2 * i];
      const double c = p[2 * i + 1];
      if (t == c) return a == 0.0 ? 1.0 : 0.0;
      const double u = a / (t - c);
      return std::exp(-u * u);
    });
  }
  return SeparableModel(2 * n_peaks, n_peaks, std::move(basis), nullptr,
                        "gauss-free-" + std::to_string(n_peaks));
}

enum class ParamRole { fixed, nonlinear, linear };

struct PeakParam {
  ParamRole role = ParamRole::fixed;
  double value = 0.0;  // fixed value, or initial/generating value for p entries
};

struct PeakSpec {
  PeakParam center;
  PeakParam width;
  PeakParam height;
};

namespace detail {

struct Slot {
  bool from_p = false;
  int index = -1;
  double value = 0.0;
  double get(const Vec& p) const { return from_p ? p[index] : value; }
};

inline double gauss(double t, double c, double w) {
  const double u = (t - c) / w;
  return std::exp(-u * u);
}

}  // namespace detail

// Composable sum of Gaussian peaks. Returns the model together with the
// generating parameter split implied by the peak definitions.
struct PeakSumModel {
  SeparableModel model;
  Vec p_values;  // generating values of the nonlinear slots
  Vec q_values;  // generating values of the linear heights
};

inline PeakSumModel make_peak_sum(const std::vector<PeakSpec>& peaks) {
  if (peaks.empty()) throw ConfigError("peak sum requires at least one peak");
  std::vector<double> p_vals, q_vals;
  auto slot_of = [&p_vals](const PeakParam& par, const char* what) {
    detail::Slot s;
    if (par.role == ParamRole::linear)
      throw ConfigError(std::string("peak ") + what + " cannot be a linear parameter");
    if (par.role == ParamRole::nonlinear) {
      s.from_p = true;
      s.index = static_cast<int>(p_vals.size());
      p_vals.push_back(par.value);
    } else {
      s.value = par.value;
    }
    return s;
  };

  std::vector<ModelFn> basis;
  std::vector<ModelFn> offset_terms;
  for (const PeakSpec& pk : peaks) {
    detail::Slot c = slot_of(pk.center, "center");
    detail::Slot w = slot_of(pk.width, "width");
    if (pk.height.role == ParamRole::linear) {
      q_vals.push_back(pk.height.value);
      basis.push_back([c, w](const Vec& p, double t) {
        return detail::gauss(t, c.get(p), w.get(p));
      });
    } else {
      detail::Slot h = slot_of(pk.height, "height");
      offset_terms.push_back([c, w, h](const Vec& p, double t) {
        return h.get(p) * detail::gauss(t, c.get(p), w.get(p));
      });
    }
  }

  ModelFn offset = nullptr;
  if (!offset_terms.empty()) {
    offset = [offset_terms](const Vec& p, double t) {
      double s = 0.0;
      for (const auto& term : offset_terms) s += term(p, t);
      return s;
    };
  }

  PeakSumModel out;
  out.model = SeparableModel(static_cast<int>(p_vals.size()), static_cast<int>(q_vals.size()),
                             std::move(basis), std::move(offset),
                             "peak-sum-" + std::to_string(peaks.size()));
  out.p_values = Eigen::Map<const Vec>(p_vals.data(), static_cast<Eigen::Index>(p_vals.size()));
  out.q_values = Eigen::Map<const Vec>(q_vals.data(), static_cast<Eigen::Index>(q_vals.size()));
  return out;
}

}  // namespace sepfit
