#pragma once

// Shared fixtures and small numeric utilities for the test suites.

#include <sepfit/sepfit.hpp>

#include <algorithm>
#include <cmath>
#include <utility>

namespace th {

using namespace sepfit;

// ---------------------------------------------------------------- fixtures

// Canonical exp-sin dataset: noiseless, p_true = (20, 5), q_true = (6, 1),
// t = 1..100 step 1.  Shared across many suites, so build it once.
inline const DataSet& ex1_data() {
    static const DataSet data = generate_synthetic(scenarios::example1());
    return data;
}

inline const SeparableModel& ex1_model() {
    static const SeparableModel model = make_exp_sin();
    return model;
}

// A model whose reduced objective is exactly quadratic, with a known
// closed-form Hessian.  Two sample points:
//   t = 0:  phi = 1, psi = 0      -> residual q
//   t = 1:  phi = 0, psi = p[0]   -> residual p[0]
// With y = (0, 0), w = (1, 1):  chi^2(p, q) = q^2 + p[0]^2, so the full
// Hessian is diag(2, 2), q*(p) = 0, F*(p) = p[0]^2, and every finite
// stencil is exact (no truncation error).
inline SeparableModel quad_embed_model() {
    SeparableModel model(
        1, 1,
        {[](const Vec&, double t) { return t < 0.5 ? 1.0 : 0.0; }},
        [](const Vec& p, double t) { return t < 0.5 ? 0.0 : p[0]; },
        "quad-embed");
    return model;
}

inline DataSet quad_embed_data() {
    Vec t(2), y(2);
    t << 0.0, 1.0;
    y << 0.0, 0.0;
    return DataSet(t, y);
}

// Rank-deficient by construction: two identical basis columns.
inline SeparableModel duplicated_basis_model() {
    auto decay = [](const Vec& p, double t) { return std::exp(-t / p[0]); };
    SeparableModel model(1, 2, {decay, decay}, nullptr, "dup-basis");
    return model;
}

// ------------------------------------------------------------- comparisons

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double mat_rel(const Mat& A, const Mat& B) {
    double scale = std::max({A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff(), 1e-300});
    return (A - B).cwiseAbs().maxCoeff() / scale;
}

inline double vec_rel(const Vec& a, const Vec& b) {
    double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// ------------------------------------------------------ random test inputs

// Random exp-sin fitting instance: smooth data from randomized true
// parameters plus bounded multiplicative noise, all driven by SplitMix64 so
// instances are reproducible across runs and platforms.
struct RandomInstance {
    SeparableModel model;
    DataSet data;
    Vec p_true;
    Vec q_true;
};

inline RandomInstance random_exp_sin_instance(std::uint64_t seed, int T = 25) {
    SplitMix64 rng(seed);
    Scenario sc;
    sc.model_name = "exp-sin";
    sc.p_true = v2(rng.uniform(8.0, 40.0), rng.uniform(2.0, 9.0));
    sc.q_true = v2(rng.uniform(-5.0, 8.0), rng.uniform(-3.0, 3.0));
    sc.t_begin = 1.0;
    sc.t_end = static_cast<double>(T);
    sc.t_step = 1.0;
    sc.noise = NoiseKind::uniform_multiplicative;
    sc.amplitude = 0.02;
    sc.seed = seed ^ 0x5bd1e995u;
    RandomInstance inst{build_scenario_model(sc), generate_synthetic(sc), sc.p_true, sc.q_true};
    return inst;
}

inline Vec random_vec(SplitMix64& rng, int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

}  // namespace th
