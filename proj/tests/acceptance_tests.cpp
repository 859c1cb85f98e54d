// Acceptance harness: ten numbered end-to-end criteria covering the exact
// linear subproblem, the slice bias, the shortcut optimizer, the reduced-
// Hessian identities, the scaling and basin experiments, the multi-file
// joint fit, and the core invariants. Prints one PASS/FAIL line per
// criterion (with indented clause detail) and exits with the number of
// failed criteria.

#include "helpers.hpp"

#include <sepfit/sepfit.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

using namespace sepfit;

namespace {

struct Criterion {
    int id;
    std::string title;
    std::function<void()> body;
};

int g_failed_criteria = 0;
bool g_current_ok = true;
std::vector<std::string> g_lines;

void clause(bool ok, const std::string& text) {
    g_lines.push_back(std::string("    [") + (ok ? "ok" : "FAIL") + "] " + text);
    if (!ok) g_current_ok = false;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.8g", v);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// ---------------------------------------------------------------- criteria

// #1: the linear subproblem is solved exactly at a displaced point.
void criterion_qstar() {
    const SeparableModel& model = th::ex1_model();
    const DataSet& data = th::ex1_data();
    const Vec p = th::v2(19.0, 4.9);

    Timer t;
    QStarResult r = solve_qstar(model, p, data);
    const double wall = t.seconds();

    clause(std::abs(r.q_star[0] - 6.19663684) <= 1e-6 &&
               std::abs(r.q_star[1] - 0.94773072) <= 1e-6,
           "q*(19, 4.9) = (" + num(r.q_star[0]) + ", " + num(r.q_star[1]) +
               ") matches (6.19663684, 0.94773072) within 1e-6");
    clause(th::rel_err(r.fstar, 2.8846128626) <= 1e-8,
           "F*(19, 4.9) = " + num(r.fstar) + " matches 2.8846128626 within 1e-8 relative");

    NormalSystem ns = build_normal_system(model, p, data);
    const double station = (2.0 * ns.A * r.q_star + ns.b).lpNorm<Eigen::Infinity>();
    clause(station <= 1e-8 * (1.0 + ns.b.lpNorm<Eigen::Infinity>()),
           "stationarity ||2 A q* + b||_inf = " + num(station));
    clause(r.rank_ok, "design has full column rank");
    clause(wall < 0.1, "solve completed in " + num(wall) + " s (< 0.1 s)");
}

// #2: the one-parameter slice exposes the frozen-q bias, and re-solving q
// moves the apparent minimum toward the true value.
void criterion_slice() {
    const SeparableModel& model = th::ex1_model();
    const DataSet& data = th::ex1_data();
    const Vec p_base = th::v2(19.0, 4.9);
    const Vec q_ref = solve_qstar(model, p_base, data).q_star;

    Timer t;
    auto frozen = slice_scan(model, data, p_base, 0, 18.0, 22.0, 400, SliceMode::frozen_q, q_ref);
    auto reopt = slice_scan(model, data, p_base, 0, 18.0, 22.0, 400, SliceMode::reoptimized_q);
    const double wall = t.seconds();

    const double a_frozen = slice_argmin(frozen);
    const double a_reopt = slice_argmin(reopt);
    clause(std::abs(a_frozen - 19.35) <= 0.05,
           "frozen-q argmin " + num(a_frozen) + " lies in 19.35 +/- 0.05");
    clause(std::abs(a_reopt - 19.85) <= 0.05,
           "reoptimized-q argmin " + num(a_reopt) + " lies in 19.85 +/- 0.05");

    bool dominated = true;
    for (size_t i = 0; i < frozen.size(); ++i)
        if (reopt[i].chisq > frozen[i].chisq + 1e-12) dominated = false;
    clause(dominated, "reoptimized curve <= frozen curve at every grid point");
    clause(wall < 2.0, "both 400-point scans in " + num(wall) + " s (< 2 s)");
}

// #3: the shortcut optimizer recovers the generating parameters quickly.
void criterion_fit() {
    Timer t;
    FitReport rep = lm_fit(th::ex1_model(), th::ex1_data(), th::v2(19.0, 4.9));
    const double wall = t.seconds();

    clause(rep.converged, "fit converged");
    clause((rep.p_opt - th::v2(20.0, 5.0)).lpNorm<Eigen::Infinity>() <= 1e-3,
           "p_opt = (" + num(rep.p_opt[0]) + ", " + num(rep.p_opt[1]) +
               ") within 1e-3 of (20, 5)");
    clause((rep.q_opt - th::v2(6.0, 1.0)).lpNorm<Eigen::Infinity>() <= 1e-3,
           "q_opt = (" + num(rep.q_opt[0]) + ", " + num(rep.q_opt[1]) +
               ") within 1e-3 of (6, 1)");
    clause(rep.accepted_steps <= 10,
           "accepted steps = " + std::to_string(rep.accepted_steps) + " (<= 10)");
    clause(wall < 1.0, "fit in " + num(wall) + " s (< 1 s)");
}

// #4: eta*(delta) converges to the pp block of the full inverse Hessian.
void criterion_covariance_limit() {
    CovarianceLimitReport rep = covariance_limit_check(th::ex1_model(), th::ex1_data(),
                                        ParamSplit{th::v2(20.0, 5.0), th::v2(6.0, 1.0)},
                                        {1e-2, 1e-3, 1e-4});
    clause(rep.monotone, "discrepancy decreases monotonically over delta = 1e-2, 1e-3, 1e-4 (" +
                             num(rep.discrepancies[0]) + ", " + num(rep.discrepancies[1]) + ", " +
                             num(rep.discrepancies[2]) + ")");
    clause(rep.relative.back() <= 1e-3,
           "relative discrepancy at delta = 1e-4 is " + num(rep.relative.back()) + " (<= 1e-3)");
}

// #5: the q* Jacobian and the delta -> 0 limit of H* match the inverse-block
// identities, with second-order convergence in delta.
void criterion_block_identities() {
    const SeparableModel& model = th::ex1_model();
    const DataSet& data = th::ex1_data();

    {  // Jacobian identity at a displaced point.
        const Vec p = th::v2(19.0, 4.9);
        const Vec q = solve_qstar(model, p, data).q_star;
        HessianBlocks blocks = full_hessian_richardson(model, data, ParamSplit{p, q}, 1e-3);
        Mat Jref = -blocks.H_qq.ldlt().solve(blocks.H_qp);
        Mat J1 = fd_qstar_jacobian(model, data, p, StepScheme::absolute(1e-3));
        Mat J2 = fd_qstar_jacobian(model, data, p, StepScheme::absolute(5e-4));
        const double scale = std::max(Jref.cwiseAbs().maxCoeff(), 1e-300);
        const double e1 = (J1 - Jref).cwiseAbs().maxCoeff() / scale;
        const double e2 = (J2 - Jref).cwiseAbs().maxCoeff() / scale;
        clause(e1 <= 1e-3, "dq*/dp vs -H_qq^-1 H_qp relative error " + num(e1) + " (<= 1e-3)");
        clause(e1 / e2 > 3.0 && e1 / e2 < 5.0,
               "halving delta divides the error by " + num(e1 / e2) + " (in [3, 5])");
    }

    {  // Schur-complement identity at the optimum.
        const Vec p = th::v2(20.0, 5.0);
        const Vec q = th::v2(6.0, 1.0);
        HessianBlocks blocks = full_hessian_richardson(model, data, ParamSplit{p, q}, 1e-3);
        Mat S = schur_complement(blocks);
        Mat H1 = shortcut_hessian(model, data, p, 1e-3).H_star;
        Mat H2 = shortcut_hessian(model, data, p, 5e-4).H_star;
        const double e1 = th::mat_rel(H1, S);
        const double e2 = th::mat_rel(H2, S);
        clause(e1 <= 1e-3,
               "H*(1e-3) vs Schur complement relative error " + num(e1) + " (<= 1e-3)");
        clause(e1 / e2 > 3.0 && e1 / e2 < 5.0,
               "halving delta divides the error by " + num(e1 / e2) + " (in [3, 5])");
    }
}

// #6: det H*(delta) . det H_qq = det H at the optimum.
void criterion_determinant() {
    const SeparableModel& model = th::ex1_model();
    const DataSet& data = th::ex1_data();
    const ParamSplit opt{th::v2(20.0, 5.0), th::v2(6.0, 1.0)};

    ReducedCovariance rc = shortcut_hessian(model, data, opt.p, 1e-4);
    HessianBlocks blocks = full_hessian_richardson(model, data, opt, 1e-3);
    const double lhs = rc.H_star.determinant() * blocks.H_qq.determinant();
    const double rhs = blocks.full().determinant();
    clause(th::rel_err(lhs, rhs) <= 1e-3,
           "det H*(1e-4) . det H_qq = " + num(lhs) + " vs det H = " + num(rhs) +
               ", relative error " + num(th::rel_err(lhs, rhs)) + " (<= 1e-3)");
}

// #7: the evaluation count advantage grows with the number of linear
// parameters, separating the wall-time scaling exponents.
void criterion_scaling() {
    Timer t;
    BenchResult res = scaling_bench({10, 20, 40, 60}, 3);
    const double wall = t.seconds();

    bool short_ok = true;
    int worst_accept = 0;
    for (const auto& r : res.rows)
        if (r.mode == FitMode::shortcut) {
            if (!r.converged) short_ok = false;
            worst_accept = std::max(worst_accept, r.accepted_steps);
        }
    clause(short_ok && worst_accept <= 3,
           "every shortcut run converged with <= 3 accepted steps (max " +
               std::to_string(worst_accept) + ")");
    clause(res.eval_ratio_at_max_N >= 10.0,
           "classical/shortcut evaluation ratio at N = 60 is " + num(res.eval_ratio_at_max_N) +
               " (>= 10)");
    const double gap = res.slope_classical - res.slope_shortcut;
    clause(gap >= 0.3, "log-log wall-time slopes " + num(res.slope_shortcut) + " (shortcut) vs " +
                           num(res.slope_classical) + " (classical), gap " + num(gap) +
                           " (>= 0.3)");
    clause(wall < 300.0, "benchmark in " + num(wall) + " s (< 300 s)");
}

// #8: the shortcut basin of convergence strictly contains the classical one,
// with only an accidental sliver of classical-only starts.
void criterion_basin() {
    Timer t;
    BasinGrid grid = basin_map(th::ex1_model(), th::ex1_data(), th::v2(20.0, 5.0),
                               scenarios::basin_grid(), scenarios::basin_fit_options());
    const double wall = t.seconds();

    const int s = grid.shortcut_successes();
    const int c = grid.classical_successes();
    clause(s > c, "shortcut basin " + std::to_string(s) + " starts > classical basin " +
                      std::to_string(c) + " starts (of " +
                      std::to_string(grid.spec.n1 * grid.spec.n2) + ")");
    clause(grid.n_classical_only <= 0.05 * c,
           "classical-only cells " + std::to_string(grid.n_classical_only) +
               " are an accidental fraction <= 5% of classical successes");
    clause(wall < 600.0, "21 x 21 grid in " + num(wall) + " s (< 600 s)");
}

// #9: the joint multi-file fit matches the concatenated classical fit and
// its per-point evaluation advantage grows with the file count.
void criterion_multifile() {
    Timer t;
    std::vector<int> Ks = {5, 10, 20, 30};
    std::vector<double> ratios;
    bool all_converged = true;

    for (int K : Ks) {
        MultiFileProblem prob = scenarios::multifile_problem(K);
        const Vec p_init = scenarios::multifile_p_init();

        MultiFitReport multi = multifile_fit(prob, p_init);
        ConcatProblem concat = concat_classical(prob);
        Vec x0 = concat.packing.pack(p_init, multifile_qstar(prob, p_init).q_blocks);
        FitReport flat = lm_fit(concat.model, concat.data, x0);
        all_converged = all_converged && multi.report.converged && flat.converged;

        // Normalize to single-file evaluation passes: one pass over the
        // concatenated dataset costs K per-file passes.
        ratios.push_back(static_cast<double>(flat.model_evals) * K /
                         static_cast<double>(multi.report.model_evals));

        if (K == 5) {
            auto [p_c, q_c] = concat.packing.unpack(flat.p_opt);
            clause(th::rel_err(multi.report.chisq, flat.chisq) <= 1e-6,
                   "K = 5 joint objective " + num(multi.report.chisq) +
                       " matches the concatenated fit " + num(flat.chisq) +
                       " within 1e-6 relative");
            clause((multi.report.p_opt - p_c).lpNorm<Eigen::Infinity>() <=
                       1e-6 * (1.0 + p_c.lpNorm<Eigen::Infinity>()),
                   "K = 5 shared parameters agree within 1e-6");
        }
    }
    const double wall = t.seconds();

    clause(all_converged, "all joint and concatenated fits converged");
    bool increasing = true;
    std::string shown;
    for (size_t i = 0; i < ratios.size(); ++i) {
        if (i > 0 && ratios[i] <= ratios[i - 1]) increasing = false;
        shown += (i ? ", " : "") + num(ratios[i]);
    }
    clause(increasing,
           "per-point evaluation ratio strictly increases over K = 5, 10, 20, 30: " + shown);
    clause(wall < 300.0, "multi-file sweep in " + num(wall) + " s (< 300 s)");
}

// #10: structural invariants hold on randomized instances.
void criterion_properties() {
    // Quadratic expansion of chi^2 in q.
    bool quad_ok = true;
    for (int i = 0; i < 50 && quad_ok; ++i) {
        th::RandomInstance inst = th::random_exp_sin_instance(9000 + i);
        SplitMix64 rng(313 + i);
        Vec p = inst.p_true;
        for (Eigen::Index m = 0; m < p.size(); ++m) p[m] *= rng.uniform(0.9, 1.1);
        Vec q = th::random_vec(rng, 2, -5.0, 5.0);
        NormalSystem ns = build_normal_system(inst.model, p, inst.data);
        const double direct = chi_squared(inst.model, ParamSplit{p, q}, inst.data);
        const double expanded = q.dot(ns.A * q) + ns.b.dot(q) + ns.c;
        if (th::rel_err(direct, expanded) > 1e-9) quad_ok = false;
    }
    clause(quad_ok, "chi^2(p, q) = q^T A q + b^T q + c on 50 random instances");

    // q* stationarity.
    bool stat_ok = true;
    for (int i = 0; i < 50 && stat_ok; ++i) {
        th::RandomInstance inst = th::random_exp_sin_instance(9100 + i);
        NormalSystem ns = build_normal_system(inst.model, inst.p_true, inst.data);
        Vec q = solve_qstar(inst.model, inst.p_true, inst.data).q_star;
        if ((2.0 * ns.A * q + ns.b).lpNorm<Eigen::Infinity>() >
            1e-8 * (1.0 + ns.b.lpNorm<Eigen::Infinity>()))
            stat_ok = false;
    }
    clause(stat_ok, "grad_q chi^2(p, q*) = 0 on 50 random instances");

    // Shortcut gradient equals the frozen-q gradient to stencil accuracy.
    bool grad_ok = true;
    for (int i = 0; i < 50 && grad_ok; ++i) {
        th::RandomInstance inst = th::random_exp_sin_instance(9200 + i);
        const Vec p = inst.p_true;
        Vec g_short = shortcut_gradient(inst.model, inst.data, p);
        Vec q0 = solve_qstar(inst.model, p, inst.data).q_star;
        StepScheme steps;
        Vec g_frozen(p.size());
        for (Eigen::Index m = 0; m < p.size(); ++m) {
            const double d = steps.step_for(p[m], m);
            Vec pp = p, pm = p;
            pp[m] += d;
            pm[m] -= d;
            g_frozen[m] = (chi_squared(inst.model, ParamSplit{pp, q0}, inst.data) -
                           chi_squared(inst.model, ParamSplit{pm, q0}, inst.data)) /
                          (2.0 * d);
        }
        const double scale = 1.0 + g_short.lpNorm<Eigen::Infinity>();
        if ((g_short - g_frozen).lpNorm<Eigen::Infinity>() > 1e-4 * scale) grad_ok = false;
    }
    clause(grad_ok, "shortcut gradient matches the frozen-q gradient on 50 random instances");

    // Accepted-step trace decreases strictly.
    bool trace_ok = true;
    for (int i = 0; i < 20 && trace_ok; ++i) {
        th::RandomInstance inst = th::random_exp_sin_instance(9300 + i);
        SplitMix64 rng(515 + i);
        Vec p0 = inst.p_true;
        for (Eigen::Index m = 0; m < p0.size(); ++m) p0[m] *= rng.uniform(0.9, 1.1);
        FitReport rep = lm_fit(inst.model, inst.data, p0);
        for (size_t k = 1; k < rep.accepted_chisq.size(); ++k)
            if (rep.accepted_chisq[k] >= rep.accepted_chisq[k - 1]) trace_ok = false;
        if (!rep.accepted_chisq.empty() &&
            th::rel_err(rep.chisq, rep.accepted_chisq.back()) > 1e-12)
            trace_ok = false;
    }
    clause(trace_ok, "accepted chi^2 trace decreases strictly on 20 random fits");

    // Bitwise determinism.
    bool det_ok = true;
    for (int i = 0; i < 5 && det_ok; ++i) {
        th::RandomInstance inst = th::random_exp_sin_instance(9400 + i);
        SplitMix64 rng(717 + i);
        Vec p0 = inst.p_true;
        for (Eigen::Index m = 0; m < p0.size(); ++m) p0[m] *= rng.uniform(0.95, 1.05);
        FitReport a = (i % 2 == 0) ? lm_fit(inst.model, inst.data, p0)
                                   : lm_fit_classical(inst.model, inst.data, p0);
        FitReport b = (i % 2 == 0) ? lm_fit(inst.model, inst.data, p0)
                                   : lm_fit_classical(inst.model, inst.data, p0);
        if (!(a.p_opt == b.p_opt) || a.chisq != b.chisq || a.iterations != b.iterations)
            det_ok = false;
    }
    clause(det_ok, "repeated fits are bitwise identical on 5 random instances");
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "exact linear subproblem at a displaced point", criterion_qstar},
        {2, "frozen-q slice bias and reoptimized correction", criterion_slice},
        {3, "shortcut fit recovers the generating parameters", criterion_fit},
        {4, "eta*(delta) converges to the inverse-Hessian pp block", criterion_covariance_limit},
        {5, "Jacobian and Schur-complement identities with order-2 rates", criterion_block_identities},
        {6, "reduced-determinant identity", criterion_determinant},
        {7, "evaluation and wall-time scaling separation", criterion_scaling},
        {8, "enlarged basin of convergence", criterion_basin},
        {9, "multi-file joint fit equivalence and scaling", criterion_multifile},
        {10, "randomized structural invariants", criterion_properties},
    };

    for (const auto& c : criteria) {
        g_current_ok = true;
        g_lines.clear();
        try {
            c.body();
        } catch (const std::exception& e) {
            clause(false, std::string("unexpected exception: ") + e.what());
        }
        if (!g_current_ok) ++g_failed_criteria;
        std::printf("%s #%d %s\n", g_current_ok ? "PASS" : "FAIL", c.id, c.title.c_str());
        for (const auto& line : g_lines) std::printf("%s\n", line.c_str());
        std::fflush(stdout);
    }

    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - g_failed_criteria,
                criteria.size());
    return g_failed_criteria;
}
