// sepfit command-line driver.
//
// Subcommands: fit, fit-multi, slice, basin, bench, simulate. Every
// subcommand reads a strict-schema JSON config (--config); unknown keys are
// rejected. Exit codes: 0 success/converged, 1 input error, 2 fit did not
// converge, 3 rank-deficient linear subproblem under the strict policy.

#include <sepfit/sepfit.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using sepfit::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitRank = 3;

struct CommonArgs {
    std::string config_path;
    std::string output_override;
    std::string mode_override;
    std::optional<std::uint64_t> seed_override;
    int threads = 0;  // 0 = auto
};

void emit(const std::string& text, const std::string& output_path) {
    if (output_path.empty()) {
        std::cout << text << "\n";
    } else {
        sepfit::write_text_file(output_path, text);
    }
}

std::string output_path(const json& cfg, const CommonArgs& args) {
    if (!args.output_override.empty()) return args.output_override;
    if (cfg.contains("output")) return cfg.at("output").get<std::string>();
    return {};
}

sepfit::WeightPolicy weights_of(const json& cfg) {
    return cfg.contains("weights") ? sepfit::weight_policy_from_json(cfg.at("weights"))
                                   : sepfit::WeightPolicy::auto_column;
}

sepfit::FitOptions fit_options_of(const json& cfg, const std::string& mode_override) {
    sepfit::FitOptions opts;
    if (cfg.contains("fit")) opts = sepfit::fit_options_from_json(cfg.at("fit"));
    if (!mode_override.empty()) {
        if (mode_override == "shortcut")
            opts.mode = sepfit::FitMode::shortcut;
        else if (mode_override == "classical")
            opts.mode = sepfit::FitMode::classical;
        else
            throw sepfit::ConfigError("--mode must be shortcut or classical");
    }
    return opts;
}

sepfit::Vec p_init_of(const json& cfg, const sepfit::ModelConfig& mc) {
    if (cfg.contains("fit") && cfg.at("fit").contains("p_init"))
        return sepfit::vec_from_json(cfg.at("fit").at("p_init"), "fit.p_init");
    if (mc.p_default.size() > 0) return mc.p_default;
    throw sepfit::ConfigError("fit.p_init is required for this model");
}

double covariance_delta_of(const json& cfg) {
    if (cfg.contains("fit") && cfg.at("fit").contains("covariance_delta"))
        return cfg.at("fit").at("covariance_delta").get<double>();
    return 0.0;  // auto
}

// ---- fit ----------------------------------------------------------------

int run_fit(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg, {"model", "data", "weights", "fit", "output"}, "fit config");
    if (!cfg.contains("model") || !cfg.contains("data"))
        throw sepfit::ConfigError("fit config requires 'model' and 'data'");

    sepfit::ModelConfig mc = sepfit::model_from_json(cfg.at("model"));
    const std::string data_path = cfg.at("data").get<std::string>();
    sepfit::DataSet data = sepfit::read_csv(data_path, weights_of(cfg));
    sepfit::FitOptions opts = fit_options_of(cfg, args.mode_override);
    sepfit::Vec p_init = p_init_of(cfg, mc);

    sepfit::FitReport rep;
    if (opts.mode == sepfit::FitMode::shortcut) {
        rep = sepfit::lm_fit(mc.model, data, p_init, opts);
    } else if (cfg.contains("fit") && cfg.at("fit").contains("q_init")) {
        sepfit::Vec q_init = sepfit::vec_from_json(cfg.at("fit").at("q_init"), "fit.q_init");
        rep = sepfit::lm_fit_classical(mc.model, data, p_init, q_init, opts);
    } else {
        rep = sepfit::lm_fit_classical(mc.model, data, p_init, opts);
    }

    if (rep.converged && mc.model.nonlinear_dim > 0) {
        try {
            sepfit::FitCovariance fc =
                sepfit::fit_covariance(mc.model, data, rep.p_opt, covariance_delta_of(cfg));
            rep.covariance = fc.covariance;
            rep.stderr_estimates = fc.stderr_estimates;
        } catch (const sepfit::FitError& e) {
            std::cerr << "warning: covariance unavailable: " << e.what() << "\n";
        }
    }

    sepfit::ReportMeta meta;
    meta.model_name = mc.model.name;
    meta.mode = opts.mode;
    meta.data_path = data_path;
    emit(sepfit::fit_report_to_json(rep, meta), output_path(cfg, args));
    return rep.converged ? kExitOk : kExitNotConverged;
}

// ---- fit-multi ----------------------------------------------------------

int run_fit_multi(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg, {"model", "files", "weights", "fit", "output"}, "fit-multi config");
    if (!cfg.contains("model") || !cfg.contains("files") || !cfg.at("files").is_array() ||
        cfg.at("files").empty())
        throw sepfit::ConfigError("fit-multi config requires 'model' and a non-empty 'files' array");

    sepfit::ModelConfig mc = sepfit::model_from_json(cfg.at("model"));
    sepfit::WeightPolicy policy = weights_of(cfg);
    sepfit::MultiFileProblem prob;
    std::vector<std::string> paths;
    for (const auto& f : cfg.at("files")) {
        paths.push_back(f.get<std::string>());
        prob.models.push_back(mc.model);
        prob.data.push_back(sepfit::read_csv(paths.back(), policy));
    }
    sepfit::FitOptions opts = fit_options_of(cfg, args.mode_override);
    sepfit::Vec p_init = p_init_of(cfg, mc);

    sepfit::FitReport rep;
    std::vector<sepfit::Vec> q_blocks;
    if (opts.mode == sepfit::FitMode::shortcut) {
        sepfit::MultiFitReport multi = sepfit::multifile_fit(prob, p_init, opts);
        rep = std::move(multi.report);
        q_blocks = std::move(multi.q_blocks);
    } else {
        // Classical packing: one concatenated model, every parameter
        // nonlinear, warm-started from the per-file exact linear solves.
        sepfit::ConcatProblem concat = sepfit::concat_classical(prob);
        sepfit::MultiQStar warm = sepfit::multifile_qstar(prob, p_init);
        sepfit::Vec x0 = concat.packing.pack(p_init, warm.q_blocks);
        sepfit::FitReport flat = sepfit::lm_fit(concat.model, concat.data, x0, opts);
        auto [p_opt, blocks] = concat.packing.unpack(flat.p_opt);
        rep = flat;
        rep.p_opt = p_opt;
        rep.q_opt = sepfit::Vec();
        q_blocks = blocks;
    }

    std::optional<sepfit::FitCovariance> fc;
    if (rep.converged) {
        try {
            fc = sepfit::multifile_covariance(prob, rep.p_opt, covariance_delta_of(cfg));
        } catch (const sepfit::FitError& e) {
            std::cerr << "warning: covariance unavailable: " << e.what() << "\n";
        }
    }

    sepfit::JsonWriter w;
    w.begin_object();
    w.key("model").value(mc.model.name);
    w.key("mode").value(sepfit::to_string(opts.mode));
    w.key("files").begin_array();
    for (const auto& p : paths) w.value(p);
    w.end_array();
    w.key("converged").value(rep.converged);
    w.key("reason").value(sepfit::to_string(rep.reason));
    w.key("phi_star").value(rep.chisq);
    w.key("p_opt").value(rep.p_opt);
    w.key("q_blocks").begin_array();
    for (const auto& q : q_blocks) w.value(q);
    w.end_array();
    w.key("iterations").value(rep.iterations);
    w.key("accepted_steps").value(rep.accepted_steps);
    w.key("model_evals").value(rep.model_evals);
    w.key("qstar_solves").value(rep.qstar_solves);
    if (fc) {
        w.key("covariance").value(fc->covariance);
        w.key("stderr").value(fc->stderr_estimates);
    }
    w.end_object();
    emit(w.str(), output_path(cfg, args));
    return rep.converged ? kExitOk : kExitNotConverged;
}

// ---- slice --------------------------------------------------------------

int run_slice(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg, {"model", "data", "weights", "p_base", "sweep", "mode", "q_ref",
                               "output"},
                         "slice config");
    if (!cfg.contains("model") || !cfg.contains("data") || !cfg.contains("p_base") ||
        !cfg.contains("sweep"))
        throw sepfit::ConfigError("slice config requires 'model', 'data', 'p_base', 'sweep'");

    sepfit::ModelConfig mc = sepfit::model_from_json(cfg.at("model"));
    sepfit::DataSet data = sepfit::read_csv(cfg.at("data").get<std::string>(), weights_of(cfg));
    sepfit::Vec p_base = sepfit::vec_from_json(cfg.at("p_base"), "p_base");

    const json& sw = cfg.at("sweep");
    sepfit::require_keys(sw, {"index", "lo", "hi", "count"}, "sweep block");
    if (!sw.contains("index") || !sw.contains("lo") || !sw.contains("hi") ||
        !sw.contains("count"))
        throw sepfit::ConfigError("sweep block requires index, lo, hi, count");

    sepfit::SliceMode mode = sepfit::SliceMode::reoptimized_q;
    if (cfg.contains("mode")) {
        const std::string m = cfg.at("mode").get<std::string>();
        if (m == "frozen-q")
            mode = sepfit::SliceMode::frozen_q;
        else if (m == "reoptimized-q")
            mode = sepfit::SliceMode::reoptimized_q;
        else
            throw sepfit::ConfigError("slice mode must be frozen-q or reoptimized-q");
    }

    sepfit::Vec q_ref;
    if (mode == sepfit::SliceMode::frozen_q) {
        q_ref = cfg.contains("q_ref")
                    ? sepfit::vec_from_json(cfg.at("q_ref"), "q_ref")
                    : sepfit::solve_qstar(mc.model, p_base, data).q_star;
    }

    auto curve = sepfit::slice_scan(mc.model, data, p_base, sw.at("index").get<int>(),
                                    sw.at("lo").get<double>(), sw.at("hi").get<double>(),
                                    sw.at("count").get<int>(), mode, q_ref);

    const std::string out = output_path(cfg, args);
    std::vector<std::string> comments{
        "model: " + mc.model.name,
        "mode: " + std::string(mode == sepfit::SliceMode::frozen_q ? "frozen-q" : "reoptimized-q"),
        "argmin: " + sepfit::fmt17(sepfit::slice_argmin(curve))};
    if (out.empty()) {
        for (const auto& c : comments) std::cout << "# " << c << "\n";
        std::cout << "p_value,chisq\n";
        for (const auto& pt : curve)
            std::cout << sepfit::fmt17(pt.value) << "," << sepfit::fmt17(pt.chisq) << "\n";
    } else {
        sepfit::slice_to_csv(out, curve, comments);
    }
    return kExitOk;
}

// ---- basin --------------------------------------------------------------

int run_basin(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg, {"model", "data", "weights", "p_true", "grid", "fit", "output"},
                         "basin config");
    if (!cfg.contains("model") || !cfg.contains("data") || !cfg.contains("p_true"))
        throw sepfit::ConfigError("basin config requires 'model', 'data', 'p_true'");

    sepfit::ModelConfig mc = sepfit::model_from_json(cfg.at("model"));
    sepfit::DataSet data = sepfit::read_csv(cfg.at("data").get<std::string>(), weights_of(cfg));
    sepfit::Vec p_true = sepfit::vec_from_json(cfg.at("p_true"), "p_true");

    sepfit::BasinSpec spec;
    if (cfg.contains("grid")) {
        const json& g = cfg.at("grid");
        sepfit::require_keys(
            g, {"p1_lo", "p1_hi", "n1", "p2_lo", "p2_hi", "n2", "success_tol"}, "grid block");
        if (g.contains("p1_lo")) spec.p1_lo = g.at("p1_lo").get<double>();
        if (g.contains("p1_hi")) spec.p1_hi = g.at("p1_hi").get<double>();
        if (g.contains("n1")) spec.n1 = g.at("n1").get<int>();
        if (g.contains("p2_lo")) spec.p2_lo = g.at("p2_lo").get<double>();
        if (g.contains("p2_hi")) spec.p2_hi = g.at("p2_hi").get<double>();
        if (g.contains("n2")) spec.n2 = g.at("n2").get<int>();
        if (g.contains("success_tol")) spec.success_tol = g.at("success_tol").get<double>();
    }

    sepfit::FitOptions opts = fit_options_of(cfg, "");
    sepfit::BasinGrid grid = sepfit::basin_map(mc.model, data, p_true, spec, opts, args.threads);

    std::vector<std::string> comments{"model: " + mc.model.name};
    const std::string out = output_path(cfg, args);
    if (out.empty()) {
        std::cout << "both=" << grid.n_both << " shortcut_only=" << grid.n_shortcut_only
                  << " classical_only=" << grid.n_classical_only << " neither=" << grid.n_neither
                  << "\n";
    } else {
        sepfit::basin_to_csv(out, grid, comments);
    }
    return kExitOk;
}

// ---- bench --------------------------------------------------------------

int run_bench(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg, {"N_list", "repeats", "slope_Ns", "output"}, "bench config");
    if (!cfg.contains("N_list") || !cfg.at("N_list").is_array() || cfg.at("N_list").empty())
        throw sepfit::ConfigError("bench config requires a non-empty 'N_list' array");

    std::vector<int> N_list;
    for (const auto& n : cfg.at("N_list")) N_list.push_back(n.get<int>());
    const int repeats = cfg.contains("repeats") ? cfg.at("repeats").get<int>() : 3;
    if (repeats < 1) throw sepfit::ConfigError("bench repeats must be >= 1");
    std::vector<int> slope_Ns = {10, 20, 40, 60};
    if (cfg.contains("slope_Ns")) {
        slope_Ns.clear();
        for (const auto& n : cfg.at("slope_Ns")) slope_Ns.push_back(n.get<int>());
    }

    sepfit::BenchResult res = sepfit::scaling_bench(N_list, repeats, slope_Ns);

    const std::string out = output_path(cfg, args);
    if (out.empty()) {
        std::cout << "slope_shortcut=" << sepfit::fmt17(res.slope_shortcut)
                  << " slope_classical=" << sepfit::fmt17(res.slope_classical)
                  << " eval_ratio_at_max_N=" << sepfit::fmt17(res.eval_ratio_at_max_N) << "\n";
    } else {
        sepfit::bench_to_csv(out, res);
    }
    return kExitOk;
}

// ---- simulate -----------------------------------------------------------

int run_simulate(const CommonArgs& args) {
    json cfg = sepfit::load_json_file(args.config_path);
    sepfit::require_keys(cfg,
                         {"model", "peaks", "width", "p_true", "q_true", "t_begin", "t_end",
                          "t_step", "noise", "amplitude", "seed", "generator", "output",
                          "manifest"},
                         "simulate config");

    json scenario_json = cfg;
    scenario_json.erase("output");
    scenario_json.erase("manifest");
    sepfit::Scenario sc = sepfit::scenario_from_json(scenario_json);
    if (args.seed_override) sc.seed = *args.seed_override;

    sepfit::DataSet data = sepfit::generate_synthetic(sc);

    const std::string out = output_path(cfg, args);
    std::vector<std::string> comments{"generator: " + std::string(sepfit::kRngName),
                                      "seed: " + std::to_string(sc.seed),
                                      "model: " + sc.model_name};
    if (out.empty()) {
        for (const auto& c : comments) std::cout << "# " << c << "\n";
        std::cout << "t,y,w\n";
        for (Eigen::Index j = 0; j < data.size(); ++j)
            std::cout << sepfit::fmt17(data.t[j]) << "," << sepfit::fmt17(data.y[j]) << ","
                      << sepfit::fmt17(data.w[j]) << "\n";
    } else {
        sepfit::write_csv(out, data, comments);
    }
    if (cfg.contains("manifest"))
        sepfit::write_text_file(cfg.at("manifest").get<std::string>(),
                                sepfit::scenario_manifest_json(sc));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Separable nonlinear least-squares fitting"};
    app.set_version_flag("--version", std::string(sepfit::kVersion));
    app.require_subcommand(1);

    CommonArgs args;
    if (const char* env = std::getenv("SEPFIT_THREADS")) {
        try {
            args.threads = std::stoi(env);
        } catch (...) {
            std::cerr << "error: SEPFIT_THREADS must be an integer\n";
            return kExitInput;
        }
    }

    std::uint64_t seed_value = 0;

    auto add_common = [&](CLI::App* sub, bool mode_flag, bool threads_flag) {
        sub->add_option("-c,--config", args.config_path, "JSON config file")->required();
        sub->add_option("-o,--output", args.output_override,
                        "Override the config's output path");
        if (mode_flag)
            sub->add_option("--mode", args.mode_override,
                            "Override fit mode: shortcut or classical");
        if (threads_flag)
            sub->add_option("--threads", args.threads,
                            "Worker threads (default: SEPFIT_THREADS or hardware)");
    };

    CLI::App* fit = app.add_subcommand("fit", "Fit one data file");
    add_common(fit, true, false);
    CLI::App* fit_multi =
        app.add_subcommand("fit-multi", "Fit several files sharing nonlinear parameters");
    add_common(fit_multi, true, false);
    CLI::App* slice = app.add_subcommand("slice", "Sweep chi^2 along one nonlinear parameter");
    add_common(slice, false, false);
    CLI::App* basin = app.add_subcommand("basin", "Map convergence basins on a start grid");
    add_common(basin, false, true);
    CLI::App* bench = app.add_subcommand("bench", "Shortcut-vs-classical scaling benchmark");
    add_common(bench, false, false);
    CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
    add_common(simulate, false, false);
    simulate->add_option("--seed", seed_value, "Override the scenario seed");

    CLI11_PARSE(app, argc, argv);
    if (simulate->count("--seed") > 0) args.seed_override = seed_value;

    try {
        if (fit->parsed()) return run_fit(args);
        if (fit_multi->parsed()) return run_fit_multi(args);
        if (slice->parsed()) return run_slice(args);
        if (basin->parsed()) return run_basin(args);
        if (bench->parsed()) return run_bench(args);
        if (simulate->parsed()) return run_simulate(args);
    } catch (const sepfit::RankError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRank;
    } catch (const sepfit::FitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNotConverged;
    } catch (const sepfit::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const sepfit::EvaluationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
