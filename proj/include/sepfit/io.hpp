#pragma once

// File formats: CSV datasets (columns t,y[,w], '#' comments, optional
// header), JSON configs with strict key checking, and JSON reports/manifests
// emitted with 17 significant digits so every float round-trips.

#include "sepfit/bench.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace sepfit {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

enum class WeightPolicy { auto_column, ones, one_over_y };

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline DataSet read_csv(const std::string& path, WeightPolicy policy = WeightPolicy::auto_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::vector<double> t, y, w;
  std::string line;
  int lineno = 0;
  bool header_allowed = true;
  size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = detail::split_csv_line(line);
    double v0;
    if (header_allowed && !detail::parse_double(fields[0], v0)) {
      header_allowed = false;  // one optional header row
      ncols = fields.size();
      continue;
    }
    header_allowed = false;
    if (fields.size() != 2 && fields.size() != 3)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 2 or 3 columns (t,y[,w]), got " +
                        std::to_string(fields.size()));
    if (ncols == 0) ncols = fields.size();
    if (fields.size() != ncols)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row, expected " +
                        std::to_string(ncols) + " columns");
    double vals[3] = {0.0, 0.0, 1.0};
    for (size_t i = 0; i < fields.size(); ++i)
      if (!detail::parse_double(fields[i], vals[i]))
        throw ConfigError(path + ":" + std::to_string(lineno) + ": non-numeric cell '" +
                          fields[i] + "'");
    t.push_back(vals[0]);
    y.push_back(vals[1]);
    w.push_back(vals[2]);
  }
  if (t.empty()) throw ConfigError(path + ": no data rows");

  const auto T = static_cast<Eigen::Index>(t.size());
  Vec tv = Eigen::Map<Vec>(t.data(), T);
  Vec yv = Eigen::Map<Vec>(y.data(), T);
  Vec wv = Eigen::Map<Vec>(w.data(), T);
  switch (policy) {
    case WeightPolicy::ones:
      wv = Vec::Ones(T);
      break;
    case WeightPolicy::one_over_y:
      for (Eigen::Index j = 0; j < T; ++j) {
        if (yv[j] <= 0.0)
          throw ConfigError(path + ": weight policy 1/y requires y > 0, violated at row " +
                            std::to_string(j + 1));
        wv[j] = 1.0 / yv[j];
      }
      break;
    case WeightPolicy::auto_column:
      break;  // column values if present, else the 1.0 default
  }
  return DataSet(std::move(tv), std::move(yv), std::move(wv));
}

inline void write_csv(const std::string& path, const DataSet& data,
                      const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write data file '" + path + "'");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "t,y,w\n";
  for (Eigen::Index j = 0; j < data.size(); ++j)
    out << fmt17(data.t[j]) << "," << fmt17(data.y[j]) << "," << fmt17(data.w[j]) << "\n";
}

// Minimal JSON emitter with fixed 17-significant-digit floats.
class JsonWriter {
 public:
  JsonWriter& begin_object() { return token("{"); }
  JsonWriter& end_object() { return close("}"); }
  JsonWriter& begin_array() { return token("["); }
  JsonWriter& end_array() { return close("]"); }

  JsonWriter& key(const std::string& k) {
    comma();
    os_ << '"' << escaped(k) << "\":";
    pending_value_ = true;
    return *this;
  }

  JsonWriter& value(double v) { return raw(std::isfinite(v) ? fmt17(v) : "null"); }
  JsonWriter& value(int v) { return raw(std::to_string(v)); }
  JsonWriter& value(long long v) { return raw(std::to_string(v)); }
  JsonWriter& value(bool v) { return raw(v ? "true" : "false"); }
  JsonWriter& value(const std::string& v) { return raw("\"" + escaped(v) + "\""); }
  JsonWriter& value(const char* v) { return value(std::string(v)); }

  JsonWriter& value(const Vec& v) {
    begin_array();
    for (Eigen::Index i = 0; i < v.size(); ++i) value(v[i]);
    return end_array();
  }

  JsonWriter& value(const Mat& m) {
    begin_array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      begin_array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) value(m(i, j));
      end_array();
    }
    return end_array();
  }

  std::string str() const { return os_.str(); }

 private:
  JsonWriter& token(const char* t) {
    comma();
    os_ << t;
    need_comma_ = false;
    return *this;
  }
  JsonWriter& close(const char* t) {
    os_ << t;
    need_comma_ = true;
    return *this;
  }
  JsonWriter& raw(const std::string& s) {
    comma();
    os_ << s;
    need_comma_ = true;
    return *this;
  }
  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      need_comma_ = false;
      return;
    }
    if (need_comma_) os_ << ",";
    need_comma_ = false;
  }
  static std::string escaped(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out;
  }
  std::ostringstream os_;
  bool need_comma_ = false;
  bool pending_value_ = false;
};

struct ReportMeta {
  std::string model_name;
  FitMode mode = FitMode::shortcut;
  std::string data_path;
  std::string generator;       // RNG name when the data is synthetic
  std::uint64_t seed = 0;
  bool has_seed = false;
};

inline std::string fit_report_to_json(const FitReport& rep, const ReportMeta& meta) {
  JsonWriter w;
  w.begin_object();
  w.key("model").value(meta.model_name);
  w.key("mode").value(to_string(meta.mode));
  if (!meta.data_path.empty()) w.key("data").value(meta.data_path);
  if (meta.has_seed) {
    w.key("generator").value(meta.generator.empty() ? kRngName : meta.generator);
    w.key("seed").value(static_cast<long long>(meta.seed));
  }
  w.key("converged").value(rep.converged);
  w.key("reason").value(to_string(rep.reason));
  w.key("chisq").value(rep.chisq);
  w.key("p_opt").value(rep.p_opt);
  w.key("q_opt").value(rep.q_opt);
  w.key("iterations").value(rep.iterations);
  w.key("accepted_steps").value(rep.accepted_steps);
  w.key("model_evals").value(rep.model_evals);
  w.key("qstar_solves").value(rep.qstar_solves);
  if (rep.covariance) w.key("covariance").value(*rep.covariance);
  if (rep.stderr_estimates) w.key("stderr").value(*rep.stderr_estimates);
  w.key("accepted_chisq").begin_array();
  for (double f : rep.accepted_chisq) w.value(f);
  w.end_array();
  w.end_object();
  return w.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file '" + path + "'");
  out << text << "\n";
}

// ---- JSON config helpers (strict schema) ----

using json = nlohmann::json;

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline ParamRole role_from_json(const json& j, const std::string& where) {
  const std::string s = j.get<std::string>();
  if (s == "fixed") return ParamRole::fixed;
  if (s == "nonlinear") return ParamRole::nonlinear;
  if (s == "linear") return ParamRole::linear;
  throw ConfigError(where + ": role must be fixed, nonlinear, or linear");
}

struct ModelConfig {
  SeparableModel model;
  Vec p_default;  // generating/initial values implied by a peak-sum config
  Vec q_default;
};

inline ModelConfig model_from_json(const json& j) {
  require_keys(j, {"name", "peaks", "width"}, "model block");
  if (!j.contains("name")) throw ConfigError("model block requires 'name'");
  const std::string name = j.at("name").get<std::string>();
  ModelConfig out;
  if (name == "exp-sin") {
    out.model = make_exp_sin();
  } else if (name == "gauss-train") {
    if (!j.contains("peaks")) throw ConfigError("gauss-train requires 'peaks'");
    const int n = j.at("peaks").get<int>();
    const double width = j.contains("width") ? j.at("width").get<double>() : 5.0;
    out.model = make_gauss_train(n, width);
  } else if (name == "three-peak-bg") {
    out.model = make_three_peak_bg();
  } else if (name == "gauss-free") {
    if (!j.contains("peaks")) throw ConfigError("gauss-free requires 'peaks'");
    out.model = make_gauss_free(j.at("peaks").get<int>());
  } else if (name == "peak-sum") {
    if (!j.contains("peaks") || !j.at("peaks").is_array())
      throw ConfigError("peak-sum requires a 'peaks' array");
    std::vector<PeakSpec> specs;
    for (const auto& pj : j.at("peaks")) {
      require_keys(pj, {"center", "width", "height"}, "peak entry");
      auto param = [&](const char* key) {
        if (!pj.contains(key))
          throw ConfigError(std::string("peak entry requires '") + key + "'");
        const json& e = pj.at(key);
        require_keys(e, {"role", "value"}, std::string("peak ") + key);
        PeakParam p;
        p.role = e.contains("role") ? role_from_json(e.at("role"), key) : ParamRole::fixed;
        p.value = e.contains("value") ? e.at("value").get<double>() : 0.0;
        return p;
      };
      specs.push_back(PeakSpec{param("center"), param("width"), param("height")});
    }
    PeakSumModel ps = make_peak_sum(specs);
    out.model = std::move(ps.model);
    out.p_default = std::move(ps.p_values);
    out.q_default = std::move(ps.q_values);
  } else {
    throw ConfigError("unknown model name '" + name + "'");
  }
  return out;
}

inline WeightPolicy weight_policy_from_json(const json& j) {
  const std::string s = j.get<std::string>();
  if (s == "auto") return WeightPolicy::auto_column;
  if (s == "ones") return WeightPolicy::ones;
  if (s == "one-over-y") return WeightPolicy::one_over_y;
  throw ConfigError("weights policy must be auto, ones, or one-over-y");
}

inline FitOptions fit_options_from_json(const json& j) {
  require_keys(j,
               {"mode", "p_init", "q_init", "max_iterations", "lambda_init", "lambda_up",
                "lambda_down", "ftol", "gtol", "relative_step", "absolute_floor", "rank_policy",
                "identity_damping", "covariance_delta"},
               "fit block");
  FitOptions o;
  if (j.contains("mode")) {
    const std::string m = j.at("mode").get<std::string>();
    if (m == "shortcut")
      o.mode = FitMode::shortcut;
    else if (m == "classical")
      o.mode = FitMode::classical;
    else
      throw ConfigError("fit mode must be shortcut or classical");
  }
  if (j.contains("max_iterations")) o.max_iterations = j.at("max_iterations").get<int>();
  if (j.contains("lambda_init")) o.lambda_init = j.at("lambda_init").get<double>();
  if (j.contains("lambda_up")) o.lambda_up = j.at("lambda_up").get<double>();
  if (j.contains("lambda_down")) o.lambda_down = j.at("lambda_down").get<double>();
  if (j.contains("ftol")) o.ftol = j.at("ftol").get<double>();
  if (j.contains("gtol")) o.gtol = j.at("gtol").get<double>();
  if (j.contains("relative_step")) o.steps.relative_step = j.at("relative_step").get<double>();
  if (j.contains("absolute_floor")) o.steps.absolute_floor = j.at("absolute_floor").get<double>();
  if (j.contains("identity_damping")) o.identity_damping = j.at("identity_damping").get<bool>();
  if (j.contains("rank_policy")) {
    const std::string r = j.at("rank_policy").get<std::string>();
    if (r == "strict")
      o.rank_policy = RankPolicy::strict;
    else if (r == "minimum-norm")
      o.rank_policy = RankPolicy::minimum_norm;
    else
      throw ConfigError("rank_policy must be strict or minimum-norm");
  }
  o.validate();
  return o;
}

inline Scenario scenario_from_json(const json& j) {
  require_keys(j,
               {"model", "peaks", "width", "p_true", "q_true", "t_begin", "t_end", "t_step",
                "noise", "amplitude", "seed", "generator"},
               "scenario block");
  // Manifests name their noise generator; only the built-in one is readable.
  if (j.contains("generator") && j.at("generator").get<std::string>() != kRngName)
    throw ConfigError("scenario requires generator '" + std::string(kRngName) + "', got '" +
                      j.at("generator").get<std::string>() + "'");
  Scenario sc;
  sc.model_name = j.at("model").get<std::string>();
  if (j.contains("peaks")) sc.gauss_train_peaks = j.at("peaks").get<int>();
  if (j.contains("width")) sc.gauss_train_width = j.at("width").get<double>();
  sc.p_true = vec_from_json(j.at("p_true"), "scenario p_true");
  if (j.contains("q_true")) sc.q_true = vec_from_json(j.at("q_true"), "scenario q_true");
  sc.t_begin = j.at("t_begin").get<double>();
  sc.t_end = j.at("t_end").get<double>();
  sc.t_step = j.at("t_step").get<double>();
  if (j.contains("noise")) {
    const std::string n = j.at("noise").get<std::string>();
    if (n == "none")
      sc.noise = NoiseKind::none;
    else if (n == "uniform-multiplicative")
      sc.noise = NoiseKind::uniform_multiplicative;
    else
      throw ConfigError("noise must be none or uniform-multiplicative");
  }
  if (j.contains("amplitude")) sc.amplitude = j.at("amplitude").get<double>();
  if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
  return sc;
}

inline std::string scenario_manifest_json(const Scenario& sc) {
  JsonWriter w;
  w.begin_object();
  w.key("model").value(sc.model_name);
  if (sc.gauss_train_peaks > 0) {
    w.key("peaks").value(sc.gauss_train_peaks);
    w.key("width").value(sc.gauss_train_width);
  }
  w.key("p_true").value(sc.p_true);
  w.key("q_true").value(sc.q_true);
  w.key("t_begin").value(sc.t_begin);
  w.key("t_end").value(sc.t_end);
  w.key("t_step").value(sc.t_step);
  w.key("noise").value(sc.noise == NoiseKind::none ? "none" : "uniform-multiplicative");
  w.key("amplitude").value(sc.amplitude);
  w.key("seed").value(static_cast<long long>(sc.seed));
  w.key("generator").value(kRngName);
  w.end_object();
  return w.str();
}

inline void slice_to_csv(const std::string& path, const std::vector<SlicePoint>& curve,
                         const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file '" + path + "'");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "p_value,chisq\n";
  for (const auto& pt : curve) out << fmt17(pt.value) << "," << fmt17(pt.chisq) << "\n";
}

inline void basin_to_csv(const std::string& path, const BasinGrid& grid,
                         const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file '" + path + "'");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "# outcome codes: 0 neither, 1 both, 2 shortcut-only, 3 classical-only\n";
  out << "# counts: both=" << grid.n_both << " shortcut_only=" << grid.n_shortcut_only
      << " classical_only=" << grid.n_classical_only << " neither=" << grid.n_neither << "\n";
  out << "p1,p2,outcome\n";
  const auto& s = grid.spec;
  for (int i1 = 0; i1 < s.n1; ++i1)
    for (int i2 = 0; i2 < s.n2; ++i2) {
      const double a = s.p1_lo + (s.p1_hi - s.p1_lo) * i1 / (s.n1 - 1);
      const double b = s.p2_lo + (s.p2_hi - s.p2_lo) * i2 / (s.n2 - 1);
      out << fmt17(a) << "," << fmt17(b) << ","
          << static_cast<int>(grid.cells[static_cast<size_t>(i1) * s.n2 + i2]) << "\n";
    }
}

inline void bench_to_csv(const std::string& path, const BenchResult& result,
                         const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file '" + path + "'");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "# slope_shortcut=" << fmt17(result.slope_shortcut)
      << " slope_classical=" << fmt17(result.slope_classical)
      << " eval_ratio_at_max_N=" << fmt17(result.eval_ratio_at_max_N) << "\n";
  out << "N,mode,rep,wall_ms,model_evals,qstar_solves,iterations,accepted_steps,converged,p1\n";
  for (const auto& r : result.rows)
    out << r.N << "," << to_string(r.mode) << "," << r.rep << "," << fmt17(r.wall_ms) << ","
        << r.model_evals << "," << r.qstar_solves << "," << r.iterations << ","
        << r.accepted_steps << "," << (r.converged ? 1 : 0) << "," << fmt17(r.p1) << "\n";
}

}  // namespace sepfit
