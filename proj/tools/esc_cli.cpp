// esc: command-line front end for the extremum seeking simulator.
//
//   esc run       --config C --out D   trace.csv + metrics.json
//   esc compare   --config C --out D   per-start standard/adaptive traces + compare.json
//   esc costmap   --config C --out D   costmap.csv + argmin.json
//   esc stability --config C --out D   stability.json (warnings also on stderr)
//   esc sweep     --config C --out D   sweep.csv + sweep.json
//   esc calibrate [--config C] --out D calibration.json
//
// Exit codes: 0 ok, 1 bad input, 2 runtime or solver failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "esc/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace esc;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Options {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string variant;
};

// Thrown for bad input so that main() maps it to exit code 1.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path + "': " + e.what());
  }
}

// Config with --set, --seed and --variant folded in.
json load_config(const Options& o) {
  json j = o.config.empty() ? json::object() : read_json(o.config);
  for (const auto& s : o.sets) apply_override(j, s);
  if (o.seed) j["seed"] = *o.seed;
  if (!o.variant.empty()) j["esc"]["variant"] = o.variant;
  return j;
}

// Removes and returns a verb-specific section so the rest parses as a scenario.
json take(json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) return nullptr;
  json v = j.at(key);
  j.erase(key);
  return v;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

double deg_if(bool copter, std::size_t ch, double x) { return copter && ch == 1 ? x / kDeg : x; }

json opt_number(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json metrics_json(const Scenario& s, const RunMetrics& m) {
  const bool copter = s.is_copter();
  json bias = json::array();
  for (std::size_t i = 0; i < m.steady_bias.size(); ++i) bias.push_back(deg_if(copter, i, m.steady_bias[i]));
  json j{{"variant", to_string(s.esc.variant)},
         {"seed", s.seed},
         {"convergence_time_s", opt_number(m.convergence_time)},
         {"steady_bias", bias},
         {"cost_overhead_pct", opt_number(m.cost_overhead_pct)},
         {"clamp_fraction", m.clamp_fraction}};
  if (!m.max_abs_g_settled.empty()) j["max_abs_g_settled"] = m.max_abs_g_settled;
  if (copter) j["units"] = {"m/s", "deg"};
  return j;
}

json target_json(const Scenario& s) {
  const auto spec = channel_spec(s);
  json t = json::array();
  for (std::size_t i = 0; i < spec.target.size(); ++i) t.push_back(deg_if(s.is_copter(), i, spec.target[i]));
  return t;
}

std::vector<double> triple(const json& j, const std::string& at) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw InputError(at + ": expected [lo, hi, step]");
  }
  return uniform_grid(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

fs::path prepare_out(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

// ---------------------------------------------------------------- verbs

int cmd_run(const Options& o) {
  json j = load_config(o);
  const Scenario s = scenario_from_json(j);
  const auto dir = prepare_out(o);
  const SimTrace tr = run_scenario(s);
  export_trace(tr, dir / "trace.csv", s.is_copter());
  json out = metrics_json(s, compute_metrics(s, tr));
  out["target"] = target_json(s);
  write_json(dir / "metrics.json", out);
  return 0;
}

int cmd_compare(const Options& o) {
  json j = load_config(o);
  const json starts = take(j, "starts");
  const Scenario base = scenario_from_json(j);
  std::vector<Scenario> rows;
  if (starts.is_null()) {
    rows.push_back(base);
  } else {
    if (!starts.is_array() || starts.empty()) throw InputError("starts: expected a non-empty array");
    for (std::size_t i = 0; i < starts.size(); ++i) {
      json row = j;
      row["initial"] = starts[i];
      try {
        rows.push_back(scenario_from_json(row));
      } catch (const std::invalid_argument& e) {
        throw InputError("starts[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  const auto dir = prepare_out(o);
  json table = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Scenario& s = rows[i];
    const Comparison c = compare_variants(s);
    export_trace(c.standard_trace, dir / fmt::format("row{}_standard.csv", i), s.is_copter());
    export_trace(c.adaptive_trace, dir / fmt::format("row{}_adaptive.csv", i), s.is_copter());
    json start = json::array();
    for (std::size_t k = 0; k < s.initial.size(); ++k) start.push_back(deg_if(s.is_copter(), k, s.initial[k]));
    table.push_back({{"start", start},
                     {"standard", metrics_json(s.with_variant(Variant::standard), c.standard)},
                     {"adaptive", metrics_json(s.with_variant(Variant::adaptive), c.adaptive)},
                     {"speedup", opt_number(c.speedup)}});
  }
  write_json(dir / "compare.json", {{"goal", to_string(base.goal)}, {"target", target_json(base)}, {"rows", table}});
  return 0;
}

int cmd_costmap(const Options& o) {
  json j = load_config(o);
  const json grid = take(j, "grid");
  if (!j.contains("plant")) throw InputError("plant: missing");
  const Plant plant = plant_from_json(j.at("plant"));
  const auto* copter = std::get_if<CopterParams>(&plant);
  if (!copter) throw InputError("plant.type: costmap needs a copter plant");
  CostGoal goal = CostGoal::range;
  if (j.contains("goal")) goal = goal_from_string(j.at("goal").get<std::string>());

  std::vector<double> v = uniform_grid(copter->v_min, copter->v_max, 0.5);
  std::vector<double> beta = uniform_grid(0.0, 170.0 * kDeg, 10.0 * kDeg);
  if (!grid.is_null()) {
    if (!grid.is_object()) throw InputError("grid: expected an object");
    for (const auto& [k, val] : grid.items()) {
      if (k == "v") {
        v = triple(val, "grid.v");
      } else if (k == "beta_deg") {
        beta = triple(val, "grid.beta_deg");
        for (double& b : beta) b *= kDeg;
      } else {
        throw InputError("grid." + k + ": unknown field");
      }
    }
  }
  for (double x : v) {
    if (x < copter->v_min || x > copter->v_max + 1e-9) throw InputError("grid.v: outside the speed envelope");
  }
  const auto dir = prepare_out(o);
  const CostMap map = cost_map(*copter, goal, v, beta);
  export_cost_map(map, dir / "costmap.csv");
  write_json(dir / "argmin.json", {{"goal", to_string(goal)},
                                   {"v", map.v[map.argmin_v]},
                                   {"beta_deg", map.beta[map.argmin_beta] / kDeg},
                                   {"cost", map.min_cost()},
                                   {"cells", map.cost.size()}});
  return 0;
}

int cmd_stability(const Options& o) {
  json j = load_config(o);
  const json st = take(j, "stability");
  double omega = 1.0;
  double delta = 1.0;
  if (!st.is_null()) {
    if (!st.is_object()) throw InputError("stability: expected an object");
    for (const auto& [k, val] : st.items()) {
      if (!val.is_number()) throw InputError("stability." + k + ": expected a number");
      if (k == "omega") {
        omega = val.get<double>();
      } else if (k == "delta") {
        delta = val.get<double>();
      } else {
        throw InputError("stability." + k + ": unknown field");
      }
    }
  }
  const Scenario s = scenario_from_json(j);
  const auto dir = prepare_out(o);
  const StabilityReport r = scenario_stability(s, omega, delta);
  json jac = json::array();
  for (Eigen::Index i = 0; i < r.jacobian.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < r.jacobian.cols(); ++k) row.push_back(r.jacobian(i, k));
    jac.push_back(row);
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  write_json(dir / "stability.json", {{"omega", omega},
                                      {"delta", delta},
                                      {"hurwitz_routh", r.hurwitz_rh},
                                      {"hurwitz_eigen", r.hurwitz_eig},
                                      {"marginal", r.marginal},
                                      {"max_real_eig", r.max_real_eig},
                                      {"warnings", r.warnings},
                                      {"jacobian", jac}});
  return 0;
}

// sweep section: {"runs": [{"key": value, ...}, ...], "seeds": [..], "threads": n}
// or {"param": "dotted.key", "values": [...], "seeds": [..]}.
int cmd_sweep(const Options& o) {
  json j = load_config(o);
  const json sw = take(j, "sweep");
  if (!sw.is_object()) throw InputError("sweep: missing or not an object");
  std::vector<json> runs;
  std::vector<std::uint64_t> seeds;
  unsigned threads = 0;
  for (const auto& [k, val] : sw.items()) {
    if (k != "runs" && k != "param" && k != "values" && k != "seeds" && k != "threads") {
      throw InputError("sweep." + k + ": unknown field");
    }
  }
  if (sw.contains("runs")) {
    if (!sw.at("runs").is_array()) throw InputError("sweep.runs: expected an array of objects");
    for (const auto& r : sw.at("runs")) {
      if (!r.is_object()) throw InputError("sweep.runs: expected an array of objects");
      runs.push_back(r);
    }
  } else if (sw.contains("param")) {
    if (!sw.at("param").is_string() || !sw.contains("values") || !sw.at("values").is_array()) {
      throw InputError("sweep: param needs a string key and a values array");
    }
    for (const auto& v : sw.at("values")) runs.push_back({{sw.at("param").get<std::string>(), v}});
  } else {
    runs.push_back(json::object());
  }
  if (sw.contains("seeds")) {
    for (const auto& v : sw.at("seeds")) {
      if (!v.is_number_unsigned()) throw InputError("sweep.seeds: expected non-negative integers");
      seeds.push_back(v.get<std::uint64_t>());
    }
  }
  if (sw.contains("threads")) {
    if (!sw.at("threads").is_number_unsigned()) throw InputError("sweep.threads: expected a non-negative integer");
    threads = sw.at("threads").get<unsigned>();
  }

  std::vector<Scenario> scenarios;
  std::vector<json> labels;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    json cfg = j;
    for (const auto& [k, v] : runs[i].items()) apply_override(cfg, k + "=" + v.dump());
    const std::size_t n_seeds = seeds.empty() ? 1 : seeds.size();
    for (std::size_t si = 0; si < n_seeds; ++si) {
      if (!seeds.empty()) cfg["seed"] = seeds[si];
      try {
        scenarios.push_back(scenario_from_json(cfg));
      } catch (const std::invalid_argument& e) {
        throw InputError(fmt::format("sweep run {}: {}", i, e.what()));
      }
      labels.push_back(runs[i]);
    }
  }
  const auto dir = prepare_out(o);
  const auto metrics = run_sweep(scenarios, threads);

  std::ofstream csv(dir / "sweep.csv");
  if (!csv) throw std::runtime_error("cannot write sweep.csv");
  csv << "index,seed,variant,converged,convergence_time,bias_0,bias_1,overhead_pct,clamp_fraction,label\n";
  json table = json::array();
  auto num = [](const std::optional<double>& x) { return x ? fmt::format("{:.17g}", *x) : std::string(); };
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    const auto& m = metrics[i];
    const bool copter = s.is_copter();
    std::string label = labels[i].dump();
    std::string quoted = "\"";
    for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    quoted += '"';
    csv << fmt::format("{},{},{},{},{},{},{},{},{:.17g},{}\n", i, s.seed, to_string(s.esc.variant),
                       m.convergence_time ? 1 : 0, num(m.convergence_time),
                       m.steady_bias.size() > 0 ? fmt::format("{:.17g}", deg_if(copter, 0, m.steady_bias[0])) : "",
                       m.steady_bias.size() > 1 ? fmt::format("{:.17g}", deg_if(copter, 1, m.steady_bias[1])) : "",
                       num(m.cost_overhead_pct), m.clamp_fraction, quoted);
    json row = metrics_json(s, m);
    row["index"] = i;
    row["overrides"] = labels[i];
    table.push_back(row);
  }
  write_json(dir / "sweep.json", {{"runs", table}});
  return 0;
}

int cmd_calibrate(const Options& o) {
  json j = load_config(o);
  CalibrationTargets t;
  CalibrationGrid g = default_calibration_grid();
  for (const auto& [k, val] : j.items()) {
    if (k != "targets" && k != "grid" && k != "seed") throw InputError(k + ": unknown field");
  }
  auto num = [](const json& v, const std::string& at) {
    if (!v.is_number()) throw InputError(at + ": expected a number");
    return v.get<double>();
  };
  if (j.contains("targets")) {
    for (const auto& [k, v] : j.at("targets").items()) {
      const std::string at = "targets." + k;
      if (k == "box_endurance") t.box_endurance = num(v, at);
      else if (k == "box_range") t.box_range = num(v, at);
      else if (k == "none_endurance") t.none_endurance = num(v, at);
      else if (k == "none_range") t.none_range = num(v, at);
      else if (k == "hover_power") t.hover_power = num(v, at);
      else throw InputError(at + ": unknown field");
    }
  }
  if (j.contains("grid")) {
    for (const auto& [k, v] : j.at("grid").items()) {
      const std::string at = "grid." + k;
      if (k == "drag_base") g.drag_base = triple(v, at);
      else if (k == "avionics_power") g.avionics_power = triple(v, at);
      else if (k == "drivetrain_eff") g.drivetrain_eff = triple(v, at);
      else if (k == "box_asym_ratio") g.box_asym_ratio = num(v, at);
      else if (k == "none_asym_ratio") g.none_asym_ratio = num(v, at);
      else throw InputError(at + ": unknown field");
    }
  }
  const auto dir = prepare_out(o);
  write_json(dir / "calibration.json", calibration_to_json(calibrate(t, g)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremum seeking speed/sideslip optimizer: simulations, sweeps and checks", "esc"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  struct Verb {
    const char* name;
    const char* help;
    bool needs_config;
    int (*fn)(const Options&);
  };
  const Verb verbs[] = {
      {"run", "simulate one scenario", true, cmd_run},
      {"compare", "standard vs adaptive on one or more starts", true, cmd_compare},
      {"costmap", "cost over a speed x sideslip grid", true, cmd_costmap},
      {"stability", "averaged-model Hurwitz check and tuning lint", true, cmd_stability},
      {"sweep", "metrics over overrides and seeds", true, cmd_sweep},
      {"calibrate", "fit the surrogate airframe to the target optima", false, cmd_calibrate},
  };
  std::vector<std::pair<CLI::App*, const Verb*>> subs;
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    auto* cfg = sub->add_option("--config", o.config, "scenario config (JSON)")->check(CLI::ExistingFile);
    if (v.needs_config) cfg->required();
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--set", o.sets, "KEY=VALUE override on a dotted config path (repeatable)");
    sub->add_option("--seed", seed, "noise seed");
    sub->add_option("--variant", o.variant, "controller variant")
        ->check(CLI::IsMember({"standard", "adaptive"}));
    subs.emplace_back(sub, &v);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  for (const auto& [sub, verb] : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) o.seed = seed;
    try {
      return verb->fn(o);
    } catch (const SolverError& e) {
      std::cerr << "esc " << verb->name << ": solver error: " << e.what() << '\n';
      return 2;
    } catch (const std::invalid_argument& e) {
      std::cerr << "esc " << verb->name << ": " << e.what() << '\n';
      return 1;
    } catch (const json::exception& e) {
      std::cerr << "esc " << verb->name << ": " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "esc " << verb->name << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}
