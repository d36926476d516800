#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esc/analysis.hpp"
#include "esc/esc_core.hpp"
#include "esc/kernels.hpp"
#include "esc/plants.hpp"
#include "esc/trace.hpp"

namespace esc {

/// Everything needed to reproduce one closed-loop run.
///
/// Internal units: speed m/s, sideslip rad.  The config file uses degrees for
/// every sideslip quantity on copter plants (see scenario_from_json).
struct Scenario {
  Plant plant = CopterParams{};
  CostGoal goal = CostGoal::range;
  EscParams esc;
  /// Per-channel k for each variant; esc.channels[i].gain is kept in sync
  /// with esc.variant by with_variant().
  std::vector<double> standard_gain;
  std::vector<double> adaptive_gain;
  std::vector<double> initial;  // r_hat(0)
  double dt = 0.02;
  double duration = 400.0;
  std::uint64_t seed = 1;
  double noise_std = 2.0;  // W for copters, cost units for maps
  WindModel wind;
  /// Convergence bands (channel units) and hold time.
  std::vector<double> band;
  double hold = 30.0;
  /// Optional explicit target; defaults to the plant optimum.
  std::vector<double> target;

  [[nodiscard]] bool is_copter() const { return std::holds_alternative<CopterParams>(plant); }
  [[nodiscard]] std::size_t channels() const { return esc.channels.size(); }
  [[nodiscard]] std::size_t steps() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Copy with the given variant and its gain column applied.
  [[nodiscard]] Scenario with_variant(Variant v) const;
};

bool operator==(const Scenario& a, const Scenario& b);

/// Table II controller on the default copter.  `initial` is (m/s, rad).
Scenario default_copter_scenario(bool box, CostGoal goal, std::vector<double> initial, Variant variant);

/// Parses the config format.  Errors name the dotted path of the bad field.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
/// The `plant` section alone (copter payload presets or a quadratic map).
Plant plant_from_json(const nlohmann::json& j);
nlohmann::json plant_to_json(const Plant& plant);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Applies KEY=VALUE with KEY a dotted path ("esc.channels.0.amplitude").
/// VALUE is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Runs a scenario; row 0 is the primed state at t = 0.
/// Plant solver failures are rethrown as SolverError with the step index.
SimTrace run_scenario(const Scenario& s);

/// Optimum of the held-reference cost l(r) (zero wind): a 0.5 m/s x 10 deg
/// grid followed by a 0.01 m/s x 0.1 deg refinement around the best cell.
std::vector<double> plant_optimum(const Plant& plant, CostGoal goal);

/// Central-difference Hessian of l(r) in internal units.  Steps default to
/// 0.05 m/s and 1 deg on copters, 1e-3 on maps.
Eigen::MatrixXd cost_hessian(const Plant& plant, CostGoal goal, std::span<const double> r);

/// Averaged-model stability of the controller in `s` around the plant
/// optimum.  Primed constants are the scenario's gains divided by omega
/// (frequencies) or omega * delta (cutoffs, k, gamma).  Two channels only.
StabilityReport scenario_stability(const Scenario& s, double omega = 1.0, double delta = 1.0);

struct ChannelSpec {
  std::vector<ChannelBand> bands;
  std::vector<double> target;
};
/// Targets and bands for the metrics of `s` (sideslip compared mod 180 deg).
ChannelSpec channel_spec(const Scenario& s);

RunMetrics compute_metrics(const Scenario& s, const SimTrace& trace);

struct Comparison {
  SimTrace standard_trace;
  SimTrace adaptive_trace;
  RunMetrics standard;
  RunMetrics adaptive;
  /// standard time / adaptive time; none unless both converged.
  std::optional<double> speedup;
};

Comparison compare_variants(const Scenario& s);

struct CostMap {
  std::vector<double> v;     // m/s
  std::vector<double> beta;  // rad
  std::vector<double> cost;  // row-major, v outer
  std::size_t argmin_v = 0;
  std::size_t argmin_beta = 0;

  [[nodiscard]] double at(std::size_t iv, std::size_t ib) const { return cost[iv * beta.size() + ib]; }
  [[nodiscard]] double min_cost() const { return at(argmin_v, argmin_beta); }
};

/// Evaluates l(r) on the grid (no controller in the loop).  Ties go to the
/// first grid point in row-major order.
CostMap cost_map(const CopterParams& plant, CostGoal goal, const std::vector<double>& v_grid,
                 const std::vector<double>& beta_grid);
/// Uniform grid lo, lo+step, ... <= hi (+1e-9 slack).
std::vector<double> uniform_grid(double lo, double hi, double step);
/// CSV with columns v, beta_deg, cost.
void export_cost_map(const CostMap& map, const std::filesystem::path& path);

struct CalibrationTargets {
  double box_endurance = 6.0;
  double box_range = 10.0;
  double none_endurance = 6.0;
  double none_range = 11.0;
  double hover_power = 100.0;  // W, no payload; pins eta_e (range fixes p0 * eta_e only)
};

struct CalibrationGrid {
  std::vector<double> drag_base;        // c0 candidates (both payloads)
  std::vector<double> avionics_power;   // p0 candidates
  std::vector<double> drivetrain_eff;   // eta_e candidates
  double box_asym_ratio = 0.12;          // c1 / c0 with the box
  double none_asym_ratio = 0.12;         // c1 / c0 without
};

struct CalibrationResult {
  CopterParams box;
  CopterParams none;
  double box_endurance = 0.0;
  double box_range = 0.0;
  double none_endurance = 0.0;
  double none_range = 0.0;
  double hover_power = 0.0;
  double objective = 0.0;
};

/// Grid used to produce fixtures/calibration.json.
CalibrationGrid default_calibration_grid();
/// Two-stage search: c0 per payload against the endurance targets (the
/// endurance optimum does not depend on p0 or eta_e), then a shared
/// (p0, eta_e) against both range targets and the hover power.
CalibrationResult calibrate(const CalibrationTargets& targets, const CalibrationGrid& grid);
nlohmann::json calibration_to_json(const CalibrationResult& r);
nlohmann::json copter_to_json(const CopterParams& p);
/// Fields missing from `j` keep the values of `base`.
CopterParams copter_from_json(const nlohmann::json& j, const CopterParams& base, const std::string& at = "plant");

/// Runs many quadratic-map scenarios lane-parallel on the channel bank.  All
/// scenarios must share dt, duration and variant.  Results are bit-identical
/// to run_scenario on each scenario.
std::vector<SimTrace> run_quadratic_batch(const std::vector<Scenario>& scenarios,
                                          kernels::Isa isa = kernels::detect_isa());

/// Metrics of every scenario, in input order.  Scenarios run on `threads`
/// workers (0 = hardware concurrency); when all of them are quadratic maps
/// sharing dt, duration and variant they go through the channel bank instead.
std::vector<RunMetrics> run_sweep(const std::vector<Scenario>& scenarios, unsigned threads = 0);

}  // namespace esc
