#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esc/harness.hpp"

using namespace esc;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

std::filesystem::path source(const std::string& rel) { return std::filesystem::path(ESC_SOURCE_DIR) / rel; }

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "esc_test_harness";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Config files may carry verb sections (sweep, starts) that the scenario
// parser rejects.
Scenario load_plain(const std::string& rel) {
  std::ifstream in(source(rel));
  json j = json::parse(in);
  j.erase("sweep");
  j.erase("starts");
  return scenario_from_json(j);
}

json fixture() {
  std::ifstream in(source("fixtures/calibration.json"));
  return json::parse(in);
}

QuadraticMap bowl() {
  QuadraticMap q;
  q.optimum = Eigen::Vector2d(10.0, 2.0);
  q.hessian = Eigen::Vector2d(2.0, 1.0).asDiagonal();
  q.offset = 3.0;
  return q;
}

Scenario quadratic_scenario(Variant v, std::uint64_t seed) {
  auto s = load_plain("configs/quadratic_sweep.json");
  s.seed = seed;
  return s.with_variant(v);
}

// Eight (payload, goal, start) rows of the comparison tables.
struct Row {
  bool box;
  CostGoal goal;
  double v0, beta0_deg;
};
const std::vector<Row> kRows{
    {true, CostGoal::range, 6, 60},      {true, CostGoal::range, 3, 150},
    {true, CostGoal::endurance, 10, 150}, {true, CostGoal::endurance, 1, 60},
    {false, CostGoal::range, 4, 150},     {false, CostGoal::range, 15, 50},
    {false, CostGoal::endurance, 10, 150}, {false, CostGoal::endurance, 2, 60},
};

}  // namespace

TEST_CASE("config round trip") {
  SUBCASE("copter") {
    const auto a = load_scenario(source("configs/box_range_wind.json"));
    save_scenario(a, scratch("copter.json"));
    const auto b = load_scenario(scratch("copter.json"));
    CHECK(a == b);
  }
  SUBCASE("quadratic") {
    const auto a = load_plain("configs/quadratic_sweep.json");
    save_scenario(a, scratch("quad.json"));
    CHECK(a == load_scenario(scratch("quad.json")));
  }
}

TEST_CASE("schema errors name the field") {
  std::ifstream in(source("configs/box_range.json"));
  const json base = json::parse(in);
  auto message = [](const json& j) -> std::string {
    try {
      (void)scenario_from_json(j);
    } catch (const std::invalid_argument& e) {
      return e.what();
    }
    return "";
  };
  json j = base;
  j["esc"].erase("channels");
  CHECK(message(j).find("esc.channels") != std::string::npos);
  j = base;
  j["esc"]["channels"][0]["frequency"] = -1.0;
  CHECK(message(j).find("esc.channels") != std::string::npos);
  j = base;
  j["dt"] = 0.05;
  CHECK(message(j).find("dt") != std::string::npos);
  j = base;
  j["bogus"] = 1;
  CHECK(message(j).find("bogus") != std::string::npos);
  j = base;
  j["plant"]["payload"] = "crate";
  CHECK(message(j).find("plant.payload") != std::string::npos);
}

TEST_CASE("overrides use dotted paths") {
  std::ifstream in(source("configs/box_range.json"));
  json j = json::parse(in);
  apply_override(j, "esc.channels.1.frequency=0.7");
  apply_override(j, "goal=endurance");
  apply_override(j, "initial=[5, 20]");
  const auto s = scenario_from_json(j);
  CHECK(s.esc.channels[1].frequency == 0.7);
  CHECK(s.goal == CostGoal::endurance);
  CHECK(s.initial[1] == doctest::Approx(20 * kDeg));
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "esc.channels.9.gain=1"), std::invalid_argument);
}

TEST_CASE("trace CSV reload") {
  auto s = load_scenario(source("configs/box_range.json"));
  s.duration = 130.0;
  const auto tr = run_scenario(s);
  export_trace(tr, scratch("trace.csv"), true);
  const auto back = load_trace(scratch("trace.csv"));
  REQUIRE(back.size() == tr.size());
  double worst = 0.0;
  for (std::size_t c = 0; c < SimTrace::kColumns; ++c) {
    for (std::size_t i = 0; i < tr.size(); ++i) worst = std::max(worst, std::abs(back.col(c)[i] - tr.col(c)[i]));
  }
  CHECK(worst < 1e-9);

  std::ifstream in(scratch("trace.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("t,rhat_v,rhat_beta_deg,r_v,r_beta_deg,v,beta_deg,y,", 0) == 0);
}

TEST_CASE("same seed gives identical traces, another seed does not") {
  auto s = load_scenario(source("configs/box_range.json"));
  s.duration = 130.0;
  const auto a = run_scenario(s);
  CHECK(a == run_scenario(s));
  s.seed = 2;
  CHECK_FALSE(a == run_scenario(s));
}

TEST_CASE("zero gain, zero noise: y is the map at the dithered constant") {
  Scenario s;
  s.plant = bowl();
  s.esc = table_params(Variant::adaptive);
  for (auto& c : s.esc.channels) c.gain = 0.0;
  s.esc.channels[1].amplitude = 0.2;
  s.initial = {6.0, 1.0};
  s.noise_std = 0.0;
  s.duration = 40.0 * kPi;
  const auto tr = run_scenario(s);
  double worst = 0.0;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    // The sample at step i sees the reference issued at step i - 1.
    const double t = static_cast<double>(i - 1) * s.dt;
    const double dv = 6.0 + 0.5 * std::sin(t) - 10.0;
    const double db = 1.0 + 0.2 * std::sin(0.5 * t) - 2.0;
    const double oracle = 3.0 + 0.5 * (2.0 * dv * dv + db * db);
    worst = std::max(worst, std::abs(tr.y()[i] - oracle));
    CHECK(tr.rhat(0)[i] == 6.0);
  }
  // The loop clock accumulates dt, the oracle multiplies.
  CHECK(worst < 1e-9);
}

TEST_CASE("p_e column equals the recomputed power") {
  auto s = load_scenario(source("configs/box_endurance.json"));
  s.duration = 130.0;
  const auto tr = run_scenario(s);
  const auto p = std::get<CopterParams>(s.plant);
  for (std::size_t start : {std::size_t{0}, std::size_t{1500}, std::size_t{4000}}) {
    double a = 0.0, b = 0.0;
    const std::size_t n = 1000;
    for (std::size_t i = start; i < start + n; ++i) {
      a += tr.p_e()[i];
      b += electric_power(tr.col(5)[i], tr.col(6)[i], p);
    }
    CHECK(std::abs(a / n - b / n) < 1e-9);
  }
}

TEST_CASE("compare with zero gains reports no speedup") {
  auto s = default_copter_scenario(true, CostGoal::range, {6.0, 60 * kDeg}, Variant::adaptive);
  s.standard_gain = {0.0, 0.0};
  s.adaptive_gain = {0.0, 0.0};
  s.duration = 130.0;
  const auto c = compare_variants(s);
  CHECK_FALSE(c.standard.convergence_time.has_value());
  CHECK_FALSE(c.adaptive.convergence_time.has_value());
  CHECK_FALSE(c.speedup.has_value());
}

TEST_CASE("quadratic benchmark: adaptive is not slower in at least 8 of 10 seeds") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = compare_variants(quadratic_scenario(Variant::adaptive, seed));
    const double ta = c.adaptive.convergence_time.value_or(INFINITY);
    const double ts = c.standard.convergence_time.value_or(INFINITY);
    REQUIRE(std::isfinite(ta));
    if (ta <= ts) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("box range from (6 m/s, 60 deg): speedup at least 1.5") {
  const auto s = load_scenario(source("configs/box_range.json"));
  const auto c = compare_variants(s);
  REQUIRE(c.adaptive.convergence_time.has_value());
  // A standard run that never converges counts as an unbounded ratio.
  CHECK(c.speedup.value_or(INFINITY) >= 1.5);
}

TEST_CASE("cost map") {
  const auto fx = fixture();
  const auto vg = uniform_grid(0.0, 12.0, 0.5);
  const auto bg = uniform_grid(0.0, 170 * kDeg, 10 * kDeg);
  for (const char* payload : {"box", "none"}) {
    const bool box = std::string(payload) == "box";
    const auto p = default_copter(box);
    for (CostGoal g : {CostGoal::endurance, CostGoal::range}) {
      CAPTURE(payload);
      const auto m = cost_map(p, g, vg, bg);
      const auto& o = fx["optimum_points"][std::string(payload) + "_" + to_string(g)];
      CHECK(std::abs(m.v[m.argmin_v] - o["v"].get<double>()) <= 0.5 + 1e-9);
      const double db = wrap_half_turn(m.beta[m.argmin_beta] - o["beta_deg"].get<double>() * kDeg);
      CHECK(std::abs(db) <= 10 * kDeg + 1e-9);
      // Brute-force oracle over the same grid.
      double best = INFINITY;
      for (double v : vg) {
        for (double b : bg) best = std::min(best, cost(v, b, g, p));
      }
      CHECK(m.min_cost() == best);
    }
  }

  const auto p = default_copter(true);
  const auto e = cost_map(p, CostGoal::endurance, vg, bg);
  for (std::size_t ib = 1; ib < bg.size(); ++ib) CHECK(e.at(0, ib) == doctest::Approx(e.at(0, 0)).epsilon(1e-12));

  std::vector<double> shifted;
  for (double b : bg) shifted.push_back(b + kPi);
  const auto r0 = cost_map(p, CostGoal::range, vg, bg);
  const auto r1 = cost_map(p, CostGoal::range, vg, shifted);
  for (std::size_t i = 0; i < r0.cost.size(); ++i) CHECK(r1.cost[i] == doctest::Approx(r0.cost[i]).epsilon(1e-12));
}

TEST_CASE("run_sweep keeps input order") {
  std::vector<Scenario> runs;
  for (const auto& row : {kRows[0], kRows[2], kRows[5]}) {
    auto s = default_copter_scenario(row.box, row.goal, {row.v0, row.beta0_deg * kDeg}, Variant::adaptive);
    s.duration = 130.0;
    runs.push_back(s);
  }
  const auto metrics = run_sweep(runs, 3);
  REQUIRE(metrics.size() == runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto one = compute_metrics(runs[i], run_scenario(runs[i]));
    CHECK(metrics[i].steady_bias == one.steady_bias);
    CHECK(metrics[i].convergence_time == one.convergence_time);
    CHECK(metrics[i].clamp_fraction == one.clamp_fraction);
  }
}

TEST_CASE("quadratic sweeps through the channel bank match single runs") {
  std::vector<Scenario> runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto s = quadratic_scenario(Variant::adaptive, seed);
    s.initial[0] = 5.0 + static_cast<double>(seed);
    s.esc.channels[0].gain = 0.02 * static_cast<double>(seed);
    runs.push_back(s);
  }
  const auto traces = run_quadratic_batch(runs);
  const auto metrics = run_sweep(runs);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto single = run_scenario(runs[i]);
    CHECK(traces[i] == single);
    CHECK(metrics[i].steady_bias == compute_metrics(runs[i], single).steady_bias);
  }
  runs[2].dt = 0.01;
  CHECK_THROWS_AS(run_quadratic_batch(runs), std::invalid_argument);
}

// Registered as its own ctest entry (dt_sensitivity).
TEST_CASE("dt sensitivity: halving dt moves the final estimate by < 1% of the amplitude") {
  for (const auto& row : kRows) {
    for (Variant v : {Variant::standard, Variant::adaptive}) {
      auto s = default_copter_scenario(row.box, row.goal, {row.v0, row.beta0_deg * kDeg}, v);
      // Noise sequences differ with dt, so the comparison is noise-free.
      s.noise_std = 0.0;
      auto fine = s;
      fine.dt = 0.01;
      const auto a = run_scenario(s);
      const auto b = run_scenario(fine);
      const double dv = std::abs(a.rhat(0).back() - b.rhat(0).back());
      const double db = std::abs(wrap_half_turn(a.rhat(1).back() - b.rhat(1).back()));
      CAPTURE(row.box);
      CAPTURE(to_string(row.goal));
      CAPTURE(row.v0);
      CAPTURE(row.beta0_deg);
      CAPTURE(static_cast<int>(v));
      CAPTURE(db / kDeg);
      CHECK(dv < 0.01 * s.esc.channels[0].amplitude);
      CHECK(db < 0.01 * s.esc.channels[1].amplitude);
    }
  }
}
