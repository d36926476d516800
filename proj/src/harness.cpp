#include "esc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace esc {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void fail(const std::string& at, const std::string& what) {
  throw std::invalid_argument(at + ": " + what);
}

// Degree value that converts back to exactly `rad`, so that save/load
// round-trips bit for bit.
double to_deg_exact(double rad) {
  double d = rad / kDeg;
  if (d * kDeg == rad) return d;
  double up = d;
  double down = d;
  for (int i = 0; i < 4; ++i) {
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    down = std::nextafter(down, -std::numeric_limits<double>::infinity());
    if (up * kDeg == rad) return up;
    if (down * kDeg == rad) return down;
  }
  return d;
}

void check_keys(const json& j, const std::string& at, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(at, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      fail(at + "." + k, "unknown field");
    }
  }
}

double number(const json& j, const std::string& at) {
  if (!j.is_number()) fail(at, "expected a number");
  return j.get<double>();
}

double number_or(const json& parent, const char* key, const std::string& at, double fallback) {
  return parent.contains(key) ? number(parent.at(key), at + "." + key) : fallback;
}

std::vector<double> numbers(const json& j, const std::string& at) {
  if (!j.is_array()) fail(at, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], at + "[" + std::to_string(i) + "]"));
  return out;
}

// Channel 1 of a copter carries sideslip: degrees at the config boundary.
double angle_scale(bool copter, std::size_t ch) { return copter && ch == 1 ? kDeg : 1.0; }

}  // namespace

// ---------------------------------------------------------------- scenario

std::size_t Scenario::steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

void Scenario::validate() const {
  std::visit([](const auto& p) { p.validate(); }, plant);
  esc.validate();
  const std::size_t n = channels();
  if (n > 2) fail("esc.channels", "traces hold at most two channels");
  if (is_copter() && n != 2) fail("esc.channels", "copter plants need (speed, sideslip) channels");
  if (const auto* q = std::get_if<QuadraticMap>(&plant); q && q->dim() != n) {
    fail("plant.optimum", "dimension must match esc.channels");
  }
  if (initial.size() != n) fail("initial", "need one value per channel");
  for (double x : initial) {
    if (!std::isfinite(x)) fail("initial", "must be finite");
  }
  if (!(dt > 0.0 && dt <= 0.02)) fail("dt", "must be in (0, 0.02] s");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = esc.channels[i];
    const double fastest = std::max({c.highpass_cutoff, c.lowpass_cutoff, c.adapter_cutoff});
    if (fastest * dt >= 1.0) fail("dt", "cutoff*dt must be < 1 for every filter");
  }
  if (!(duration >= 10.0 * esc.slowest_period() - 1e-9)) {
    fail("duration", "must cover at least 10 periods of the slowest perturbation");
  }
  if (!(noise_std >= 0.0)) fail("noise_std", "must be >= 0");
  for (const auto* g : {&standard_gain, &adaptive_gain}) {
    if (!g->empty() && g->size() != n) fail("esc.channels", "gain table size mismatch");
    for (double k : *g) {
      if (!(k >= 0.0)) fail("esc.channels", "gains must be >= 0");
    }
  }
  if (!band.empty()) {
    if (band.size() != n) fail("metrics.band", "need one value per channel");
    for (double b : band) {
      if (!(b > 0.0)) fail("metrics.band", "must be > 0");
    }
  }
  if (!target.empty() && target.size() != n) fail("metrics.target", "need one value per channel");
  if (!(hold >= 0.0)) fail("metrics.hold", "must be >= 0");
}

Scenario Scenario::with_variant(Variant v) const {
  Scenario out = *this;
  out.esc.variant = v;
  const auto& gains = v == Variant::standard ? standard_gain : adaptive_gain;
  if (!gains.empty()) {
    for (std::size_t i = 0; i < out.esc.channels.size(); ++i) out.esc.channels[i].gain = gains[i];
  }
  return out;
}

namespace {

bool same_plant(const Plant& a, const Plant& b) {
  if (a.index() != b.index()) return false;
  if (const auto* c = std::get_if<CopterParams>(&a)) return *c == std::get<CopterParams>(b);
  const auto& qa = std::get<QuadraticMap>(a);
  const auto& qb = std::get<QuadraticMap>(b);
  auto eq = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.size() == 0 || x == y);
  };
  return eq(qa.optimum, qb.optimum) && eq(qa.hessian, qb.hessian) && eq(qa.cubic, qb.cubic) &&
         qa.offset == qb.offset;
}

}  // namespace

bool operator==(const Scenario& a, const Scenario& b) {
  return same_plant(a.plant, b.plant) && a.goal == b.goal && a.esc == b.esc && a.standard_gain == b.standard_gain &&
         a.adaptive_gain == b.adaptive_gain && a.initial == b.initial && a.dt == b.dt && a.duration == b.duration &&
         a.seed == b.seed && a.noise_std == b.noise_std && a.wind == b.wind && a.band == b.band &&
         a.hold == b.hold && a.target == b.target;
}

Scenario default_copter_scenario(bool box, CostGoal goal, std::vector<double> initial, Variant variant) {
  Scenario s;
  s.plant = default_copter(box);
  s.goal = goal;
  const EscParams std_p = table_params(Variant::standard);
  const EscParams ada_p = table_params(Variant::adaptive);
  for (std::size_t i = 0; i < 2; ++i) {
    s.standard_gain.push_back(std_p.channels[i].gain);
    s.adaptive_gain.push_back(ada_p.channels[i].gain);
  }
  s.esc = table_params(variant);
  s.initial = std::move(initial);
  s.band = {0.5, 10.0 * kDeg};
  return s;
}

// ---------------------------------------------------------------- config

nlohmann::json copter_to_json(const CopterParams& p) {
  return json{{"type", "copter"},
              {"mass", p.mass},
              {"rotor_radius", p.rotor_radius},
              {"air_density", p.air_density},
              {"kappa", p.kappa},
              {"drag_base", p.drag_base},
              {"drag_asym", p.drag_asym},
              {"drag_phase_deg", to_deg_exact(p.drag_phase)},
              {"avionics_power", p.avionics_power},
              {"drivetrain_eff", p.drivetrain_eff},
              {"speed_lag", p.speed_lag},
              {"sideslip_lag", p.sideslip_lag},
              {"v_min", p.v_min},
              {"v_max", p.v_max}};
}

CopterParams copter_from_json(const nlohmann::json& j, const CopterParams& base, const std::string& at) {
  check_keys(j, at,
             {"type", "payload", "mass", "rotor_radius", "air_density", "kappa", "drag_base", "drag_asym",
              "drag_phase_deg", "avionics_power", "drivetrain_eff", "speed_lag", "sideslip_lag", "v_min", "v_max"});
  CopterParams p = base;
  p.mass = number_or(j, "mass", at, p.mass);
  p.rotor_radius = number_or(j, "rotor_radius", at, p.rotor_radius);
  p.air_density = number_or(j, "air_density", at, p.air_density);
  p.kappa = number_or(j, "kappa", at, p.kappa);
  p.drag_base = number_or(j, "drag_base", at, p.drag_base);
  p.drag_asym = number_or(j, "drag_asym", at, p.drag_asym);
  if (j.contains("drag_phase_deg")) p.drag_phase = number(j.at("drag_phase_deg"), at + ".drag_phase_deg") * kDeg;
  p.avionics_power = number_or(j, "avionics_power", at, p.avionics_power);
  p.drivetrain_eff = number_or(j, "drivetrain_eff", at, p.drivetrain_eff);
  p.speed_lag = number_or(j, "speed_lag", at, p.speed_lag);
  p.sideslip_lag = number_or(j, "sideslip_lag", at, p.sideslip_lag);
  p.v_min = number_or(j, "v_min", at, p.v_min);
  p.v_max = number_or(j, "v_max", at, p.v_max);
  p.validate();
  return p;
}

Plant plant_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("plant", "expected an object");
  if (!j.contains("type")) fail("plant.type", "missing (copter|quadratic)");
  const auto type = j.at("type");
  if (type == "copter") {
    bool box = false;
    if (j.contains("payload")) {
      const auto& pl = j.at("payload");
      if (pl == "box") {
        box = true;
      } else if (pl != "none") {
        fail("plant.payload", "expected box|none");
      }
    }
    return copter_from_json(j, default_copter(box));
  }
  if (type != "quadratic") fail("plant.type", "expected copter|quadratic");
  check_keys(j, "plant", {"type", "optimum", "hessian", "offset", "cubic"});
  QuadraticMap q;
  if (!j.contains("optimum")) fail("plant.optimum", "missing");
  if (!j.contains("hessian")) fail("plant.hessian", "missing");
  const auto opt = numbers(j.at("optimum"), "plant.optimum");
  q.optimum = Eigen::Map<const Eigen::VectorXd>(opt.data(), static_cast<Eigen::Index>(opt.size()));
  const auto& h = j.at("hessian");
  if (!h.is_array() || h.size() != opt.size()) fail("plant.hessian", "must be a square array matching optimum");
  q.hessian.resize(static_cast<Eigen::Index>(opt.size()), static_cast<Eigen::Index>(opt.size()));
  for (std::size_t r = 0; r < h.size(); ++r) {
    const auto row = numbers(h[r], "plant.hessian[" + std::to_string(r) + "]");
    if (row.size() != opt.size()) fail("plant.hessian[" + std::to_string(r) + "]", "wrong length");
    for (std::size_t c = 0; c < row.size(); ++c) {
      q.hessian(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  q.offset = number_or(j, "offset", "plant", 0.0);
  if (j.contains("cubic")) {
    const auto cub = numbers(j.at("cubic"), "plant.cubic");
    q.cubic = Eigen::Map<const Eigen::VectorXd>(cub.data(), static_cast<Eigen::Index>(cub.size()));
  }
  q.validate();
  return q;
}

nlohmann::json plant_to_json(const Plant& plant) {
  if (const auto* c = std::get_if<CopterParams>(&plant)) return copter_to_json(*c);
  const auto& q = std::get<QuadraticMap>(plant);
  json j{{"type", "quadratic"}, {"offset", q.offset}};
  j["optimum"] = std::vector<double>(q.optimum.data(), q.optimum.data() + q.optimum.size());
  json h = json::array();
  for (Eigen::Index r = 0; r < q.hessian.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(q.hessian.cols()));
    for (Eigen::Index c = 0; c < q.hessian.cols(); ++c) row[static_cast<std::size_t>(c)] = q.hessian(r, c);
    h.push_back(row);
  }
  j["hessian"] = h;
  if (q.cubic.size() > 0) j["cubic"] = std::vector<double>(q.cubic.data(), q.cubic.data() + q.cubic.size());
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  check_keys(j, "config",
             {"plant", "goal", "esc", "initial", "dt", "duration", "seed", "noise_std", "wind", "metrics"});
  Scenario s;
  if (!j.contains("plant")) fail("plant", "missing");
  s.plant = plant_from_json(j.at("plant"));
  const bool copter = s.is_copter();
  if (j.contains("goal")) {
    if (!j.at("goal").is_string()) fail("goal", "expected endurance|range");
    try {
      s.goal = goal_from_string(j.at("goal").get<std::string>());
    } catch (const std::invalid_argument& e) {
      fail("goal", e.what());
    }
  }

  if (!j.contains("esc")) fail("esc", "missing");
  const auto& e = j.at("esc");
  check_keys(e, "esc", {"variant", "channels"});
  if (e.contains("variant")) {
    if (!e.at("variant").is_string()) fail("esc.variant", "expected standard|adaptive");
    try {
      s.esc.variant = variant_from_string(e.at("variant").get<std::string>());
    } catch (const std::invalid_argument& ex) {
      fail("esc.variant", ex.what());
    }
  }
  if (!e.contains("channels")) fail("esc.channels", "missing");
  const auto& chs = e.at("channels");
  if (!chs.is_array() || chs.empty()) fail("esc.channels", "expected a non-empty array");
  for (std::size_t i = 0; i < chs.size(); ++i) {
    const std::string at = "esc.channels[" + std::to_string(i) + "]";
    const auto& c = chs[i];
    check_keys(c, at,
               {"amplitude", "amplitude_deg", "frequency", "highpass_cutoff", "lowpass_cutoff", "gain",
                "adapter_cutoff", "epsilon"});
    ChannelParams p;
    const double scale = angle_scale(copter, i);
    const char* amp_key = scale != 1.0 ? "amplitude_deg" : "amplitude";
    if (!c.contains(amp_key)) fail(at + "." + amp_key, "missing");
    p.amplitude = number(c.at(amp_key), at + "." + amp_key) * scale;
    if (!c.contains("frequency")) fail(at + ".frequency", "missing");
    p.frequency = number(c.at("frequency"), at + ".frequency");
    p.highpass_cutoff = number_or(c, "highpass_cutoff", at, p.frequency);
    p.lowpass_cutoff = number_or(c, "lowpass_cutoff", at, p.frequency);
    p.adapter_cutoff = number_or(c, "adapter_cutoff", at, p.adapter_cutoff);
    p.epsilon = number_or(c, "epsilon", at, p.epsilon);
    if (!c.contains("gain")) fail(at + ".gain", "missing");
    const auto& g = c.at("gain");
    if (g.is_number()) {
      p.gain = g.get<double>();
    } else {
      check_keys(g, at + ".gain", {"standard", "adaptive"});
      if (!g.contains("standard") || !g.contains("adaptive")) fail(at + ".gain", "needs standard and adaptive");
      s.standard_gain.push_back(number(g.at("standard"), at + ".gain.standard"));
      s.adaptive_gain.push_back(number(g.at("adaptive"), at + ".gain.adaptive"));
    }
    s.esc.channels.push_back(p);
  }
  if (!s.standard_gain.empty() && s.standard_gain.size() != chs.size()) {
    fail("esc.channels", "give gain either as a number on every channel or as {standard, adaptive} on every channel");
  }
  if (!s.standard_gain.empty()) s = s.with_variant(s.esc.variant);

  if (!j.contains("initial")) fail("initial", "missing");
  s.initial = numbers(j.at("initial"), "initial");
  for (std::size_t i = 0; i < s.initial.size(); ++i) s.initial[i] *= angle_scale(copter, i);

  s.dt = number_or(j, "dt", "config", s.dt);
  s.duration = number_or(j, "duration", "config", s.duration);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) fail("seed", "expected a non-negative integer");
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  s.noise_std = number_or(j, "noise_std", "config", s.noise_std);

  if (j.contains("wind")) {
    const auto& w = j.at("wind");
    check_keys(w, "wind", {"mean", "gust_amp", "gust_freq"});
    if (w.contains("mean")) {
      const auto m = numbers(w.at("mean"), "wind.mean");
      if (m.size() != 2) fail("wind.mean", "expected [x, y]");
      s.wind.mean_x = m[0];
      s.wind.mean_y = m[1];
    }
    s.wind.gust_amp = number_or(w, "gust_amp", "wind", 0.0);
    s.wind.gust_freq = number_or(w, "gust_freq", "wind", 0.0);
  }

  if (copter) s.band = {0.5, 10.0 * kDeg};
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    check_keys(m, "metrics", {"band", "hold", "target"});
    if (m.contains("band")) {
      s.band = numbers(m.at("band"), "metrics.band");
      for (std::size_t i = 0; i < s.band.size(); ++i) s.band[i] *= angle_scale(copter, i);
    }
    if (m.contains("target")) {
      s.target = numbers(m.at("target"), "metrics.target");
      for (std::size_t i = 0; i < s.target.size(); ++i) s.target[i] *= angle_scale(copter, i);
    }
    s.hold = number_or(m, "hold", "metrics", s.hold);
  }
  s.validate();
  return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
  const bool copter = s.is_copter();
  auto out_vec = [&](const std::vector<double>& v) {
    std::vector<double> o(v);
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (angle_scale(copter, i) != 1.0) o[i] = to_deg_exact(o[i]);
    }
    return o;
  };
  json chs = json::array();
  for (std::size_t i = 0; i < s.esc.channels.size(); ++i) {
    const auto& c = s.esc.channels[i];
    json jc;
    if (angle_scale(copter, i) != 1.0) {
      jc["amplitude_deg"] = to_deg_exact(c.amplitude);
    } else {
      jc["amplitude"] = c.amplitude;
    }
    jc["frequency"] = c.frequency;
    jc["highpass_cutoff"] = c.highpass_cutoff;
    jc["lowpass_cutoff"] = c.lowpass_cutoff;
    jc["adapter_cutoff"] = c.adapter_cutoff;
    jc["epsilon"] = c.epsilon;
    if (!s.standard_gain.empty()) {
      jc["gain"] = {{"standard", s.standard_gain[i]}, {"adaptive", s.adaptive_gain[i]}};
    } else {
      jc["gain"] = c.gain;
    }
    chs.push_back(jc);
  }
  json j;
  j["plant"] = plant_to_json(s.plant);
  j["goal"] = to_string(s.goal);
  j["esc"] = {{"variant", to_string(s.esc.variant)}, {"channels", chs}};
  j["initial"] = out_vec(s.initial);
  j["dt"] = s.dt;
  j["duration"] = s.duration;
  j["seed"] = s.seed;
  j["noise_std"] = s.noise_std;
  j["wind"] = {{"mean", {s.wind.mean_x, s.wind.mean_y}}, {"gust_amp", s.wind.gust_amp}, {"gust_freq", s.wind.gust_freq}};
  json m{{"hold", s.hold}};
  if (!s.band.empty()) m["band"] = out_vec(s.band);
  if (!s.target.empty()) m["target"] = out_vec(s.target);
  j["metrics"] = m;
  return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path.string() + "': " + e.what());
  }
  return scenario_from_json(j);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << scenario_to_json(s).dump(2) << '\n';
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects KEY=VALUE, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("--set: empty path component in '" + key + "'");
    const bool index = std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (index && node->is_array()) {
      const auto i = std::stoul(part);
      if (i >= node->size()) throw std::invalid_argument("--set: index out of range in '" + key + "'");
      node = &(*node)[i];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw std::invalid_argument("--set: '" + key + "' does not name an object field");
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

// ---------------------------------------------------------------- simulation

SimTrace run_scenario(const Scenario& s) {
  s.validate();
  const EscParams& params = s.esc;
  EscState st = make_state(params, s.initial);
  Sensor sensor(s.noise_std, s.seed);
  const auto* copter = std::get_if<CopterParams>(&s.plant);
  const auto* quad = std::get_if<QuadraticMap>(&s.plant);
  const std::size_t n_ch = params.channels.size();

  SimTrace tr;
  tr.dt = s.dt;
  const std::size_t steps = s.steps();
  tr.reserve(steps + 1);

  PlantState x;
  if (copter) {
    x.v = copter->clamp_speed(s.initial[0]);
    x.beta = s.initial[1];
    x.wind = s.wind.at(0.0);
  }
  std::vector<double> r = references(params, st);
  std::vector<double> applied = r;

  auto sample = [&](double& p_true) {
    if (copter) {
      const AirData air = air_relative(x);
      p_true = electric_power(air.airspeed, air.sideslip, *copter);
      return cost_from_power(sensor.measure(p_true), x.v, s.goal);
    }
    p_true = quad->value(applied);
    return sensor.measure(p_true);
  };
  auto record = [&](double y, double p_true) {
    std::array<double, SimTrace::kColumns> row{};
    row[0] = st.t;
    for (std::size_t i = 0; i < n_ch; ++i) {
      const auto& c = st.channels[i];
      row[1 + i] = c.r_hat;
      row[3 + i] = r[i];
      row[8 + i] = c.q();
      row[10 + i] = c.m;
      row[12 + i] = c.drive;
      row[14 + i] = c.eta();
    }
    if (copter) {
      row[5] = x.v;
      row[6] = x.beta;
      row[17] = x.wind.x();
      row[18] = x.wind.y();
    } else {
      for (std::size_t i = 0; i < n_ch; ++i) row[5 + i] = applied[i];
    }
    row[7] = y;
    row[16] = p_true;
    tr.push_row(row);
  };

  double p_true = 0.0;
  double y = sample(p_true);
  esc_prime(params, st, y);
  record(y, p_true);
  for (std::size_t n = 1; n <= steps; ++n) {
    applied = r;
    if (copter) x = plant_step(x, r, s.dt, *copter, s.wind, st.t);
    try {
      y = sample(p_true);
    } catch (const SolverError& e) {
      throw SolverError(fmt::format("step {}: {}", n, e.what()), e.residual());
    }
    r = esc_step(params, st, y, s.dt);
    record(y, p_true);
  }
  return tr;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("uniform_grid: need step > 0 and hi >= lo");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

CostMap cost_map(const CopterParams& plant, CostGoal goal, const std::vector<double>& v_grid,
                 const std::vector<double>& beta_grid) {
  if (v_grid.empty() || beta_grid.empty()) throw std::invalid_argument("cost_map: empty grid");
  CostMap m{v_grid, beta_grid, {}, 0, 0};
  m.cost.reserve(v_grid.size() * beta_grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v_grid.size(); ++i) {
    for (std::size_t k = 0; k < beta_grid.size(); ++k) {
      const std::array<double, 2> r{v_grid[i], beta_grid[k]};
      const double c = equilibrium_cost(plant, goal, r);
      m.cost.push_back(c);
      if (c < best) {
        best = c;
        m.argmin_v = i;
        m.argmin_beta = k;
      }
    }
  }
  return m;
}

void export_cost_map(const CostMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "v,beta_deg,cost\n";
  for (std::size_t i = 0; i < map.v.size(); ++i) {
    for (std::size_t k = 0; k < map.beta.size(); ++k) {
      out << fmt::format("{:.17g},{:.17g},{:.17g}\n", map.v[i], map.beta[k] / kDeg, map.at(i, k));
    }
  }
}

std::vector<double> plant_optimum(const Plant& plant, CostGoal goal) {
  if (const auto* q = std::get_if<QuadraticMap>(&plant)) {
    return {q->optimum.data(), q->optimum.data() + q->optimum.size()};
  }
  const auto& c = std::get<CopterParams>(plant);
  const auto coarse = cost_map(c, goal, uniform_grid(c.v_min, c.v_max, 0.5), uniform_grid(0.0, 170.0 * kDeg, 10.0 * kDeg));
  const double v0 = coarse.v[coarse.argmin_v];
  const double b0 = coarse.beta[coarse.argmin_beta];
  std::vector<double> vf;
  for (double v : uniform_grid(v0 - 0.5, v0 + 0.5, 0.01)) {
    if (v >= c.v_min && v <= c.v_max) vf.push_back(v);
  }
  const auto fine = cost_map(c, goal, vf, uniform_grid(b0 - 10.0 * kDeg, b0 + 10.0 * kDeg, 0.1 * kDeg));
  return {fine.v[fine.argmin_v], fine.beta[fine.argmin_beta]};
}

Eigen::MatrixXd cost_hessian(const Plant& plant, CostGoal goal, std::span<const double> r) {
  const std::size_t n = r.size();
  std::vector<double> h(n, 1e-3);
  if (std::holds_alternative<CopterParams>(plant)) h = {0.05, 1.0 * kDeg};
  if (h.size() != n) throw std::invalid_argument("cost_hessian: dimension mismatch");
  auto f = [&](std::size_t i, double di, std::size_t k, double dk) {
    std::vector<double> x(r.begin(), r.end());
    x[i] += di;
    x[k] += dk;
    return equilibrium_cost(plant, goal, x);
  };
  Eigen::MatrixXd H(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double f0 = f(0, 0.0, 0, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double v;
      if (i == k) {
        v = (f(i, h[i], i, 0.0) - 2.0 * f0 + f(i, -h[i], i, 0.0)) / (h[i] * h[i]);
      } else {
        v = (f(i, h[i], k, h[k]) - f(i, h[i], k, -h[k]) - f(i, -h[i], k, h[k]) + f(i, -h[i], k, -h[k])) /
            (4.0 * h[i] * h[k]);
      }
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return 0.5 * (H + H.transpose());
}

StabilityReport scenario_stability(const Scenario& s, double omega, double delta) {
  if (s.channels() != 2) throw std::invalid_argument("stability: needs exactly two channels");
  if (!(omega > 0.0) || !(delta > 0.0)) throw std::invalid_argument("stability: omega and delta must be > 0");
  const auto opt = plant_optimum(s.plant, s.goal);
  const Eigen::Matrix2d H = cost_hessian(s.plant, s.goal, opt);
  std::vector<PrimedChannel> primed;
  for (const auto& c : s.esc.channels) {
    const double slow = omega * delta;
    primed.push_back({c.amplitude, c.frequency / omega, c.highpass_cutoff / slow, c.lowpass_cutoff / slow,
                      c.gain / slow, c.adapter_cutoff / slow, c.epsilon});
  }
  const double bw = s.is_copter() ? std::get<CopterParams>(s.plant).bandwidth()
                                  : std::numeric_limits<double>::infinity();
  return stability_report(omega, delta, primed, H, s.esc.channels[0].epsilon, bw);
}

ChannelSpec channel_spec(const Scenario& s) {
  ChannelSpec spec;
  spec.target = s.target.empty() ? plant_optimum(s.plant, s.goal) : s.target;
  for (std::size_t i = 0; i < s.channels(); ++i) {
    ChannelBand b;
    b.target = spec.target[i];
    b.band = s.band.empty() ? s.esc.channels[i].amplitude : s.band[i];
    b.period = s.is_copter() && i == 1 ? std::numbers::pi : 0.0;
    spec.bands.push_back(b);
  }
  return spec;
}

RunMetrics compute_metrics(const Scenario& s, const SimTrace& trace) {
  const ChannelSpec spec = channel_spec(s);
  RunMetrics m;
  m.convergence_time = convergence_time(trace, spec.bands, s.hold);
  m.steady_bias = steady_bias(trace, spec.bands, std::min(50.0, 0.25 * s.duration));
  if (m.convergence_time) {
    const double pct =
        perturbation_overhead(s.plant, s.goal, spec.target, s.esc, 10.0 * s.esc.slowest_period(), s.dt);
    // Undefined on maps whose optimal cost is zero.
    if (std::isfinite(pct)) m.cost_overhead_pct = pct;
  }
  if (const auto* c = std::get_if<CopterParams>(&s.plant)) {
    std::size_t clamped = 0;
    for (double r : trace.r(0)) clamped += (r < c->v_min || r > c->v_max) ? 1 : 0;
    m.clamp_fraction = trace.size() ? static_cast<double>(clamped) / static_cast<double>(trace.size()) : 0.0;
  }
  if (s.esc.variant == Variant::adaptive) {
    for (std::size_t i = 0; i < s.channels(); ++i) {
      const double settle = s.esc.slowest_period() + 5.0 / s.esc.channels[i].adapter_cutoff;
      m.max_abs_g_settled.push_back(max_abs_after(trace.t(), trace.g(i), settle));
    }
  }
  return m;
}

Comparison compare_variants(const Scenario& s) {
  Scenario base = s;
  if (base.target.empty()) base.target = plant_optimum(base.plant, base.goal);
  const Scenario st = base.with_variant(Variant::standard);
  const Scenario ad = base.with_variant(Variant::adaptive);
  Comparison c;
  c.standard_trace = run_scenario(st);
  c.adaptive_trace = run_scenario(ad);
  c.standard = compute_metrics(st, c.standard_trace);
  c.adaptive = compute_metrics(ad, c.adaptive_trace);
  if (c.standard.convergence_time && c.adaptive.convergence_time && *c.adaptive.convergence_time > 0.0) {
    c.speedup = *c.standard.convergence_time / *c.adaptive.convergence_time;
  }
  return c;
}

// ---------------------------------------------------------------- calibration

namespace {

// Speed optimum along the minimum-drag sideslip line (beta* + 90 deg).
double speed_optimum(const CopterParams& p, CostGoal goal) {
  const double beta = p.drag_phase + std::numbers::pi / 2.0;
  double best_v = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (double v : uniform_grid(p.v_min, p.v_max, 0.05)) {
    const double c = cost(v, beta, goal, p);
    if (c < best) {
      best = c;
      best_v = v;
    }
  }
  double lo = std::max(p.v_min, best_v - 0.05);
  for (double v : uniform_grid(lo, std::min(p.v_max, best_v + 0.05), 0.005)) {
    const double c = cost(v, beta, goal, p);
    if (c < best) {
      best = c;
      best_v = v;
    }
  }
  return best_v;
}

}  // namespace

CalibrationGrid default_calibration_grid() {
  return {uniform_grid(0.02, 0.12, 0.0025), uniform_grid(0.0, 80.0, 2.5), uniform_grid(0.4, 1.0, 0.025)};
}

CalibrationResult calibrate(const CalibrationTargets& targets, const CalibrationGrid& grid) {
  if (grid.drag_base.empty() || grid.avionics_power.empty() || grid.drivetrain_eff.empty()) {
    throw std::invalid_argument("calibrate: empty grid");
  }
  CalibrationResult res;
  res.box = default_copter(true);
  res.none = default_copter(false);
  const double box_ratio = grid.box_asym_ratio;
  const double none_ratio = grid.none_asym_ratio;

  auto fit_c0 = [&](CopterParams& p, double ratio, double target) {
    double best = std::numeric_limits<double>::infinity();
    double best_c0 = grid.drag_base.front();
    for (double c0 : grid.drag_base) {
      CopterParams q = p;
      q.drag_base = c0;
      q.drag_asym = ratio * c0;
      const double e = speed_optimum(q, CostGoal::endurance) - target;
      if (e * e < best) {
        best = e * e;
        best_c0 = c0;
      }
    }
    p.drag_base = best_c0;
    p.drag_asym = ratio * best_c0;
    return best;
  };
  double objective = fit_c0(res.box, box_ratio, targets.box_endurance);
  objective += fit_c0(res.none, none_ratio, targets.none_endurance);

  double best = std::numeric_limits<double>::infinity();
  for (double p0 : grid.avionics_power) {
    for (double eta : grid.drivetrain_eff) {
      CopterParams b = res.box;
      CopterParams n = res.none;
      b.avionics_power = n.avionics_power = p0;
      b.drivetrain_eff = n.drivetrain_eff = eta;
      const double eb = speed_optimum(b, CostGoal::range) - targets.box_range;
      const double en = speed_optimum(n, CostGoal::range) - targets.none_range;
      const double eh = (electric_power(0.0, 0.0, n) - targets.hover_power) / 10.0;
      const double obj = eb * eb + en * en + eh * eh;
      if (obj < best) {
        best = obj;
        res.box.avionics_power = res.none.avionics_power = p0;
        res.box.drivetrain_eff = res.none.drivetrain_eff = eta;
      }
    }
  }
  res.objective = objective + best;
  res.box_endurance = speed_optimum(res.box, CostGoal::endurance);
  res.box_range = speed_optimum(res.box, CostGoal::range);
  res.none_endurance = speed_optimum(res.none, CostGoal::endurance);
  res.none_range = speed_optimum(res.none, CostGoal::range);
  res.hover_power = electric_power(0.0, 0.0, res.none);
  return res;
}

namespace {

// Full (v, beta) optima of the fitted airframes from the grid search.
json optimum_points(const CalibrationResult& r) {
  json out = json::object();
  for (const auto& [name, p] : {std::pair{"box", &r.box}, std::pair{"none", &r.none}}) {
    for (CostGoal g : {CostGoal::endurance, CostGoal::range}) {
      const auto o = plant_optimum(Plant{*p}, g);
      out[std::string(name) + "_" + to_string(g)] = {{"v", o[0]}, {"beta_deg", o[1] / kDeg}};
    }
  }
  return out;
}

}  // namespace

nlohmann::json calibration_to_json(const CalibrationResult& r) {
  return json{{"note", "calibrated surrogate, not measured airframe data"},
              {"box", copter_to_json(r.box)},
              {"none", copter_to_json(r.none)},
              {"optima",
               {{"box_endurance", r.box_endurance},
                {"box_range", r.box_range},
                {"none_endurance", r.none_endurance},
                {"none_range", r.none_range}}},
              {"optimum_points", optimum_points(r)},
              {"hover_power_none", r.hover_power},
              {"objective", r.objective}};
}

// ---------------------------------------------------------------- batch

std::vector<SimTrace> run_quadratic_batch(const std::vector<Scenario>& scenarios, kernels::Isa isa) {
  if (scenarios.empty()) return {};
  const auto& first = scenarios.front();
  std::vector<std::size_t> offset;
  std::size_t lanes = 0;
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& s = scenarios[k];
    s.validate();
    if (!std::holds_alternative<QuadraticMap>(s.plant)) {
      throw std::invalid_argument("run_quadratic_batch: scenario " + std::to_string(k) + " is not a quadratic map");
    }
    if (s.dt != first.dt || s.steps() != first.steps() || s.esc.variant != first.esc.variant) {
      throw std::invalid_argument("run_quadratic_batch: scenarios must share dt, duration and variant");
    }
    offset.push_back(lanes);
    lanes += s.channels();
  }

  const double dt = first.dt;
  kernels::ChannelBank bank(lanes);
  std::vector<double> amp(lanes), freq(lanes);
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& s = scenarios[k];
    for (std::size_t i = 0; i < s.channels(); ++i) {
      const auto& c = s.esc.channels[i];
      const std::size_t l = offset[k] + i;
      amp[l] = c.amplitude;
      freq[l] = c.frequency;
      bank.hp_gain[l] = zoh_gain(c.highpass_cutoff, dt);
      bank.lp_gain[l] = zoh_gain(c.lowpass_cutoff, dt);
      bank.adapter_gain[l] = zoh_gain(c.adapter_cutoff, dt);
      bank.gain[l] = c.gain;
      bank.epsilon[l] = c.epsilon;
      bank.hold_until[l] = s.esc.slowest_period();
      bank.r_hat[l] = s.initial[i];
    }
  }

  std::vector<Sensor> sensors;
  std::vector<SimTrace> traces(scenarios.size());
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    sensors.emplace_back(scenarios[k].noise_std, scenarios[k].seed);
    traces[k].dt = dt;
    traces[k].reserve(first.steps() + 1);
  }

  std::vector<double> y(lanes), demod(lanes), r(lanes), applied(lanes), p_true(scenarios.size());
  double t = 0.0;
  auto refresh_refs = [&] {
    for (std::size_t l = 0; l < lanes; ++l) r[l] = bank.r_hat[l] + sinusoid(amp[l], freq[l], t);
  };
  auto sample = [&] {
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
      const auto& q = std::get<QuadraticMap>(scenarios[k].plant);
      const std::span<const double> rk(applied.data() + offset[k], scenarios[k].channels());
      p_true[k] = q.value(rk);
      const double yk = sensors[k].measure(p_true[k]);
      for (std::size_t i = 0; i < scenarios[k].channels(); ++i) y[offset[k] + i] = yk;
    }
  };
  auto record = [&] {
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
      std::array<double, SimTrace::kColumns> row{};
      row[0] = t;
      for (std::size_t i = 0; i < scenarios[k].channels(); ++i) {
        const std::size_t l = offset[k] + i;
        row[1 + i] = bank.r_hat[l];
        row[3 + i] = r[l];
        row[5 + i] = applied[l];
        row[8 + i] = bank.q[l];
        row[10 + i] = bank.m[l];
        row[12 + i] = bank.drive[l];
        row[14 + i] = bank.eta[l];
      }
      row[7] = y[offset[k]];
      row[16] = p_true[k];
      traces[k].push_row(row);
    }
  };
  auto set_demod = [&] {
    for (std::size_t l = 0; l < lanes; ++l) demod[l] = std::sin(freq[l] * t);
  };

  const bool adaptive = first.esc.variant == Variant::adaptive;
  refresh_refs();
  applied = r;
  sample();
  set_demod();
  kernels::bank_prime(bank.state(), {y, demod, t, dt, adaptive});
  record();
  for (std::size_t n = 1; n <= first.steps(); ++n) {
    applied = r;
    sample();
    t += dt;
    set_demod();
    kernels::bank_step(isa, bank.coeffs(), bank.state(), {y, demod, t, dt, adaptive});
    refresh_refs();
    record();
  }
  return traces;
}

std::vector<RunMetrics> run_sweep(const std::vector<Scenario>& scenarios, unsigned threads) {
  std::vector<RunMetrics> out(scenarios.size());
  if (scenarios.empty()) return out;
  const Scenario& first = scenarios.front();
  const bool batchable = std::all_of(scenarios.begin(), scenarios.end(), [&](const Scenario& s) {
    return !s.is_copter() && s.dt == first.dt && s.duration == first.duration && s.esc.variant == first.esc.variant;
  });
  if (batchable) {
    const auto traces = run_quadratic_batch(scenarios);
    for (std::size_t i = 0; i < scenarios.size(); ++i) out[i] = compute_metrics(scenarios[i], traces[i]);
    return out;
  }
  for (const auto& s : scenarios) s.validate();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, scenarios.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(scenarios.size());
  auto work = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        out[i] = compute_metrics(scenarios[i], run_scenario(scenarios[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace esc
