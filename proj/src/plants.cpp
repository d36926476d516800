#include "esc/plants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "esc/signals.hpp"

namespace esc {

std::string to_string(CostGoal g) { return g == CostGoal::endurance ? "endurance" : "range"; }

CostGoal goal_from_string(const std::string& s) {
  if (s == "endurance") return CostGoal::endurance;
  if (s == "range") return CostGoal::range;
  throw std::invalid_argument("unknown goal '" + s + "' (expected endurance|range)");
}

// ---------------------------------------------------------------- quadratic

void QuadraticMap::validate() const {
  const auto n = optimum.size();
  if (n == 0) throw std::invalid_argument("plant.optimum: empty");
  if (hessian.rows() != n || hessian.cols() != n) {
    throw std::invalid_argument("plant.hessian: must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("plant.hessian: must be symmetric");
  }
  if (cubic.size() != 0 && cubic.size() != n) {
    throw std::invalid_argument("plant.cubic: size must match optimum");
  }
}

bool QuadraticMap::positive_definite() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
  return es.eigenvalues().minCoeff() > 0.0;
}

double QuadraticMap::value(std::span<const double> r) const {
  const auto n = optimum.size();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = r[static_cast<std::size_t>(i)] - optimum[i];
  double y = offset + 0.5 * d.dot(hessian * d);
  if (cubic.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) y += cubic[i] * d[i] * d[i] * d[i] / 6.0;
  }
  return y;
}

Eigen::VectorXd QuadraticMap::gradient(std::span<const double> r) const {
  const auto n = optimum.size();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = r[static_cast<std::size_t>(i)] - optimum[i];
  Eigen::VectorXd g = hessian * d;
  if (cubic.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) g[i] += 0.5 * cubic[i] * d[i] * d[i];
  }
  return g;
}

// ---------------------------------------------------------------- copter

void CopterParams::validate() const {
  auto pos = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string("plant.") + name + " must be > 0");
  };
  pos(mass, "mass");
  pos(rotor_radius, "rotor_radius");
  pos(air_density, "air_density");
  pos(kappa, "kappa");
  pos(drag_base, "drag_base");
  pos(avionics_power, "avionics_power");
  pos(drivetrain_eff, "drivetrain_eff");
  pos(speed_lag, "speed_lag");
  pos(sideslip_lag, "sideslip_lag");
  if (drivetrain_eff > 1.0) throw std::invalid_argument("plant.drivetrain_eff must be <= 1");
  if (!(drag_asym >= 0.0 && drag_asym < drag_base)) {
    throw std::invalid_argument("plant.drag_asym must satisfy 0 <= c1 < c0");
  }
  if (!(v_min >= 0.0 && v_max > v_min)) throw std::invalid_argument("plant.v_max must exceed v_min >= 0");
}

double CopterParams::clamp_speed(double v) const { return std::clamp(v, v_min, v_max); }

double CopterParams::bandwidth() const { return std::min(1.0 / speed_lag, 1.0 / sideslip_lag); }

double hover_induced_velocity_for_thrust(double thrust, const CopterParams& p) {
  return std::sqrt(thrust / (8.0 * p.air_density * std::numbers::pi * p.rotor_radius * p.rotor_radius));
}

double hover_induced_velocity(const CopterParams& p) {
  return hover_induced_velocity_for_thrust(p.mass * kGravity, p);
}

namespace {

struct InflowEquation {
  double axial;   // V sin a
  double normal;  // V cos a
  double vh2;

  [[nodiscard]] double root(double vi) const { return std::hypot(normal, axial + vi); }
  /// Normalized residual of vi * root - vh^2.
  [[nodiscard]] double residual(double vi) const { return (vi * root(vi) - vh2) / vh2; }
};

}  // namespace

double induced_velocity(double v_inf, double alpha, double v_h, double tol, const InducedVelocityOptions& opt) {
  if (!(v_inf >= 0.0) || !std::isfinite(v_inf)) throw std::invalid_argument("induced_velocity: v_inf must be >= 0");
  if (!(v_h > 0.0)) throw std::invalid_argument("induced_velocity: v_h must be > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("induced_velocity: tol must be > 0");
  if (v_inf == 0.0) return v_h;

  const InflowEquation eq{v_inf * std::sin(alpha), v_inf * std::cos(alpha), v_h * v_h};
  double vi = v_h;
  double res = eq.residual(vi);
  for (int it = 0; it < opt.max_iterations && std::abs(res) >= tol; ++it) {
    const double next = eq.vh2 / eq.root(vi);
    vi = (1.0 - opt.damping) * vi + opt.damping * next;
    res = eq.residual(vi);
  }
  if (std::abs(res) < tol) return vi;

  // Newton fallback on F(vi) = vi * root(vi) - vh^2.
  vi = std::max(vi, 1e-6 * v_h);
  for (int it = 0; it < opt.newton_iterations && std::abs(res) >= tol; ++it) {
    const double s = eq.root(vi);
    const double f = vi * s - eq.vh2;
    const double df = s + vi * (eq.axial + vi) / s;
    double next = vi - f / df;
    if (!(next > 0.0)) next = 0.5 * vi;
    vi = next;
    res = eq.residual(vi);
  }
  if (std::abs(res) < tol) return vi;
  throw SolverError("induced_velocity: no convergence", res);
}

double drag_force(double v_air, double beta, const CopterParams& p) {
  return 0.5 * p.air_density * v_air * v_air *
         (p.drag_base + p.drag_asym * std::cos(2.0 * (beta - p.drag_phase)));
}

TrimResult trim(double v_air, double beta, const CopterParams& p) {
  const double weight = p.mass * kGravity;
  const double fd = drag_force(v_air, beta, p);
  return {std::atan2(fd, weight), std::hypot(weight, fd)};
}

double electric_power(double v_air, double beta, const CopterParams& p) {
  const TrimResult tr = trim(v_air, beta, p);
  const double vh = hover_induced_velocity_for_thrust(tr.thrust, p);
  const double vi = induced_velocity(v_air, tr.alpha, vh);
  return p.avionics_power + p.kappa * (vi + v_air * std::sin(tr.alpha)) * tr.thrust / p.drivetrain_eff;
}

double cost_from_power(double power, double ground_speed, CostGoal goal) {
  return goal == CostGoal::endurance ? power : power / std::max(ground_speed, kRangeSpeedFloor);
}

double cost(double v, double beta, CostGoal goal, const CopterParams& p) {
  return cost_from_power(electric_power(v, beta, p), v, goal);
}

CopterParams default_copter(bool box) {
  // Surrogate coefficients from fixtures/calibration.json (`esc calibrate`).
  CopterParams p;
  p.kappa = 1.15;
  p.avionics_power = 37.5;
  p.drivetrain_eff = 1.0;
  if (box) {
    p.mass = 1.1;
    p.drag_base = 0.0675;
    p.drag_asym = 0.0081;
    p.drag_phase = 10.0 * std::numbers::pi / 180.0;
    p.v_max = 12.0;
  } else {
    p.mass = 1.0;
    p.drag_base = 0.06;
    p.drag_asym = 0.0072;
    p.drag_phase = 20.0 * std::numbers::pi / 180.0;
    p.v_max = 15.0;
  }
  return p;
}

// ---------------------------------------------------------------- dynamics

Eigen::Vector2d WindModel::at(double t) const {
  Eigen::Vector2d mean(mean_x, mean_y);
  const double n = mean.norm();
  const Eigen::Vector2d dir = n > 0.0 ? Eigen::Vector2d(mean / n) : Eigen::Vector2d(1.0, 0.0);
  return mean + gust_amp * std::sin(gust_freq * t) * dir;
}

AirData air_relative(const PlantState& s) {
  if (s.wind.isZero(0.0)) return {s.v, s.beta};
  const Eigen::Vector2d ground(s.v * std::cos(s.heading), s.v * std::sin(s.heading));
  const Eigen::Vector2d air = ground - s.wind;
  const double speed = air.norm();
  if (speed == 0.0) return {0.0, s.beta};
  const double course = std::atan2(air.y(), air.x());
  return {speed, s.beta + s.heading - course};
}

PlantState plant_step(const PlantState& s, std::span<const double> r, double dt, const CopterParams& p,
                      const WindModel& wind, double t) {
  if (!(dt > 0.0)) throw std::invalid_argument("plant_step: dt must be > 0");
  if (r.size() < 2) throw std::invalid_argument("plant_step: expected (speed, sideslip) reference");
  PlantState n = s;
  n.v += zoh_gain(1.0 / p.speed_lag, dt) * (p.clamp_speed(r[0]) - s.v);
  n.v = std::max(n.v, 0.0);
  n.beta += zoh_gain(1.0 / p.sideslip_lag, dt) * (r[1] - s.beta);
  n.heading = s.heading + 0.5 * (s.v + n.v) * dt / kPathRadius;
  n.wind = wind.at(t + dt);
  return n;
}

double equilibrium_cost(const Plant& plant, CostGoal goal, std::span<const double> r) {
  if (const auto* q = std::get_if<QuadraticMap>(&plant)) return q->value(r);
  const auto& c = std::get<CopterParams>(plant);
  const double v = c.clamp_speed(r[0]);
  return cost(v, r.size() > 1 ? r[1] : 0.0, goal, c);
}

Sensor::Sensor(double noise_std, std::uint64_t seed) : noise_std_(noise_std), rng_(seed) {
  if (!(noise_std >= 0.0)) throw std::invalid_argument("sensor: noise_std must be >= 0");
}

double Sensor::measure(double y_true) {
  if (noise_std_ == 0.0) return y_true;
  return y_true + noise_std_ * normal_(rng_);
}

}  // namespace esc
