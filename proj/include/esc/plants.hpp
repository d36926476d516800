#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace esc {

inline constexpr double kGravity = 9.81;
/// Speed floor of the range cost (m/s).
inline constexpr double kRangeSpeedFloor = 0.5;

enum class CostGoal { endurance, range };

std::string to_string(CostGoal g);
CostGoal goal_from_string(const std::string& s);

/// Raised when the induced-velocity solver fails; carries the last residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  [[nodiscard]] double residual() const { return residual_; }

 private:
  double residual_;
};

/// Quadratic test map y = y0 + 1/2 d'Hd + sum_i cubic_i d_i^3 / 6, d = r - r*.
///
/// The cubic terms are zero by default; a nonzero value skews the map so that
/// the dithered equilibrium acquires its O(|a|^2) offset.
struct QuadraticMap {
  Eigen::VectorXd optimum;
  Eigen::MatrixXd hessian;
  double offset = 0.0;
  Eigen::VectorXd cubic;  // empty or same size as optimum

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(optimum.size()); }
  /// Throws if H is not symmetric or sizes disagree.  Positive definiteness is
  /// not required so that saddle/maximum cases can be simulated.
  void validate() const;
  [[nodiscard]] bool positive_definite() const;
  [[nodiscard]] double value(std::span<const double> r) const;
  [[nodiscard]] Eigen::VectorXd gradient(std::span<const double> r) const;
};

struct CopterParams {
  double mass = 1.0;            // kg
  double rotor_radius = 0.1015; // m
  double air_density = 1.225;   // kg/m^3
  double kappa = 1.15;
  double drag_base = 0.0;       // c0, m^2
  double drag_asym = 0.0;       // c1, m^2, 0 <= c1 < c0
  double drag_phase = 0.0;      // beta*, rad
  double avionics_power = 0.0;  // p0, W
  double drivetrain_eff = 1.0;  // (0, 1]
  double speed_lag = 0.5;       // tau_v, s
  double sideslip_lag = 0.25;   // tau_beta, s
  double v_min = 0.0;           // m/s
  double v_max = 12.0;          // m/s

  void validate() const;
  [[nodiscard]] double clamp_speed(double v) const;
  /// min(1/tau_v, 1/tau_beta), rad/s.
  [[nodiscard]] double bandwidth() const;

  bool operator==(const CopterParams&) const = default;
};

/// Surrogate airframe used throughout the tests; `box` selects the payload
/// configuration.  Values come from fixtures/calibration.json.
CopterParams default_copter(bool box);

struct TrimResult {
  double alpha;   // rad, rotor-disk tilt into the relative wind
  double thrust;  // N, total
};

double hover_induced_velocity(const CopterParams& p);
/// v_h of a quadrotor carrying a total thrust T.
double hover_induced_velocity_for_thrust(double thrust, const CopterParams& p);

struct InducedVelocityOptions {
  double damping = 0.5;
  int max_iterations = 200;
  int newton_iterations = 50;
};

/// Positive root of v_i = v_h^2 / sqrt((V cos a)^2 + (V sin a + v_i)^2).
/// Residual is |v_i sqrt(...) - v_h^2| / v_h^2 < tol.
double induced_velocity(double v_inf, double alpha, double v_h, double tol = 1e-8,
                        const InducedVelocityOptions& opt = {});

double drag_force(double v_air, double beta, const CopterParams& p);
TrimResult trim(double v_air, double beta, const CopterParams& p);
/// Electric power (W) in steady level flight at airspeed v_air and sideslip beta.
double electric_power(double v_air, double beta, const CopterParams& p);
double cost_from_power(double power, double ground_speed, CostGoal goal);
double cost(double v, double beta, CostGoal goal, const CopterParams& p);

struct WindModel {
  double mean_x = 0.0;     // m/s
  double mean_y = 0.0;     // m/s
  double gust_amp = 0.0;   // m/s, along the mean direction (x if mean is zero)
  double gust_freq = 0.0;  // rad/s

  [[nodiscard]] bool calm() const { return mean_x == 0.0 && mean_y == 0.0 && gust_amp == 0.0; }
  [[nodiscard]] Eigen::Vector2d at(double t) const;
  bool operator==(const WindModel&) const = default;
};

/// Circular path radius used for the heading geometry (m).
inline constexpr double kPathRadius = 30.0;

struct PlantState {
  double v = 0.0;         // ground speed along the path, m/s
  double beta = 0.0;      // sideslip relative to the path tangent, rad
  double heading = 0.0;   // path tangent angle, rad
  Eigen::Vector2d wind = Eigen::Vector2d::Zero();
};

struct AirData {
  double airspeed;
  double sideslip;  // aerodynamic sideslip, rad
};

AirData air_relative(const PlantState& s);

/// First-order lag of (v, beta) toward the envelope-clamped reference; the
/// path tangent advances with ground speed and the wind is sampled at t + dt.
PlantState plant_step(const PlantState& s, std::span<const double> r, double dt, const CopterParams& p,
                      const WindModel& wind = {}, double t = 0.0);

/// Any simulated cost source.
using Plant = std::variant<CopterParams, QuadraticMap>;

/// Cost at the equilibrium l(r) reached for a held reference r.  For the
/// copter l(r) clamps speed to the envelope; the quadratic map is static.
double equilibrium_cost(const Plant& plant, CostGoal goal, std::span<const double> r);

/// Gaussian power-sensor surrogate with its own seeded generator.
class Sensor {
 public:
  Sensor(double noise_std, std::uint64_t seed);
  double measure(double y_true);
  [[nodiscard]] double noise_std() const { return noise_std_; }

 private:
  double noise_std_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace esc
