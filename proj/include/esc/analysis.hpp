#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "esc/esc_core.hpp"
#include "esc/plants.hpp"
#include "esc/trace.hpp"

namespace esc {

/// Real parts within this distance of zero are reported as marginal.
inline constexpr double kMarginalTolerance = 1e-9;

struct HurwitzResult {
  bool hurwitz = false;
  double max_real = 0.0;
  bool marginal = false;
};

/// Eigenvalue oracle: true iff every eigenvalue has real part < -1e-9.
HurwitzResult is_hurwitz(const Eigen::MatrixXd& m);

/// Routh array test on a real polynomial (highest degree first).  A zero
/// first-column entry is replaced by a small positive epsilon and an all-zero
/// row by the derivative of the auxiliary polynomial; either event means
/// roots on or right of the imaginary axis, so the verdict is false.
bool routh_hurwitz(std::span<const double> coeffs);

/// Number of sign changes in the first column of the Routh array (count of
/// right-half-plane roots when no imaginary-axis roots exist).
int routh_sign_changes(std::span<const double> coeffs);

/// Companion matrix of a monic-normalized polynomial (highest degree first).
Eigen::MatrixXd companion_matrix(std::span<const double> coeffs);

/// Jacobian of the averaged closed loop at its equilibrium, states ordered
/// (r~ [N], q [N], eta~ [N], m [N]):
///
///   J = delta [[A, 0], [B, -diag(w_h', gamma')]]
///   A = [[0, -diag(k')/sqrt(eps)], [1/2 diag(w_l' a) H, -diag(w_l')]]
///
/// B's gradient block vanishes at the equilibrium to first order and is zero.
Eigen::MatrixXd averaged_jacobian(double delta, std::span<const PrimedChannel> primed,
                                  const Eigen::MatrixXd& hessian, double epsilon);

/// The 2N x 2N block A (without the delta factor).
Eigen::MatrixXd averaged_gradient_block(std::span<const PrimedChannel> primed, const Eigen::MatrixXd& hessian,
                                        double epsilon);

/// det(lambda I - delta A) for two channels: the quartic
/// det(lambda^2 I + lambda delta W_l + delta^2/sqrt(eps) G K), highest first.
std::vector<double> averaged_characteristic_polynomial(double delta, std::span<const PrimedChannel> primed,
                                                       const Eigen::Matrix2d& hessian, double epsilon);

struct StabilityReport {
  Eigen::MatrixXd jacobian;
  bool hurwitz_rh = false;
  bool hurwitz_eig = false;
  bool marginal = false;
  double max_real_eig = 0.0;
  std::vector<std::string> warnings;
};

/// Both checkers on the averaged Jacobian plus the parameter linter applied
/// to the scaled parameters.
StabilityReport stability_report(double omega, double delta, std::span<const PrimedChannel> primed,
                                 const Eigen::Matrix2d& hessian, double epsilon, double plant_bandwidth);

/// Per-channel comparison rule: sideslip-like channels compare modulo `period`.
struct ChannelBand {
  double target = 0.0;
  double band = 0.0;
  double period = 0.0;  // 0 = not periodic

  [[nodiscard]] double error(double x) const;
};

/// Earliest time t such that r_hat stays within every band over [t, t+hold].
/// Times are taken from `t`; returns nullopt when never satisfied.
std::optional<double> convergence_time(std::span<const double> t, std::span<const std::vector<double>> r_hat,
                                       std::span<const ChannelBand> bands, double hold);
std::optional<double> convergence_time(const SimTrace& trace, std::span<const ChannelBand> bands, double hold);

/// Mean signed error of r_hat over the final `window` seconds.
std::vector<double> steady_bias(const SimTrace& trace, std::span<const ChannelBand> bands, double window);

/// Runs the plant open loop at r = r* + dither for `horizon` seconds and
/// returns 100 (mean cost - cost(r*)) / cost(r*).
double perturbation_overhead(const Plant& plant, CostGoal goal, std::span<const double> r_star,
                             const EscParams& params, double horizon, double dt = 0.02);

struct RunMetrics {
  std::optional<double> convergence_time;
  std::vector<double> steady_bias;
  std::optional<double> cost_overhead_pct;
  double clamp_fraction = 0.0;
  /// max |g| after adapter settling, per channel (adaptive runs only).
  std::vector<double> max_abs_g_settled;
};

/// Largest |g| in the trace after `settle_time`.
double max_abs_after(std::span<const double> t, std::span<const double> x, double settle_time);

}  // namespace esc
