#include "esc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace esc {

HurwitzResult is_hurwitz(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("is_hurwitz: matrix must be square");
  if (m.rows() == 0) throw std::invalid_argument("is_hurwitz: empty matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw std::runtime_error("is_hurwitz: eigenvalue solver failed");
  const double max_real = es.eigenvalues().real().maxCoeff();
  HurwitzResult r;
  r.max_real = max_real;
  r.marginal = std::abs(max_real) <= kMarginalTolerance;
  r.hurwitz = max_real < -kMarginalTolerance;
  return r;
}

namespace {

struct RouthOutcome {
  int sign_changes = 0;
  bool singular = false;  // epsilon substitution or zero row occurred
};

RouthOutcome routh(std::span<const double> coeffs) {
  if (coeffs.empty()) throw std::invalid_argument("routh_hurwitz: empty polynomial");
  if (coeffs[0] == 0.0) throw std::invalid_argument("routh_hurwitz: leading coefficient must be nonzero");
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw std::invalid_argument("routh_hurwitz: non-finite coefficient");
  }
  const std::size_t degree = coeffs.size() - 1;
  RouthOutcome out;
  if (degree == 0) return out;

  const std::size_t width = degree / 2 + 1;
  std::vector<std::vector<double>> rows(degree + 1, std::vector<double>(width + 1, 0.0));
  for (std::size_t k = 0; k <= degree; ++k) rows[k % 2][k / 2] = coeffs[k];

  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  const double eps_sub = 1e-9 * scale;

  auto all_zero = [](const std::vector<double>& row) {
    return std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; });
  };

  for (std::size_t i = 1; i <= degree; ++i) {
    auto& prev = rows[i - 1];
    auto& cur = rows[i];
    if (i >= 2) {
      const auto& pp = rows[i - 2];
      for (std::size_t j = 0; j < width; ++j) {
        const double a = prev[0], b = pp[j + 1], c = pp[0], d = prev[j + 1];
        double v = (a * b - c * d) / a;
        const double tol = 1e-12 * (std::abs(a * b) + std::abs(c * d)) / std::abs(a);
        if (std::abs(v) <= tol) v = 0.0;
        cur[j] = v;
      }
    }
    if (all_zero(cur)) {
      // Auxiliary polynomial from the row above, degree = degree - (i - 1).
      out.singular = true;
      const std::size_t aux_degree = degree - (i - 1);
      for (std::size_t j = 0; j < width; ++j) {
        const long power = static_cast<long>(aux_degree) - 2 * static_cast<long>(j);
        cur[j] = power > 0 ? prev[j] * static_cast<double>(power) : 0.0;
      }
    }
    if (cur[0] == 0.0) {
      out.singular = true;
      cur[0] = eps_sub;
    }
  }
  for (std::size_t i = 1; i <= degree; ++i) {
    if ((rows[i][0] > 0.0) != (rows[i - 1][0] > 0.0)) ++out.sign_changes;
  }
  return out;
}

}  // namespace

bool routh_hurwitz(std::span<const double> coeffs) {
  const auto r = routh(coeffs);
  return r.sign_changes == 0 && !r.singular;
}

int routh_sign_changes(std::span<const double> coeffs) { return routh(coeffs).sign_changes; }

Eigen::MatrixXd companion_matrix(std::span<const double> coeffs) {
  if (coeffs.size() < 2 || coeffs[0] == 0.0) throw std::invalid_argument("companion_matrix: need degree >= 1");
  const auto n = static_cast<Eigen::Index>(coeffs.size() - 1);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) c(0, j) = -coeffs[static_cast<std::size_t>(j + 1)] / coeffs[0];
  for (Eigen::Index i = 1; i < n; ++i) c(i, i - 1) = 1.0;
  return c;
}

namespace {

void check_jacobian_inputs(std::span<const PrimedChannel> primed, const Eigen::MatrixXd& h, double epsilon) {
  const auto n = static_cast<Eigen::Index>(primed.size());
  if (n == 0) throw std::invalid_argument("averaged_jacobian: no channels");
  if (h.rows() != n || h.cols() != n) throw std::invalid_argument("averaged_jacobian: hessian size mismatch");
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("averaged_jacobian: hessian must be symmetric");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("averaged_jacobian: epsilon must be > 0");
  for (const auto& p : primed) {
    if (!(p.highpass_cutoff > 0 && p.lowpass_cutoff > 0 && p.gain > 0 && p.adapter_cutoff > 0 &&
          p.frequency > 0 && p.amplitude > 0)) {
      throw std::invalid_argument("averaged_jacobian: primed constants must be > 0");
    }
  }
}

}  // namespace

Eigen::MatrixXd averaged_gradient_block(std::span<const PrimedChannel> primed, const Eigen::MatrixXd& hessian,
                                        double epsilon) {
  check_jacobian_inputs(primed, hessian, epsilon);
  const auto n = static_cast<Eigen::Index>(primed.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const double inv_sqrt_eps = 1.0 / std::sqrt(epsilon);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = primed[static_cast<std::size_t>(i)];
    a(i, n + i) = -p.gain * inv_sqrt_eps;
    a(n + i, n + i) = -p.lowpass_cutoff;
    for (Eigen::Index j = 0; j < n; ++j) a(n + i, j) = 0.5 * p.lowpass_cutoff * p.amplitude * hessian(i, j);
  }
  return a;
}

Eigen::MatrixXd averaged_jacobian(double delta, std::span<const PrimedChannel> primed,
                                  const Eigen::MatrixXd& hessian, double epsilon) {
  if (!(delta > 0.0)) throw std::invalid_argument("averaged_jacobian: delta must be > 0");
  const Eigen::MatrixXd a = averaged_gradient_block(primed, hessian, epsilon);
  const auto n = static_cast<Eigen::Index>(primed.size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(4 * n, 4 * n);
  j.topLeftCorner(2 * n, 2 * n) = a;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = primed[static_cast<std::size_t>(i)];
    j(2 * n + i, 2 * n + i) = -p.highpass_cutoff;
    j(3 * n + i, 3 * n + i) = -p.adapter_cutoff;
  }
  return delta * j;
}

std::vector<double> averaged_characteristic_polynomial(double delta, std::span<const PrimedChannel> primed,
                                                       const Eigen::Matrix2d& hessian, double epsilon) {
  if (primed.size() != 2) throw std::invalid_argument("averaged_characteristic_polynomial: two channels required");
  check_jacobian_inputs(primed, hessian, epsilon);
  const auto& v = primed[0];
  const auto& b = primed[1];
  const Eigen::Matrix2d g =
      0.5 * Eigen::Vector2d(v.lowpass_cutoff * v.amplitude, b.lowpass_cutoff * b.amplitude).asDiagonal() * hessian;
  const Eigen::Matrix2d m = g * Eigen::Vector2d(v.gain, b.gain).asDiagonal() / std::sqrt(epsilon);
  // (l^2 + d w1 l + d^2 M11)(l^2 + d w2 l + d^2 M22) - d^4 M12 M21
  const double d = delta, w1 = v.lowpass_cutoff, w2 = b.lowpass_cutoff;
  const double p1 = d * w1, c1 = d * d * m(0, 0);
  const double p2 = d * w2, c2 = d * d * m(1, 1);
  return {1.0, p1 + p2, c1 + c2 + p1 * p2, p1 * c2 + p2 * c1, c1 * c2 - d * d * d * d * m(0, 1) * m(1, 0)};
}

StabilityReport stability_report(double omega, double delta, std::span<const PrimedChannel> primed,
                                 const Eigen::Matrix2d& hessian, double epsilon, double plant_bandwidth) {
  StabilityReport rep;
  rep.jacobian = averaged_jacobian(delta, primed, hessian, epsilon);
  const auto eig = is_hurwitz(rep.jacobian);
  rep.hurwitz_eig = eig.hurwitz;
  rep.marginal = eig.marginal;
  rep.max_real_eig = eig.max_real;
  const auto poly = averaged_characteristic_polynomial(delta, primed, hessian, epsilon);
  bool diag_ok = true;
  for (const auto& p : primed) diag_ok = diag_ok && p.highpass_cutoff > 0 && p.adapter_cutoff > 0;
  rep.hurwitz_rh = routh_hurwitz(poly) && diag_ok;
  if (rep.marginal) rep.warnings.push_back("averaged Jacobian is marginal (|max Re| <= 1e-9)");
  if (rep.hurwitz_rh != rep.hurwitz_eig && !rep.marginal) {
    rep.warnings.push_back("Routh-Hurwitz and eigenvalue verdicts disagree");
  }
  const auto lint = lint_params(scaled_params(omega, delta, primed, Variant::adaptive), plant_bandwidth);
  rep.warnings.insert(rep.warnings.end(), lint.begin(), lint.end());
  return rep;
}

double ChannelBand::error(double x) const {
  const double e = x - target;
  return period > 0.0 ? std::remainder(e, period) : e;
}

std::optional<double> convergence_time(std::span<const double> t, std::span<const std::vector<double>> r_hat,
                                       std::span<const ChannelBand> bands, double hold) {
  if (r_hat.size() != bands.size()) throw std::invalid_argument("convergence_time: channel count mismatch");
  for (const auto& b : bands) {
    if (!(b.band > 0.0)) throw std::invalid_argument("convergence_time: band must be > 0");
  }
  std::optional<std::size_t> run_start;
  for (std::size_t i = 0; i < t.size(); ++i) {
    bool inside = true;
    for (std::size_t c = 0; c < bands.size() && inside; ++c) {
      inside = std::abs(bands[c].error(r_hat[c][i])) <= bands[c].band;
    }
    if (!inside) {
      run_start.reset();
      continue;
    }
    if (!run_start) run_start = i;
    if (t[i] - t[*run_start] >= hold - 1e-9) return t[*run_start] - t[0];
  }
  return std::nullopt;
}

std::optional<double> convergence_time(const SimTrace& trace, std::span<const ChannelBand> bands, double hold) {
  std::vector<std::vector<double>> series;
  for (std::size_t c = 0; c < bands.size(); ++c) series.push_back(trace.rhat(c));
  return convergence_time(trace.t(), series, bands, hold);
}

std::vector<double> steady_bias(const SimTrace& trace, std::span<const ChannelBand> bands, double window) {
  std::vector<double> out(bands.size(), 0.0);
  if (trace.size() == 0) return out;
  const double t_end = trace.t().back();
  std::size_t count = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.t()[i] < t_end - window) continue;
    for (std::size_t c = 0; c < bands.size(); ++c) out[c] += bands[c].error(trace.rhat(c)[i]);
    ++count;
  }
  for (auto& x : out) x /= static_cast<double>(count);
  return out;
}

double perturbation_overhead(const Plant& plant, CostGoal goal, std::span<const double> r_star,
                             const EscParams& params, double horizon, double dt) {
  if (r_star.size() != params.channels.size()) {
    throw std::invalid_argument("perturbation_overhead: optimum size mismatch");
  }
  if (!(horizon > 0.0 && dt > 0.0)) throw std::invalid_argument("perturbation_overhead: horizon and dt must be > 0");
  const double base = equilibrium_cost(plant, goal, r_star);
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  std::vector<double> r(r_star.begin(), r_star.end());
  auto dither = [&](double t) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto& c = params.channels[i];
      r[i] = r_star[i] + sinusoid(c.amplitude, c.frequency, t);
    }
  };

  double sum = 0.0;
  if (const auto* copter = std::get_if<CopterParams>(&plant)) {
    PlantState x;
    x.v = copter->clamp_speed(r_star[0]);
    x.beta = r_star.size() > 1 ? r_star[1] : 0.0;
    double t = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      dither(t);
      x = plant_step(x, r, dt, *copter);
      t += dt;
      sum += cost(x.v, x.beta, goal, *copter);
    }
  } else {
    double t = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      t += dt;
      dither(t);
      sum += equilibrium_cost(plant, goal, r);
    }
  }
  const double mean = sum / static_cast<double>(steps);
  return 100.0 * (mean - base) / base;
}

double max_abs_after(std::span<const double> t, std::span<const double> x, double settle_time) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= settle_time) m = std::max(m, std::abs(x[i]));
  }
  return m;
}

}  // namespace esc
