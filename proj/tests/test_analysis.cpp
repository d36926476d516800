#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <unsupported/Eigen/Polynomials>

#include "esc/analysis.hpp"
#include "esc/harness.hpp"

using namespace esc;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Expands prod (x - root), highest degree first.
std::vector<double> poly_from_roots(const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> n(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      n[i] += c[i];
      n[i + 1] -= r * c[i];
    }
    c = n;
  }
  std::vector<double> out;
  for (const auto& x : c) out.push_back(x.real());
  return out;
}

// Independent root oracle: Eigen's polynomial solver (lowest degree first).
double max_root_real(const std::vector<double>& coeffs) {
  Eigen::VectorXd c(coeffs.size());
  for (std::size_t i = 0; i < coeffs.size(); ++i) c[static_cast<Eigen::Index>(i)] = coeffs[coeffs.size() - 1 - i];
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(c);
  double m = -INFINITY;
  for (const auto& r : solver.roots()) m = std::max(m, r.real());
  return m;
}

std::vector<PrimedChannel> unit_primed(double a) {
  std::vector<PrimedChannel> p(2);
  p[1].frequency = 2.0;
  for (auto& c : p) c.amplitude = a;
  return p;
}

SimTrace make_trace(const std::vector<double>& t, const std::vector<double>& v, const std::vector<double>& b) {
  SimTrace tr;
  tr.columns[0] = t;
  tr.columns[1] = v;
  tr.columns[2] = b;
  return tr;
}

}  // namespace

TEST_CASE("Routh-Hurwitz examples") {
  const std::vector<double> stable{1.0, 2.0, 1.0};
  const std::vector<double> unstable{1.0, 0.0, -1.0};
  CHECK(routh_hurwitz(stable));
  CHECK_FALSE(routh_hurwitz(unstable));
  CHECK(routh_sign_changes(unstable) == 1);
  const std::vector<double> zero_lead{0.0, 1.0, 1.0};
  CHECK_THROWS_AS(routh_hurwitz(zero_lead), std::invalid_argument);
  // Imaginary-axis roots (x^2 + 1)(x + 1) are not Hurwitz.
  const std::vector<double> marginal{1.0, 1.0, 1.0, 1.0};
  CHECK_FALSE(routh_hurwitz(marginal));
  const std::vector<double> q{1.0, 2.0, 3.0, 1.0, 0.5};
  CHECK(routh_hurwitz(q) == is_hurwitz(companion_matrix(q)).hurwitz);
  CHECK(routh_hurwitz(q) == (max_root_real(q) < 0));
}

TEST_CASE("Routh-Hurwitz agrees with the root oracle on random quartics") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<std::complex<double>> roots;
    while (roots.size() < 4) {
      if (roots.size() <= 2 && rng() % 2) {
        const std::complex<double> z(u(rng), u(rng));
        roots.push_back(z);
        roots.push_back(std::conj(z));
      } else {
        roots.emplace_back(u(rng), 0.0);
      }
    }
    const auto c = poly_from_roots(roots);
    const double oracle = max_root_real(c);
    if (std::abs(oracle) <= 1e-9) continue;
    ++checked;
    CHECK(routh_hurwitz(c) == (oracle < 0.0));
    CHECK(is_hurwitz(companion_matrix(c)).hurwitz == (oracle < 0.0));
  }
  CHECK(checked >= 495);
}

TEST_CASE("is_hurwitz examples") {
  const auto r = is_hurwitz(-Eigen::MatrixXd::Identity(3, 3));
  CHECK(r.hurwitz);
  CHECK(r.max_real == doctest::Approx(-1.0));
  Eigen::MatrixXd rot(2, 2);
  rot << 0, 1, -1, 0;
  const auto m = is_hurwitz(rot);
  CHECK_FALSE(m.hurwitz);
  CHECK(m.marginal);
  CHECK(std::abs(m.max_real) < 1e-12);
  CHECK_THROWS_AS(is_hurwitz(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("averaged Jacobian structure and verdicts") {
  const auto primed = unit_primed(0.1);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  const auto j = averaged_jacobian(0.1, primed, h, 1e-4);
  REQUIRE(j.rows() == 8);
  CHECK(j.block(0, 4, 4, 4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(is_hurwitz(j).hurwitz);
  const auto rep = stability_report(1.0, 0.1, primed, h, 1e-4, 10.0);
  CHECK(rep.hurwitz_rh);
  CHECK(rep.hurwitz_eig);

  Eigen::MatrixXd saddle(2, 2);
  saddle << 1.0, 0.0, 0.0, -1.0;
  CHECK_FALSE(is_hurwitz(averaged_jacobian(0.1, primed, saddle, 1e-4)).hurwitz);
  const auto srep = stability_report(1.0, 0.1, primed, saddle, 1e-4, 10.0);
  CHECK_FALSE(srep.hurwitz_rh);
  CHECK_FALSE(srep.hurwitz_eig);

  Eigen::MatrixXd skew(2, 2);
  skew << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(averaged_jacobian(0.1, primed, skew, 1e-4), std::invalid_argument);
}

TEST_CASE("characteristic polynomial matches det(lambda I - delta A)") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int i = 0; i < 50; ++i) {
    auto primed = unit_primed(u(rng));
    for (auto& c : primed) {
      c.gain = u(rng);
      c.lowpass_cutoff = u(rng);
    }
    Eigen::Matrix2d h;
    const double off = u(rng) - 1.0;
    h << u(rng) + 1.0, off, off, u(rng) - 0.5;
    const double delta = u(rng), eps = 1e-2;
    const Eigen::MatrixXd a = delta * averaged_gradient_block(primed, h, eps);
    const auto poly = averaged_characteristic_polynomial(delta, primed, h, eps);
    // Characteristic polynomial coefficients from the eigenvalues of delta A.
    Eigen::EigenSolver<Eigen::MatrixXd> es(a);
    std::vector<std::complex<double>> roots;
    for (Eigen::Index k = 0; k < 4; ++k) roots.push_back(es.eigenvalues()[k]);
    const auto oracle = poly_from_roots(roots);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(poly[k] == doctest::Approx(oracle[k]).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("ChannelBand compares sideslip modulo 180 deg") {
  const ChannelBand b{100 * kDeg, 10 * kDeg, kPi};
  CHECK(std::abs(b.error(-80 * kDeg)) < 1e-12);
  CHECK(b.error(95 * kDeg) == doctest::Approx(-5 * kDeg));
  CHECK(std::abs(b.error(280 * kDeg)) < 1e-12);
}

TEST_CASE("convergence time") {
  std::vector<double> t, v, b;
  for (int i = 0; i <= 2000; ++i) t.push_back(i * 0.1);
  const std::vector<ChannelBand> bands{{10.0, 0.5, 0.0}, {100 * kDeg, 10 * kDeg, kPi}};

  SUBCASE("starts inside") {
    v.assign(t.size(), 10.2);
    b.assign(t.size(), 95 * kDeg);
    CHECK(convergence_time(make_trace(t, v, b), bands, 30.0) == doctest::Approx(0.0));
  }
  SUBCASE("enters at 50 s and stays") {
    for (double ti : t) {
      v.push_back(ti < 50.0 ? 6.0 : 10.0);
      b.push_back(100 * kDeg);
    }
    CHECK(convergence_time(make_trace(t, v, b), bands, 30.0).value() == doctest::Approx(50.0));
  }
  SUBCASE("180 deg alias counts as converged") {
    v.assign(t.size(), 10.0);
    b.assign(t.size(), -80 * kDeg);
    CHECK(convergence_time(make_trace(t, v, b), bands, 30.0).has_value());
  }
  SUBCASE("leaves before the hold ends") {
    for (double ti : t) {
      v.push_back(std::fmod(ti, 40.0) < 20.0 ? 10.0 : 12.0);
      b.push_back(100 * kDeg);
    }
    CHECK_FALSE(convergence_time(make_trace(t, v, b), bands, 30.0).has_value());
  }
}

TEST_CASE("steady bias averages the final window") {
  std::vector<double> t, v, b;
  for (int i = 0; i <= 1000; ++i) {
    t.push_back(i * 0.1);
    v.push_back(i * 0.1 < 50 ? 0.0 : 10.3);
    b.push_back(-85 * kDeg);
  }
  const std::vector<ChannelBand> bands{{10.0, 0.5, 0.0}, {100 * kDeg, 10 * kDeg, kPi}};
  const auto bias = steady_bias(make_trace(t, v, b), bands, 40.0);
  CHECK(bias[0] == doctest::Approx(0.3));
  CHECK(bias[1] == doctest::Approx(-5 * kDeg));
}

TEST_CASE("perturbation overhead") {
  SUBCASE("zero amplitude gives zero") {
    auto p = table_params(Variant::adaptive);
    for (auto& c : p.channels) c.amplitude = 0.0;
    const std::vector<double> rs{10.0, 100 * kDeg};
    CHECK(perturbation_overhead(Plant{default_copter(true)}, CostGoal::range, rs, p, 40 * kPi) ==
          doctest::Approx(0.0).scale(1.0));
  }
  SUBCASE("quadratic map closed form") {
    QuadraticMap q;
    q.optimum = Eigen::Vector2d(10.0, 2.0);
    q.hessian = 2.0 * Eigen::Matrix2d::Identity();
    q.offset = 5.0;
    auto p = table_params(Variant::adaptive);
    p.channels[0].amplitude = 0.5;
    p.channels[1].amplitude = 0.1;
    const std::vector<double> rs{10.0, 2.0};
    // E[sin^2] = 1/2: mean cost rise (a_v^2 + a_b^2) / 2 with H = 2I.
    const double oracle = 100.0 * (0.25 + 0.01) / 2.0 / 5.0;
    CHECK(perturbation_overhead(Plant{q}, CostGoal::range, rs, p, 40 * kPi) == doctest::Approx(oracle).epsilon(0.05));
  }
  SUBCASE("copter plant, range, box: small positive overhead") {
    const Plant plant{default_copter(true)};
    const auto rs = plant_optimum(plant, CostGoal::range);
    const double o = perturbation_overhead(plant, CostGoal::range, rs, table_params(Variant::adaptive), 40 * kPi);
    CHECK(o > 0.0);
    CHECK(o < 10.0);
  }
}

TEST_CASE("max_abs_after ignores the settling window") {
  const std::vector<double> t{0, 1, 2, 3, 4};
  const std::vector<double> x{9, -8, 0.5, -0.7, 0.2};
  CHECK(max_abs_after(t, x, 2.0) == 0.7);
  CHECK(max_abs_after(t, x, 0.0) == 9.0);
}
