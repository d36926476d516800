#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "esc/signals.hpp"

using namespace esc;

namespace {

// Least-squares fit of x(t) = A sin(t + phi) over the samples.
std::pair<double, double> fit_unit_sine(const std::vector<double>& t, const std::vector<double>& x) {
  double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = std::sin(t[i]), c = std::cos(t[i]);
    ss += s * s;
    cc += c * c;
    sc += s * c;
    xs += x[i] * s;
    xc += x[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (xs * cc - xc * sc) / det;  // sin coefficient
  const double b = (xc * ss - xs * sc) / det;  // cos coefficient
  return {std::hypot(a, b), std::atan2(b, a)};
}

}  // namespace

TEST_CASE("sinusoid examples") {
  CHECK(sinusoid(0.5, 1.0, 0.0) == 0.0);
  CHECK(sinusoid(0.5, 1.0, std::numbers::pi / 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sinusoid(10.0, 0.5, std::numbers::pi) == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("lowpass and highpass DC behaviour") {
  FirstOrderFilter lp(FilterKind::lowpass, 1.0);
  FirstOrderFilter hp(FilterKind::highpass, 1.0);
  lp.prime(0.0);
  hp.prime(0.0);
  double yl = 0, yh = 0;
  for (int i = 0; i < 1000; ++i) {
    yl = lp.step(5.0, 0.02);
    yh = hp.step(5.0, 0.02);
  }
  CHECK(std::abs(yl - 5.0) < 1e-3);
  CHECK(std::abs(yh) < 1e-3);
}

TEST_CASE("step response is monotone after the first sample") {
  for (double c : {0.1, 1.0, 10.0}) {
    FirstOrderFilter lp(FilterKind::lowpass, c);
    FirstOrderFilter hp(FilterKind::highpass, c);
    lp.prime(-1.0);
    hp.prime(-1.0);
    double prev_l = lp.step(3.0, 0.02), prev_h = hp.step(3.0, 0.02);
    for (int i = 0; i < 2000; ++i) {
      const double l = lp.step(3.0, 0.02), h = hp.step(3.0, 0.02);
      CHECK(l >= prev_l);
      CHECK(l <= 3.0);
      CHECK(std::abs(h) <= std::abs(prev_h));
      prev_l = l;
      prev_h = h;
    }
  }
}

TEST_CASE("lowpass at its cutoff: gain 1/sqrt2, phase -45 deg") {
  FirstOrderFilter lp(FilterKind::lowpass, 1.0);
  const double dt = 0.02;
  std::vector<double> ts, xs;
  lp.prime(0.0);
  for (int i = 1; i <= 5000; ++i) {
    const double t = i * dt;
    const double y = lp.step(std::sin(t), dt);
    if (t > 40.0) {
      ts.push_back(t);
      xs.push_back(y);
    }
  }
  const auto [amp, phase] = fit_unit_sine(ts, xs);
  // H(jw) = 1 / (1 + jw/wc) at w = wc.
  const double amp_oracle = 1.0 / std::abs(std::complex<double>(1.0, 1.0));
  const double phase_oracle = -std::arg(std::complex<double>(1.0, 1.0));
  CHECK(amp == doctest::Approx(amp_oracle).epsilon(0.02));
  CHECK(std::abs(phase - phase_oracle) < 2.0 * std::numbers::pi / 180.0);
}

TEST_CASE("lowpass error decays at the cutoff rate") {
  for (double c : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    FirstOrderFilter lp(FilterKind::lowpass, c);
    const double dt = std::min(0.02, 0.1 / c);
    lp.prime(0.0);
    const double tau = 1.0 / c;
    std::vector<double> t, le;
    for (int i = 1; i * dt <= 4.0 * tau + dt; ++i) {
      const double y = lp.step(1.0, dt);
      const double ti = i * dt;
      if (ti >= tau && ti <= 4.0 * tau) {
        t.push_back(ti);
        le.push_back(std::log(1.0 - y));
      }
    }
    double mt = 0, ml = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      mt += t[i];
      ml += le[i];
    }
    mt /= t.size();
    ml /= t.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      num += (t[i] - mt) * (le[i] - ml);
      den += (t[i] - mt) * (t[i] - mt);
    }
    CHECK(-num / den == doctest::Approx(c).epsilon(0.05));
  }
}

TEST_CASE("highpass plus lowpass reconstruct the input") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  FirstOrderFilter lp(FilterKind::lowpass, 0.7);
  FirstOrderFilter hp(FilterKind::highpass, 0.7);
  for (int i = 0; i < 5000; ++i) {
    const double u = n(rng) + std::sin(0.01 * i);
    const double l = lp.step(u, 0.02);
    const double h = hp.step(u, 0.02);
    CHECK(std::abs(l + h - u) < 1e-9);
    CHECK(hp.internal_state() == lp.output());
  }
}

TEST_CASE("ZOH update agrees with Euler to second order") {
  for (double cdt : {1e-4, 1e-3, 1e-2, 1e-1}) {
    const double zoh = zoh_gain(cdt, 1.0);
    CHECK(std::abs(zoh - cdt) <= 0.5 * cdt * cdt * 1.0001);
  }
}

TEST_CASE("filter steps are deterministic") {
  FirstOrderFilter a(FilterKind::highpass, 1.3), b(FilterKind::highpass, 1.3);
  for (int i = 0; i < 100; ++i) {
    const double u = std::cos(0.37 * i) * 11.0;
    CHECK(a.step(u, 0.013) == b.step(u, 0.013));
  }
}

TEST_CASE("first sample warm-starts the state") {
  FirstOrderFilter lp(FilterKind::lowpass, 1.0);
  FirstOrderFilter hp(FilterKind::highpass, 1.0);
  CHECK(lp.step(7.0, 0.02) == 7.0);
  CHECK(hp.step(7.0, 0.02) == 0.0);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(FirstOrderFilter(FilterKind::lowpass, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(FirstOrderFilter(FilterKind::lowpass, -1.0), std::invalid_argument);
  FirstOrderFilter f(FilterKind::lowpass, 1.0);
  CHECK_THROWS_AS(f.step(NAN, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(f.step(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(f.step(1.0, 1.0), std::invalid_argument);
}
