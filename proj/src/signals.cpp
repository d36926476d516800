#include "esc/signals.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace esc {

FirstOrderFilter::FirstOrderFilter(FilterKind kind, double cutoff) : kind_(kind), cutoff_(cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw std::invalid_argument("FirstOrderFilter: cutoff must be positive and finite");
  }
}

double zoh_gain(double cutoff, double dt) { return -std::expm1(-cutoff * dt); }

double FirstOrderFilter::step(double u, double dt) {
  if (!std::isfinite(u)) throw std::invalid_argument("filter_step: non-finite input");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("filter_step: dt must be > 0");
  if (cutoff_ * dt >= 1.0) {
    throw std::invalid_argument("filter_step: cutoff*dt must be < 1 (got " +
                                std::to_string(cutoff_ * dt) + ")");
  }
  if (!state_) {
    state_ = u;
  } else {
    *state_ += zoh_gain(cutoff_, dt) * (u - *state_);
  }
  output_ = kind_ == FilterKind::lowpass ? *state_ : u - *state_;
  return output_;
}

double FirstOrderFilter::prime(double u) {
  if (!std::isfinite(u)) throw std::invalid_argument("filter_prime: non-finite input");
  state_ = u;
  output_ = kind_ == FilterKind::lowpass ? u : 0.0;
  return output_;
}

double sinusoid(double amplitude, double frequency, double t) {
  return amplitude * std::sin(frequency * t);
}

}  // namespace esc
