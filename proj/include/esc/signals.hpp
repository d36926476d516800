#pragma once

#include <optional>

namespace esc {

enum class FilterKind { lowpass, highpass };

/// First-order filter with a zero-order-hold exact update.
///
/// The lowpass realizes x' = w_c (u - x) and returns x.  The highpass keeps
/// the same internal lowpass state eta and returns u - eta.  The Euler
/// equivalent of one step is x += w_c * dt * (u - x); the ZOH gain
/// 1 - exp(-w_c dt) agrees with it to O((w_c dt)^2).
///
/// The internal state is empty until the first sample, which initializes it
/// to that sample (warm start).
class FirstOrderFilter {
 public:
  FirstOrderFilter(FilterKind kind, double cutoff);

  double step(double u, double dt);
  /// Initializes the state to u without advancing time; returns the output.
  double prime(double u);

  [[nodiscard]] FilterKind kind() const { return kind_; }
  [[nodiscard]] double cutoff() const { return cutoff_; }
  [[nodiscard]] bool initialized() const { return state_.has_value(); }
  /// Internal lowpass state (eta for the highpass). Zero before first step.
  [[nodiscard]] double internal_state() const { return state_.value_or(0.0); }
  /// Last value returned by step(). Zero before first step.
  [[nodiscard]] double output() const { return output_; }

  void reset() {
    state_.reset();
    output_ = 0.0;
  }
  /// Force the internal state, e.g. to resume from a serialized snapshot.
  void set_internal_state(double x) { state_ = x; }

 private:
  FilterKind kind_;
  double cutoff_;
  std::optional<double> state_;
  double output_ = 0.0;
};

/// Exact ZOH blend factor 1 - exp(-cutoff * dt).
double zoh_gain(double cutoff, double dt);

double sinusoid(double amplitude, double frequency, double t);

}  // namespace esc
