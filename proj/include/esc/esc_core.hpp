#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "esc/signals.hpp"

namespace esc {

enum class Variant { standard, adaptive };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Default epsilon of the step-size adapter, in cost^2 units.
inline constexpr double kDefaultEpsilon = 1e-6;

/// Gains and frequencies for one perturb/demodulate/integrate channel.
/// Units follow the channel: m/s for speed, rad for sideslip.
struct ChannelParams {
  double amplitude = 0.0;        // a
  double frequency = 1.0;        // w, rad/s
  double highpass_cutoff = 1.0;  // w_h, rad/s
  double lowpass_cutoff = 1.0;   // w_l, rad/s
  double gain = 0.0;             // k
  double adapter_cutoff = 1.0;   // gamma, rad/s (adaptive only)
  double epsilon = kDefaultEpsilon;

  bool operator==(const ChannelParams&) const = default;
};

struct EscParams {
  std::vector<ChannelParams> channels;
  Variant variant = Variant::adaptive;

  /// Throws std::invalid_argument on non-positive frequencies/cutoffs/epsilon,
  /// negative amplitude or gain, or duplicate perturbation frequencies.
  void validate() const;
  /// Period of the slowest perturbation, 2*pi / min(w).
  [[nodiscard]] double slowest_period() const;

  bool operator==(const EscParams&) const = default;
};

struct ChannelState {
  explicit ChannelState(const ChannelParams& p);

  double r_hat = 0.0;
  FirstOrderFilter hp;  // eta lives in hp.internal_state()
  FirstOrderFilter lp;  // q
  double m = 0.0;
  bool adapter_initialized = false;

  // Diagnostics of the latest step.
  double xi = 0.0;
  double drive = 0.0;  // g for adaptive, q for standard

  // Warm-up accumulation of q^2 used to seed m.
  double warmup_q2_sum = 0.0;
  std::size_t warmup_samples = 0;

  [[nodiscard]] double q() const { return lp.output(); }
  [[nodiscard]] double eta() const { return hp.internal_state(); }
};

struct EscState {
  std::vector<ChannelState> channels;
  double t = 0.0;
  /// Integrators stay frozen until t reaches this time (adapter warm-up).
  double hold_until = 0.0;
};

/// Primed constants of the time-scale separated parameterization.
struct PrimedChannel {
  double amplitude = 0.0;
  double frequency = 1.0;
  double highpass_cutoff = 1.0;
  double lowpass_cutoff = 1.0;
  double gain = 1.0;
  double adapter_cutoff = 1.0;
  double epsilon = kDefaultEpsilon;
};

/// w_i = omega w_i', w_h = omega delta w_h', w_l = omega delta w_l',
/// k = omega delta k', gamma = omega delta gamma'.
EscParams scaled_params(double omega, double delta, std::span<const PrimedChannel> primed,
                        Variant variant);

struct AdapterOutput {
  double m_next;
  double g;
};

/// Second-moment tracker m' = gamma (q^2 - m) (ZOH) and normalized drive
/// g = q / sqrt(m + eps).
AdapterOutput adapter_step(double m, double q, double gamma, double epsilon, double dt);

/// One channel of the loop: highpass -> demodulate -> lowpass -> adapt ->
/// integrate.  `t` is the clock the sample `y` belongs to; the demodulation
/// signal is sin(w t).  With `hold` set the integrator is frozen and q^2 is
/// accumulated to seed m once the hold ends.
void channel_step(const ChannelParams& params, ChannelState& state, double y, double t, double dt,
                  Variant variant, bool hold = false);

EscState make_state(const EscParams& params, std::span<const double> r_hat0);

/// Warm-starts every channel's filters with the cost sample taken at the
/// state's current clock; the clock does not advance.
void esc_prime(const EscParams& params, EscState& state, double y);

/// Perturbed references r_i = r_hat_i + a_i sin(w_i t) at the state's clock.
std::vector<double> references(const EscParams& params, const EscState& state);

/// Advances the clock by dt, feeds the shared cost sample to every channel
/// and returns the new references.
std::vector<double> esc_step(const EscParams& params, EscState& state, double y, double dt);

/// Advisory checks of the tuning guidelines.  Never throws.
std::vector<std::string> lint_params(const EscParams& params, double plant_bandwidth);

/// Wraps an angle into (-pi/2, pi/2].  Used for reporting sideslip only.
double wrap_half_turn(double rad);

/// Table of gains used for the speed/sideslip controller in the flight
/// experiments (sideslip in radians).
EscParams table_params(Variant variant, double epsilon = kDefaultEpsilon);

/// Owning convenience wrapper around EscParams + EscState.
class ExtremumSeekingController {
 public:
  ExtremumSeekingController(EscParams params, std::span<const double> r_hat0);

  const std::vector<double>& step(double y, double dt);
  void prime(double y) { esc_prime(params_, state_, y); }

  [[nodiscard]] const EscParams& params() const { return params_; }
  [[nodiscard]] const EscState& state() const { return state_; }
  [[nodiscard]] const std::vector<double>& references() const { return r_; }

 private:
  EscParams params_;
  EscState state_;
  std::vector<double> r_;
};

}  // namespace esc
