#include "esc/esc_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace esc {

std::string to_string(Variant v) { return v == Variant::standard ? "standard" : "adaptive"; }

Variant variant_from_string(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "adaptive") return Variant::adaptive;
  throw std::invalid_argument("unknown variant '" + s + "' (expected standard|adaptive)");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool positive(double x) { return x > 0.0 && std::isfinite(x); }

}  // namespace

void EscParams::validate() const {
  require(!channels.empty(), "esc.channels: at least one channel required");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto& c = channels[i];
    const std::string at = "esc.channels[" + std::to_string(i) + "].";
    require(c.amplitude >= 0.0 && std::isfinite(c.amplitude), at + "amplitude must be >= 0");
    require(positive(c.frequency), at + "frequency must be > 0");
    require(positive(c.highpass_cutoff), at + "highpass_cutoff must be > 0");
    require(positive(c.lowpass_cutoff), at + "lowpass_cutoff must be > 0");
    require(c.gain >= 0.0 && std::isfinite(c.gain), at + "gain must be >= 0");
    require(positive(c.epsilon), at + "epsilon must be > 0");
    if (variant == Variant::adaptive) require(positive(c.adapter_cutoff), at + "adapter_cutoff must be > 0");
    for (std::size_t j = 0; j < i; ++j) {
      require(channels[j].frequency != c.frequency,
              "esc.channels: perturbation frequencies must be distinct");
    }
  }
}

double EscParams::slowest_period() const {
  double w = channels.front().frequency;
  for (const auto& c : channels) w = std::min(w, c.frequency);
  return 2.0 * std::numbers::pi / w;
}

ChannelState::ChannelState(const ChannelParams& p)
    : hp(FilterKind::highpass, p.highpass_cutoff), lp(FilterKind::lowpass, p.lowpass_cutoff) {}

EscParams scaled_params(double omega, double delta, std::span<const PrimedChannel> primed,
                        Variant variant) {
  require(positive(omega), "scaled_params: omega must be > 0");
  require(positive(delta), "scaled_params: delta must be > 0");
  EscParams out;
  out.variant = variant;
  for (const auto& p : primed) {
    require(positive(p.frequency) && positive(p.highpass_cutoff) && positive(p.lowpass_cutoff) &&
                positive(p.gain) && positive(p.adapter_cutoff),
            "scaled_params: primed constants must be > 0");
    const double slow = omega * delta;
    out.channels.push_back(ChannelParams{
        .amplitude = p.amplitude,
        .frequency = omega * p.frequency,
        .highpass_cutoff = slow * p.highpass_cutoff,
        .lowpass_cutoff = slow * p.lowpass_cutoff,
        .gain = slow * p.gain,
        .adapter_cutoff = slow * p.adapter_cutoff,
        .epsilon = p.epsilon,
    });
  }
  return out;
}

AdapterOutput adapter_step(double m, double q, double gamma, double epsilon, double dt) {
  require(m >= 0.0, "adapter_step: m must be >= 0");
  require(positive(gamma) && positive(epsilon) && positive(dt),
          "adapter_step: gamma, epsilon and dt must be > 0");
  const double m_next = m + zoh_gain(gamma, dt) * (q * q - m);
  return {m_next, q / std::sqrt(m_next + epsilon)};
}

void channel_step(const ChannelParams& params, ChannelState& state, double y, double t, double dt,
                  Variant variant, bool hold) {
  if (!std::isfinite(y)) throw std::invalid_argument("channel_step: non-finite cost sample");
  const double hp_out = state.hp.step(y, dt);
  state.xi = hp_out * std::sin(params.frequency * t);
  const double q = state.lp.step(state.xi, dt);

  if (hold) {
    state.warmup_q2_sum += q * q;
    ++state.warmup_samples;
    state.drive = 0.0;
    return;
  }

  if (variant == Variant::adaptive) {
    if (!state.adapter_initialized) {
      state.m = state.warmup_samples > 0 ? state.warmup_q2_sum / double(state.warmup_samples) : q * q;
      state.adapter_initialized = true;
    }
    const auto out = adapter_step(state.m, q, params.adapter_cutoff, params.epsilon, dt);
    state.m = out.m_next;
    state.drive = out.g;
  } else {
    state.drive = q;
  }
  state.r_hat -= params.gain * state.drive * dt;
}

EscState make_state(const EscParams& params, std::span<const double> r_hat0) {
  params.validate();
  require(r_hat0.size() == params.channels.size(), "make_state: initial reference size mismatch");
  EscState s;
  s.channels.reserve(params.channels.size());
  for (std::size_t i = 0; i < params.channels.size(); ++i) {
    s.channels.emplace_back(params.channels[i]);
    s.channels.back().r_hat = r_hat0[i];
  }
  s.hold_until = params.slowest_period();
  return s;
}

void esc_prime(const EscParams& params, EscState& state, double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("esc_prime: non-finite cost sample");
  for (std::size_t i = 0; i < params.channels.size(); ++i) {
    auto& ch = state.channels[i];
    const double hp_out = ch.hp.prime(y);
    ch.xi = hp_out * std::sin(params.channels[i].frequency * state.t);
    const double q = ch.lp.prime(ch.xi);
    ch.warmup_q2_sum += q * q;
    ++ch.warmup_samples;
  }
}

std::vector<double> references(const EscParams& params, const EscState& state) {
  std::vector<double> r(params.channels.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto& c = params.channels[i];
    r[i] = state.channels[i].r_hat + sinusoid(c.amplitude, c.frequency, state.t);
  }
  return r;
}

std::vector<double> esc_step(const EscParams& params, EscState& state, double y, double dt) {
  if (state.channels.size() != params.channels.size()) {
    throw std::invalid_argument("esc_step: state/params channel count mismatch");
  }
  state.t += dt;
  const bool hold = state.t < state.hold_until;
  for (std::size_t i = 0; i < params.channels.size(); ++i) {
    channel_step(params.channels[i], state.channels[i], y, state.t, dt, params.variant, hold);
  }
  return references(params, state);
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

std::vector<std::string> lint_params(const EscParams& params, double plant_bandwidth) {
  std::vector<std::string> out;
  const auto& ch = params.channels;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const auto& c = ch[i];
    const std::string id = "channel " + std::to_string(i) + ": ";
    if (c.amplitude <= 0.0) out.push_back(id + "zero perturbation amplitude");
    if (plant_bandwidth > 0.0 && c.frequency >= plant_bandwidth) {
      out.push_back(id + "perturbation frequency " + fmt(c.frequency) +
                    " rad/s is not slow relative to plant bandwidth " + fmt(plant_bandwidth) + " rad/s");
    }
    if (c.highpass_cutoff < c.frequency) {
      out.push_back(id + "highpass below perturbation frequency (" + fmt(c.highpass_cutoff) + " < " +
                    fmt(c.frequency) + ")");
    }
    if (c.lowpass_cutoff > c.frequency) {
      out.push_back(id + "lowpass above perturbation frequency (" + fmt(c.lowpass_cutoff) + " > " +
                    fmt(c.frequency) + ")");
    }
  }
  for (std::size_t i = 0; i < ch.size(); ++i) {
    for (std::size_t j = i + 1; j < ch.size(); ++j) {
      const double lo = std::min(ch[i].frequency, ch[j].frequency);
      const double hi = std::max(ch[i].frequency, ch[j].frequency);
      const std::string pair = "channels " + std::to_string(i) + "/" + std::to_string(j) + ": ";
      if (hi == lo) {
        out.push_back(pair + "duplicate perturbation frequency " + fmt(lo) + " rad/s");
        continue;
      }
      // sin^n of the slow dither holds in-phase sin(k w t) terms only for odd k.
      const double ratio = hi / lo;
      const double n = std::round(ratio);
      if (std::abs(ratio - n) < 1e-9 * ratio && static_cast<long long>(n) % 2 == 1) {
        out.push_back(pair + "perturbation frequencies are odd integer multiples (x" + fmt(n) +
                      "), demodulation cross-talk");
      }
    }
  }
  return out;
}

double wrap_half_turn(double rad) {
  const double pi = std::numbers::pi;
  double w = std::remainder(rad, pi);  // [-pi/2, pi/2]
  if (w <= -pi / 2) w += pi;
  return w;
}

EscParams table_params(Variant variant, double epsilon) {
  const double deg = std::numbers::pi / 180.0;
  const bool adaptive = variant == Variant::adaptive;
  EscParams p;
  p.variant = variant;
  p.channels = {
      ChannelParams{.amplitude = 0.5,
                    .frequency = 1.0,
                    .highpass_cutoff = 1.0,
                    .lowpass_cutoff = 1.0,
                    .gain = adaptive ? 0.11 : 0.05,
                    .adapter_cutoff = 0.5,
                    .epsilon = epsilon},
      ChannelParams{.amplitude = 10.0 * deg,
                    .frequency = 0.5,
                    .highpass_cutoff = 0.5,
                    .lowpass_cutoff = 0.5,
                    .gain = 0.04,
                    .adapter_cutoff = 0.5,
                    .epsilon = epsilon},
  };
  return p;
}

ExtremumSeekingController::ExtremumSeekingController(EscParams params, std::span<const double> r_hat0)
    : params_(std::move(params)), state_(make_state(params_, r_hat0)), r_(esc::references(params_, state_)) {}

const std::vector<double>& ExtremumSeekingController::step(double y, double dt) {
  r_ = esc_step(params_, state_, y, dt);
  return r_;
}

}  // namespace esc
