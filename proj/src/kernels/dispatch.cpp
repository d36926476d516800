#include <cstdlib>
#include <stdexcept>
#include <string>

#include "esc/kernels.hpp"

namespace esc::kernels {

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    case Isa::scalar: break;
  }
  return "scalar";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::scalar};
#if defined(ESC_HAVE_AVX2)
  if (__builtin_cpu_supports("avx2")) out.push_back(Isa::avx2);
#endif
#if defined(ESC_HAVE_NEON)
  out.push_back(Isa::neon);
#endif
  return out;
}

Isa detect_isa() {
  if (const char* force = std::getenv("ESC_FORCE_SCALAR"); force && std::string(force) == "1") {
    return Isa::scalar;
  }
  return available_isas().back();
}

void bank_prime(BankState s, const BankInput& in) {
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    s.eta[i] = in.y[i];
    const double xi = 0.0 * in.demod[i];
    s.q[i] = xi;
    s.warm_sum[i] += xi * xi;
    s.warm_count[i] += 1.0;
  }
}

void bank_step(Isa isa, const BankCoeffs& c, BankState s, const BankInput& in) {
  switch (isa) {
    case Isa::scalar: bank_step_scalar(c, s, in); return;
    case Isa::avx2:
#if defined(ESC_HAVE_AVX2)
      bank_step_avx2(c, s, in);
      return;
#else
      break;
#endif
    case Isa::neon:
#if defined(ESC_HAVE_NEON)
      bank_step_neon(c, s, in);
      return;
#else
      break;
#endif
  }
  throw std::runtime_error("bank_step: kernel '" + std::string(to_string(isa)) + "' not compiled in");
}

ChannelBank::ChannelBank(std::size_t lanes)
    : hp_gain(lanes), lp_gain(lanes), adapter_gain(lanes, 1.0), gain(lanes), epsilon(lanes, 1.0),
      hold_until(lanes), eta(lanes), q(lanes), m(lanes), r_hat(lanes), drive(lanes), warm_sum(lanes),
      warm_count(lanes), seeded(lanes), lanes_(lanes) {}

BankCoeffs ChannelBank::coeffs() const {
  return {hp_gain, lp_gain, adapter_gain, gain, epsilon, hold_until};
}

BankState ChannelBank::state() { return {eta, q, m, r_hat, drive, warm_sum, warm_count, seeded}; }

}  // namespace esc::kernels
