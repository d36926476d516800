#pragma once

// Lane-parallel ESC channel update.  A bank holds many independent channels
// in structure-of-arrays form and advances them one sample at a time; the
// scalar kernel is the reference and the SIMD kernels must reproduce it bit
// for bit (no FMA contraction, IEEE sqrt/div only).

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace esc::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

/// Best kernel supported by the running CPU.  ESC_FORCE_SCALAR=1 in the
/// environment pins the scalar kernel.
Isa detect_isa();
/// Kernels compiled into this binary (scalar always).
std::vector<Isa> available_isas();

/// Per-lane constants.  All spans have the bank's lane count.
struct BankCoeffs {
  std::span<const double> hp_gain;       // 1 - exp(-w_h dt)
  std::span<const double> lp_gain;       // 1 - exp(-w_l dt)
  std::span<const double> adapter_gain;  // 1 - exp(-gamma dt)
  std::span<const double> gain;          // k
  std::span<const double> epsilon;
  std::span<const double> hold_until;    // s
};

/// Per-lane mutable state.  `seeded` is 0.0/1.0.
struct BankState {
  std::span<double> eta;
  std::span<double> q;
  std::span<double> m;
  std::span<double> r_hat;
  std::span<double> drive;
  std::span<double> warm_sum;
  std::span<double> warm_count;
  std::span<double> seeded;
};

/// Per-sample inputs: cost sample y and demodulation value sin(w t) per lane.
struct BankInput {
  std::span<const double> y;
  std::span<const double> demod;
  double t;
  double dt;
  bool adaptive;
};

/// Warm start at t: eta = y, q = (y - eta) * demod, accumulate q^2.
void bank_prime(BankState s, const BankInput& in);

void bank_step_scalar(const BankCoeffs& c, BankState s, const BankInput& in);
#if defined(ESC_HAVE_AVX2)
void bank_step_avx2(const BankCoeffs& c, BankState s, const BankInput& in);
#endif
#if defined(ESC_HAVE_NEON)
void bank_step_neon(const BankCoeffs& c, BankState s, const BankInput& in);
#endif

/// Dispatches to the kernel for `isa`; throws if it is not compiled in.
void bank_step(Isa isa, const BankCoeffs& c, BankState s, const BankInput& in);

/// Owning storage for a bank.
class ChannelBank {
 public:
  explicit ChannelBank(std::size_t lanes);

  [[nodiscard]] std::size_t lanes() const { return lanes_; }
  BankCoeffs coeffs() const;
  BankState state();

  std::vector<double> hp_gain, lp_gain, adapter_gain, gain, epsilon, hold_until;
  std::vector<double> eta, q, m, r_hat, drive, warm_sum, warm_count, seeded;

 private:
  std::size_t lanes_;
};

}  // namespace esc::kernels
