#pragma once

#include <cmath>
#include <cstddef>

#include "esc/kernels.hpp"

namespace esc::kernels::detail {

// Reference update of one lane; mirrors esc::channel_step operation for
// operation so that every kernel can be compared bit for bit.
inline void lane_step(const BankCoeffs& c, BankState& s, const BankInput& in, std::size_t i) {
  s.eta[i] += c.hp_gain[i] * (in.y[i] - s.eta[i]);
  const double hp = in.y[i] - s.eta[i];
  const double xi = hp * in.demod[i];
  s.q[i] += c.lp_gain[i] * (xi - s.q[i]);
  const double q = s.q[i];

  if (in.t < c.hold_until[i]) {
    s.warm_sum[i] += q * q;
    s.warm_count[i] += 1.0;
    s.drive[i] = 0.0;
    return;
  }

  double drive = q;
  if (in.adaptive) {
    if (s.seeded[i] == 0.0) {
      s.m[i] = s.warm_count[i] > 0.0 ? s.warm_sum[i] / s.warm_count[i] : q * q;
      s.seeded[i] = 1.0;
    }
    s.m[i] = s.m[i] + c.adapter_gain[i] * (q * q - s.m[i]);
    drive = q / std::sqrt(s.m[i] + c.epsilon[i]);
  }
  s.drive[i] = drive;
  s.r_hat[i] -= c.gain[i] * drive * in.dt;
}

}  // namespace esc::kernels::detail
