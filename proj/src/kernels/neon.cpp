#include <arm_neon.h>

#include "lane.hpp"

namespace esc::kernels {

// Two lanes per float64x2_t.  Multiplies and adds stay separate (no vfma) to
// match the scalar reference.
void bank_step_neon(const BankCoeffs& c, BankState s, const BankInput& in) {
  const std::size_t n = s.q.size();
  const float64x2_t t = vdupq_n_f64(in.t);
  const float64x2_t dt = vdupq_n_f64(in.dt);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t one = vdupq_n_f64(1.0);

  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t y = vld1q_f64(&in.y[i]);
    const float64x2_t demod = vld1q_f64(&in.demod[i]);

    float64x2_t eta = vld1q_f64(&s.eta[i]);
    eta = vaddq_f64(eta, vmulq_f64(vld1q_f64(&c.hp_gain[i]), vsubq_f64(y, eta)));
    const float64x2_t xi = vmulq_f64(vsubq_f64(y, eta), demod);
    float64x2_t q = vld1q_f64(&s.q[i]);
    q = vaddq_f64(q, vmulq_f64(vld1q_f64(&c.lp_gain[i]), vsubq_f64(xi, q)));
    const float64x2_t q2 = vmulq_f64(q, q);

    const uint64x2_t hold = vcltq_f64(t, vld1q_f64(&c.hold_until[i]));
    const float64x2_t wsum = vld1q_f64(&s.warm_sum[i]);
    const float64x2_t wcnt = vld1q_f64(&s.warm_count[i]);
    vst1q_f64(&s.warm_sum[i], vbslq_f64(hold, vaddq_f64(wsum, q2), wsum));
    vst1q_f64(&s.warm_count[i], vbslq_f64(hold, vaddq_f64(wcnt, one), wcnt));

    float64x2_t drive = q;
    if (in.adaptive) {
      float64x2_t m = vld1q_f64(&s.m[i]);
      const float64x2_t seeded = vld1q_f64(&s.seeded[i]);
      const uint64x2_t unseeded = vbicq_u64(vceqq_f64(seeded, zero), hold);
      const uint64x2_t has_warm = vcgtq_f64(wcnt, zero);
      const float64x2_t seed = vbslq_f64(has_warm, vdivq_f64(wsum, wcnt), q2);
      m = vbslq_f64(unseeded, seed, m);
      vst1q_f64(&s.seeded[i], vbslq_f64(hold, seeded, one));
      const float64x2_t m_next = vaddq_f64(m, vmulq_f64(vld1q_f64(&c.adapter_gain[i]), vsubq_f64(q2, m)));
      vst1q_f64(&s.m[i], vbslq_f64(hold, m, m_next));
      drive = vdivq_f64(q, vsqrtq_f64(vaddq_f64(m_next, vld1q_f64(&c.epsilon[i]))));
    }
    const float64x2_t r_hat = vld1q_f64(&s.r_hat[i]);
    const float64x2_t step = vmulq_f64(vmulq_f64(vld1q_f64(&c.gain[i]), drive), dt);
    vst1q_f64(&s.r_hat[i], vbslq_f64(hold, r_hat, vsubq_f64(r_hat, step)));
    vst1q_f64(&s.drive[i], vbslq_f64(hold, zero, drive));
    vst1q_f64(&s.eta[i], eta);
    vst1q_f64(&s.q[i], q);
  }
  for (; i < n; ++i) detail::lane_step(c, s, in, i);
}

}  // namespace esc::kernels
