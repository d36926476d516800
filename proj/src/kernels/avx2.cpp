#include <immintrin.h>

#include "lane.hpp"

namespace esc::kernels {

void bank_step_avx2(const BankCoeffs& c, BankState s, const BankInput& in) {
  const std::size_t n = s.q.size();
  const __m256d t = _mm256_set1_pd(in.t);
  const __m256d dt = _mm256_set1_pd(in.dt);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d y = _mm256_loadu_pd(&in.y[i]);
    const __m256d demod = _mm256_loadu_pd(&in.demod[i]);

    __m256d eta = _mm256_loadu_pd(&s.eta[i]);
    eta = _mm256_add_pd(eta, _mm256_mul_pd(_mm256_loadu_pd(&c.hp_gain[i]), _mm256_sub_pd(y, eta)));
    const __m256d xi = _mm256_mul_pd(_mm256_sub_pd(y, eta), demod);
    __m256d q = _mm256_loadu_pd(&s.q[i]);
    q = _mm256_add_pd(q, _mm256_mul_pd(_mm256_loadu_pd(&c.lp_gain[i]), _mm256_sub_pd(xi, q)));
    const __m256d q2 = _mm256_mul_pd(q, q);

    const __m256d hold = _mm256_cmp_pd(t, _mm256_loadu_pd(&c.hold_until[i]), _CMP_LT_OQ);
    const __m256d wsum = _mm256_loadu_pd(&s.warm_sum[i]);
    const __m256d wcnt = _mm256_loadu_pd(&s.warm_count[i]);
    _mm256_storeu_pd(&s.warm_sum[i], _mm256_blendv_pd(wsum, _mm256_add_pd(wsum, q2), hold));
    _mm256_storeu_pd(&s.warm_count[i], _mm256_blendv_pd(wcnt, _mm256_add_pd(wcnt, one), hold));

    __m256d drive = q;
    if (in.adaptive) {
      __m256d m = _mm256_loadu_pd(&s.m[i]);
      const __m256d seeded = _mm256_loadu_pd(&s.seeded[i]);
      const __m256d unseeded = _mm256_andnot_pd(hold, _mm256_cmp_pd(seeded, zero, _CMP_EQ_OQ));
      const __m256d has_warm = _mm256_cmp_pd(wcnt, zero, _CMP_GT_OQ);
      const __m256d seed = _mm256_blendv_pd(q2, _mm256_div_pd(wsum, wcnt), has_warm);
      m = _mm256_blendv_pd(m, seed, unseeded);
      _mm256_storeu_pd(&s.seeded[i], _mm256_blendv_pd(one, seeded, hold));
      const __m256d m_next =
          _mm256_add_pd(m, _mm256_mul_pd(_mm256_loadu_pd(&c.adapter_gain[i]), _mm256_sub_pd(q2, m)));
      _mm256_storeu_pd(&s.m[i], _mm256_blendv_pd(m_next, m, hold));
      drive = _mm256_div_pd(q, _mm256_sqrt_pd(_mm256_add_pd(m_next, _mm256_loadu_pd(&c.epsilon[i]))));
    }
    const __m256d r_hat = _mm256_loadu_pd(&s.r_hat[i]);
    const __m256d step = _mm256_mul_pd(_mm256_mul_pd(_mm256_loadu_pd(&c.gain[i]), drive), dt);
    _mm256_storeu_pd(&s.r_hat[i], _mm256_blendv_pd(_mm256_sub_pd(r_hat, step), r_hat, hold));
    _mm256_storeu_pd(&s.drive[i], _mm256_blendv_pd(drive, zero, hold));
    _mm256_storeu_pd(&s.eta[i], eta);
    _mm256_storeu_pd(&s.q[i], q);
  }
  for (; i < n; ++i) detail::lane_step(c, s, in, i);
}

}  // namespace esc::kernels
