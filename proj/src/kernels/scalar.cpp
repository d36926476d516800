#include "lane.hpp"

namespace esc::kernels {

void bank_step_scalar(const BankCoeffs& c, BankState s, const BankInput& in) {
  for (std::size_t i = 0; i < s.q.size(); ++i) detail::lane_step(c, s, in, i);
}

}  // namespace esc::kernels
