#include "closp/evalsuite/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include "closp/error.hpp"

namespace closp {

double chi_square_sf(double x, double dof) {
  if (!(dof > 0.0)) throw DomainError("chi-square dof must be positive");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

ChiSquare chi_square_labels(std::span<const std::size_t, kNumLabels> a,
                            std::span<const std::size_t, kNumLabels> b) {
  double ta = 0.0, tb = 0.0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    ta += double(a[l]);
    tb += double(b[l]);
  }
  if (ta == 0.0 || tb == 0.0) throw ContractError("chi_square_labels: zero total");
  const double total = ta + tb;
  ChiSquare out;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const double col = double(a[l] + b[l]);
    if (col == 0.0) continue;
    const double ea = ta * col / total, eb = tb * col / total;
    const double da = double(a[l]) - ea, db = double(b[l]) - eb;
    out.statistic += da * da / ea + db * db / eb;
  }
  out.p_value = chi_square_sf(out.statistic, double(out.dof));
  return out;
}

}  // namespace closp
