#include "closp/encoders/spherical_harmonics.hpp"

#include <cmath>
#include <numbers>

#include "closp/error.hpp"

namespace closp {

std::vector<double> sh_encode(double lon_deg, double lat_deg, int degree) {
  if (!(lon_deg >= -180.0 && lon_deg <= 180.0)) {
    throw DomainError("longitude out of [-180, 180]: " + std::to_string(lon_deg));
  }
  if (!(lat_deg >= -90.0 && lat_deg <= 90.0)) {
    throw DomainError("latitude out of [-90, 90]: " + std::to_string(lat_deg));
  }
  if (degree < 0 || degree > 30) {
    throw DomainError("spherical-harmonic degree must lie in [0, 30]");
  }
  constexpr double pi = std::numbers::pi;
  const double theta = (90.0 - lat_deg) * pi / 180.0;
  const double phi = lon_deg * pi / 180.0;
  const double x = std::cos(theta);
  const double s = std::sin(theta);
  const int n = degree + 1;

  // Associated Legendre P_l^m(x) without the Condon-Shortley phase, by the
  // standard three-term recurrence in l at fixed m.
  std::vector<double> p(std::size_t(n * n), 0.0);
  auto P = [&](int l, int m) -> double& { return p[std::size_t(l * n + m)]; };
  double pmm = 1.0;
  for (int m = 0; m <= degree; ++m) {
    if (m > 0) pmm *= (2.0 * m - 1.0) * s;
    P(m, m) = pmm;
    if (m + 1 <= degree) P(m + 1, m) = x * (2.0 * m + 1.0) * pmm;
    for (int l = m + 2; l <= degree; ++l) {
      P(l, m) = ((2.0 * l - 1.0) * x * P(l - 1, m) - (l + m - 1.0) * P(l - 2, m)) /
                (l - m);
    }
  }

  std::vector<double> out(std::size_t(n * n));
  for (int l = 0; l <= degree; ++l) {
    for (int m = 0; m <= l; ++m) {
      // K_l^m = sqrt((2l+1)/(4pi) * (l-m)!/(l+m)!)
      double ratio = 1.0;
      for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
      const double k_lm = std::sqrt((2.0 * l + 1.0) / (4.0 * pi) * ratio);
      const double base = k_lm * P(l, m);
      const auto centre = std::size_t(l * l + l);
      if (m == 0) {
        out[centre] = base;
      } else {
        out[centre + std::size_t(m)] = std::numbers::sqrt2 * base * std::cos(m * phi);
        out[centre - std::size_t(m)] = std::numbers::sqrt2 * base * std::sin(m * phi);
      }
    }
  }
  return out;
}

}  // namespace closp
