#pragma once

#include <vector>

namespace closp {

// Real orthonormal spherical harmonics Y_l^m for l = 0..degree and
// m = -l..l, ordered by (l, m) so Y_l^m lands at index l*l + l + m.
// Colatitude is 90° - lat and azimuth is lon. Y_l^{-m} carries sin(mφ),
// Y_l^{+m} carries cos(mφ); no Condon-Shortley phase.
//
// Throws DomainError for lon outside [-180, 180] or lat outside [-90, 90].
std::vector<double> sh_encode(double lon_deg, double lat_deg, int degree);

inline constexpr int sh_feature_count(int degree) {
  return (degree + 1) * (degree + 1);
}

}  // namespace closp
