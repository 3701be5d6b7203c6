#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "closp/encoders/vocabulary.hpp"

namespace closp {

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t dof = kNumLabels - 1;
};

// Two-sample homogeneity test on per-label count vectors (2 x 12 table),
// always with 11 degrees of freedom. Labels absent from both sides
// contribute nothing.
ChiSquare chi_square_labels(std::span<const std::size_t, kNumLabels> counts_a,
                            std::span<const std::size_t, kNumLabels> counts_b);

// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double dof);

}  // namespace closp
