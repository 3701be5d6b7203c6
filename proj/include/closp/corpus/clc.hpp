#pragma once

#include <span>
#include <string_view>

#include "closp/encoders/vocabulary.hpp"

namespace closp {

struct ClcRow {
  std::string_view clc_class;
  Label label;
};

// The 44-row CORINE Land Cover harmonisation table.
std::span<const ClcRow> clc_table();

// Case-insensitive after trimming; throws VocabularyError.
Label map_clc_to_dw(std::string_view clc_class);

}  // namespace closp
