#include "closp/corpus/clc.hpp"

#include <array>
#include <cctype>
#include <string>

#include "closp/error.hpp"

namespace closp {

namespace {

using enum Label;

constexpr std::array<ClcRow, 44> kTable{{
    {"Continuous urban fabric", built},
    {"Discontinuous urban fabric", built},
    {"Industrial or commercial units", built},
    {"Road and rail networks and associated land", built},
    {"Port areas", built},
    {"Airports", built},
    {"Mineral extraction sites", bare},
    {"Dump sites", bare},
    {"Construction sites", bare},
    {"Green urban areas", grass},
    {"Sport and leisure facilities", grass},
    {"Non-irrigated arable land", crops},
    {"Permanently irrigated land", crops},
    {"Rice fields", flooded_vegetation},
    {"Vineyards", crops},
    {"Fruit trees and berry plantations", crops},
    {"Olive groves", crops},
    {"Pastures", grass},
    {"Annual crops associated with permanent crops", crops},
    {"Complex cultivation patterns", crops},
    {"Land principally occupied by agriculture, with significant areas of natural vegetation", crops},
    {"Agro-forestry areas", trees},
    {"Broad-leaved forest", trees},
    {"Coniferous forest", trees},
    {"Mixed forest", trees},
    {"Natural grassland", grass},
    {"Moors and heathland", shrub_and_scrub},
    {"Sclerophyllous vegetation", shrub_and_scrub},
    {"Transitional woodland/shrub", shrub_and_scrub},
    {"Beaches, dunes, sands", bare},
    {"Bare rock", bare},
    {"Sparsely vegetated areas", bare},
    {"Burnt areas", burned_area},
    {"Glaciers and perpetual snow", snow_and_ice},
    {"Inland marshes", flooded_vegetation},
    {"Peatbogs", flooded_vegetation},
    {"Salt marshes", flooded_vegetation},
    {"Salines", bare},
    {"Intertidal flats", bare},
    {"Water courses", water},
    {"Water bodies", water},
    {"Coastal lagoons", water},
    {"Estuaries", water},
    {"Sea and ocean", water},
}};

std::string normalise(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out;
  if (b == std::string_view::npos) return out;
  for (char c : s.substr(b, e - b + 1)) {
    out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::span<const ClcRow> clc_table() { return kTable; }

Label map_clc_to_dw(std::string_view clc_class) {
  const auto key = normalise(clc_class);
  for (const auto& row : kTable) {
    if (normalise(row.clc_class) == key) return row.label;
  }
  throw VocabularyError("unknown CLC class '" + std::string(clc_class) + "'");
}

}  // namespace closp
