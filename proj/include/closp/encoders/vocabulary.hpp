#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace closp {

// The 12 harmonised classes: nine land-cover classes followed by three
// crisis classes, in canonical order.
enum class Label : std::uint8_t {
  trees = 0,
  crops,
  shrub_and_scrub,
  water,
  grass,
  built,
  flooded_vegetation,
  bare,
  snow_and_ice,
  flooded_area,
  earthquake_damage,
  burned_area,
};

inline constexpr std::size_t kNumLabels = 12;

class LabelVocabulary {
 public:
  static constexpr std::array<std::string_view, kNumLabels> names{
      "trees",        "crops",       "shrub and scrub",
      "water",        "grass",       "built",
      "flooded vegetation", "bare",  "snow and ice",
      "flooded area", "earthquake damage", "burned area"};

  static std::string_view name(Label l) { return names[index(l)]; }
  static std::size_t index(Label l) { return static_cast<std::size_t>(l); }
  static Label at(std::size_t i);

  // Case-insensitive after trimming; throws VocabularyError.
  static Label lookup(std::string_view text);
  static std::optional<Label> find(std::string_view text);

  // FNV-1a over the canonical names, stored in checkpoints.
  static std::uint64_t hash();
};

// A set of labels as a 12-bit mask.
class LabelSet {
 public:
  constexpr LabelSet() = default;
  constexpr explicit LabelSet(std::uint16_t bits) : bits_(bits & kAll) {}
  LabelSet(std::initializer_list<Label> labels);

  static constexpr std::uint16_t kAll = (1u << kNumLabels) - 1;

  constexpr std::uint16_t bits() const { return bits_; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  bool contains(Label l) const { return bits_ >> LabelVocabulary::index(l) & 1u; }
  void insert(Label l) { bits_ |= std::uint16_t(1u << LabelVocabulary::index(l)); }
  void erase(Label l) { bits_ &= std::uint16_t(~(1u << LabelVocabulary::index(l))); }

  // Labels in canonical vocabulary order.
  std::vector<Label> labels() const;

  LabelSet operator&(LabelSet o) const { return LabelSet(bits_ & o.bits_); }
  LabelSet operator|(LabelSet o) const { return LabelSet(bits_ | o.bits_); }
  bool subset_of(LabelSet o) const { return (bits_ & ~o.bits_) == 0; }
  friend bool operator==(LabelSet a, LabelSet b) { return a.bits_ == b.bits_; }

  // Human-readable query string: sentence-cased names in alphabetical order
  // joined by ". ", e.g. "Flooded vegetation. Shrub and scrub".
  std::string render() const;

  // Accepts the ". "-joined rendering or a comma-separated list, in any
  // order and case. Throws VocabularyError on unknown labels and
  // ContractError when nothing is given.
  static LabelSet parse(std::string_view text);

 private:
  std::uint16_t bits_ = 0;
};

}  // namespace closp
