#include "closp/encoders/vocabulary.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

#include "closp/error.hpp"

namespace closp {

namespace {

std::string normalise(std::string_view text) {
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(" \t\r\n");
  std::string out(text.substr(b, e - b + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

Label LabelVocabulary::at(std::size_t i) {
  if (i >= kNumLabels) {
    throw VocabularyError("label index " + std::to_string(i) + " out of range");
  }
  return static_cast<Label>(i);
}

std::optional<Label> LabelVocabulary::find(std::string_view text) {
  const auto key = normalise(text);
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (names[i] == key) return static_cast<Label>(i);
  }
  return std::nullopt;
}

Label LabelVocabulary::lookup(std::string_view text) {
  if (auto l = find(text)) return *l;
  throw VocabularyError("unknown label '" + std::string(text) + "'");
}

std::uint64_t LabelVocabulary::hash() {
  std::uint64_t h = 1469598103934665603ull;
  for (auto n : names) {
    for (char c : n) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

LabelSet::LabelSet(std::initializer_list<Label> labels) {
  for (auto l : labels) insert(l);
}

std::size_t LabelSet::size() const { return std::popcount(bits_); }

std::vector<Label> LabelSet::labels() const {
  std::vector<Label> out;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (bits_ >> i & 1u) out.push_back(static_cast<Label>(i));
  }
  return out;
}

std::string LabelSet::render() const {
  std::vector<std::string> parts;
  for (auto l : labels()) parts.emplace_back(LabelVocabulary::name(l));
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ". ";
    std::string p = parts[i];
    p[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(p[0])));
    out += p;
  }
  return out;
}

LabelSet LabelSet::parse(std::string_view text) {
  LabelSet out;
  std::size_t start = 0;
  auto flush = [&](std::string_view piece) {
    auto key = normalise(piece);
    if (!key.empty() && key.back() == '.') key.pop_back();
    key = normalise(key);
    if (!key.empty()) out.insert(LabelVocabulary::lookup(key));
  };
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',' || text[i] == '.') {
      flush(text.substr(start, i - start));
      start = i + 1;
    }
  }
  if (out.empty()) throw ContractError("empty label set");
  return out;
}

}  // namespace closp
