#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "closp/ndmath/tensor.hpp"

namespace closp {

enum class ContainerKind : std::uint32_t { checkpoint = 1, index = 2 };

// Fixed header shared by checkpoints and indices.
struct ContainerHeader {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  ContainerKind kind = ContainerKind::checkpoint;
  std::uint32_t embed_dim = 0;
  std::uint32_t image_side = 0;
  std::uint32_t sh_degree = 0;
  std::uint64_t vocab_hash = 0;

  std::string describe() const;
  friend bool operator==(const ContainerHeader&, const ContainerHeader&) = default;
};

struct Block {
  enum class Type : std::uint32_t { real = 1, integer = 2, text = 3 };
  std::string name;
  Type type = Type::real;
  nd::Shape shape;                   // real
  std::vector<double> reals;         // real
  std::vector<std::uint64_t> ints;   // integer
  std::string text;                  // text
};

// "CLSP" magic, header, block count, then named typed blocks. Everything
// little-endian.
struct Container {
  ContainerHeader header;
  std::vector<Block> blocks;

  void add_real(std::string name, const nd::Tensor& t);
  void add_ints(std::string name, std::vector<std::uint64_t> v);
  void add_text(std::string name, std::string text);

  // Throws FormatError when missing or of another type.
  const Block& get(std::string_view name, Block::Type type) const;
  const Block* find(std::string_view name) const;

  void save(const std::filesystem::path& file) const;
  static Container load(const std::filesystem::path& file);
  // Reads only the header; used for compatibility diagnostics.
  static ContainerHeader peek(const std::filesystem::path& file);
};

}  // namespace closp
