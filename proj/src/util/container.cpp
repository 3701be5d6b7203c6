#include "closp/util/container.hpp"

#include <fstream>

#include "closp/error.hpp"
#include "closp/util/binary_io.hpp"

namespace closp {

namespace {

constexpr char kMagic[] = "CLSP";

ContainerHeader read_header(io::Reader& r, const std::string& file) {
  r.magic(std::string_view(kMagic, 4));
  ContainerHeader h;
  h.version = r.u32();
  if (h.version != ContainerHeader::kVersion) {
    throw FormatError(file + ": unsupported format version " + std::to_string(h.version));
  }
  const auto kind = r.u32();
  if (kind != 1 && kind != 2) throw FormatError(file + ": unknown container kind");
  h.kind = ContainerKind(kind);
  h.embed_dim = r.u32();
  h.image_side = r.u32();
  h.sh_degree = r.u32();
  h.vocab_hash = r.u64();
  return h;
}

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DataError("cannot read " + file.string());
  return is;
}

}  // namespace

std::string ContainerHeader::describe() const {
  return std::string(kind == ContainerKind::checkpoint ? "checkpoint" : "index") +
         " v" + std::to_string(version) + " D=" + std::to_string(embed_dim) +
         " H=" + std::to_string(image_side) + " L=" + std::to_string(sh_degree) +
         " vocab=" + std::to_string(vocab_hash);
}

void Container::add_real(std::string name, const nd::Tensor& t) {
  Block b;
  b.name = std::move(name);
  b.type = Block::Type::real;
  b.shape = t.shape();
  b.reals.assign(t.values().begin(), t.values().end());
  blocks.push_back(std::move(b));
}

void Container::add_ints(std::string name, std::vector<std::uint64_t> v) {
  Block b;
  b.name = std::move(name);
  b.type = Block::Type::integer;
  b.ints = std::move(v);
  blocks.push_back(std::move(b));
}

void Container::add_text(std::string name, std::string text) {
  Block b;
  b.name = std::move(name);
  b.type = Block::Type::text;
  b.text = std::move(text);
  blocks.push_back(std::move(b));
}

const Block* Container::find(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Block& Container::get(std::string_view name, Block::Type type) const {
  const auto* b = find(name);
  if (!b) throw FormatError("missing block '" + std::string(name) + "'");
  if (b->type != type) throw FormatError("block '" + std::string(name) + "' has the wrong type");
  return *b;
}

void Container::save(const std::filesystem::path& file) const {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + file.string());
  io::Writer w(os);
  w.bytes(kMagic, 4);
  w.u32(header.version);
  w.u32(std::uint32_t(header.kind));
  w.u32(header.embed_dim);
  w.u32(header.image_side);
  w.u32(header.sh_degree);
  w.u64(header.vocab_hash);
  w.u64(blocks.size());
  for (const auto& b : blocks) {
    w.str(b.name);
    w.u32(std::uint32_t(b.type));
    switch (b.type) {
      case Block::Type::real:
        w.u64(b.shape.size());
        for (auto d : b.shape) w.u64(d);
        w.f64s(b.reals);
        break;
      case Block::Type::integer:
        w.u64(b.ints.size());
        w.u64s(b.ints);
        break;
      case Block::Type::text:
        w.str(b.text);
        break;
    }
  }
}

ContainerHeader Container::peek(const std::filesystem::path& file) {
  auto is = open_in(file);
  io::Reader r(is, file.string());
  return read_header(r, file.string());
}

Container Container::load(const std::filesystem::path& file) {
  auto is = open_in(file);
  io::Reader r(is, file.string());
  Container c;
  c.header = read_header(r, file.string());
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    Block b;
    b.name = r.str(4096);
    const auto type = r.u32();
    switch (type) {
      case 1: {
        b.type = Block::Type::real;
        const auto rank = r.u64();
        if (rank == 0 || rank > 8) throw FormatError(file.string() + ": bad rank in " + b.name);
        std::size_t n = 1;
        for (std::uint64_t k = 0; k < rank; ++k) {
          b.shape.push_back(r.u64());
          n *= b.shape.back();
        }
        if (n > (std::size_t(1) << 32)) throw FormatError(file.string() + ": block too large");
        b.reals.resize(n);
        r.f64s(b.reals);
        break;
      }
      case 2: {
        b.type = Block::Type::integer;
        const auto n = r.u64();
        if (n > (std::uint64_t(1) << 32)) throw FormatError(file.string() + ": block too large");
        b.ints = r.u64s(n);
        break;
      }
      case 3:
        b.type = Block::Type::text;
        b.text = r.str();
        break;
      default:
        throw FormatError(file.string() + ": unknown block type in " + b.name);
    }
    c.blocks.push_back(std::move(b));
  }
  if (!r.at_end()) throw FormatError(file.string() + ": trailing bytes");
  return c;
}

}  // namespace closp
