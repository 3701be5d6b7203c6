#include "closp/corpus/corpus_io.hpp"

#include <fstream>
#include <map>

#include "closp/error.hpp"
#include "closp/util/binary_io.hpp"
#include "json.hpp"

namespace closp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kImageMagic[] = "CLIM";
constexpr std::uint32_t kImageVersion = 1;

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  return is;
}

void write_images(const fs::path& file, Modality m, std::span<const CorpusItem> corpus,
                  std::size_t side) {
  auto os = open_out(file);
  io::Writer w(os);
  std::uint64_t count = 0;
  for (const auto& it : corpus) count += it.modality == m;
  w.bytes(kImageMagic, 4);
  w.u32(kImageVersion);
  w.u64(count);
  w.u32(std::uint32_t(channel_count(m)));
  w.u32(std::uint32_t(side));
  for (const auto& it : corpus) {
    if (it.modality != m) continue;
    w.u64(it.id);
    w.f64s(it.image.values());
  }
}

std::map<std::uint64_t, nd::Tensor> read_images(const fs::path& file, Modality m) {
  auto is = open_in(file);
  io::Reader r(is, file.string());
  r.magic(kImageMagic);
  if (auto v = r.u32(); v != kImageVersion) {
    throw FormatError(file.string() + ": unsupported version " + std::to_string(v));
  }
  const auto count = r.u64();
  const auto c = r.u32();
  const auto h = r.u32();
  if (c != channel_count(m)) {
    throw FormatError(file.string() + ": channel count " + std::to_string(c) +
                      " does not match modality");
  }
  std::map<std::uint64_t, nd::Tensor> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto id = r.u64();
    std::vector<double> px(std::size_t(c) * h * h);
    r.f64s(px);
    out.emplace(id, nd::Tensor::from({c, h, h}, std::move(px)));
  }
  if (!r.at_end()) throw FormatError(file.string() + ": trailing bytes");
  return out;
}

}  // namespace

void write_corpus(const fs::path& dir, std::span<const CorpusItem> corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::size_t side = 0;
  for (const auto& it : corpus) {
    it.validate();
    if (side == 0) side = it.image.dim(1);
    if (it.image.dim(1) != side) throw DataError("corpus mixes image sizes");
  }

  auto meta = open_out(dir / "metadata.jsonl");
  for (const auto& it : corpus) {
    json labels = json::array();
    for (auto l : it.labels.labels()) labels.push_back(LabelVocabulary::name(l));
    json row = {{"id", it.id},
                {"modality", modality_name(it.modality)},
                {"labels", labels},
                {"lon", it.lon},
                {"lat", it.lat},
                {"crisis", it.crisis ? json(crisis_name(*it.crisis)) : json(nullptr)},
                {"source", it.source}};
    meta << row.dump() << '\n';
  }
  if (!meta) throw DataError("write failed: metadata.jsonl");
  write_images(dir / "sar.bin", Modality::sar, corpus, side);
  write_images(dir / "msi.bin", Modality::msi, corpus, side);
}

Corpus read_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::map<std::uint64_t, nd::Tensor> images[2] = {
      read_images(dir / "sar.bin", Modality::sar),
      read_images(dir / "msi.bin", Modality::msi)};

  auto meta = open_in(dir / "metadata.jsonl");
  Corpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = "metadata.jsonl:" + std::to_string(line_no) + ": ";
    try {
      auto row = json::parse(line);
      CorpusItem it;
      it.id = row.at("id").get<std::uint64_t>();
      it.modality = parse_modality(row.at("modality").get<std::string>());
      for (const auto& l : row.at("labels")) it.labels.insert(LabelVocabulary::lookup(l.get<std::string>()));
      it.lon = row.at("lon").get<double>();
      it.lat = row.at("lat").get<double>();
      if (!row.at("crisis").is_null()) it.crisis = parse_crisis(row.at("crisis").get<std::string>());
      it.source = row.value("source", "");
      auto& pool = images[it.modality == Modality::sar ? 0 : 1];
      auto found = pool.find(it.id);
      if (found == pool.end()) throw DataError("no image for id " + std::to_string(it.id));
      it.image = found->second;
      pool.erase(found);
      it.validate();
      out.push_back(std::move(it));
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const Error& e) {
      throw DataError(where + e.what());
    }
  }
  if (!images[0].empty() || !images[1].empty()) {
    throw DataError("image files hold items missing from metadata");
  }
  return out;
}

void write_split(const fs::path& file, const SplitResult& split) {
  json j = {{"train_ids", split.train_ids},
            {"retrieval_ids", split.retrieval_ids},
            {"chi2_stat", split.chi2_stat},
            {"p_value", split.p_value}};
  auto os = open_out(file);
  os << j.dump(1) << '\n';
}

SplitResult read_split(const fs::path& file) {
  auto is = open_in(file);
  try {
    auto j = json::parse(is);
    SplitResult s;
    s.train_ids = j.at("train_ids").get<std::vector<std::uint64_t>>();
    s.retrieval_ids = j.at("retrieval_ids").get<std::vector<std::uint64_t>>();
    s.chi2_stat = j.at("chi2_stat").get<double>();
    s.p_value = j.at("p_value").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

}  // namespace closp
