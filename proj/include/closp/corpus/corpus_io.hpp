#pragma once

#include <filesystem>

#include "closp/corpus/corpus.hpp"
#include "closp/corpus/split.hpp"

namespace closp {

// Directory layout: metadata.jsonl, sar.bin, msi.bin. Image files carry a
// "CLIM" header (version, count, C, H) then, per item, its id and the
// row-major float64 payload.
void write_corpus(const std::filesystem::path& dir, std::span<const CorpusItem> corpus);
Corpus read_corpus(const std::filesystem::path& dir);

void write_split(const std::filesystem::path& file, const SplitResult& split);
SplitResult read_split(const std::filesystem::path& file);

}  // namespace closp
