#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>

#include "CLI11.hpp"
#include "closp/corpus/corpus_io.hpp"
#include "closp/corpus/relevance.hpp"
#include "closp/corpus/split.hpp"
#include "closp/error.hpp"
#include "closp/evalsuite/metrics.hpp"
#include "closp/retrieval/retrieval.hpp"
#include "closp/trainer/trainer.hpp"
#include "closp/util/container.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace closp;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = CLOSP_VERSION;

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot write " + file.string());
  os << text;
  if (!os) throw DataError("write failed: " + file.string());
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create output directory " + out);
  return dir;
}

class Run {
 public:
  explicit Run(std::string command) : command_(std::move(command)), start_(Clock::now()) {}

  ordered_json& inputs() { return inputs_; }
  void config(std::string text) { config_ = std::move(text); }
  void seed(std::uint64_t s) { seed_ = s; }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void finish(const fs::path& dir) {
    ordered_json j;
    j["command"] = command_;
    j["tool_version"] = kToolVersion;
    j["seed"] = seed_ ? ordered_json(*seed_) : ordered_json(nullptr);
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - start_).count();
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::string command_;
  Clock::time_point start_;
  ordered_json inputs_ = ordered_json::object();
  std::string config_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> outputs_;
};

bool same_model_shape(const ContainerHeader& a, const ContainerHeader& b) {
  return a.version == b.version && a.embed_dim == b.embed_dim && a.image_side == b.image_side &&
         a.sh_degree == b.sh_degree && a.vocab_hash == b.vocab_hash;
}

ModelCheckpoint load_checkpoint(const fs::path& ckpt) {
  const auto h = Container::peek(ckpt);
  if (h.kind != ContainerKind::checkpoint) throw DataError(ckpt.string() + " is not a checkpoint");
  if (h.vocab_hash != LabelVocabulary::hash()) {
    ContainerHeader mine = h;
    mine.vocab_hash = LabelVocabulary::hash();
    throw DataError("incompatible checkpoint\n  checkpoint: " + h.describe() +
                    "\n  this build: " + mine.describe());
  }
  return ModelCheckpoint::load(ckpt);
}

// Loads the pair, rejecting an index built by a different encoder shape.
std::pair<ModelCheckpoint, EmbeddingIndex> load_pair(const fs::path& ckpt, const fs::path& index) {
  const auto hc = Container::peek(ckpt);
  const auto hi = Container::peek(index);
  if (hi.kind != ContainerKind::index) throw DataError(index.string() + " is not an index");
  if (hc.kind != ContainerKind::checkpoint || !same_model_shape(hc, hi)) {
    throw DataError("incompatible checkpoint and index\n  checkpoint: " + hc.describe() +
                    "\n  index:      " + hi.describe());
  }
  return {load_checkpoint(ckpt), EmbeddingIndex::load(index)};
}

struct Loaded {
  Corpus corpus;
  SplitResult split;
};

Loaded load_corpus_dir(const fs::path& dir) {
  Loaded l;
  l.corpus = read_corpus(dir);
  if (!fs::exists(dir / "split.json")) throw DataError(dir.string() + ": split.json missing");
  l.split = read_split(dir / "split.json");
  return l;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  double train_fraction = 0.2;
};

void cmd_gen_corpus(const GenArgs& a) {
  Run run("gen-corpus");
  GeneratorConfig g;
  if (!a.config.empty()) {
    g = parse_generator_config(read_key_values(a.config), a.config);
    run.inputs()["config"] = a.config;
  }
  const auto dir = prepare_out(a.out);
  run.config(g.to_text() + "train_fraction=" + format_real(a.train_fraction) + "\n");
  run.seed(a.seed);

  const auto corpus = generate_synthetic_corpus(g, a.seed);
  const auto split = stratified_split(corpus, a.train_fraction, a.seed);
  write_corpus(dir, corpus);
  write_split(dir / "split.json", split);
  for (const char* f : {"metadata.jsonl", "sar.bin", "msi.bin", "split.json"}) run.output(dir / f);

  const auto s = summarize(corpus);
  std::printf("%zu items (%zu SAR, %zu MSI); train %zu, retrieval %zu; chi2 %.4f p=%.4f\n",
              corpus.size(), s.sar, s.msi, split.train_ids.size(), split.retrieval_ids.size(),
              split.chi2_stat, split.p_value);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    std::printf("  %-20s %zu\n", std::string(LabelVocabulary::name(LabelVocabulary::at(l))).c_str(),
                s.label_counts[l]);
  }
  run.finish(dir);
}

struct TrainArgs {
  std::string config, corpus, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

void cmd_train(const TrainArgs& a) {
  Run run("train");
  TrainConfig cfg;
  if (!a.config.empty()) {
    cfg = read_train_config(a.config);
    run.inputs()["config"] = a.config;
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.alpha) cfg.alpha = *a.alpha;
  cfg.validate();
  run.inputs()["corpus"] = a.corpus;
  const auto data = load_corpus_dir(a.corpus);
  const auto dir = prepare_out(a.out);
  run.config(cfg.to_text());
  run.seed(cfg.seed);

  const auto items = select(data.corpus, data.split.train_ids);
  const auto result = train(cfg, items, [&](const TrainProgress& p) {
    if ((p.step + 1) % steps_per_epoch(cfg, items) == 0 || p.step + 1 == p.total_steps) {
      std::fprintf(stderr, "step %zu/%zu loss %.4f lr %.3g\n", p.step + 1, p.total_steps, p.loss, p.lr);
    }
  });

  result.checkpoint.save(dir / "checkpoint.clsp");
  std::ostringstream csv;
  csv << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    csv << e + 1 << ',' << format_real(result.epoch_loss[e]) << '\n';
  write_text(dir / "loss.csv", csv.str());
  run.output(dir / "checkpoint.clsp");
  run.output(dir / "loss.csv");
  std::printf("trained %llu steps; loss %.4f -> %.4f; tau %.4f\n",
              (unsigned long long)result.checkpoint.step, result.epoch_loss.front(),
              result.epoch_loss.back(), result.checkpoint.temperature.tau());
  run.finish(dir);
}

struct IndexArgs {
  std::string checkpoint, corpus, out;
};

void cmd_index(const IndexArgs& a) {
  Run run("index");
  run.inputs()["checkpoint"] = a.checkpoint;
  run.inputs()["corpus"] = a.corpus;
  const auto ck = load_checkpoint(a.checkpoint);
  const auto data = load_corpus_dir(a.corpus);
  const auto items = select(data.corpus, data.split.retrieval_ids);
  if (items.empty()) throw DataError("retrieval split is empty");
  const auto side = items.front().image.dim(1);
  if (side != ck.model.config().image_side) {
    throw DataError("incompatible checkpoint\n  checkpoint: " + Container::peek(a.checkpoint).describe() +
                    "\n  corpus:     H=" + std::to_string(side));
  }
  const auto dir = prepare_out(a.out);
  run.config(ck.config.to_text());
  const auto idx = index_corpus(ck.model, items);
  idx.save(dir / "index.clsp", ck.model.config());
  run.output(dir / "index.clsp");
  std::printf("indexed %zu records (D=%zu)\n", idx.size(), idx.dim());
  run.finish(dir);
}

struct QueryArgs {
  std::string checkpoint, index, out, query, scope = "all";
  std::size_t k = 1000;
};

void cmd_query(const QueryArgs& a) {
  Run run("query");
  run.inputs()["checkpoint"] = a.checkpoint;
  run.inputs()["index"] = a.index;
  run.inputs()["query"] = a.query;
  const auto q = LabelSet::parse(a.query);
  const auto scope = parse_scope(a.scope);
  auto [ck, idx] = load_pair(a.checkpoint, a.index);
  if (scope != Scope::all) idx = idx.filter(scope == Scope::sar ? Modality::sar : Modality::msi);
  const auto dir = prepare_out(a.out);
  run.config("k=" + std::to_string(a.k) + "\nscope=" + a.scope + "\n");

  const auto v = ck.model.encode_text(q);
  const auto hits = search(idx, v.values(), a.k);
  std::unordered_map<std::uint64_t, const EmbeddingRecord*> by_id;
  for (const auto& r : idx.records()) by_id.emplace(r.id, &r);

  std::ostringstream table;
  table << "rank\tid\tmodality\tscore\trelevance\tlabels\n";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto& r = *by_id.at(hits[i].id);
    table << i + 1 << '\t' << r.id << '\t' << modality_name(r.modality) << '\t'
          << format_real(hits[i].score) << '\t' << graded_relevance(q, r.labels) << '\t'
          << r.labels.render() << '\n';
  }
  std::printf("query: %s\n%s", q.render().c_str(), table.str().c_str());
  write_text(dir / "ranking.tsv", table.str());
  run.output(dir / "ranking.tsv");
  run.finish(dir);
}

struct EvalArgs {
  std::string checkpoint, index, out;
  std::optional<std::string> scope;
  bool fuse = false;
};

void cmd_eval(const EvalArgs& a) {
  Run run("eval");
  run.inputs()["checkpoint"] = a.checkpoint;
  run.inputs()["index"] = a.index;
  const auto [ck, idx] = load_pair(a.checkpoint, a.index);
  std::vector<Scope> scopes;
  if (a.scope) scopes.push_back(parse_scope(*a.scope));
  else scopes = {Scope::all, Scope::sar, Scope::msi};
  const auto dir = prepare_out(a.out);
  run.config(std::string("fuse=") + (a.fuse ? "true" : "false") + "\n");

  std::vector<LabelSet> labels;
  for (const auto& r : idx.records()) labels.push_back(r.labels);
  const auto queries = enumerate_queries(std::span<const LabelSet>(labels));
  for (auto s : scopes) {
    const bool fuse = a.fuse && s == Scope::all;
    const auto rep = evaluate_retrieval(ck.model, idx, queries, {s, fuse});
    const std::string stem = "report_" + std::string(scope_name(s)) + (fuse ? "_fused" : "");
    write_text(dir / (stem + ".json"), report_to_json(rep));
    const auto text = report_to_text(rep);
    write_text(dir / (stem + ".txt"), text);
    run.output(dir / (stem + ".json"));
    run.output(dir / (stem + ".txt"));
    std::printf("%s\n", text.c_str());
  }
  run.finish(dir);
}

struct ClassifyArgs {
  std::string checkpoint, index, out;
};

void cmd_classify(const ClassifyArgs& a) {
  Run run("classify");
  run.inputs()["checkpoint"] = a.checkpoint;
  run.inputs()["index"] = a.index;
  const auto [ck, idx] = load_pair(a.checkpoint, a.index);
  const auto dir = prepare_out(a.out);

  const auto z = zero_shot_classify(ck.model, idx);
  std::vector<LabelSet> truth;
  for (const auto& r : idx.records()) truth.push_back(r.labels);
  const auto model = macro_prf(z.predictions, truth);
  const std::vector<LabelSet> dummy(truth.size(), most_frequent_classes(truth, 2));
  const auto base = macro_prf(dummy, truth);
  write_text(dir / "classification.json", classification_to_json(model, base, z.threshold));
  const auto text = classification_to_text(model, base);
  write_text(dir / "classification.txt", text);
  run.output(dir / "classification.json");
  run.output(dir / "classification.txt");
  std::printf("%s", text.c_str());
  run.finish(dir);
}

struct ProbeArgs {
  std::string checkpoint, index, out;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
};

void cmd_geo_probe(const ProbeArgs& a) {
  Run run("geo-probe");
  run.inputs()["checkpoint"] = a.checkpoint;
  run.inputs()["index"] = a.index;
  const auto [ck, idx] = load_pair(a.checkpoint, a.index);
  const auto dir = prepare_out(a.out);
  run.config("n=" + std::to_string(a.n) + "\n");
  run.seed(a.seed);

  const auto p = spatial_probe(idx, a.n, a.seed);
  write_text(dir / "probe.csv", probe_to_csv(p));
  write_text(dir / "probe.json", probe_to_json(p));
  run.output(dir / "probe.csv");
  run.output(dir / "probe.json");
  std::printf("pairs %zu  pearson %.4f  spearman %.4f\n", p.pairs.size(), p.corr.pearson,
              p.corr.spearman);
  run.finish(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-modal contrastive text-to-image retrieval over SAR and multispectral tiles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::function<void()> action;

  GenArgs gen;
  auto* g = app.add_subcommand("gen-corpus", "Generate the synthetic corpus and its split");
  g->add_option("--config", gen.config, "Generator key=value file")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--train-fraction", gen.train_fraction, "Share of items in the training split");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->callback([&] { action = [&] { cmd_gen_corpus(gen); }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on the training split");
  t->add_option("--config", tr.config, "Training key=value file")->check(CLI::ExistingFile);
  t->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  t->add_option("--seed", tr.seed, "Overrides the configured seed");
  t->add_option("--alpha", tr.alpha, "Overrides the configured text/location balance");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->callback([&] { action = [&] { cmd_train(tr); }; });

  IndexArgs ix;
  auto* i = app.add_subcommand("index", "Embed the retrieval split");
  i->add_option("--checkpoint", ix.checkpoint)->required();
  i->add_option("--corpus", ix.corpus, "Corpus directory")->required();
  i->add_option("--out", ix.out, "Output directory")->required();
  i->callback([&] { action = [&] { cmd_index(ix); }; });

  QueryArgs qa;
  auto* q = app.add_subcommand("query", "Rank indexed images for a label-set query");
  q->add_option("query", qa.query, "e.g. \"Flooded vegetation. Shrub and scrub\"")->required();
  q->add_option("--checkpoint", qa.checkpoint)->required();
  q->add_option("--index", qa.index)->required();
  q->add_option("--k", qa.k, "Results to return")->check(CLI::PositiveNumber);
  q->add_option("--scope", qa.scope)->check(CLI::IsMember({"all", "sar", "msi"}));
  q->add_option("--out", qa.out, "Output directory")->required();
  q->callback([&] { action = [&] { cmd_query(qa); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Retrieval metrics over every corpus-derived query");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--index", ev.index)->required();
  e->add_option("--scope", ev.scope, "Default: all, sar and msi")
      ->check(CLI::IsMember({"all", "sar", "msi"}));
  e->add_flag("--fuse", ev.fuse, "Search modalities separately and fuse (scope all)");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->callback([&] { action = [&] { cmd_eval(ev); }; });

  ClassifyArgs cl;
  auto* c = app.add_subcommand("classify", "Zero-shot multi-label classification");
  c->add_option("--checkpoint", cl.checkpoint)->required();
  c->add_option("--index", cl.index)->required();
  c->add_option("--out", cl.out, "Output directory")->required();
  c->callback([&] { action = [&] { cmd_classify(cl); }; });

  ProbeArgs pr;
  auto* p = app.add_subcommand("geo-probe", "Embedding distance against great-circle distance");
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--index", pr.index)->required();
  p->add_option("--n", pr.n, "Pairs to sample")->check(CLI::PositiveNumber);
  p->add_option("--seed", pr.seed, "Sampling seed");
  p->add_option("--out", pr.out, "Output directory")->required();
  p->callback([&] { action = [&] { cmd_geo_probe(pr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    action();
  } catch (const NumericError& err) {
    std::fprintf(stderr, "numeric failure: %s\n", err.what());
    return 3;
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 1;
  }
  return 0;
}
