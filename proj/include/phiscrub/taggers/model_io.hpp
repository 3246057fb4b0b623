#pragma once

// Architecture-tagged model handle and its model-file I/O.

#include <string>
#include <variant>
#include <vector>

#include "phiscrub/taggers/bilstm.hpp"
#include "phiscrub/taggers/idcnn.hpp"
#include "phiscrub/taggers/trainer.hpp"

namespace phiscrub::taggers {

using TaggerModel = std::variant<BiLstmTagger, IdCnnTagger>;

inline labels::ModelId arch_of(const TaggerModel& m) {
  return std::visit([](const auto& t) { return std::decay_t<decltype(t)>::kArch; }, m);
}

inline std::optional<labels::ModelId> parse_arch(std::string_view s) {
  if (s == "bilstm") return labels::ModelId::kBiLstm;
  if (s == "idcnn") return labels::ModelId::kIdCnn;
  return std::nullopt;
}

inline num::Archive to_archive(const TaggerModel& m) {
  return std::visit([](const auto& t) { return t.to_archive(); }, m);
}

inline TaggerModel from_archive(const num::Archive& a) {
  if (a.config.value("format", "") != kModelFormat) throw DataError("not a tagger model file");
  const std::string arch = a.config.value("arch", "");
  try {
    if (arch == BiLstmTagger::kArchName) return BiLstmTagger::from_archive(a);
    if (arch == IdCnnTagger::kArchName) return IdCnnTagger::from_archive(a);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: bad config block: ") + e.what());
  }
  throw DataError("model file: unknown architecture '" + arch + "'");
}

inline void save_model(const std::string& path, const TaggerModel& m) { num::save_archive(path, to_archive(m)); }

inline TaggerModel load_model(const std::string& path) { return from_archive(num::load_archive(path)); }

inline std::vector<TagSequence> predict_corpus(const TaggerModel& m, const Corpus& corpus) {
  return std::visit([&](const auto& t) { return predict_corpus(t, corpus); }, m);
}

inline SegmentScores evaluate_segment_f1(const TaggerModel& m, const Corpus& corpus) {
  return score_segments(gold_tags(corpus), predict_corpus(m, corpus));
}

inline TagSequence predict(const TaggerModel& m, const std::vector<std::string>& words) {
  return std::visit([&](const auto& t) { return t.predict(words); }, m);
}

struct TaggerTrainResult {
  TaggerModel model;
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  double unk_rate = 0.0;
};

namespace detail {

template <typename M>
TaggerTrainResult train_as(const Corpus& corpus, WordEmbeddingTable embeddings, const nlohmann::json& overrides,
                           const TrainOptions& options) {
  nlohmann::json cfg = typename M::Config{};
  cfg.merge_patch(overrides);
  typename M::Config config;
  try {
    config = cfg.get<typename M::Config>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad model config: ") + e.what());
  }
  auto r = train(M(config, std::move(embeddings), options.seed), corpus, options);
  return {std::move(r.model), std::move(r.epochs), r.best_epoch, r.best_dev_f1, r.unk_rate};
}

}  // namespace detail

// `config_overrides` is merged over the architecture's default config.
inline TaggerTrainResult train_tagger(labels::ModelId arch, const Corpus& corpus, WordEmbeddingTable embeddings,
                                      const nlohmann::json& config_overrides, const TrainOptions& options) {
  if (arch == labels::ModelId::kBiLstm) {
    return detail::train_as<BiLstmTagger>(corpus, std::move(embeddings), config_overrides, options);
  }
  return detail::train_as<IdCnnTagger>(corpus, std::move(embeddings), config_overrides, options);
}

}  // namespace phiscrub::taggers
