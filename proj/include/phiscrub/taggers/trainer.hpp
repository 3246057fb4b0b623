#pragma once

// Mini-batch training with equal-length batches, seeded batch shuffling and
// best-checkpoint selection on held-out segment F1.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "phiscrub/numerics/optim.hpp"
#include "phiscrub/taggers/corpus.hpp"
#include "phiscrub/taggers/model_common.hpp"

namespace phiscrub::taggers {

template <typename M>
concept SequenceTagger = requires(M m, const M cm, Tape& tape, const SentenceBatch& sb,
                                  const std::vector<const TagSequence*>& gold, num::Rng* rng) {
  { m.parameters() } -> std::same_as<std::vector<Parameter*>>;
  { m.loss(tape, sb, gold, rng) } -> std::same_as<Var>;
  { cm.predict_batch(sb) } -> std::same_as<std::vector<TagSequence>>;
  { cm.config().epochs } -> std::convertible_to<std::size_t>;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  SegmentScores dev;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;  // overrides the model config
  std::size_t max_batch_size = 8;
  const Corpus* dev = nullptr;        // else a seeded split of the training data
  double dev_fraction = 0.1;
  double gradient_clip = 0.0;         // global-norm clip, 0 = off
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Keeps a copy of the parameters from the epoch with the highest held-out
// F1. Later epochs must beat it strictly to replace it.
class BestCheckpoint {
 public:
  bool observe(std::size_t epoch, double f1, const std::vector<Parameter*>& params) {
    if (best_epoch_ && !(f1 > best_f1_)) return false;
    best_epoch_ = epoch;
    best_f1_ = f1;
    snapshot_.clear();
    for (const Parameter* p : params) snapshot_.push_back(p->value);
    return true;
  }

  void restore(const std::vector<Parameter*>& params) const {
    if (!best_epoch_) return;
    if (params.size() != snapshot_.size()) throw InvalidArgument("checkpoint: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot_[i];
  }

  std::optional<std::size_t> best_epoch() const noexcept { return best_epoch_; }
  double best_f1() const noexcept { return best_f1_; }

 private:
  std::optional<std::size_t> best_epoch_;
  double best_f1_ = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> snapshot_;
};

template <typename M>
struct TrainResult {
  M model;
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  double unk_rate = 0.0;  // share of training tokens without a word vector
};

template <typename M>
std::vector<TagSequence> predict_corpus(const M& model, const Corpus& corpus, std::size_t max_batch = 32) {
  std::vector<std::size_t> lengths;
  for (const auto& s : corpus.sentences) lengths.push_back(s.words.size());
  std::vector<TagSequence> out(corpus.size());
  for (const auto& idx : length_batches(lengths, max_batch)) {
    std::vector<const std::vector<std::string>*> ws;
    for (std::size_t i : idx) ws.push_back(&corpus.sentences[i].words);
    auto pred = model.predict_batch(pack_batch(ws));
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = std::move(pred[j]);
  }
  return out;
}

inline std::vector<TagSequence> gold_tags(const Corpus& corpus) {
  std::vector<TagSequence> g;
  for (const auto& s : corpus.sentences) g.push_back(s.tags);
  return g;
}

template <typename M>
SegmentScores evaluate_segment_f1(const M& model, const Corpus& corpus) {
  return score_segments(gold_tags(corpus), predict_corpus(model, corpus));
}

inline double unk_rate(const WordEmbeddingTable& table, const Corpus& corpus) {
  std::size_t unk = 0, total = 0;
  for (const auto& s : corpus.sentences) {
    for (const auto& w : s.words) unk += table.index_of(w) == table.unk_index() ? 1 : 0;
    total += s.words.size();
  }
  return total ? static_cast<double>(unk) / static_cast<double>(total) : 0.0;
}

// Seeded 90/10 style split: returns {train, held-out}.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double held_out_fraction, std::uint64_t seed) {
  if (corpus.size() < 2) return {corpus, corpus};
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  num::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(idx);
  auto n_dev = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(corpus.size())));
  n_dev = std::clamp<std::size_t>(n_dev, 1, corpus.size() - 1);
  std::vector<bool> is_dev(corpus.size(), false);
  for (std::size_t i = 0; i < n_dev; ++i) is_dev[idx[i]] = true;
  Corpus train, dev;
  for (std::size_t i = 0; i < corpus.size(); ++i) (is_dev[i] ? dev : train).sentences.push_back(corpus.sentences[i]);
  return {std::move(train), std::move(dev)};
}

inline void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.values()) g *= s;
  }
}

template <SequenceTagger M>
TrainResult<M> train(M model, const Corpus& corpus, const TrainOptions& opt) {
  validate_corpus(corpus);
  Corpus train_set, dev_set;
  if (opt.dev) {
    validate_corpus(*opt.dev);
    train_set = corpus;
    dev_set = *opt.dev;
  } else {
    std::tie(train_set, dev_set) = split_corpus(corpus, opt.dev_fraction, opt.seed);
  }

  TrainResult<M> result{std::move(model), {}, 0, 0.0, 0.0};
  M& m = result.model;
  result.unk_rate = unk_rate(m.embeddings(), train_set);
  const std::vector<Parameter*> params = m.parameters();
  for (Parameter* p : params) p->zero_grad();
  num::Optimizer optimizer(m.config().optimizer, {m.config().learning_rate}, params);

  std::vector<std::size_t> lengths;
  for (const auto& s : train_set.sentences) lengths.push_back(s.words.size());
  std::vector<std::vector<std::size_t>> batches = length_batches(lengths, opt.max_batch_size);
  std::vector<SentenceBatch> packed;
  std::vector<std::vector<const TagSequence*>> gold;
  for (const auto& idx : batches) {
    std::vector<const std::vector<std::string>*> ws;
    std::vector<const TagSequence*> gs;
    for (std::size_t i : idx) {
      ws.push_back(&train_set.sentences[i].words);
      gs.push_back(&train_set.sentences[i].tags);
    }
    packed.push_back(pack_batch(ws));
    gold.push_back(std::move(gs));
  }

  num::Rng order_rng(opt.seed + 1);
  num::Rng dropout_rng(opt.seed + 2);
  std::vector<std::size_t> order(packed.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  BestCheckpoint best;
  const std::size_t epochs = opt.epochs.value_or(m.config().epochs);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t bi : order) {
      Tape tape;
      Var loss = m.loss(tape, packed[bi], gold[bi], &dropout_rng);
      total += loss.value()[0] * static_cast<double>(packed[bi].batch);
      tape.backward(loss);
      clip_gradients(params, opt.gradient_clip);
      optimizer.step();
      optimizer.zero_grad();
    }
    EpochMetrics em{epoch, total / static_cast<double>(train_set.size()), evaluate_segment_f1(m, dev_set)};
    result.epochs.push_back(em);
    best.observe(epoch, em.dev.f1(), params);
    if (opt.on_epoch) opt.on_epoch(em);
  }
  best.restore(params);
  result.best_epoch = best.best_epoch().value_or(0);
  result.best_dev_f1 = best.best_epoch() ? best.best_f1() : 0.0;
  return result;
}

}  // namespace phiscrub::taggers
