#pragma once

// Bi-LSTM-CNN tagger: [word vector | char-CNN | shape7 embedding] per token,
// stacked bidirectional LSTM layers, affine output to per-tag logits trained
// with per-token softmax cross-entropy.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "phiscrub/taggers/config.hpp"
#include "phiscrub/taggers/corpus.hpp"
#include "phiscrub/taggers/lstm.hpp"
#include "phiscrub/taggers/model_common.hpp"

namespace phiscrub::taggers {

class BiLstmTagger {
 public:
  using Config = BiLstmConfig;
  static constexpr labels::ModelId kArch = labels::ModelId::kBiLstm;
  static constexpr const char* kArchName = "bilstm";

  BiLstmTagger(Config config, WordEmbeddingTable embeddings, std::uint64_t seed)
      : config_(std::move(config)), embeddings_(std::move(embeddings)) {
    config_.validate();
    if (embeddings_.dim() != config_.word_dim) {
      throw InvalidArgument("bilstm: embedding dimension " + std::to_string(embeddings_.dim()) +
                            " does not match word_dim " + std::to_string(config_.word_dim));
    }
    num::Rng rng(seed);
    const auto& c = config_;
    char_table_ = {"char_embeddings", embedding_init(features::kCharAlphabet, c.char_dim, rng)};
    char_w_ = {"char_conv.w", glorot({c.char_width, c.char_dim, c.char_filters}, c.char_width * c.char_dim,
                                     c.char_filters, rng)};
    char_b_ = {"char_conv.b", Tensor({c.char_filters})};
    shape_table_ = {"shape_embeddings", embedding_init(features::kNumShape7, c.shape_dim, rng)};
    std::size_t in = c.representation_dim();
    for (std::size_t l = 0; l < c.layers; ++l) {
      const std::string p = "lstm." + std::to_string(l);
      layers_.push_back({LstmWeights::init(p + ".fwd", in, c.hidden, rng, c.forget_bias),
                         LstmWeights::init(p + ".bwd", in, c.hidden, rng, c.forget_bias)});
      in = 2 * c.hidden;
    }
    out_w_ = {"output.w", glorot({in, labels::kNumTags}, in, labels::kNumTags, rng)};
    out_b_ = {"output.b", Tensor({labels::kNumTags})};
  }

  const Config& config() const noexcept { return config_; }
  const WordEmbeddingTable& embeddings() const noexcept { return embeddings_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps{&char_table_, &char_w_, &char_b_, &shape_table_};
    for (auto& layer : layers_) {
      for (auto& dir : layer) {
        for (Parameter* p : dir.parameters()) ps.push_back(p);
      }
    }
    ps.push_back(&out_w_);
    ps.push_back(&out_b_);
    return ps;
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<BiLstmTagger*>(this)->parameters()) out.push_back(p);
    return out;
  }

  // Direct access for tests and tools: layer l, direction 0 forward / 1 backward.
  LstmWeights& lstm(std::size_t layer, std::size_t dir) { return layers_.at(layer).at(dir); }
  Parameter& output_weight() { return out_w_; }
  Parameter& output_bias() { return out_b_; }

  // Token representations [rows, representation_dim] for time-major words.
  Var representations(Tape& tape, const std::vector<std::string>& words) { return reps_impl(*this, tape, words); }
  Var representations(Tape& tape, const std::vector<std::string>& words) const {
    return reps_impl(*this, tape, words);
  }

  std::vector<double> word_representation(const std::string& word) const {
    Tape tape(false);
    const auto& v = representations(tape, {word}).value().values();
    return {v.begin(), v.end()};
  }

  // Per-token tag logits [T * B, 73].
  Var logits(Tape& tape, const SentenceBatch& sb, num::Rng* dropout_rng = nullptr) {
    return forward_impl(*this, tape, sb, dropout_rng);
  }
  Var logits(Tape& tape, const SentenceBatch& sb) const { return forward_impl(*this, tape, sb, nullptr); }

  Var loss(Tape& tape, const SentenceBatch& sb, const std::vector<const TagSequence*>& gold,
           num::Rng* dropout_rng = nullptr) {
    std::vector<std::size_t> flat(sb.rows());
    for (std::size_t b = 0; b < sb.batch; ++b) {
      for (std::size_t t = 0; t < sb.length; ++t) flat[t * sb.batch + b] = (*gold[b])[t];
    }
    return num::softmax_cross_entropy(logits(tape, sb, dropout_rng), flat).loss;
  }

  std::vector<TagSequence> predict_batch(const SentenceBatch& sb) const {
    Tape tape(false);
    const auto best = row_argmax(logits(tape, sb).value());
    std::vector<TagSequence> out(sb.batch, TagSequence(sb.length));
    for (std::size_t b = 0; b < sb.batch; ++b) {
      for (std::size_t t = 0; t < sb.length; ++t) out[b][t] = static_cast<TagId>(best[t * sb.batch + b]);
      out[b] = repair_tags(out[b]);
    }
    return out;
  }

  TagSequence predict(const std::vector<std::string>& words) const {
    if (words.empty()) throw InvalidArgument("bilstm: empty sentence");
    return predict_batch(make_batch(words)).front();
  }

  num::Archive to_archive() const {
    num::Archive a;
    a.config["format"] = kModelFormat;
    a.config["arch"] = kArchName;
    a.config["config"] = config_;
    a.config["tags"] = tag_vocabulary();
    put_embeddings(a, embeddings_);
    put_parameters(a, parameters());
    return a;
  }

  static BiLstmTagger from_archive(const num::Archive& a) {
    if (a.config.value("arch", "") != kArchName) throw DataError("model file is not a bilstm model");
    check_tag_vocabulary(a.config.at("tags"));
    BiLstmTagger m(a.config.at("config").get<Config>(), get_embeddings(a), 0);
    get_parameters(a, m.parameters());
    return m;
  }

 private:
  template <typename Self>
  static Var reps_impl(Self& m, Tape& tape, const std::vector<std::string>& words) {
    if (words.empty()) throw InvalidArgument("bilstm: empty sentence");
    const auto& c = m.config_;
    Var word = num::gather_rows(tape.constant_ref(m.embeddings_.matrix()), word_indices(m.embeddings_, words));
    Var chars = features::char_cnn_encode(tape, words, m.char_table_, m.char_w_, m.char_b_,
                                          {c.char_dim, c.char_filters, c.char_width});
    Var shape = num::gather_rows(tape.parameter(m.shape_table_),
                                 shape_indices<features::WordShape7>(words, features::shape7));
    return num::concat_cols({word, chars, shape});
  }

  template <typename Self>
  static Var forward_impl(Self& m, Tape& tape, const SentenceBatch& sb, num::Rng* rng) {
    if (sb.rows() == 0) throw InvalidArgument("bilstm: empty sentence");
    Var x = dropout(reps_impl(m, tape, sb.words), m.config_.dropout, rng);
    for (auto& layer : m.layers_) {
      Var fwd = lstm_sequence(x, sb.batch, tape.parameter(layer[0].wx), tape.parameter(layer[0].wh),
                              tape.parameter(layer[0].b), false);
      Var bwd = lstm_sequence(x, sb.batch, tape.parameter(layer[1].wx), tape.parameter(layer[1].wh),
                              tape.parameter(layer[1].b), true);
      x = num::concat_cols({fwd, bwd});
    }
    x = dropout(x, m.config_.dropout, rng);
    return num::affine(x, tape.parameter(m.out_w_), tape.parameter(m.out_b_));
  }

  Config config_;
  WordEmbeddingTable embeddings_;
  Parameter char_table_, char_w_, char_b_, shape_table_;
  std::vector<std::array<LstmWeights, 2>> layers_;
  Parameter out_w_, out_b_;
};

}  // namespace phiscrub::taggers
