#pragma once

// Iterated dilated CNN tagger: [word vector | shape4 embedding] per token,
// affine projection to `filters` channels, a block of dilated conv layers
// applied repeatedly with shared weights, affine emissions and a
// linear-chain CRF (transition, start and end scores) on top.

#include <cstddef>
#include <string>
#include <vector>

#include "phiscrub/taggers/config.hpp"
#include "phiscrub/taggers/corpus.hpp"
#include "phiscrub/taggers/crf.hpp"
#include "phiscrub/taggers/model_common.hpp"

namespace phiscrub::taggers {

class IdCnnTagger {
 public:
  using Config = IdCnnConfig;
  static constexpr labels::ModelId kArch = labels::ModelId::kIdCnn;
  static constexpr const char* kArchName = "idcnn";

  struct ConvLayer {
    Parameter w;  // [width, filters, filters]
    Parameter b;
  };

  IdCnnTagger(Config config, WordEmbeddingTable embeddings, std::uint64_t seed)
      : config_(std::move(config)), embeddings_(std::move(embeddings)) {
    config_.validate();
    if (embeddings_.dim() != config_.word_dim) {
      throw InvalidArgument("idcnn: embedding dimension " + std::to_string(embeddings_.dim()) +
                            " does not match word_dim " + std::to_string(config_.word_dim));
    }
    num::Rng rng(seed);
    const auto& c = config_;
    const std::size_t k = labels::kNumTags;
    shape_table_ = {"shape_embeddings", embedding_init(features::kNumShape4, c.shape_dim, rng)};
    proj_w_ = {"projection.w", glorot({c.representation_dim(), c.filters}, c.representation_dim(), c.filters, rng)};
    proj_b_ = {"projection.b", Tensor({c.filters})};
    for (std::size_t blk = 0; blk < c.blocks; ++blk) {
      std::vector<ConvLayer> block;
      for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string p = "block." + std::to_string(blk) + ".conv." + std::to_string(l);
        block.push_back({{p + ".w", glorot({c.width, c.filters, c.filters}, c.width * c.filters, c.filters, rng)},
                         {p + ".b", Tensor({c.filters})}});
      }
      blocks_.push_back(std::move(block));
    }
    out_w_ = {"output.w", glorot({c.filters, k}, c.filters, k, rng)};
    out_b_ = {"output.b", Tensor({k})};
    trans_ = {"crf.transitions", Tensor({k, k})};
    start_ = {"crf.start", Tensor({k})};
    end_ = {"crf.end", Tensor({k})};
  }

  const Config& config() const noexcept { return config_; }
  const WordEmbeddingTable& embeddings() const noexcept { return embeddings_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps{&shape_table_, &proj_w_, &proj_b_};
    for (auto& block : blocks_) {
      for (auto& layer : block) {
        ps.push_back(&layer.w);
        ps.push_back(&layer.b);
      }
    }
    for (Parameter* p : {&out_w_, &out_b_, &trans_, &start_, &end_}) ps.push_back(p);
    return ps;
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<IdCnnTagger*>(this)->parameters()) out.push_back(p);
    return out;
  }

  ConvLayer& conv(std::size_t block, std::size_t layer) { return blocks_.at(block).at(layer); }
  Parameter& shape_table() { return shape_table_; }
  Parameter& projection_weight() { return proj_w_; }
  Parameter& projection_bias() { return proj_b_; }
  Parameter& output_weight() { return out_w_; }
  Parameter& output_bias() { return out_b_; }
  Parameter& transitions() { return trans_; }
  Parameter& start_scores() { return start_; }
  Parameter& end_scores() { return end_; }
  const Parameter& transitions() const { return trans_; }
  const Parameter& start_scores() const { return start_; }
  const Parameter& end_scores() const { return end_; }

  Var representations(Tape& tape, const std::vector<std::string>& words) { return reps_impl(*this, tape, words); }
  Var representations(Tape& tape, const std::vector<std::string>& words) const {
    return reps_impl(*this, tape, words);
  }

  std::vector<double> word_representation(const std::string& word) const {
    Tape tape(false);
    const auto& v = representations(tape, {word}).value().values();
    return {v.begin(), v.end()};
  }

  // Per-token emission scores [T * B, 73].
  Var emissions(Tape& tape, const SentenceBatch& sb, num::Rng* dropout_rng = nullptr) {
    return forward_impl(*this, tape, sb, dropout_rng);
  }
  Var emissions(Tape& tape, const SentenceBatch& sb) const { return forward_impl(*this, tape, sb, nullptr); }

  Var loss(Tape& tape, const SentenceBatch& sb, const std::vector<const TagSequence*>& gold,
           num::Rng* dropout_rng = nullptr) {
    std::vector<std::vector<std::size_t>> g(gold.size());
    for (std::size_t b = 0; b < gold.size(); ++b) g[b].assign(gold[b]->begin(), gold[b]->end());
    Var e = emissions(tape, sb, dropout_rng);
    return crf_nll(e, tape.parameter(trans_), tape.parameter(start_), tape.parameter(end_), g);
  }

  std::vector<TagSequence> predict_batch(const SentenceBatch& sb) const {
    Tape tape(false);
    const Tensor& e = emissions(tape, sb).value();
    const std::size_t k = labels::kNumTags;
    std::vector<TagSequence> out(sb.batch);
    Tensor one({sb.length, k});
    for (std::size_t b = 0; b < sb.batch; ++b) {
      for (std::size_t t = 0; t < sb.length; ++t) {
        for (std::size_t j = 0; j < k; ++j) one.at(t, j) = e.at(t * sb.batch + b, j);
      }
      const auto path = viterbi_decode(one, trans_.value, start_.value, end_.value);
      out[b].assign(path.begin(), path.end());
      out[b] = repair_tags(out[b]);
    }
    return out;
  }

  TagSequence predict(const std::vector<std::string>& words) const {
    if (words.empty()) throw InvalidArgument("idcnn: empty sentence");
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

  static IdCnnTagger from_archive(const num::Archive& a) {
    if (a.config.value("arch", "") != kArchName) throw DataError("model file is not an idcnn model");
    check_tag_vocabulary(a.config.at("tags"));
    IdCnnTagger m(a.config.at("config").get<Config>(), get_embeddings(a), 0);
    get_parameters(a, m.parameters());
    return m;
  }

 private:
  template <typename Self>
  static Var reps_impl(Self& m, Tape& tape, const std::vector<std::string>& words) {
    if (words.empty()) throw InvalidArgument("idcnn: empty sentence");
    Var word = num::gather_rows(tape.constant_ref(m.embeddings_.matrix()), word_indices(m.embeddings_, words));
    Var shape = num::gather_rows(tape.parameter(m.shape_table_),
                                 shape_indices<features::WordShape4>(words, features::shape4));
    return num::concat_cols({word, shape});
  }

  template <typename Self>
  static Var forward_impl(Self& m, Tape& tape, const SentenceBatch& sb, num::Rng* rng) {
    if (sb.rows() == 0) throw InvalidArgument("idcnn: empty sentence");
    const auto& c = m.config_;
    Var x = dropout(reps_impl(m, tape, sb.words), c.dropout, rng);
    Var h = num::affine(x, tape.parameter(m.proj_w_), tape.parameter(m.proj_b_));
    for (std::size_t it = 0; it < c.block_iterations; ++it) {
      for (auto& block : m.blocks_) {
        for (std::size_t l = 0; l < block.size(); ++l) {
          h = num::relu(num::conv1d_dilated(h, tape.parameter(block[l].w), tape.parameter(block[l].b),
                                            {c.width, c.dilations[l], c.filters}, sb.batch));
        }
      }
    }
    h = dropout(h, c.dropout, rng);
    return num::affine(h, tape.parameter(m.out_w_), tape.parameter(m.out_b_));
  }

  Config config_;
  WordEmbeddingTable embeddings_;
  Parameter shape_table_, proj_w_, proj_b_;
  std::vector<std::vector<ConvLayer>> blocks_;
  Parameter out_w_, out_b_, trans_, start_, end_;
};

}  // namespace phiscrub::taggers
