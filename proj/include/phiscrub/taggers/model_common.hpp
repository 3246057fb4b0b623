#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "phiscrub/features/features.hpp"
#include "phiscrub/labels/bilou.hpp"
#include "phiscrub/numerics/archive.hpp"
#include "phiscrub/numerics/random.hpp"
#include "phiscrub/numerics/tape.hpp"

namespace phiscrub::taggers {

using features::WordEmbeddingTable;
using labels::TagId;
using labels::TagSequence;
using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

inline constexpr const char* kModelFormat = "phiscrub-tagger/1";

inline Tensor embedding_init(std::size_t rows, std::size_t dim, num::Rng& rng) {
  Tensor t({rows, dim});
  num::fill_uniform(t, std::sqrt(3.0 / static_cast<double>(dim)), rng);
  return t;
}

inline Tensor glorot(num::Shape shape, std::size_t fan_in, std::size_t fan_out, num::Rng& rng) {
  Tensor t(std::move(shape));
  num::glorot_uniform(t, fan_in, fan_out, rng);
  return t;
}

// Inverted dropout; identity when rng is null or rate is zero.
inline Var dropout(Var x, double rate, num::Rng* rng) {
  if (!rng || rate <= 0.0) return x;
  Tensor mask(x.shape());
  const double keep = 1.0 - rate;
  for (double& m : mask.values()) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return num::mul(x, x.tape->constant(std::move(mask)));
}

inline std::vector<long> word_indices(const WordEmbeddingTable& table, const std::vector<std::string>& words) {
  std::vector<long> idx(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) idx[i] = static_cast<long>(table.index_of(words[i]));
  return idx;
}

template <typename Shape, typename Fn>
std::vector<long> shape_indices(const std::vector<std::string>& words, Fn fn) {
  std::vector<long> idx(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) idx[i] = static_cast<long>(static_cast<Shape>(fn(words[i])));
  return idx;
}

// Per-row argmax with ties going to the lowest column.
inline std::vector<std::size_t> row_argmax(const Tensor& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c) {
      if (m.at(r, c) > m.at(r, best)) best = c;
    }
    out[r] = best;
  }
  return out;
}

// Snaps a raw tag sequence onto the spans decode_bilou recovers from it.
inline TagSequence repair_tags(const TagSequence& raw) {
  return labels::encode_bilou(labels::decode_bilou(raw), raw.size());
}

inline nlohmann::json tag_vocabulary() {
  nlohmann::json tags = nlohmann::json::array();
  for (std::size_t i = 0; i < labels::kNumTags; ++i) tags.push_back(labels::tag_string(static_cast<TagId>(i)));
  return tags;
}

inline void check_tag_vocabulary(const nlohmann::json& tags) {
  if (tags != tag_vocabulary()) throw DataError("model file: tag vocabulary differs from this build");
}

inline void put_embeddings(num::Archive& a, const WordEmbeddingTable& table) {
  a.config["vocabulary"] = table.words();
  a.tensors.emplace_back("word_embeddings", table.matrix());
}

inline WordEmbeddingTable get_embeddings(const num::Archive& a) {
  return WordEmbeddingTable(a.config.at("vocabulary").get<std::vector<std::string>>(), a.tensor("word_embeddings"));
}

inline void put_parameters(num::Archive& a, const std::vector<const Parameter*>& params) {
  for (const Parameter* p : params) a.tensors.emplace_back(p->name, p->value);
}

inline void get_parameters(const num::Archive& a, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    const Tensor& t = a.tensor(p->name);
    if (t.shape() != p->value.shape()) {
      throw DataError("model file: tensor '" + p->name + "' has shape " + num::shape_string(t.shape()) +
                      ", config implies " + num::shape_string(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

}  // namespace phiscrub::taggers
