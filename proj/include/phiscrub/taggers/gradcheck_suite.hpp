#pragma once

// Named finite-difference checks over every differentiable op and both
// full taggers. Shared by the CLI `gradcheck` command and the tests.

#include <functional>
#include <string>
#include <vector>

#include "phiscrub/features/features.hpp"
#include "phiscrub/numerics/gradcheck.hpp"
#include "phiscrub/numerics/ops.hpp"
#include "phiscrub/taggers/bilstm.hpp"
#include "phiscrub/taggers/crf.hpp"
#include "phiscrub/taggers/idcnn.hpp"
#include "phiscrub/taggers/lstm.hpp"

namespace phiscrub::taggers::gradcheck {

using num::GradCheckResult;
using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

struct Check {
  std::string name;
  std::function<GradCheckResult()> run;
};

inline constexpr double kTolerance = 1e-4;

namespace detail {

inline Tensor random_tensor(num::Shape shape, num::Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

inline features::WordEmbeddingTable small_embeddings(std::size_t dim, std::uint64_t seed) {
  const std::vector<std::string> words{"the", "patient", "robert", "smith", "saw", "dr.", "in", "boston",
                                       "on",  "march",   "3",      ",",     "2019", ".", "has", "fever"};
  num::Rng rng(seed);
  Tensor m({words.size() + 1, dim});
  for (double& v : m.values()) v = rng.uniform(-1, 1);
  return features::WordEmbeddingTable(words, m);
}

inline labels::TagId tag(std::string_view s) { return *labels::parse_tag(s); }

// Single-input elementwise op under a random linear read-out.
inline Check unary(std::string name, Var (*op)(Var)) {
  return {name, [op] {
            num::Rng rng(2024);
            Parameter a("a", random_tensor({4, 3}, rng));
            const Tensor w = random_tensor({4, 3}, rng);
            return num::grad_check([&](Tape& t) { return num::weighted_sum(op(t.parameter(a)), w); }, {&a});
          }};
}

inline Check binary(std::string name, Var (*op)(Var, Var)) {
  return {name, [op] {
            num::Rng rng(2025);
            Parameter a("a", random_tensor({4, 3}, rng)), c("c", random_tensor({4, 3}, rng));
            const Tensor w = random_tensor({4, 3}, rng);
            return num::grad_check([&](Tape& t) { return num::weighted_sum(op(t.parameter(a), t.parameter(c)), w); },
                                   {&a, &c});
          }};
}

// Squares its input but reports a wrong derivative (2.2x instead of 2x).
inline Var corrupted_square(Var v) {
  Tensor out = v.value();
  for (double& e : out.values()) e = e * e;
  return v.tape->push(std::move(out), {v}, [v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) t.grad(v)[i] += g[i] * 2.2 * t.value(v)[i];
  });
}

}  // namespace detail

// All registered checks. `include_corrupted` adds a deliberately broken op
// (used to verify that failures are reported).
inline std::vector<Check> registry(bool include_corrupted = false) {
  using detail::random_tensor;
  using detail::tag;
  std::vector<Check> checks;

  checks.push_back({"matmul", [] {
                      num::Rng rng(1);
                      Parameter a("a", random_tensor({4, 3}, rng)), b("b", random_tensor({3, 5}, rng));
                      const Tensor w = random_tensor({4, 5}, rng);
                      return num::grad_check(
                          [&](Tape& t) { return num::weighted_sum(num::matmul(t.parameter(a), t.parameter(b)), w); },
                          {&a, &b});
                    }});
  checks.push_back({"affine", [] {
                      num::Rng rng(2);
                      Parameter a("a", random_tensor({4, 3}, rng)), b("b", random_tensor({3, 5}, rng)),
                          bias("bias", random_tensor({5}, rng));
                      const Tensor w = random_tensor({4, 5}, rng);
                      return num::grad_check(
                          [&](Tape& t) {
                            return num::weighted_sum(num::affine(t.parameter(a), t.parameter(b), t.parameter(bias)), w);
                          },
                          {&a, &b, &bias});
                    }});
  checks.push_back(detail::binary("add", num::add));
  checks.push_back(detail::binary("mul", num::mul));
  checks.push_back(detail::unary("sigmoid", num::sigmoid));
  checks.push_back(detail::unary("tanh", num::tanh));
  checks.push_back(detail::unary("relu", num::relu));
  checks.push_back({"slice_concat", [] {
                      num::Rng rng(3);
                      Parameter a("a", random_tensor({4, 3}, rng)), c("c", random_tensor({4, 3}, rng));
                      return num::grad_check(
                          [&](Tape& t) {
                            Var x = t.parameter(a);
                            Var y = num::concat_cols({num::slice_cols(x, 0, 1), t.parameter(c), num::slice_cols(x, 1, 3)});
                            return num::weighted_sum(num::slice_rows(num::concat_rows({y, y}), 1, 5), Tensor({4, 6}, 0.7));
                          },
                          {&a, &c});
                    }});
  checks.push_back({"gather_rows", [] {
                      num::Rng rng(4);
                      Parameter table("table", random_tensor({6, 3}, rng));
                      const Tensor w = random_tensor({4, 3}, rng);
                      return num::grad_check(
                          [&](Tape& t) { return num::weighted_sum(num::gather_rows(t.parameter(table), {0, 5, -1, 0}), w); },
                          {&table});
                    }});
  checks.push_back({"sum", [] {
                      num::Rng rng(5);
                      Parameter a("a", random_tensor({3, 2}, rng));
                      return num::grad_check([&](Tape& t) { return num::sum(num::mul(t.parameter(a), t.parameter(a))); },
                                             {&a});
                    }});
  checks.push_back({"softmax_cross_entropy", [] {
                      num::Rng rng(6);
                      Parameter a("a", random_tensor({4, 3}, rng, 2.0));
                      return num::grad_check(
                          [&](Tape& t) { return num::softmax_cross_entropy(t.parameter(a), {0, 2, 1, 1}).loss; }, {&a});
                    }});
  checks.push_back({"conv1d_dilated", [] {
                      num::Rng rng(7);
                      Parameter x("x", random_tensor({12, 3}, rng)), w("w", random_tensor({3, 3, 4}, rng)),
                          b("b", random_tensor({4}, rng));
                      const Tensor out = random_tensor({12, 4}, rng);
                      return num::grad_check(
                          [&](Tape& t) {
                            return num::weighted_sum(
                                num::conv1d_dilated(t.parameter(x), t.parameter(w), t.parameter(b), {3, 2, 4}, 2), out);
                          },
                          {&x, &w, &b});
                    }});
  checks.push_back({"max_pool_over_time", [] {
                      num::Rng rng(8);
                      Parameter x("x", random_tensor({8, 3}, rng));
                      return num::grad_check(
                          [&](Tape& t) {
                            return num::weighted_sum(num::max_pool_over_time(t.parameter(x), 2, {4, 3}),
                                                     Tensor({2, 3}, {1, -2, 3, 0.5, 1, -1}));
                          },
                          {&x});
                    }});
  checks.push_back({"char_cnn", [] {
                      num::Rng rng(9);
                      const features::CharCnnShape shape{4, 3, 3};
                      Parameter table("chars", random_tensor({features::kCharAlphabet, 4}, rng));
                      Parameter w("w", random_tensor({3, 4, 3}, rng)), b("b", random_tensor({3}, rng));
                      const std::vector<std::string> words{"Robert", "J.", "x"};
                      const Tensor out = random_tensor({3, 3}, rng);
                      return num::grad_check(
                          [&](Tape& t) { return num::weighted_sum(features::char_cnn_encode(t, words, table, w, b, shape), out); },
                          {&table, &w, &b});
                    }});
  checks.push_back({"lstm_cell", [] {
                      num::Rng rng(10);
                      const std::size_t in = 3, h = 4, batch = 2;
                      Parameter x("x", random_tensor({batch, in}, rng)), hp("h", random_tensor({batch, h}, rng)),
                          cp("c", random_tensor({batch, h}, rng));
                      Parameter wx("wx", random_tensor({in, 4 * h}, rng)), wh("wh", random_tensor({h, 4 * h}, rng)),
                          b("b", random_tensor({4 * h}, rng));
                      const Tensor wh_out = random_tensor({batch, h}, rng), wc_out = random_tensor({batch, h}, rng);
                      return num::grad_check(
                          [&](Tape& t) {
                            auto s = lstm_cell_step(t.parameter(x), t.parameter(hp), t.parameter(cp), t.parameter(wx),
                                                    t.parameter(wh), t.parameter(b));
                            return num::add(num::weighted_sum(s.h, wh_out), num::weighted_sum(s.c, wc_out));
                          },
                          {&x, &hp, &cp, &wx, &wh, &b});
                    }});
  checks.push_back({"lstm_sequence", [] {
                      num::Rng rng(11);
                      const std::size_t in = 3, h = 3, batch = 2, len = 4;
                      Parameter x("x", random_tensor({len * batch, in}, rng));
                      Parameter wx("wx", random_tensor({in, 4 * h}, rng)), wh("wh", random_tensor({h, 4 * h}, rng)),
                          b("b", random_tensor({4 * h}, rng));
                      const Tensor out = random_tensor({len * batch, h}, rng);
                      return num::grad_check(
                          [&](Tape& t) {
                            Var fwd = lstm_sequence(t.parameter(x), batch, t.parameter(wx), t.parameter(wh), t.parameter(b), false);
                            Var bwd = lstm_sequence(t.parameter(x), batch, t.parameter(wx), t.parameter(wh), t.parameter(b), true);
                            return num::add(num::weighted_sum(fwd, out), num::weighted_sum(bwd, out));
                          },
                          {&x, &wx, &wh, &b});
                    }});
  checks.push_back({"crf_nll", [] {
                      num::Rng rng(12);
                      const std::size_t len = 4, k = 5, batch = 2;
                      Parameter e("e", random_tensor({len * batch, k}, rng, 2.0)), tr("tr", random_tensor({k, k}, rng)),
                          s("s", random_tensor({k}, rng)), en("en", random_tensor({k}, rng));
                      std::vector<std::vector<std::size_t>> gold(batch, std::vector<std::size_t>(len));
                      for (auto& g : gold) {
                        for (auto& y : g) y = rng.below(k);
                      }
                      return num::grad_check(
                          [&](Tape& t) {
                            return crf_nll(t.parameter(e), t.parameter(tr), t.parameter(s), t.parameter(en), gold);
                          },
                          {&e, &tr, &s, &en});
                    }});
  checks.push_back({"bilstm", [] {
                      BiLstmConfig c;
                      c.word_dim = 5;
                      c.char_dim = 4;
                      c.char_filters = 3;
                      c.shape_dim = 2;
                      c.hidden = 3;
                      BiLstmTagger m(c, detail::small_embeddings(5, 1), 6);
                      const std::vector<std::string> a{"Robert", "Smith", "saw"}, b{"Dr.", "X", "in"};
                      const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0}, gb{0, tag("U-PERSON"), 0};
                      const auto sb = pack_batch({&a, &b});
                      return num::grad_check([&](Tape& t) { return m.loss(t, sb, {&ga, &gb}); }, m.parameters());
                    }});
  checks.push_back({"idcnn", [] {
                      IdCnnConfig c;
                      c.word_dim = 5;
                      c.shape_dim = 2;
                      c.filters = 6;
                      IdCnnTagger m(c, detail::small_embeddings(5, 1), 9);
                      num::Rng rng(1);
                      for (double& v : m.transitions().value.values()) v = rng.uniform(-0.5, 0.5);
                      const std::vector<std::string> a{"Robert", "Smith", "saw"}, b{"in", "Boston", "."};
                      const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0}, gb{0, tag("U-GPE"), 0};
                      const auto sb = pack_batch({&a, &b});
                      return num::grad_check([&](Tape& t) { return m.loss(t, sb, {&ga, &gb}); }, m.parameters());
                    }});
  // Default-size layers, a sample of coordinates per parameter.
  checks.push_back({"bilstm_default_size", [] {
                      BiLstmConfig c;
                      c.word_dim = 20;
                      BiLstmTagger m(c, detail::small_embeddings(20, 1), 7);
                      const std::vector<std::string> a{"Robert", "Smith", "saw"};
                      const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0};
                      num::GradCheckOptions opts;
                      opts.max_coordinates_per_parameter = 12;
                      opts.seed = 3;
                      return num::grad_check([&](Tape& t) { return m.loss(t, make_batch(a), {&ga}); }, m.parameters(), opts);
                    }});
  checks.push_back({"idcnn_default_size", [] {
                      IdCnnConfig c;
                      c.word_dim = 20;
                      IdCnnTagger m(c, detail::small_embeddings(20, 1), 10);
                      const std::vector<std::string> a{"Robert", "Smith", "saw"};
                      const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0};
                      num::GradCheckOptions opts;
                      opts.max_coordinates_per_parameter = 12;
                      opts.seed = 4;
                      return num::grad_check([&](Tape& t) { return m.loss(t, make_batch(a), {&ga}); }, m.parameters(), opts);
                    }});
  if (include_corrupted) {
    checks.push_back({"corrupted_square", [] {
                        num::Rng rng(13);
                        Parameter a("a", random_tensor({3, 2}, rng));
                        return num::grad_check([&](Tape& t) { return num::sum(detail::corrupted_square(t.parameter(a))); },
                                               {&a});
                      }});
  }
  return checks;
}

}  // namespace phiscrub::taggers::gradcheck
