#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>

#include "phiscrub/numerics/gradcheck.hpp"
#include "phiscrub/taggers/model_io.hpp"

using namespace phiscrub;
using namespace phiscrub::taggers;
using Catch::Approx;
using labels::kNumTags;
using num::Rng;

namespace {

Tensor random_tensor(num::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

// Enumerates all k^len tag paths.
void for_each_path(std::size_t len, std::size_t k, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> path(len, 0);
  while (true) {
    fn(path);
    std::size_t i = len;
    while (i > 0) {
      --i;
      if (++path[i] < k) break;
      path[i] = 0;
      if (i == 0) return;
    }
    if (len == 0) return;
  }
}

std::vector<std::size_t> brute_force_best(const Tensor& e, const Tensor& tr, const Tensor& s, const Tensor& en) {
  std::vector<std::size_t> best;
  double top = -std::numeric_limits<double>::infinity();
  // enumeration order is lexicographic, so a strict > keeps the smallest path among ties
  for_each_path(e.rows(), tr.rows(), [&](const std::vector<std::size_t>& p) {
    const double v = path_score(e, tr, s, en, p);
    if (v > top) {
      top = v;
      best = p;
    }
  });
  return best;
}

double brute_force_log_z(const Tensor& e, const Tensor& tr, const Tensor& s, const Tensor& en) {
  std::vector<double> scores;
  for_each_path(e.rows(), tr.rows(), [&](const std::vector<std::size_t>& p) { scores.push_back(path_score(e, tr, s, en, p)); });
  const double m = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double v : scores) acc += std::exp(v - m);
  return m + std::log(acc);
}

WordEmbeddingTable tiny_embeddings(std::size_t dim, std::uint64_t seed = 1) {
  const std::vector<std::string> words{"the", "patient", "robert", "smith", "saw", "dr.", "in", "boston",
                                       "on",  "march",   "3",      ",",     "2019", ".", "has", "fever"};
  Rng rng(seed);
  Tensor m({words.size() + 1, dim});
  for (double& v : m.values()) v = rng.uniform(-1, 1);
  return WordEmbeddingTable(words, m);
}

BiLstmConfig tiny_bilstm() {
  BiLstmConfig c;
  c.word_dim = 5;
  c.char_dim = 4;
  c.char_filters = 3;
  c.shape_dim = 2;
  c.hidden = 3;
  return c;
}

IdCnnConfig tiny_idcnn() {
  IdCnnConfig c;
  c.word_dim = 5;
  c.shape_dim = 2;
  c.filters = 6;
  return c;
}

labels::TagId tag(std::string_view s) { return *labels::parse_tag(s); }

}  // namespace

// ---------------------------------------------------------------- Viterbi / CRF

TEST_CASE("viterbi with zero transitions is per-token argmax", "[taggers][viterbi]") {
  Rng rng(2);
  const Tensor e = random_tensor({5, 4}, rng);
  const auto path = viterbi_decode(e, Tensor({4, 4}), Tensor({4}), Tensor({4}));
  for (std::size_t t = 0; t < 5; ++t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 4; ++j) {
      if (e.at(t, j) > e.at(t, best)) best = j;
    }
    CHECK(path[t] == best);
  }
}

TEST_CASE("viterbi two-token example", "[taggers][viterbi]") {
  const Tensor e = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor tr = Tensor::matrix(2, 2, {0, -5, 0, 0});
  const auto path = viterbi_decode(e, tr, Tensor({2}), Tensor({2}));
  // [0,0] and [1,1] both score 1; the smaller wins
  CHECK(path == std::vector<std::size_t>{0, 0});
  CHECK(path_score(e, tr, Tensor({2}), Tensor({2}), {0, 1}) == -3.0);
}

TEST_CASE("viterbi tie rule picks the smallest path", "[taggers][viterbi]") {
  const auto path = viterbi_decode(Tensor({4, 3}), Tensor({3, 3}), Tensor({3}), Tensor({3}));
  CHECK(path == std::vector<std::size_t>{0, 0, 0, 0});
  Tensor e({3, 3});
  e.at(1, 2) = 1.0;
  e.at(1, 1) = 1.0;
  CHECK(viterbi_decode(e, Tensor({3, 3}), Tensor({3}), Tensor({3})) == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("viterbi equals brute force on random instances", "[taggers][viterbi][property]") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.below(6);
    const std::size_t k = 1 + rng.below(5);
    // integer scores make exact ties common
    const bool ints = trial % 2 == 0;
    auto gen = [&](num::Shape s) {
      Tensor t = random_tensor(std::move(s), rng, 2.0);
      if (ints) {
        for (double& v : t.values()) v = std::round(v);
      }
      return t;
    };
    const Tensor e = gen({len, k}), tr = gen({k, k}), s = gen({k}), en = gen({k});
    INFO("trial " << trial << " len " << len << " k " << k);
    CHECK(viterbi_decode(e, tr, s, en) == brute_force_best(e, tr, s, en));
  }
}

TEST_CASE("crf partition function equals brute force", "[taggers][crf][property]") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.below(5);
    const std::size_t k = 1 + rng.below(5);
    const Tensor e = random_tensor({len, k}, rng, 3.0), tr = random_tensor({k, k}, rng, 3.0);
    const Tensor s = random_tensor({k}, rng, 3.0), en = random_tensor({k}, rng, 3.0);
    CHECK(std::abs(crf_log_partition(e, tr, s, en) - brute_force_log_z(e, tr, s, en)) <= 1e-8);
  }
  // extreme transition scores exercise the exact fallback
  Tensor tr({3, 3});
  tr.fill(-800.0);
  tr.at(0, 0) = 0.0;
  const Tensor e = Tensor::matrix(3, 3, {1, 2, 3, 0, 0, 0, 3, 2, 1});
  CHECK(std::abs(crf_log_partition(e, tr, Tensor({3}), Tensor({3})) - brute_force_log_z(e, tr, Tensor({3}), Tensor({3}))) <=
        1e-8);
}

TEST_CASE("crf nll examples", "[taggers][crf]") {
  for (std::size_t k : {1, 2, 5, 73}) {
    Tape tape;
    Var loss = crf_nll(tape.constant(Tensor({1, k})), tape.constant(Tensor({k, k})), tape.constant(Tensor({k})),
                       tape.constant(Tensor({k})), {{0}});
    CHECK(loss.value()[0] == Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
  }
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng.below(5), k = 1 + rng.below(5), batch = 1 + rng.below(3);
    Tape tape;
    const Tensor e = random_tensor({len * batch, k}, rng, 4.0);
    const Tensor tr = random_tensor({k, k}, rng, 4.0), s = random_tensor({k}, rng), en = random_tensor({k}, rng);
    std::vector<std::vector<std::size_t>> gold(batch, std::vector<std::size_t>(len));
    for (auto& g : gold) {
      for (auto& y : g) y = rng.below(k);
    }
    Var loss = crf_nll(tape.constant(e), tape.constant(tr), tape.constant(s), tape.constant(en), gold);
    CHECK(loss.value()[0] >= -1e-12);
    // mean of per-sequence logZ - gold score
    double expect = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      Tensor one({len, k});
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < k; ++j) one.at(t, j) = e.at(t * batch + b, j);
      }
      expect += brute_force_log_z(one, tr, s, en) - path_score(one, tr, s, en, gold[b]);
    }
    CHECK(loss.value()[0] == Approx(expect / static_cast<double>(batch)).epsilon(1e-10).margin(1e-10));
  }
}

TEST_CASE("crf nll errors", "[taggers][crf]") {
  Tape tape;
  Var e = tape.constant(Tensor({2, 3}));
  Var tr = tape.constant(Tensor({3, 3}));
  Var s = tape.constant(Tensor({3}));
  CHECK_THROWS_AS(crf_nll(e, tr, s, s, {{0, 0, 0}}), ShapeError);
  CHECK_THROWS_AS(crf_nll(e, tr, s, s, {{0, 3}}), InvalidArgument);
  CHECK_THROWS_AS(crf_nll(e, tape.constant(Tensor({2, 2})), s, s, {{0, 0}}), ShapeError);
  CHECK_THROWS_AS(viterbi_decode(Tensor({0, 3}), Tensor({3, 3}), Tensor({3}), Tensor({3})), InvalidArgument);
}

TEST_CASE("crf nll gradient", "[taggers][crf][gradcheck]") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t len = 1 + rng.below(4), k = 2 + rng.below(4), batch = 1 + rng.below(3);
    Parameter e("e", random_tensor({len * batch, k}, rng, 2.0));
    Parameter tr("tr", random_tensor({k, k}, rng));
    Parameter s("s", random_tensor({k}, rng));
    Parameter en("en", random_tensor({k}, rng));
    std::vector<std::vector<std::size_t>> gold(batch, std::vector<std::size_t>(len));
    for (auto& g : gold) {
      for (auto& y : g) y = rng.below(k);
    }
    const auto r = num::grad_check(
        [&](Tape& t) { return crf_nll(t.parameter(e), t.parameter(tr), t.parameter(s), t.parameter(en), gold); },
        {&e, &tr, &s, &en});
    CHECK(r.max_relative_error <= 1e-6);
  }
}

// ---------------------------------------------------------------- LSTM

TEST_CASE("lstm cell examples", "[taggers][lstm]") {
  Tape tape;
  const std::size_t in = 3, h = 2;
  Var x = tape.constant(Tensor({1, in}, {0.5, -1, 2}));
  Var zero_h = tape.constant(Tensor({1, h}));
  auto s = lstm_cell_step(x, zero_h, zero_h, tape.constant(Tensor({in, 4 * h})), tape.constant(Tensor({h, 4 * h})),
                          tape.constant(Tensor({4 * h})));
  CHECK(s.h.value() == Tensor({1, h}));
  CHECK(s.c.value() == Tensor({1, h}));

  // forget gate saturated open, input gate shut: memory passes through
  Tensor b({4 * h});
  for (std::size_t k = 0; k < h; ++k) b[k] = -1000.0;
  for (std::size_t k = h; k < 2 * h; ++k) b[k] = 1000.0;
  Var c_prev = tape.constant(Tensor({1, h}, {0.25, -0.75}));
  Rng rng(1);
  auto s2 = lstm_cell_step(x, tape.constant(Tensor({1, h}, {0.3, 0.1})), c_prev,
                           tape.constant(random_tensor({in, 4 * h}, rng)), tape.constant(random_tensor({h, 4 * h}, rng)),
                           tape.constant(b));
  CHECK(s2.c.value() == c_prev.value());

  CHECK_THROWS_AS(lstm_cell_step(x, zero_h, zero_h, tape.constant(Tensor({2, 4 * h})),
                                 tape.constant(Tensor({h, 4 * h})), tape.constant(Tensor({4 * h}))),
                  ShapeError);
  CHECK_THROWS_AS(lstm_cell_step(x, zero_h, tape.constant(Tensor({1, 3})), tape.constant(Tensor({in, 4 * h})),
                                 tape.constant(Tensor({h, 4 * h})), tape.constant(Tensor({4 * h}))),
                  ShapeError);
}

TEST_CASE("lstm cell matches hand formula", "[taggers][lstm]") {
  Rng rng(3);
  const std::size_t in = 2, h = 2;
  const Tensor x = random_tensor({1, in}, rng), hp = random_tensor({1, h}, rng), cp = random_tensor({1, h}, rng);
  const Tensor wx = random_tensor({in, 4 * h}, rng), wh = random_tensor({h, 4 * h}, rng), b = random_tensor({4 * h}, rng);
  Tape tape;
  auto s = lstm_cell_step(tape.constant(x), tape.constant(hp), tape.constant(cp), tape.constant(wx), tape.constant(wh),
                          tape.constant(b));
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t k = 0; k < h; ++k) {
    auto z = [&](std::size_t gate) {
      const std::size_t col = gate * h + k;
      double acc = b[col];
      for (std::size_t i = 0; i < in; ++i) acc += x[i] * wx.at(i, col);
      for (std::size_t i = 0; i < h; ++i) acc += hp[i] * wh.at(i, col);
      return acc;
    };
    const double c = sig(z(1)) * cp[k] + sig(z(0)) * std::tanh(z(3));
    CHECK(s.c.value()[k] == Approx(c).epsilon(1e-13));
    CHECK(s.h.value()[k] == Approx(sig(z(2)) * std::tanh(c)).epsilon(1e-13));
  }
}

TEST_CASE("lstm cell gradient", "[taggers][lstm][gradcheck]") {
  Rng rng(5);
  const std::size_t in = 3, h = 4, batch = 2;
  Parameter x("x", random_tensor({batch, in}, rng)), hp("h", random_tensor({batch, h}, rng)),
      cp("c", random_tensor({batch, h}, rng));
  Parameter wx("wx", random_tensor({in, 4 * h}, rng)), wh("wh", random_tensor({h, 4 * h}, rng)),
      b("b", random_tensor({4 * h}, rng));
  const Tensor wh_out = random_tensor({batch, h}, rng), wc_out = random_tensor({batch, h}, rng);
  const auto r = num::grad_check(
      [&](Tape& t) {
        auto s = lstm_cell_step(t.parameter(x), t.parameter(hp), t.parameter(cp), t.parameter(wx), t.parameter(wh),
                                t.parameter(b));
        return num::add(num::weighted_sum(s.h, wh_out), num::weighted_sum(s.c, wc_out));
      },
      {&x, &hp, &cp, &wx, &wh, &b});
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("lstm sequence matches stepwise cell", "[taggers][lstm]") {
  Rng rng(6);
  const std::size_t in = 3, h = 2, len = 4, batch = 2;
  const Tensor x = random_tensor({len * batch, in}, rng);
  const Tensor wx = random_tensor({in, 4 * h}, rng), wh = random_tensor({h, 4 * h}, rng), b = random_tensor({4 * h}, rng);
  for (bool reverse : {false, true}) {
    Tape tape;
    Var seq = lstm_sequence(tape.constant(x), batch, tape.constant(wx), tape.constant(wh), tape.constant(b), reverse);
    const Tensor out = seq.value();
    for (std::size_t bi = 0; bi < batch; ++bi) {
      Var hs = tape.constant(Tensor({1, h}));
      Var cs = tape.constant(Tensor({1, h}));
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t t = reverse ? len - 1 - step : step;
        Tensor xt({1, in});
        for (std::size_t i = 0; i < in; ++i) xt[i] = x.at(t * batch + bi, i);
        auto s = lstm_cell_step(tape.constant(xt), hs, cs, tape.constant(wx), tape.constant(wh), tape.constant(b));
        hs = s.h;
        cs = s.c;
        for (std::size_t k = 0; k < h; ++k) CHECK(out.at(t * batch + bi, k) == Approx(hs.value()[k]).epsilon(1e-13));
      }
    }
  }
}

// ---------------------------------------------------------------- Bi-LSTM

TEST_CASE("bilstm shapes", "[taggers][bilstm]") {
  BiLstmTagger m(tiny_bilstm(), tiny_embeddings(5), 1);
  Tape tape;
  CHECK(m.logits(tape, make_batch({"Robert", "Smith", "has", "fever"})).shape() == num::Shape{4, kNumTags});
  CHECK(m.logits(tape, make_batch({"Robert"})).shape() == num::Shape{1, kNumTags});
  CHECK(m.predict({"Robert"}).size() == 1);
  CHECK_THROWS_AS(m.predict({}), InvalidArgument);
  CHECK(m.word_representation("Robert").size() == 5 + 3 + 2);
  CHECK(m.word_representation("Robert") == m.word_representation("Robert"));

  BiLstmConfig full;
  full.word_dim = 300;
  BiLstmTagger big(full, tiny_embeddings(300), 1);
  CHECK(big.word_representation("Smith").size() == 300 + 32 + 8);
  CHECK_THROWS_AS(BiLstmTagger(full, tiny_embeddings(5), 1), InvalidArgument);
}

TEST_CASE("bilstm direction symmetry", "[taggers][bilstm]") {
  auto cfg = tiny_bilstm();
  BiLstmTagger m(cfg, tiny_embeddings(5), 3);
  BiLstmTagger r = m;
  const std::size_t h = cfg.hidden;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::swap(r.lstm(l, 0).wx.value, r.lstm(l, 1).wx.value);
    std::swap(r.lstm(l, 0).wh.value, r.lstm(l, 1).wh.value);
    std::swap(r.lstm(l, 0).b.value, r.lstm(l, 1).b.value);
    if (l == 0) continue;
    // deeper layers read [fwd | bwd]; swap the two input halves
    for (std::size_t d = 0; d < 2; ++d) {
      Tensor& wx = r.lstm(l, d).wx.value;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t c = 0; c < wx.cols(); ++c) std::swap(wx.at(i, c), wx.at(i + h, c));
      }
    }
  }
  Tensor& ow = r.output_weight().value;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t c = 0; c < ow.cols(); ++c) std::swap(ow.at(i, c), ow.at(i + h, c));
  }
  for (const std::vector<std::string>& words : std::vector<std::vector<std::string>>{
           {"Robert", "Smith"}, {"saw", "Dr.", "Smith", "in", "Boston", "."}, {"fever"}}) {
    std::vector<std::string> rev(words.rbegin(), words.rend());
    Tape t1, t2;
    const Tensor a = m.logits(t1, make_batch(words)).value();
    const Tensor b = r.logits(t2, make_batch(rev)).value();
    const std::size_t n = words.size();
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < kNumTags; ++j) CHECK(b.at(n - 1 - t, j) == Approx(a.at(t, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilstm batched equals per-sentence", "[taggers][bilstm]") {
  BiLstmTagger m(tiny_bilstm(), tiny_embeddings(5), 4);
  const std::vector<std::string> a{"Robert", "Smith", "has", "fever"}, b{"the", "patient", "saw", "Dr."};
  Tape t1, t2, t3;
  const Tensor both = m.logits(t1, pack_batch({&a, &b})).value();
  const Tensor ea = m.logits(t2, make_batch(a)).value();
  const Tensor eb = m.logits(t3, make_batch(b)).value();
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      CHECK(both.at(2 * t, j) == Approx(ea.at(t, j)).epsilon(1e-12));
      CHECK(both.at(2 * t + 1, j) == Approx(eb.at(t, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilstm argmax prediction ties go to the lowest tag", "[taggers][bilstm]") {
  BiLstmTagger m(tiny_bilstm(), tiny_embeddings(5), 5);
  m.output_weight().value.fill(0.0);
  m.output_bias().value.fill(0.0);
  CHECK(m.predict({"Robert", "Smith"}) == TagSequence{0, 0});
  m.output_bias().value[tag("B-PERSON")] = 1.0;
  // B B repairs to U U
  CHECK(m.predict({"Robert", "Smith"}) == TagSequence{tag("U-PERSON"), tag("U-PERSON")});
}

TEST_CASE("bilstm full model gradient", "[taggers][bilstm][gradcheck]") {
  BiLstmTagger m(tiny_bilstm(), tiny_embeddings(5), 6);
  const std::vector<std::string> a{"Robert", "Smith", "saw"}, b{"Dr.", "X", "in"};
  const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0}, gb{0, tag("U-PERSON"), 0};
  const auto sb = pack_batch({&a, &b});
  const auto r = num::grad_check([&](Tape& t) { return m.loss(t, sb, {&ga, &gb}); }, m.parameters());
  INFO(r.worst_parameter << "[" << r.worst_index << "] ad " << r.worst_analytic << " fd " << r.worst_numeric);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("bilstm default-size gradient on sampled coordinates", "[taggers][bilstm][gradcheck]") {
  BiLstmConfig cfg;
  cfg.word_dim = 20;
  BiLstmTagger m(cfg, tiny_embeddings(20), 7);
  const std::vector<std::string> a{"Robert", "Smith", "saw"};
  const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0};
  num::GradCheckOptions opts;
  opts.max_coordinates_per_parameter = 12;
  opts.seed = 3;
  const auto r = num::grad_check([&](Tape& t) { return m.loss(t, make_batch(a), {&ga}); }, m.parameters(), opts);
  INFO(r.worst_parameter << "[" << r.worst_index << "] ad " << r.worst_analytic << " fd " << r.worst_numeric);
  CHECK(r.max_relative_error <= 1e-4);
}

// ---------------------------------------------------------------- ID-CNN

TEST_CASE("idcnn shapes", "[taggers][idcnn]") {
  IdCnnTagger m(tiny_idcnn(), tiny_embeddings(5), 1);
  Tape tape;
  CHECK(m.emissions(tape, make_batch({"Robert", "Smith", "has"})).shape() == num::Shape{3, kNumTags});
  CHECK(m.predict({"fever"}).size() == 1);
  CHECK_THROWS_AS(m.predict({}), InvalidArgument);
  CHECK(m.word_representation("Boston").size() == 5 + 2);

  IdCnnConfig full;
  IdCnnTagger big(full, tiny_embeddings(100), 1);
  CHECK(big.word_representation("Boston").size() == 100 + 8);

  IdCnnConfig bad = tiny_idcnn();
  bad.dilations = {1, 2};
  CHECK_THROWS_AS(IdCnnTagger(bad, tiny_embeddings(5), 1), InvalidArgument);
}

TEST_CASE("idcnn delta kernels pass the projection through", "[taggers][idcnn]") {
  IdCnnConfig cfg = tiny_idcnn();
  cfg.filters = kNumTags;
  cfg.block_iterations = 1;
  IdCnnTagger m(cfg, tiny_embeddings(5), 2);
  // non-negative projection so relu is the identity
  for (double& v : m.projection_weight().value.values()) v = std::abs(v);
  for (double& v : m.projection_bias().value.values()) v = 3.0;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Tensor& w = m.conv(0, l).w.value;
    w.fill(0.0);
    for (std::size_t c = 0; c < kNumTags; ++c) w[(1 * kNumTags + c) * kNumTags + c] = 1.0;
    m.conv(0, l).b.value.fill(0.0);
  }
  Tensor& ow = m.output_weight().value;
  ow.fill(0.0);
  for (std::size_t c = 0; c < kNumTags; ++c) ow.at(c, c) = 1.0;
  m.output_bias().value.fill(0.0);

  const std::vector<std::string> words{"Robert", "Smith", "in", "Boston"};
  Tape tape;
  Var reps = m.representations(tape, words);
  Var proj = num::affine(reps, tape.parameter(m.projection_weight()), tape.parameter(m.projection_bias()));
  const Tensor e = m.emissions(tape, make_batch(words)).value();
  CHECK(e == proj.value());
}

TEST_CASE("idcnn receptive field", "[taggers][idcnn]") {
  for (std::size_t iterations : {1, 2}) {
    IdCnnConfig cfg = tiny_idcnn();
    cfg.block_iterations = iterations;
    IdCnnTagger m(cfg, tiny_embeddings(5), 8);
    // keep every unit active so each tap really contributes
    for (double& v : m.projection_bias().value.values()) v = 50.0;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      for (double& v : m.conv(0, l).w.value.values()) v = std::abs(v) * 0.1;
    }
    const std::size_t radius = iterations * (1 + 2 + 1);
    const std::size_t len = 21, centre = 10;
    std::vector<std::string> words(len, "the");
    std::vector<std::string> changed = words;
    changed[centre] = "Boston";
    Tape t1, t2;
    const Tensor a = m.emissions(t1, make_batch(words)).value();
    const Tensor b = m.emissions(t2, make_batch(changed)).value();
    for (std::size_t t = 0; t < len; ++t) {
      bool differs = false;
      for (std::size_t j = 0; j < kNumTags; ++j) differs = differs || a.at(t, j) != b.at(t, j);
      const std::size_t dist = t > centre ? t - centre : centre - t;
      INFO("iterations " << iterations << " position " << t);
      CHECK(differs == (dist <= radius));
    }
  }
  CHECK(num::DilatedConvSpec::receptive_field(3, {1, 2, 1}) == 9);
}

TEST_CASE("idcnn full model gradient", "[taggers][idcnn][gradcheck]") {
  IdCnnTagger m(tiny_idcnn(), tiny_embeddings(5), 9);
  for (double& v : m.transitions().value.values()) v = 0.0;
  Rng rng(1);
  for (double& v : m.transitions().value.values()) v = rng.uniform(-0.5, 0.5);
  const std::vector<std::string> a{"Robert", "Smith", "saw"}, b{"in", "Boston", "."};
  const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0}, gb{0, tag("U-GPE"), 0};
  const auto sb = pack_batch({&a, &b});
  const auto r = num::grad_check([&](Tape& t) { return m.loss(t, sb, {&ga, &gb}); }, m.parameters());
  INFO(r.worst_parameter << "[" << r.worst_index << "] ad " << r.worst_analytic << " fd " << r.worst_numeric);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("idcnn default-size gradient on sampled coordinates", "[taggers][idcnn][gradcheck]") {
  IdCnnConfig cfg;
  cfg.word_dim = 20;
  IdCnnTagger m(cfg, tiny_embeddings(20), 10);
  const std::vector<std::string> a{"Robert", "Smith", "saw"};
  const TagSequence ga{tag("B-PERSON"), tag("L-PERSON"), 0};
  num::GradCheckOptions opts;
  opts.max_coordinates_per_parameter = 12;
  opts.seed = 4;
  const auto r = num::grad_check([&](Tape& t) { return m.loss(t, make_batch(a), {&ga}); }, m.parameters(), opts);
  INFO(r.worst_parameter << "[" << r.worst_index << "] ad " << r.worst_analytic << " fd " << r.worst_numeric);
  CHECK(r.max_relative_error <= 1e-4);
}

// ---------------------------------------------------------------- scoring, batching, training

TEST_CASE("segment scores", "[taggers][metrics]") {
  const TagSequence gold{tag("B-PERSON"), tag("L-PERSON"), 0, tag("U-GPE"), 0, tag("U-DATE")};
  CHECK(score_segments(gold, gold).f1() == 1.0);
  const auto none = score_segments(gold, TagSequence(gold.size(), 0));
  CHECK(none.precision() == 0.0);
  CHECK(none.recall() == 0.0);
  CHECK(none.f1() == 0.0);
  // two right, one wrong boundary (counts as FP and FN), one missed... pick TP=2 FP=1 FN=1
  const TagSequence pred{tag("B-PERSON"), tag("L-PERSON"), 0, tag("U-GPE"), tag("U-DATE"), 0};
  const auto s = score_segments(gold, pred);
  CHECK(s.tp == 2);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.precision() == Approx(2.0 / 3.0));
  CHECK(s.recall() == Approx(2.0 / 3.0));
  CHECK(s.f1() == Approx(2.0 / 3.0));
  // category must match too
  const TagSequence wrong_cat{tag("B-PERSON"), tag("L-PERSON"), 0, tag("U-LOCATION"), 0, tag("U-DATE")};
  CHECK(score_segments(gold, wrong_cat).tp == 2);
  CHECK(token_accuracy({gold}, {pred}) == Approx(4.0 / 6.0));
}

TEST_CASE("length batches", "[taggers][batching]") {
  const auto b = length_batches({3, 5, 3, 3, 5, 1}, 2);
  CHECK(b == std::vector<std::vector<std::size_t>>{{5}, {0, 2}, {3}, {1, 4}});
  CHECK_THROWS_AS(length_batches({1}, 0), InvalidArgument);
  const std::vector<std::string> s3{"a", "b", "c"}, s2{"a", "b"};
  CHECK_THROWS_AS(pack_batch({&s3, &s2}), ShapeError);
  const auto sb = pack_batch({&s3, &s3});
  CHECK(sb.words == std::vector<std::string>{"a", "a", "b", "b", "c", "c"});
}

TEST_CASE("best checkpoint keeps the max-F1 epoch", "[taggers][trainer]") {
  Parameter p("p", Tensor({1}));
  BestCheckpoint best;
  const std::vector<double> f1s{0.2, 0.7, 0.5, 0.7, 0.65, 0.1};
  for (std::size_t e = 0; e < f1s.size(); ++e) {
    p.value[0] = static_cast<double>(e + 1);
    best.observe(e + 1, f1s[e], {&p});
  }
  CHECK(*best.best_epoch() == 2);  // first of the tied maxima
  CHECK(best.best_f1() == 0.7);
  best.restore({&p});
  CHECK(p.value[0] == 2.0);
}

TEST_CASE("corpus split is seeded and disjoint", "[taggers][trainer]") {
  Corpus c;
  for (int i = 0; i < 30; ++i) c.sentences.push_back({{"w" + std::to_string(i)}, {0}});
  auto [tr, dev] = split_corpus(c, 0.1, 5);
  CHECK(tr.size() == 27);
  CHECK(dev.size() == 3);
  auto [tr2, dev2] = split_corpus(c, 0.1, 5);
  CHECK(dev2.sentences[0].words == dev.sentences[0].words);
  for (const auto& d : dev.sentences) {
    for (const auto& t : tr.sentences) CHECK(d.words != t.words);
  }
}

TEST_CASE("train rejects bad corpora", "[taggers][trainer]") {
  BiLstmTagger m(tiny_bilstm(), tiny_embeddings(5), 1);
  CHECK_THROWS_AS(train(m, Corpus{}, {}), InvalidArgument);
  Corpus bad;
  bad.sentences.push_back({{"a", "b"}, {0}});
  CHECK_THROWS_AS(train(m, bad, {}), DataError);
}

TEST_CASE("model file round trip", "[taggers][io]") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::vector<std::string> words{"Dr.", "Robert", "Smith", "saw", "fever", "in", "Boston"};
  Rng rng(12);
  TaggerModel models[] = {BiLstmTagger(tiny_bilstm(), tiny_embeddings(5), 11),
                          IdCnnTagger(tiny_idcnn(), tiny_embeddings(5), 12)};
  for (auto& model : models) {
    // random CRF scores so decoding is not trivially all-O
    if (auto* id = std::get_if<IdCnnTagger>(&model)) {
      for (double& v : id->transitions().value.values()) v = rng.uniform(-1, 1);
      for (double& v : id->output_bias().value.values()) v = rng.uniform(-1, 1);
    }
    const auto path = (dir / ("phiscrub_rt_" + std::string(labels::to_string(arch_of(model))) + ".bin")).string();
    save_model(path, model);
    const TaggerModel loaded = load_model(path);
    CHECK(arch_of(loaded) == arch_of(model));
    CHECK(predict(loaded, words) == predict(model, words));
    std::visit(
        [&](const auto& a) {
          using M = std::decay_t<decltype(a)>;
          const auto& b = std::get<M>(loaded);
          const auto pa = a.parameters();
          const auto pb = b.parameters();
          REQUIRE(pa.size() == pb.size());
          for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
          Tape t1(false), t2(false);
          CHECK(a.representations(t1, words).value() == b.representations(t2, words).value());
        },
        model);
    // bit-identical files
    const auto path2 = path + ".2";
    save_model(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
  }
  CHECK_THROWS_AS(load_model((dir / "phiscrub_missing.bin").string()), DataError);
  num::Archive junk;
  junk.config["format"] = kModelFormat;
  junk.config["arch"] = "crf";
  CHECK_THROWS_AS(from_archive(junk), DataError);
}
