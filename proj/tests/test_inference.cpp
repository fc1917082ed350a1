#include <cmath>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "cae/inference.hpp"
#include "cae/losses.hpp"
#include "doctest.h"
#include "support/model_helpers.hpp"
#include "support/scalar_lstm.hpp"

using namespace cae;
using cae::testing::identity_transfer;
using cae::testing::manual_batch;
using cae::testing::one_hot_rows;
using cae::testing::random_unit_rows;

namespace {

CaeModel tiny_model(std::size_t hidden, std::size_t vocab, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden = hidden;
  return init_model(cfg, vocab, seed);
}

void scribble(std::vector<Tensor> group) {
  for (Tensor& t : group) {
    for (double& v : t.mutable_values()) v += 0.37;
  }
}

}  // namespace

TEST_CASE("greedy decoding emits eos immediately when every candidate ties") {
  CaeModel m = tiny_model(4, 7, 3);
  for (double& v : m.ae1.projection.mutable_values()) v = 0.0;
  const Tensor z = one_hot_rows(1, 4);
  const std::vector<int> out = greedy_decode(m.ae1, z, 8);
  CHECK(out == std::vector<int>{Vocabulary::eos_id});
}

TEST_CASE("greedy decoding never emits pad or bos and breaks ties toward the lowest id") {
  // Saturated gates pin every hidden unit to the same positive constant, so
  // the logits are fixed column sums: pad and bos get the largest score but
  // are not candidates, two real tokens tie exactly, eos trails.
  const std::size_t h = 3, V = 6;
  CaeModel m = tiny_model(h, V, 5);
  for (double& v : m.ae1.decoder.W.mutable_values()) v = 0.0;
  for (double& v : m.ae1.decoder.U.mutable_values()) v = 0.0;
  const std::span<double> b = m.ae1.decoder.b.mutable_values();
  for (std::size_t j = 0; j < h; ++j) {
    b[0 * h + j] = 40.0;   // input gate open
    b[1 * h + j] = -40.0;  // forget gate shut
    b[2 * h + j] = 40.0;   // candidate saturated at +1
    b[3 * h + j] = 40.0;   // output gate open
  }
  const std::span<double> p = m.ae1.projection.mutable_values();
  for (std::size_t i = 0; i < h; ++i) {
    p[i * V + 0] = 3.0;
    p[i * V + 1] = 3.0;
    p[i * V + 2] = -2.0;
    p[i * V + 3] = 0.7;
    p[i * V + 4] = 0.7;  // identical column: exact tie with token 3
    p[i * V + 5] = -2.0;
  }
  const std::vector<int> out = greedy_decode(m.ae1, one_hot_rows(1, h), 5);
  CHECK(out == std::vector<int>(5, 3));
}

TEST_CASE("greedy decoding follows the exhaustive stepwise argmax path") {
  const std::size_t h = 3, V = 6, limit = 3;
  CaeModel m = tiny_model(h, V, 21);
  std::mt19937_64 rng(99);
  const Tensor z = random_unit_rows(1, h, rng);

  // Every legal outcome of length <= limit: eos appears only as a terminal
  // token, shorter sequences must end with it.
  std::vector<std::vector<int>> outcomes;
  for (int a = Vocabulary::eos_id; a < static_cast<int>(V); ++a) {
    if (a == Vocabulary::eos_id) {
      outcomes.push_back({a});
      continue;
    }
    for (int c = Vocabulary::eos_id; c < static_cast<int>(V); ++c) {
      if (c == Vocabulary::eos_id) {
        outcomes.push_back({a, c});
        continue;
      }
      for (int d = Vocabulary::eos_id; d < static_cast<int>(V); ++d) outcomes.push_back({a, c, d});
    }
  }
  CHECK(outcomes.size() == 1 + 3 * (1 + 3 * 4));

  // Filter the outcomes step by step with a plain-array re-computation of the
  // decoder: at each depth only the dominant continuation may survive.
  auto vec = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  const std::vector<double> W = vec(m.ae1.decoder.W.values());
  const std::vector<double> U = vec(m.ae1.decoder.U.values());
  const std::vector<double> b = vec(m.ae1.decoder.b.values());
  const std::vector<double> emb = vec(m.ae1.embedding.values());
  const std::vector<double> proj = vec(m.ae1.projection.values());

  testing::ScalarLstmState st;
  st.h = vec(z.values());
  st.c.assign(h, 0.0);
  int current = Vocabulary::bos_id;
  std::vector<std::vector<int>> survivors = outcomes;
  for (std::size_t t = 0; t < limit; ++t) {
    const std::vector<double> x(emb.begin() + current * static_cast<int>(h),
                                emb.begin() + (current + 1) * static_cast<int>(h));
    st = testing::scalar_lstm_step(W, U, b, h, h, x, st);
    std::vector<double> logits(V, 0.0);
    for (std::size_t j = 0; j < V; ++j) {
      for (std::size_t i = 0; i < h; ++i) logits[j] += st.h[i] * proj[i * V + j];
    }
    int best = Vocabulary::eos_id;
    for (std::size_t j = Vocabulary::eos_id + 1; j < V; ++j) {
      if (logits[j] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    std::erase_if(survivors,
                  [&](const std::vector<int>& s) { return s.size() <= t || s[t] != best; });
    if (best == Vocabulary::eos_id) break;
    current = best;
  }
  REQUIRE(survivors.size() == 1);
  CHECK(greedy_decode(m.ae1, z, limit) == survivors[0]);
}

TEST_CASE("greedy decoding validates its latent") {
  CaeModel m = tiny_model(4, 7, 11);
  CHECK_THROWS_AS(greedy_decode(m.ae1, Tensor::full({4}, 0.6), 4), ContractError);
  CHECK_THROWS_AS(greedy_decode(m.ae1, one_hot_rows(1, 5), 4), DimensionError);
  CHECK_THROWS_AS(greedy_decode(m.ae1, one_hot_rows(2, 4), 4), DimensionError);
}

TEST_CASE("transfer with identity mappers reduces to target-decoder reconstruction") {
  CaeModel m = tiny_model(5, 9, 17);
  m.t12 = identity_transfer(5);
  m.t21 = identity_transfer(5);
  const std::vector<int> sentence{4, 6, 8, 5};
  const Tensor z = encode(m.ae1, manual_batch({sentence}, StyleLabel::s1));

  const TransferResult r = transfer_text(m, sentence, Direction::s1_to_s2, 10);
  CHECK(r.transferred_tokens == greedy_decode(m.ae2, z, 10));
  CHECK(r.latent_cycle_residual < 1e-9);
  CHECK(r.source_tokens == sentence);
  CHECK(r.direction == Direction::s1_to_s2);
}

TEST_CASE("transfer touches only the source encoder, one mapper, and the target decoder") {
  TrainConfig cfg;
  cfg.hidden = 6;
  const std::vector<int> sentence{4, 5, 6, 7};
  auto run = [&](void (*tweak)(CaeModel&)) {
    CaeModel m = init_model(cfg, 12, 75);
    tweak(m);
    return transfer_text(m, sentence, Direction::s1_to_s2, 10);
  };
  const TransferResult r0 = run([](CaeModel&) {});

  SUBCASE("the source decoder and projection are inert") {
    const TransferResult r = run([](CaeModel& m) {
      scribble({m.ae1.decoder.W, m.ae1.decoder.U, m.ae1.decoder.b, m.ae1.projection});
    });
    CHECK(r.transferred_tokens == r0.transferred_tokens);
    CHECK(r.latent_cycle_residual == r0.latent_cycle_residual);
  }
  SUBCASE("the target encoder is inert") {
    const TransferResult r = run([](CaeModel& m) {
      scribble({m.ae2.encoder.W, m.ae2.encoder.U, m.ae2.encoder.b});
    });
    CHECK(r.transferred_tokens == r0.transferred_tokens);
    CHECK(r.latent_cycle_residual == r0.latent_cycle_residual);
  }
  SUBCASE("both discriminators are inert") {
    const TransferResult r = run([](CaeModel& m) {
      scribble({m.d1.W1, m.d1.b1, m.d1.W2, m.d1.b2, m.d2.W1, m.d2.b1, m.d2.W2, m.d2.b2});
    });
    CHECK(r.transferred_tokens == r0.transferred_tokens);
    CHECK(r.latent_cycle_residual == r0.latent_cycle_residual);
  }
  SUBCASE("the reverse mapper feeds only the residual diagnostic") {
    const TransferResult r =
        run([](CaeModel& m) { scribble({m.t21.W1, m.t21.b1, m.t21.W2, m.t21.b2}); });
    CHECK(r.transferred_tokens == r0.transferred_tokens);
    CHECK(r.latent_cycle_residual != r0.latent_cycle_residual);
  }
  SUBCASE("the source encoder is live") {
    const TransferResult r = run([](CaeModel& m) { scribble({m.ae1.embedding}); });
    CHECK(r.latent_cycle_residual != r0.latent_cycle_residual);
  }
  SUBCASE("the forward mapper is live") {
    const TransferResult r =
        run([](CaeModel& m) { scribble({m.t12.W1, m.t12.b1, m.t12.W2, m.t12.b2}); });
    CHECK(r.latent_cycle_residual != r0.latent_cycle_residual);
  }
  SUBCASE("the target decoder is live") {
    const TransferResult r = run([](CaeModel& m) {
      for (double& v : m.ae2.projection.mutable_values()) v = 0.0;
    });
    CHECK(r.transferred_tokens == std::vector<int>{Vocabulary::eos_id});
    CHECK(r.transferred_tokens != r0.transferred_tokens);
  }
}

TEST_CASE("latent cycle residuals agree with the training cycle penalty") {
  CaeModel m = tiny_model(4, 10, 31);
  const std::vector<int> s1{4, 5, 6};
  const std::vector<int> s2{7, 8};
  const TransferResult r1 = transfer_text(m, s1, Direction::s1_to_s2, 8);
  const TransferResult r2 = transfer_text(m, s2, Direction::s2_to_s1, 8);

  const Tensor z1 = encode(m.ae1, manual_batch({s1}, StyleLabel::s1));
  const Tensor z2 = encode(m.ae2, manual_batch({s2}, StyleLabel::s2));
  const double penalty = cycle_loss(m, z1, z2).scalar_value();
  CHECK(penalty == r1.latent_cycle_residual + r2.latent_cycle_residual);
}

TEST_CASE("transfer rejects empty input and a zero decode budget") {
  CaeModel m = tiny_model(4, 7, 13);
  CHECK_THROWS_AS(transfer_text(m, {}, Direction::s1_to_s2, 8), ContractError);
  CHECK_THROWS_AS(transfer_text(m, {4, 5}, Direction::s2_to_s1, 0), ContractError);
}

TEST_CASE("transferred outputs always satisfy the token invariants") {
  std::mt19937_64 rng(2024);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CaeModel m = tiny_model(4, 9, seed);
    for (int rep = 0; rep < 4; ++rep) {
      std::uniform_int_distribution<int> tok(Vocabulary::num_specials, 8);
      std::uniform_int_distribution<std::size_t> len(1, 6);
      std::vector<int> sentence(len(rng));
      for (int& t : sentence) t = tok(rng);
      const Direction dir = rep % 2 == 0 ? Direction::s1_to_s2 : Direction::s2_to_s1;

      const TransferResult r = transfer_text(m, sentence, dir, 7);
      REQUIRE(!r.transferred_tokens.empty());
      CHECK(r.transferred_tokens.size() <= 7);
      for (std::size_t i = 0; i < r.transferred_tokens.size(); ++i) {
        CHECK(r.transferred_tokens[i] != Vocabulary::pad_id);
        CHECK(r.transferred_tokens[i] != Vocabulary::bos_id);
        if (i + 1 < r.transferred_tokens.size()) {
          CHECK(r.transferred_tokens[i] != Vocabulary::eos_id);
        }
      }
      CHECK((r.transferred_tokens.back() == Vocabulary::eos_id ||
             r.transferred_tokens.size() == 7));
      CHECK(std::isfinite(r.latent_cycle_residual));

      const TransferResult again = transfer_text(m, sentence, dir, 7);
      CHECK(again.transferred_tokens == r.transferred_tokens);
      CHECK(again.latent_cycle_residual == r.latent_cycle_residual);
    }
  }
}

TEST_CASE("corpus transfer preserves order and direction; surfaces strip the terminal eos") {
  const std::vector<std::string> lines{"aa bb cc", "bb cc dd", "dd aa"};
  const Vocabulary vocab = build_vocabulary_from_lines(lines, 10);
  CaeModel m = tiny_model(4, vocab.size(), 41);

  const Corpus c1 = corpus_from_lines(lines, vocab, StyleLabel::s1);
  const std::vector<TransferResult> out1 = transfer_corpus(m, c1, 6);
  REQUIRE(out1.size() == c1.sentences.size());
  for (std::size_t i = 0; i < out1.size(); ++i) {
    CHECK(out1[i].source_tokens == c1.sentences[i]);
    CHECK(out1[i].direction == Direction::s1_to_s2);
    CHECK(out1[i].transferred_tokens ==
          transfer_text(m, c1.sentences[i], Direction::s1_to_s2, 6).transferred_tokens);
  }

  const Corpus c2 = corpus_from_lines(lines, vocab, StyleLabel::s2);
  CHECK(transfer_corpus(m, c2, 6)[0].direction == Direction::s2_to_s1);

  TransferResult surface;
  surface.transferred_tokens = {vocab.id_of("bb"), vocab.id_of("aa"), Vocabulary::eos_id};
  CHECK(transferred_sentence(surface, vocab) == "bb aa");
  surface.transferred_tokens = {Vocabulary::eos_id};
  CHECK(transferred_sentence(surface, vocab).empty());
  surface.transferred_tokens = {vocab.id_of("cc"), vocab.id_of("dd")};
  CHECK(transferred_sentence(surface, vocab) == "cc dd");
}
