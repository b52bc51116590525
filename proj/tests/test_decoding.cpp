#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "alttext/decoding.hpp"
#include "alttext/error.hpp"
#include "oracles.hpp"
#include "toy_models.hpp"

using namespace alttext;
using namespace alttext::decoding;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool has_repeated_trigram(const std::vector<TokenId>& ids) {
  std::set<std::vector<TokenId>> seen;
  for (std::size_t i = 0; i + 3 <= ids.size(); ++i) {
    if (!seen.insert({ids[i], ids[i + 1], ids[i + 2]}).second) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("block_trigrams") {
  // a b c a b -> c is blocked
  const std::vector<TokenId> h{4, 5, 6, 4, 5};
  std::vector<double> logits(8, 0.0);
  block_trigrams(h, logits);
  CHECK(logits[6] == -kInf);
  for (int t : {0, 1, 2, 3, 4, 5, 7}) CHECK(logits[static_cast<std::size_t>(t)] == 0.0);

  std::vector<double> short_logits(8, 1.0);
  block_trigrams(std::vector<TokenId>{4}, short_logits);
  CHECK(short_logits == std::vector<double>(8, 1.0));
}

TEST_CASE("step_log_probs masks specials") {
  DecodeConfig dc;
  const auto lp = step_log_probs({}, std::vector<double>(6, 0.0), dc);
  CHECK(lp[kPad] == -kInf);
  CHECK(lp[kBos] == -kInf);
  CHECK(lp[kUnk] == -kInf);
  CHECK(lp[kEos] == doctest::Approx(std::log(1.0 / 3.0)));
  dc.allow_unk = true;
  CHECK(step_log_probs({}, std::vector<double>(6, 0.0), dc)[kUnk] == doctest::Approx(std::log(0.25)));
}

TEST_CASE("greedy") {
  DecodeConfig dc;
  dc.method = Method::Greedy;
  const NextLogits eos_first = [](std::span<const TokenId>) {
    std::vector<double> v(8, 0.0);
    v[kEos] = 50.0;
    return v;
  };
  const auto c = greedy(eos_first, dc);
  CHECK(c.ids == std::vector<TokenId>{kEos});
  CHECK(Vocab().decode(c.ids).empty());

  dc.max_len = 7;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    CHECK(greedy(toy::random_lm(seed, 9), dc).ids.size() <= 7);
  }
  dc.beam_size = 0;
  CHECK_THROWS_AS(greedy(eos_first, dc), Error);
}

TEST_CASE("beam search") {
  SUBCASE("beam 1 equals greedy") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      for (bool block : {false, true}) {
        DecodeConfig dc;
        dc.beam_size = 1;
        dc.max_len = 12;
        dc.block_trigrams = block;
        const auto lm = toy::random_lm(seed, 8, 2.0);
        const auto b = beam_search(lm, dc);
        REQUIRE(b.size() == 1);
        const auto g = greedy(lm, dc);
        CHECK(b[0].ids == g.ids);
        CHECK(b[0].score == doctest::Approx(g.score));
      }
    }
  }
  SUBCASE("ordering and score bounds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      DecodeConfig dc;
      dc.max_len = 6;
      const auto out = beam_search(toy::random_lm(seed, 12), dc);
      REQUIRE(!out.empty());
      CHECK(out.size() <= 5);
      for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].beam_rank == static_cast<int>(i));
        CHECK(out[i].score <= 0.0);
        CHECK((out[i].ids.back() == kEos || out[i].ids.size() == 6u));
        if (i) CHECK(out[i - 1].score >= out[i].score);
      }
    }
  }
  SUBCASE("matches enumeration on small vocabularies") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const int vocab = 5 + static_cast<int>(seed % 2);
      const int max_len = 1 + static_cast<int>(seed % 3);
      DecodeConfig dc;
      dc.max_len = max_len;
      const auto lm = toy::random_lm(seed, vocab);
      const auto logp = [&](const std::vector<int>& prefix) {
        std::vector<bool> allowed(static_cast<std::size_t>(vocab), true);
        allowed[kPad] = allowed[kBos] = allowed[kUnk] = false;
        return oracle::log_softmax(lm(prefix), allowed);
      };
      const auto expect = oracle::beam_reference(logp, kEos, max_len, 5);
      const auto got = beam_search(lm, dc);
      REQUIRE(got.size() == expect.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].ids == expect[i].ids);
        CHECK(std::abs(got[i].score - expect[i].score) < 1e-9);
      }
    }
  }
  SUBCASE("blocking removes repeated trigrams") {
    int repeats_without = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      DecodeConfig dc;
      dc.max_len = 25;
      dc.beam_size = 3;
      const auto lm = toy::markov_lm(seed, 7);
      repeats_without += has_repeated_trigram(beam_search(lm, dc)[0].ids);
      dc.block_trigrams = true;
      for (const auto& c : beam_search(lm, dc)) CHECK_FALSE(has_repeated_trigram(c.ids));
    }
    CHECK(repeats_without > 0);
  }
}

TEST_CASE("rerank") {
  const std::vector<std::string> corpus{"red barn at sunset a dog"};
  const Vocab v = Vocab::build(corpus, 50);
  const Candidate barn{v.encode("red barn at sunset"), -3.0, 1};
  const Candidate dog{v.encode("a dog"), -1.0, 0};
  const std::vector<Candidate> both{dog, barn};
  CHECK(rerank(both, "our red barn at sunset", Rerank::RougeL, v).ids == barn.ids);
  CHECK(rerank(std::vector<Candidate>{dog}, "anything", Rerank::Bleu, v).ids == dog.ids);
  const std::vector<Candidate> zeros{barn, dog};
  CHECK(rerank(zeros, "nothing shared", Rerank::RougeL, v).beam_rank == 0);
  CHECK(rerank(zeros, "nothing shared", Rerank::None, v).beam_rank == 0);
  CHECK_THROWS_AS(rerank(std::vector<Candidate>{}, "x", Rerank::RougeL, v), Error);
}

TEST_CASE("labels and parsing") {
  DecodeConfig dc;
  dc.method = Method::Greedy;
  CHECK(method_label(dc) == "Greedy");
  dc.block_trigrams = true;
  CHECK(method_label(dc) == "Greedy (NR)");
  dc.method = Method::BeamSearch;
  dc.block_trigrams = false;
  CHECK(method_label(dc) == "BS");
  dc.block_trigrams = true;
  dc.rerank = Rerank::RougeL;
  CHECK(method_label(dc) == "BS (NR) + RR");
  CHECK(parse_method("greedy") == Method::Greedy);
  CHECK(parse_rerank("bleu") == Rerank::Bleu);
  CHECK_THROWS_AS(parse_method("sample"), Error);
}
