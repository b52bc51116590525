#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "alttext/captioner.hpp"
#include "alttext/error.hpp"
#include "alttext/train.hpp"

using namespace alttext;
using namespace alttext::captioner;

namespace {

ModelConfig tiny(int layers = 1, Variant v = Variant::TextAndImage) {
  ModelConfig c;
  c.d_enc = 8;
  c.k = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.n_layers = layers;
  c.vocab_size = 10;
  c.variant = v;
  c.seed = 21;
  return c;
}

const TensorInfo& tensor(const ModelConfig& c, const std::string& name) {
  static std::vector<TensorInfo> table;
  table = tensor_table(c);
  for (const auto& t : table)
    if (t.name == name) return t;
  FAIL("no tensor " << name);
  return table.front();
}

void scale_params(ModelState& s, double f) {
  for (auto& p : s.params) p *= f;
}

std::vector<float> image(std::mt19937_64& rng, int d) {
  std::vector<float> v(static_cast<std::size_t>(d));
  std::normal_distribution<float> g;
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("config and parameter layout") {
  ModelConfig c;
  c.vocab_size = 100;
  CHECK_NOTHROW(c.validate());
  CHECK(c.mapper_hidden() == (512 + 10 * 64) / 2);
  CHECK(c.seq_len() == 10 + 302);
  c.max_seq_len = 311;
  CHECK_THROWS_AS(c.validate(), Error);
  c.max_seq_len = 0;
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  const auto t = tiny();
  const auto table = tensor_table(t);
  CHECK(table.front().name == "mapper.w1");
  std::size_t total = 0;
  for (const auto& x : table) {
    CHECK(x.offset == total);
    total += x.size();
  }
  CHECK(total == parameter_count(t));
}

TEST_CASE("map_prefix") {
  std::mt19937_64 rng(1);
  SUBCASE("zero mapper weights give the output bias") {
    const auto c = tiny();
    ModelState s = init_state(c);
    for (const char* name : {"mapper.w1", "mapper.b1", "mapper.w2"}) {
      const auto& t = tensor(c, name);
      std::fill_n(s.params.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), 0.0);
    }
    const auto& b2 = tensor(c, "mapper.b2");
    for (std::size_t i = 0; i < b2.size(); ++i) s.params[b2.offset + i] = 0.1 * static_cast<double>(i);
    const auto img = image(rng, 8);
    const auto p = map_prefix(s, img);
    REQUIRE(p.rows() == 2);
    REQUIRE(p.cols() == 8);
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 8; ++k) CHECK(p(r, k) == doctest::Approx(0.1 * (r * 8 + k)));
  }
  SUBCASE("default shape and determinism") {
    ModelConfig c;
    c.vocab_size = 20;
    const auto s = init_state(c);
    const auto img = image(rng, 512);
    const auto a = map_prefix(s, img);
    CHECK(a.rows() == 10);
    CHECK(a.cols() == 64);
    CHECK(a == map_prefix(s, img));
    CHECK_THROWS_AS(map_prefix(s, image(rng, 511)), Error);
  }
}

TEST_CASE("build_input layout") {
  ModelConfig c;
  c.vocab_size = 20;
  std::mt19937_64 rng(2);
  const auto img = image(rng, 512);
  const std::vector<TokenId> tweet{4, 5, 6, 7, 8}, alt{9, 10, 11, 12, 13, 14, 15};
  auto layout = [&](Variant v) {
    c.variant = v;
    const auto s = init_state(c);
    Example ex{img, tweet, alt, {}};
    return build_example_input(s, ex);
  };
  const auto full = layout(Variant::TextAndImage);
  CHECK(full.length() == 23);
  CHECK(full.prefix_rows == 10);
  int mask = 0;
  for (auto m : full.mask) mask += m;
  CHECK(mask == 8);
  CHECK(full.targets.back() == kEos);
  CHECK(layout(Variant::ImageOnly).length() == 18);
  const auto text_only = layout(Variant::TextOnly);
  CHECK(text_only.prefix_rows == 0);
  CHECK(text_only.length() == 13);

  c.variant = Variant::TextAndImage;
  const auto s = init_state(c);
  const auto prefix = map_prefix(s, img);
  const std::vector<TokenId> long_tweet(200, 4), long_alt(150, 5);
  CHECK_THROWS_AS(build_input(s, &prefix, long_tweet, long_alt), Error);
}

TEST_CASE("forward") {
  std::mt19937_64 rng(3);
  auto c = tiny(2);
  ModelState s = init_state(c);
  scale_params(s, 20.0);
  const auto img = image(rng, 8);
  const auto prefix = map_prefix(s, img);
  const std::vector<TokenId> tweet{4, 5, 6}, alt{7, 8, 9, 4};
  const auto in = build_input(s, &prefix, tweet, alt);
  const auto logits = forward(s, in);
  CHECK(logits.rows() == in.length());
  CHECK(logits.cols() == c.vocab_size);
  CHECK(logits.allFinite());

  SUBCASE("causality") {
    for (int j = 1; j < in.length(); ++j) {
      SequenceInput bumped = in;
      // a constant shift would vanish in layer norm
      for (int col = 0; col < bumped.embedded.cols(); ++col) bumped.embedded(j, col) += 0.1 * (col + 1);
      const auto other = forward(s, bumped);
      CHECK(other.topRows(j) == logits.topRows(j));
      CHECK(other.row(j) != logits.row(j));
    }
  }
  SUBCASE("zero layers reduce to tied embeddings") {
    auto c0 = tiny(0);
    const auto s0 = init_state(c0);
    const auto p0 = map_prefix(s0, img);
    const auto in0 = build_input(s0, &p0, tweet, alt);
    const auto& emb = tensor(c0, "decoder.tok_emb");
    const Eigen::Map<const Matrix> E(s0.params.data() + emb.offset, emb.rows, emb.cols);
    const Matrix expect = in0.embedded * E.transpose();
    CHECK((forward(s0, in0) - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("forward_last matches the full pass") {
    const auto last = forward_last(s, in);
    CHECK((last - logits.row(logits.rows() - 1)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss") {
  Matrix uniform = Matrix::Zero(3, 7);
  const std::vector<TokenId> targets{1, 2, 3};
  const std::vector<std::uint8_t> all{1, 1, 1}, none{0, 0, 0};
  CHECK(loss(uniform, targets, all) == doctest::Approx(std::log(7.0)));
  Matrix peaked = Matrix::Zero(3, 7);
  for (int i = 0; i < 3; ++i) peaked(i, targets[static_cast<std::size_t>(i)]) = 60.0;
  CHECK(loss(peaked, targets, all) < 1e-20);
  CHECK_THROWS_AS(loss(uniform, targets, none), Error);

  // rows (0.5, -1, 2), (1, 1, 0), (3, 0, 0); targets 2, 0, 1; only rows 0 and 2 count
  Matrix m(3, 3);
  m << 0.5, -1, 2, 1, 1, 0, 3, 0, 0;
  const std::vector<TokenId> t{2, 0, 1};
  const std::vector<std::uint8_t> mk{1, 0, 1};
  const double l0 = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0)) - 2.0;
  const double l2 = std::log(std::exp(3.0) + 2.0) - 0.0;
  CHECK(std::abs(loss(m, t, mk) - (l0 + l2) / 2.0) < 1e-10);
}

TEST_CASE("gradient checks") {
  std::mt19937_64 rng(4);
  const auto img = image(rng, 8);
  Example ex{img, {4, 5}, {6, 7, 8}, {}};
  SUBCASE("linear-only degenerate model") {
    ModelState s = init_state(tiny(0));
    scale_params(s, 10.0);
    CHECK(grad_check(s, ex).max_rel_error < 1e-6);
  }
  SUBCASE("one-layer transformer") {
    ModelState s = init_state(tiny(1));
    scale_params(s, 3.0);
    CHECK(grad_check(s, ex).max_rel_error < 1e-4);
  }
  SUBCASE("empty mask") {
    const ModelState s = init_state(tiny(1));
    ex.loss_mask.assign(static_cast<std::size_t>(build_example_input(s, ex).length()), 0);
    CHECK_THROWS_AS(grad_check(s, ex), Error);
  }
}

TEST_CASE("model properties") {
  std::mt19937_64 rng(5);
  auto c = tiny(2);
  ModelState s = init_state(c);
  scale_params(s, 15.0);
  const auto img = image(rng, 8);
  const std::vector<TokenId> tweet{4, 5, 6}, alt{7, 8, 9, 5, 6};

  SUBCASE("sequence NLL is the sum of step NLLs") {
    const Example ex{img, tweet, alt, {}};
    const NllSum total = example_nll(s, ex);
    const CaptionContext ctx(s, img, tweet);
    std::vector<TokenId> gen;
    double steps = 0.0;
    std::vector<TokenId> targets = alt;
    targets.push_back(kEos);
    for (TokenId t : targets) {
      const auto lg = ctx.next_logits(gen);
      double mx = *std::max_element(lg.begin(), lg.end()), z = 0;
      for (double v : lg) z += std::exp(v - mx);
      steps += mx + std::log(z) - lg[static_cast<std::size_t>(t)];
      gen.push_back(t);
    }
    CHECK(total.tokens == 6);
    CHECK(std::abs(total.nll - steps) < 1e-6);
  }
  SUBCASE("empty tweet equals the image-only layout") {
    ModelState io = s;
    io.config.variant = Variant::ImageOnly;
    const auto prefix = map_prefix(s, img);
    const auto a = forward(s, build_input(s, &prefix, {}, alt));
    const auto b = forward(io, build_input(io, &prefix, tweet, alt));
    CHECK(a == b);
  }
  SUBCASE("checkpoint round trip is bit-exact") {
    s.adam_m.assign(s.params.size(), 0.25);
    s.adam_v.assign(s.params.size(), 0.5);
    s.step = 77;
    const auto path = std::filesystem::temp_directory_path() / "alttext_ckpt_test.attm";
    save_checkpoint(s, path);
    const auto back = load_checkpoint(path);
    CHECK(back == s);
    const auto prefix = map_prefix(s, img);
    const auto in = build_input(s, &prefix, tweet, alt);
    CHECK(forward(back, in) == forward(s, in));
    std::filesystem::remove(path);
  }
}

TEST_CASE("training") {
  std::mt19937_64 rng(6);
  std::vector<std::vector<float>> images;
  for (int i = 0; i < 64; ++i) images.push_back(image(rng, 8));
  const auto frozen = images;
  std::vector<Example> data;
  for (int i = 0; i < 64; ++i) {
    const TokenId a = 4 + i % 3, b = 7 + (i / 3) % 3;
    data.push_back(Example{images[static_cast<std::size_t>(i)], {b}, {a, b, 4}, {}});
  }
  TrainHyper h;
  h.lr = 3e-3;
  h.batch_size = 16;
  h.max_epochs = 5;
  h.patience = 100;
  const auto r = train(tiny(1), data, data, h);
  REQUIRE(r.log.size() == 5);
  for (std::size_t e = 1; e < r.log.size(); ++e) CHECK(r.log[e].train_nll < r.log[e - 1].train_nll);
  CHECK(images == frozen);
  CHECK(r.last.step == 20);

  h.patience = 0;
  h.max_epochs = 200;
  h.lr = 0.05;
  const auto p0 = train(tiny(1), data, std::span<const Example>(data).first(8), h);
  REQUIRE(p0.log.size() < 200);
  for (std::size_t e = 1; e + 1 < p0.log.size(); ++e) CHECK(p0.log[e].val_nll < p0.log[e - 1].val_nll);
  CHECK(p0.log.back().val_nll >= p0.best_val_nll);

  CHECK_THROWS_AS(train(tiny(1), std::span<const Example>{}, data, h), Error);
}
