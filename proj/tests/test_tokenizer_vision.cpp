#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "alttext/binio.hpp"
#include "alttext/error.hpp"
#include "alttext/raster.hpp"
#include "alttext/tokenizer.hpp"
#include "alttext/vision.hpp"

using namespace alttext;
namespace fs = std::filesystem;

TEST_CASE("vocabulary construction") {
  const std::vector<std::string> c1{"a a b"};
  const Vocab v = Vocab::build(c1, 6);
  CHECK(v.size() == 6);
  CHECK(v.id_of("a") == 4);
  CHECK(v.id_of("b") == 5);

  const std::vector<std::string> c2{"y x"};
  const Vocab tie = Vocab::build(c2, 10);
  CHECK(tie.id_of("x") == 4);
  CHECK(tie.id_of("y") == 5);

  const Vocab empty = Vocab::build(std::vector<std::string>{}, 10);
  CHECK(empty.size() == kNumSpecials);

  const std::vector<std::string> c3{"The the THE cat cat dog"};
  const Vocab cut = Vocab::build(c3, 5);
  CHECK(cut.size() == 5);
  CHECK(cut.id_of("the") == 4);
  CHECK(cut.id_of("cat") == kUnk);
}

TEST_CASE("encode and decode") {
  const std::vector<std::string> c{"a a b"};
  const Vocab v = Vocab::build(c, 6);
  CHECK(v.encode("a b") == std::vector<TokenId>{4, 5});
  CHECK(v.encode("", true) == std::vector<TokenId>{kBos, kEos});
  CHECK(v.encode("A zebra") == std::vector<TokenId>{4, kUnk});
  CHECK(v.decode(std::vector<TokenId>{kBos, 4, 5, kEos}) == "a b");
  CHECK(v.decode(std::vector<TokenId>{}) == "");
  CHECK(v.decode(std::vector<TokenId>{kPad, kPad}) == "");
  CHECK(v.decode(std::vector<TokenId>{4, kUnk}) == "a " + std::string(kUnkSurface));
  CHECK(v.decode(v.encode("b a b")) == "b a b");
  CHECK_THROWS_AS(v.decode(std::vector<TokenId>{6}), Error);
}

TEST_CASE("vocabulary file round trip") {
  const std::vector<std::string> c{"one two two three three three"};
  const Vocab v = Vocab::build(c, 100);
  const auto path = fs::temp_directory_path() / "alttext_vocab_test.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "three");
  fs::remove(path);
}

namespace {

Raster random_image(std::mt19937_64& rng, int w, int h, int c) {
  Raster r(w, h, c);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng());
  return r;
}

vision::ImageEmbedding unit(std::string id, int axis) {
  vision::ImageEmbedding e{std::move(id), std::vector<float>(vision::kEmbeddingDim, 0.0f)};
  e.vec[static_cast<std::size_t>(axis)] = 1.0f;
  return e;
}

}  // namespace

TEST_CASE("toy encoder") {
  std::mt19937_64 rng(9);
  const Raster img = random_image(rng, 40, 30, 3);
  const auto a = vision::toy_encode(img, 7, "x");
  const auto b = vision::toy_encode(img, 7, "x");
  CHECK(a.vec == b.vec);
  CHECK(vision::dot(a.vec, b.vec) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(vision::toy_encode(img, 8).vec != a.vec);
  const vision::ToyEncoder enc(3);
  for (int i = 0; i < 100; ++i) {
    const auto e = enc.encode(random_image(rng, 8 + static_cast<int>(rng() % 60), 8 + static_cast<int>(rng() % 60), 1), "r");
    double n = 0;
    for (float x : e.vec) {
      CHECK(std::isfinite(x));
      n += double{x} * x;
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // brightness shifts never produce non-finite output
  for (int level : {0, 1, 128, 255}) {
    const auto e = enc.encode(Raster(16, 16, 1, static_cast<std::uint8_t>(level)), "c");
    for (float x : e.vec) CHECK(std::isfinite(x));
  }
}

TEST_CASE("nearest_neighbor") {
  const std::vector<vision::ImageEmbedding> index{unit("e1", 0), unit("e2", 1)};
  CHECK(vision::nearest_neighbor(unit("q", 0), index) == "e1");
  CHECK(vision::nearest_neighbor(index[1], index) == "e2");
  CHECK_THROWS_AS(vision::nearest_neighbor(unit("q", 0), std::vector<vision::ImageEmbedding>{}), Error);

  const std::vector<vision::ImageEmbedding> tied{unit("zz", 3), unit("aa", 3)};
  CHECK(vision::nearest_neighbor(unit("q", 3), tied) == "aa");

  std::mt19937_64 rng(11);
  std::normal_distribution<float> g;
  std::vector<vision::ImageEmbedding> big;
  for (int i = 0; i < 50; ++i) {
    vision::ImageEmbedding e{"v" + std::to_string(i), std::vector<float>(vision::kEmbeddingDim)};
    for (auto& x : e.vec) x = g(rng);
    vision::normalize(e.vec);
    big.push_back(std::move(e));
  }
  for (int q = 0; q < 20; ++q) {
    vision::ImageEmbedding query{"q", std::vector<float>(vision::kEmbeddingDim)};
    for (auto& x : query.vec) x = g(rng);
    vision::normalize(query.vec);
    std::size_t best = 0;
    double best_s = -2;
    for (std::size_t i = 0; i < big.size(); ++i) {
      double s = 0;
      for (int k = 0; k < vision::kEmbeddingDim; ++k) s += double{query.vec[k]} * big[i].vec[k];
      if (s > best_s) { best_s = s; best = i; }
    }
    CHECK(vision::nearest_neighbor(query, big) == big[best].image_id);
    auto shuffled = big;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(vision::nearest_neighbor(query, shuffled) == big[best].image_id);
  }
}

TEST_CASE("embedding file") {
  const auto path = fs::temp_directory_path() / "alttext_emb_test.atte";
  std::mt19937_64 rng(12);
  vision::EmbeddingMap m;
  for (int i = 0; i < 5; ++i) {
    vision::ImageEmbedding e{"id" + std::to_string(i), std::vector<float>(vision::kEmbeddingDim)};
    for (auto& x : e.vec) x = static_cast<float>(static_cast<double>(rng() % 1000) - 500.0);
    vision::normalize(e.vec);
    m.emplace(e.image_id, e);
  }
  vision::save_embeddings(m, path);
  const auto back = vision::load_embeddings(path);
  REQUIRE(back.size() == m.size());
  for (const auto& [id, e] : m) {
    for (int k = 0; k < vision::kEmbeddingDim; ++k) CHECK(std::abs(back.at(id).vec[k] - e.vec[k]) < 1e-7);
  }

  auto write_raw = [&](std::uint32_t dim, std::vector<std::string> ids, const char* magic) {
    std::ofstream out(path, std::ios::binary);
    binio::write_magic(out, magic);
    binio::write_u32(out, static_cast<std::uint32_t>(ids.size()));
    binio::write_u32(out, dim);
    for (const auto& id : ids) {
      binio::write_short_string(out, id);
      for (std::uint32_t k = 0; k < dim; ++k) binio::write_f32(out, k == 0 ? 1.0f : 0.0f);
    }
  };
  auto code_of = [&]() {
    try {
      vision::load_embeddings(path);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  write_raw(511, {"a"}, "ATTE");
  CHECK(code_of() == Errc::DimensionMismatch);
  write_raw(512, {"a", "a"}, "ATTE");
  CHECK(code_of() == Errc::DuplicateId);
  write_raw(512, {"a"}, "NOPE");
  CHECK(code_of() == Errc::BadMagic);
  fs::remove(path);
}
