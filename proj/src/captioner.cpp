#include "alttext/captioner.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "alttext/binio.hpp"
#include "alttext/error.hpp"

namespace alttext::captioner {

namespace {

using MatMap = Eigen::Map<Matrix>;
using CMatMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<RowVector>;
using CRowMap = Eigen::Map<const RowVector>;
using ColVector = Eigen::VectorXd;

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

struct LayerLayout {
  TensorInfo ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o;
  TensorInfo ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
};

struct Layout {
  TensorInfo map_w1, map_b1, map_w2, map_b2, tok_emb, pos_emb;
  std::vector<LayerLayout> layers;
  TensorInfo lnf_g, lnf_b;
  bool final_norm = false;
  std::vector<TensorInfo> ordered;
  std::size_t total = 0;
};

Layout make_layout(const ModelConfig& c) {
  Layout L;
  auto add = [&](std::string name, int rows, int cols) {
    TensorInfo t{std::move(name), L.total, rows, cols};
    L.total += t.size();
    L.ordered.push_back(t);
    return t;
  };
  const int d = c.d_model;
  const int h = c.mapper_hidden();
  L.map_w1 = add("mapper.w1", c.d_enc, h);
  L.map_b1 = add("mapper.b1", 1, h);
  L.map_w2 = add("mapper.w2", h, c.k * d);
  L.map_b2 = add("mapper.b2", 1, c.k * d);
  L.tok_emb = add("decoder.tok_emb", c.vocab_size, d);
  L.pos_emb = add("decoder.pos_emb", c.seq_len(), d);
  for (int i = 0; i < c.n_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i) + ".";
    LayerLayout l;
    l.ln1_g = add(p + "ln1.g", 1, d);
    l.ln1_b = add(p + "ln1.b", 1, d);
    l.w_qkv = add(p + "attn.w_qkv", d, 3 * d);
    l.b_qkv = add(p + "attn.b_qkv", 1, 3 * d);
    l.w_o = add(p + "attn.w_o", d, d);
    l.b_o = add(p + "attn.b_o", 1, d);
    l.ln2_g = add(p + "ln2.g", 1, d);
    l.ln2_b = add(p + "ln2.b", 1, d);
    l.w_fc = add(p + "ffn.w_fc", d, c.d_ff);
    l.b_fc = add(p + "ffn.b_fc", 1, c.d_ff);
    l.w_proj = add(p + "ffn.w_proj", c.d_ff, d);
    l.b_proj = add(p + "ffn.b_proj", 1, d);
    L.layers.push_back(l);
  }
  // The final norm belongs to the block stack: a zero-layer decoder maps
  // embeddings straight onto the tied output projection.
  L.final_norm = c.n_layers > 0;
  if (L.final_norm) {
    L.lnf_g = add("decoder.lnf.g", 1, d);
    L.lnf_b = add("decoder.lnf.b", 1, d);
  }
  return L;
}

CMatMap cmat(const double* base, const TensorInfo& t) {
  return CMatMap(base + t.offset, t.rows, t.cols);
}
MatMap mat(double* base, const TensorInfo& t) { return MatMap(base + t.offset, t.rows, t.cols); }
CRowMap crow(const double* base, const TensorInfo& t) {
  return CRowMap(base + t.offset, static_cast<Eigen::Index>(t.size()));
}
RowMap row(double* base, const TensorInfo& t) {
  return RowMap(base + t.offset, static_cast<Eigen::Index>(t.size()));
}

// ---------------------------------------------------------------------------
// Layer pieces

struct LnCache {
  Matrix xhat;
  ColVector rstd;
};

Matrix layer_norm(const Matrix& x, CRowMap g, CRowMap b, LnCache& cache) {
  const ColVector mean = x.rowwise().mean();
  Matrix xc = x.colwise() - mean;
  const ColVector var = xc.array().square().rowwise().mean();
  cache.rstd = (var.array() + kLnEps).rsqrt();
  cache.xhat = xc.array().colwise() * cache.rstd.array();
  Matrix y = cache.xhat.array().rowwise() * g.array();
  y.rowwise() += b;
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LnCache& c, CRowMap g, RowMap dg, RowMap db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * g.array();
  const ColVector m1 = dxhat.rowwise().mean();
  const ColVector m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Matrix dx = (dxhat.array().colwise() - m1.array()) - (c.xhat.array().colwise() * m2.array());
  dx.array().colwise() *= c.rstd.array();
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LayerCache {
  LnCache ln1;
  Matrix a;    // ln1 output
  Matrix qkv;  // T x 3d
  std::vector<Matrix> probs;
  Matrix o;  // concatenated head outputs
  Matrix attn_drop;
  LnCache ln2;
  Matrix b;  // ln2 output
  Matrix f;  // pre-activation
  Matrix g;  // gelu(f)
  Matrix mlp_drop;
};

struct StackCache {
  std::vector<LayerCache> layers;
  LnCache lnf;
  Matrix z;  // decoder output fed to the tied projection
};

// Inverted-dropout mask, or an empty matrix when disabled.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(*rng) < rate ? 0.0 : keep;
  return m;
}

class Network {
 public:
  Network(const ModelConfig& config, const double* params)
      : c_(config), L_(make_layout(config)), p_(params) {}

  const Layout& layout() const { return L_; }

  // Mapper: tanh(e W1 + b1) W2 + b2, returned as a flat 1 x k*d row.
  RowVector mapper(std::span<const float> embedding, RowVector* hidden) const {
    if (static_cast<int>(embedding.size()) != c_.d_enc) {
      throw Error(Errc::DimensionMismatch, "image embedding has " +
                                               std::to_string(embedding.size()) +
                                               " entries, expected " + std::to_string(c_.d_enc));
    }
    const RowVector e = Eigen::Map<const Eigen::RowVectorXf>(embedding.data(), c_.d_enc).cast<double>();
    RowVector h = e * cmat(p_, L_.map_w1) + crow(p_, L_.map_b1);
    h = h.array().tanh();
    RowVector out = h * cmat(p_, L_.map_w2) + crow(p_, L_.map_b2);
    if (hidden) *hidden = std::move(h);
    return out;
  }

  void mapper_backward(std::span<const float> embedding, const RowVector& hidden,
                       const RowVector& dout, double* grad) const {
    const RowVector e = Eigen::Map<const Eigen::RowVectorXf>(embedding.data(), c_.d_enc).cast<double>();
    mat(grad, L_.map_w2).noalias() += hidden.transpose() * dout;
    row(grad, L_.map_b2) += dout;
    RowVector dh = dout * cmat(p_, L_.map_w2).transpose();
    dh.array() *= (1.0 - hidden.array().square());
    mat(grad, L_.map_w1).noalias() += e.transpose() * dh;
    row(grad, L_.map_b1) += dh;
  }

  Matrix embed(const PrefixMatrix* prefix, std::span<const TokenId> ids) const {
    const int p = prefix ? static_cast<int>(prefix->rows()) : 0;
    const int t = p + static_cast<int>(ids.size());
    Matrix x(t, c_.d_model);
    if (p) x.topRows(p) = *prefix;
    const auto tok = cmat(p_, L_.tok_emb);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] < 0 || ids[j] >= c_.vocab_size) {
        throw Error(Errc::UnknownId, "token id " + std::to_string(ids[j]));
      }
      x.row(p + static_cast<Eigen::Index>(j)) = tok.row(ids[j]);
    }
    x += cmat(p_, L_.pos_emb).topRows(t);
    return x;
  }

  // Runs the block stack; returns the final representation z.
  Matrix stack(Matrix x, StackCache* cache, std::mt19937_64* rng) const {
    const Eigen::Index T = x.rows();
    const int d = c_.d_model;
    const int H = c_.n_heads;
    const int hd = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    if (cache) cache->layers.assign(L_.layers.size(), {});

    for (std::size_t li = 0; li < L_.layers.size(); ++li) {
      const LayerLayout& l = L_.layers[li];
      LayerCache local;
      LayerCache& lc = cache ? cache->layers[li] : local;

      lc.a = layer_norm(x, crow(p_, l.ln1_g), crow(p_, l.ln1_b), lc.ln1);
      lc.qkv.noalias() = lc.a * cmat(p_, l.w_qkv);
      lc.qkv.rowwise() += crow(p_, l.b_qkv);
      lc.o.resize(T, d);
      lc.probs.resize(static_cast<std::size_t>(H));
      for (int h = 0; h < H; ++h) {
        const auto q = lc.qkv.middleCols(h * hd, hd);
        const auto k = lc.qkv.middleCols(d + h * hd, hd);
        const auto v = lc.qkv.middleCols(2 * d + h * hd, hd);
        Matrix s = (q * k.transpose()) * scale;
        Matrix& pr = lc.probs[static_cast<std::size_t>(h)];
        pr = Matrix::Zero(T, T);
        for (Eigen::Index i = 0; i < T; ++i) {
          const double mx = s.row(i).head(i + 1).maxCoeff();
          double sum = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            pr(i, j) = std::exp(s(i, j) - mx);
            sum += pr(i, j);
          }
          pr.row(i).head(i + 1) /= sum;
        }
        lc.o.middleCols(h * hd, hd).noalias() = pr * v;
      }
      Matrix att = lc.o * cmat(p_, l.w_o);
      att.rowwise() += crow(p_, l.b_o);
      lc.attn_drop = dropout_mask(T, d, c_.dropout, rng);
      if (lc.attn_drop.size()) att.array() *= lc.attn_drop.array();
      x += att;

      lc.b = layer_norm(x, crow(p_, l.ln2_g), crow(p_, l.ln2_b), lc.ln2);
      lc.f.noalias() = lc.b * cmat(p_, l.w_fc);
      lc.f.rowwise() += crow(p_, l.b_fc);
      lc.g = lc.f.unaryExpr(&gelu);
      Matrix m = lc.g * cmat(p_, l.w_proj);
      m.rowwise() += crow(p_, l.b_proj);
      lc.mlp_drop = dropout_mask(T, d, c_.dropout, rng);
      if (lc.mlp_drop.size()) m.array() *= lc.mlp_drop.array();
      x += m;
    }

    if (!L_.final_norm) return x;
    LnCache local;
    return layer_norm(x, crow(p_, L_.lnf_g), crow(p_, L_.lnf_b), cache ? cache->lnf : local);
  }

  // Back-propagates dz through the stack; returns d(input embeddings).
  Matrix stack_backward(const StackCache& cache, Matrix dz, double* grad) const {
    const int d = c_.d_model;
    const int H = c_.n_heads;
    const int hd = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Matrix dx = L_.final_norm ? layer_norm_backward(dz, cache.lnf, crow(p_, L_.lnf_g),
                                                    row(grad, L_.lnf_g), row(grad, L_.lnf_b))
                              : std::move(dz);

    for (std::size_t li = L_.layers.size(); li-- > 0;) {
      const LayerLayout& l = L_.layers[li];
      const LayerCache& lc = cache.layers[li];

      // feed-forward branch
      Matrix dm = dx;
      if (lc.mlp_drop.size()) dm.array() *= lc.mlp_drop.array();
      mat(grad, l.w_proj).noalias() += lc.g.transpose() * dm;
      row(grad, l.b_proj) += dm.colwise().sum();
      Matrix df = dm * cmat(p_, l.w_proj).transpose();
      df.array() *= lc.f.unaryExpr(&gelu_grad).array();
      mat(grad, l.w_fc).noalias() += lc.b.transpose() * df;
      row(grad, l.b_fc) += df.colwise().sum();
      const Matrix db = df * cmat(p_, l.w_fc).transpose();
      dx += layer_norm_backward(db, lc.ln2, crow(p_, l.ln2_g), row(grad, l.ln2_g),
                                row(grad, l.ln2_b));

      // attention branch
      Matrix datt = dx;
      if (lc.attn_drop.size()) datt.array() *= lc.attn_drop.array();
      mat(grad, l.w_o).noalias() += lc.o.transpose() * datt;
      row(grad, l.b_o) += datt.colwise().sum();
      const Matrix d_o = datt * cmat(p_, l.w_o).transpose();
      Matrix dqkv(lc.qkv.rows(), 3 * d);
      for (int h = 0; h < H; ++h) {
        const auto q = lc.qkv.middleCols(h * hd, hd);
        const auto k = lc.qkv.middleCols(d + h * hd, hd);
        const auto v = lc.qkv.middleCols(2 * d + h * hd, hd);
        const Matrix& pr = lc.probs[static_cast<std::size_t>(h)];
        const auto doh = d_o.middleCols(h * hd, hd);
        const Matrix dp = doh * v.transpose();
        dqkv.middleCols(2 * d + h * hd, hd).noalias() = pr.transpose() * doh;
        const ColVector rs = (dp.array() * pr.array()).rowwise().sum();
        const Matrix ds = pr.array() * (dp.array().colwise() - rs.array());
        dqkv.middleCols(h * hd, hd).noalias() = (ds * k) * scale;
        dqkv.middleCols(d + h * hd, hd).noalias() = (ds.transpose() * q) * scale;
      }
      mat(grad, l.w_qkv).noalias() += lc.a.transpose() * dqkv;
      row(grad, l.b_qkv) += dqkv.colwise().sum();
      const Matrix da = dqkv * cmat(p_, l.w_qkv).transpose();
      dx += layer_norm_backward(da, lc.ln1, crow(p_, l.ln1_g), row(grad, l.ln1_g),
                                row(grad, l.ln1_b));
    }
    return dx;
  }

  Matrix logits(const Matrix& z) const { return z * cmat(p_, L_.tok_emb).transpose(); }

  const double* params() const { return p_; }

 private:
  const ModelConfig& c_;
  Layout L_;
  const double* p_;
};

// Row-wise log-softmax of one logits row; returns log-prob of `target`.
double log_prob(const RowVector& logits, TokenId target, RowVector* probs) {
  const double mx = logits.maxCoeff();
  const RowVector e = (logits.array() - mx).exp();
  const double sum = e.sum();
  if (probs) *probs = e / sum;
  return logits(target) - mx - std::log(sum);
}

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw Error(Errc::NonFiniteActivation, where);
}

std::vector<std::uint8_t> effective_mask(const SequenceInput& in, const Example& ex) {
  if (ex.loss_mask.empty()) return in.mask;
  if (ex.loss_mask.size() != in.mask.size()) {
    throw Error(Errc::DimensionMismatch, "loss mask length differs from sequence length");
  }
  return ex.loss_mask;
}

// Loss of one example with its gradient accumulated (scaled) into `grad`.
NllSum accumulate_example(const ModelState& state, const Network& net, const Example& ex,
                          double scale, double* grad, std::mt19937_64* rng) {
  const ModelConfig& c = state.config;
  const Layout& L = net.layout();
  RowVector hidden;
  PrefixMatrix prefix;
  const bool image = uses_image(c.variant);
  if (image) {
    const RowVector flat = net.mapper(ex.image, &hidden);
    prefix = Eigen::Map<const Matrix>(flat.data(), c.k, c.d_model);
  }
  const SequenceInput in = build_input(state, image ? &prefix : nullptr, ex.tweet, ex.alt);
  const auto mask = effective_mask(in, ex);

  StackCache cache;
  const Matrix z = net.stack(in.embedded, &cache, rng);

  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(static_cast<Eigen::Index>(i));
  }
  NllSum out;
  if (rows.empty()) return out;
  Matrix zr(static_cast<Eigen::Index>(rows.size()), c.d_model);
  for (std::size_t r = 0; r < rows.size(); ++r) zr.row(static_cast<Eigen::Index>(r)) = z.row(rows[r]);
  const Matrix lg = net.logits(zr);
  require_finite(lg, "logits");

  Matrix dlogits(lg.rows(), lg.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    RowVector probs;
    const TokenId target = in.targets[static_cast<std::size_t>(rows[r])];
    out.nll -= log_prob(lg.row(static_cast<Eigen::Index>(r)), target, &probs);
    probs(target) -= 1.0;
    dlogits.row(static_cast<Eigen::Index>(r)) = probs * scale;
  }
  out.tokens = static_cast<long>(rows.size());
  if (grad == nullptr) return out;

  const auto tok = cmat(net.params(), L.tok_emb);
  mat(grad, L.tok_emb).noalias() += dlogits.transpose() * zr;
  Matrix dz = Matrix::Zero(z.rows(), z.cols());
  const Matrix dzr = dlogits * tok;
  for (std::size_t r = 0; r < rows.size(); ++r) dz.row(rows[r]) = dzr.row(static_cast<Eigen::Index>(r));

  const Matrix dx = net.stack_backward(cache, std::move(dz), grad);
  auto gpos = mat(grad, L.pos_emb);
  gpos.topRows(dx.rows()) += dx;
  auto gtok = mat(grad, L.tok_emb);
  for (std::size_t j = 0; j < in.token_ids.size(); ++j) {
    gtok.row(in.token_ids[j]) += dx.row(in.prefix_rows + static_cast<Eigen::Index>(j));
  }
  if (in.prefix_rows > 0) {
    Matrix dprefix = dx.topRows(in.prefix_rows);
    const RowVector dflat = Eigen::Map<const RowVector>(dprefix.data(), dprefix.size());
    net.mapper_backward(ex.image, hidden, dflat, grad);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::TextAndImage: return "text_image";
    case Variant::ImageOnly: return "image_only";
    case Variant::TextOnly: return "text_only";
    case Variant::RandText: return "rand_text";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::TextAndImage, Variant::ImageOnly, Variant::TextOnly, Variant::RandText}) {
    if (variant_name(v) == name) return v;
  }
  throw Error(Errc::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidArgument, why); };
  if (k < 1) fail("k must be >= 1");
  if (d_enc < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || n_layers < 0) {
    fail("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (vocab_size < kNumSpecials + 1) fail("vocab_size must exceed the special tokens");
  if (seq_len() < min_seq_len()) {
    fail("max_seq_len must be at least k + 302 (" + std::to_string(min_seq_len()) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::vector<TensorInfo> tensor_table(const ModelConfig& config) {
  return make_layout(config).ordered;
}

std::size_t parameter_count(const ModelConfig& config) { return make_layout(config).total; }

ModelState init_state(const ModelConfig& config) {
  config.validate();
  const Layout L = make_layout(config);
  ModelState s;
  s.config = config;
  s.params.assign(L.total, 0.0);
  s.adam_m.assign(L.total, 0.0);
  s.adam_v.assign(L.total, 0.0);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (const auto& t : L.ordered) {
    const bool gain = t.name.ends_with(".g");
    const bool bias = t.rows == 1 && !gain;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double& p = s.params[t.offset + i];
      p = gain ? 1.0 : (bias ? 0.0 : normal(rng));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  const ModelConfig& c = state.config;
  binio::write_magic(out, "ATTM");
  binio::write_u32(out, kCheckpointVersion);
  for (int v : {c.k, c.d_enc, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.vocab_size,
                c.max_seq_len, static_cast<int>(c.variant)}) {
    binio::write_u32(out, static_cast<std::uint32_t>(v));
  }
  binio::write_f64(out, c.dropout);
  binio::write_u64(out, c.seed);
  binio::write_u64(out, state.step);
  binio::write_u64(out, state.params.size());
  for (double p : state.params) binio::write_f64(out, p);
  const bool moments = state.adam_m.size() == state.params.size() &&
                       state.adam_v.size() == state.params.size();
  binio::write_u8(out, moments ? 1 : 0);
  if (moments) {
    for (double m : state.adam_m) binio::write_f64(out, m);
    for (double v : state.adam_v) binio::write_f64(out, v);
  }
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  binio::expect_magic(in, "ATTM");
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(Errc::BadMagic, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelState s;
  ModelConfig& c = s.config;
  auto next = [&] { return static_cast<int>(binio::read_u32(in)); };
  c.k = next();
  c.d_enc = next();
  c.d_model = next();
  c.n_layers = next();
  c.n_heads = next();
  c.d_ff = next();
  c.vocab_size = next();
  c.max_seq_len = next();
  const int variant = next();
  if (variant < 0 || variant > static_cast<int>(Variant::RandText)) {
    throw Error(Errc::MalformedRecord, "bad variant in checkpoint");
  }
  c.variant = static_cast<Variant>(variant);
  c.dropout = binio::read_f64(in);
  c.seed = binio::read_u64(in);
  s.step = binio::read_u64(in);
  c.validate();
  const std::uint64_t n = binio::read_u64(in);
  if (n != parameter_count(c)) {
    throw Error(Errc::DimensionMismatch, "checkpoint parameter count does not match its config");
  }
  s.params.resize(n);
  for (auto& p : s.params) p = binio::read_f64(in);
  if (binio::read_u8(in)) {
    s.adam_m.resize(n);
    s.adam_v.resize(n);
    for (auto& m : s.adam_m) m = binio::read_f64(in);
    for (auto& v : s.adam_v) v = binio::read_f64(in);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Forward API

PrefixMatrix map_prefix(const ModelState& state, std::span<const float> embedding) {
  const Network net(state.config, state.params.data());
  const RowVector flat = net.mapper(embedding, nullptr);
  return Eigen::Map<const Matrix>(flat.data(), state.config.k, state.config.d_model);
}

SequenceInput build_input(const ModelState& state, const PrefixMatrix* prefix,
                          std::span<const TokenId> tweet_ids, std::span<const TokenId> alt_ids) {
  const ModelConfig& c = state.config;
  const bool image = uses_image(c.variant);
  if (image && prefix == nullptr) {
    throw Error(Errc::InvalidArgument, "variant needs an image prefix");
  }
  if (image && (prefix->rows() != c.k || prefix->cols() != c.d_model)) {
    throw Error(Errc::DimensionMismatch, "prefix must be k x d_model");
  }
  const std::span<const TokenId> tweet = uses_tweet(c.variant) ? tweet_ids : std::span<const TokenId>{};

  SequenceInput in;
  in.prefix_rows = image ? c.k : 0;
  in.token_ids.assign(tweet.begin(), tweet.end());
  in.token_ids.push_back(kBos);
  in.token_ids.insert(in.token_ids.end(), alt_ids.begin(), alt_ids.end());
  const int total = in.prefix_rows + static_cast<int>(in.token_ids.size());
  if (total > c.seq_len()) {
    throw Error(Errc::SequenceTooLong, "sequence of " + std::to_string(total) +
                                           " exceeds max_seq_len " + std::to_string(c.seq_len()));
  }
  const Network net(c, state.params.data());
  in.embedded = net.embed(image ? prefix : nullptr, in.token_ids);

  in.targets.assign(static_cast<std::size_t>(total), kPad);
  in.mask.assign(static_cast<std::size_t>(total), 0);
  const std::size_t bos_pos = static_cast<std::size_t>(in.prefix_rows) + tweet.size();
  for (std::size_t j = 0; j <= alt_ids.size(); ++j) {
    in.targets[bos_pos + j] = j < alt_ids.size() ? alt_ids[j] : kEos;
    in.mask[bos_pos + j] = 1;
  }
  return in;
}

Matrix forward(const ModelState& state, const SequenceInput& input) {
  const Network net(state.config, state.params.data());
  const Matrix lg = net.logits(net.stack(input.embedded, nullptr, nullptr));
  require_finite(lg, "logits");
  return lg;
}

RowVector forward_last(const ModelState& state, const SequenceInput& input) {
  const Network net(state.config, state.params.data());
  const Matrix z = net.stack(input.embedded, nullptr, nullptr);
  const Matrix lg = net.logits(z.bottomRows(1));
  require_finite(lg, "logits");
  return lg.row(0);
}

double loss(const Matrix& logits, std::span<const TokenId> targets,
            std::span<const std::uint8_t> mask) {
  if (targets.size() != static_cast<std::size_t>(logits.rows()) || mask.size() != targets.size()) {
    throw Error(Errc::DimensionMismatch, "targets/mask must have one entry per logits row");
  }
  double total = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    total -= log_prob(logits.row(static_cast<Eigen::Index>(i)), targets[i], nullptr);
    ++count;
  }
  if (count == 0) throw Error(Errc::EmptyMask, "loss mask selects no positions");
  return total / static_cast<double>(count);
}

SequenceInput build_example_input(const ModelState& state, const Example& ex) {
  if (!uses_image(state.config.variant)) return build_input(state, nullptr, ex.tweet, ex.alt);
  const PrefixMatrix prefix = map_prefix(state, ex.image);
  return build_input(state, &prefix, ex.tweet, ex.alt);
}

NllSum example_nll(const ModelState& state, const Example& ex) {
  const Network net(state.config, state.params.data());
  return accumulate_example(state, net, ex, 0.0, nullptr, nullptr);
}

NllSum loss_and_gradient(const ModelState& state, std::span<const Example> batch,
                         std::vector<double>& grad, std::uint64_t dropout_seed) {
  const Network net(state.config, state.params.data());
  grad.assign(state.params.size(), 0.0);

  // The loss is a mean over the batch's masked tokens, so the per-token
  // scale has to be known before back-propagating.
  long total_tokens = 0;
  for (const auto& ex : batch) {
    if (!ex.loss_mask.empty()) {
      for (auto m : ex.loss_mask) total_tokens += m ? 1 : 0;
    } else {
      total_tokens += static_cast<long>(ex.alt.size()) + 1;
    }
  }
  if (total_tokens == 0) throw Error(Errc::EmptyMask, "batch has no target positions");
  const double scale = 1.0 / static_cast<double>(total_tokens);

  NllSum sum;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::mt19937_64 rng(dropout_seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
    const NllSum part = accumulate_example(state, net, batch[i], scale, grad.data(),
                                           state.config.dropout > 0.0 ? &rng : nullptr);
    sum.nll += part.nll;
    sum.tokens += part.tokens;
  }
  return sum;
}

// Below this magnitude the central difference is dominated by round-off, so
// tiny gradients are compared on absolute error instead.
constexpr double kGradFloor = 1e-6;

GradCheckResult grad_check(const ModelState& state, const Example& ex, double epsilon) {
  ModelState probe = state;
  probe.config.dropout = 0.0;
  std::vector<double> analytic;
  loss_and_gradient(probe, std::span<const Example>(&ex, 1), analytic);

  const auto table = tensor_table(probe.config);
  GradCheckResult result;
  for (std::size_t i = 0; i < probe.params.size(); ++i) {
    const double saved = probe.params[i];
    auto at = [&](double offset) {
      probe.params[i] = saved + offset;
      return example_nll(probe, ex).mean();
    };
    // five-point stencil, truncation error O(epsilon^4)
    const double numeric =
        (at(-2 * epsilon) - 8.0 * at(-epsilon) + 8.0 * at(epsilon) - at(2 * epsilon)) / (12.0 * epsilon);
    probe.params[i] = saved;
    const double rel =
        std::abs(analytic[i] - numeric) / std::max(kGradFloor, std::abs(analytic[i]) + std::abs(numeric));
    if (rel > result.max_rel_error || i == 0) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  for (const auto& t : table) {
    if (result.worst_index >= t.offset && result.worst_index < t.offset + t.size()) {
      result.worst_tensor = t.name;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

CaptionContext::CaptionContext(const ModelState& state, std::span<const float> image,
                               std::vector<TokenId> tweet)
    : state_(&state), has_prefix_(uses_image(state.config.variant)), tweet_(std::move(tweet)) {
  if (has_prefix_) prefix_ = map_prefix(state, image);
  if (!uses_tweet(state.config.variant)) tweet_.clear();
}

std::vector<double> CaptionContext::next_logits(std::span<const TokenId> generated) const {
  const SequenceInput in =
      build_input(*state_, has_prefix_ ? &prefix_ : nullptr, tweet_, generated);
  const RowVector lg = forward_last(*state_, in);
  return {lg.data(), lg.data() + lg.size()};
}

int CaptionContext::max_generated() const noexcept {
  const int used = (has_prefix_ ? state_->config.k : 0) + static_cast<int>(tweet_.size()) + 1;
  return state_->config.seq_len() - used + 1;
}

}  // namespace alttext::captioner
