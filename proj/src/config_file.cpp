#include "alttext/config_file.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <set>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext::config {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(Errc::InvalidArgument, msg); }

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

template <class T>
T number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail("bad value for " + key + ": " + v);
  return out;
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail("bad boolean for " + key + ": " + v);
}

}  // namespace

KeyValues parse(std::istream& in) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body(text::trim(strip_comment(line)));
    if (body.empty() || body.front() == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(text::trim(std::string_view(body).substr(0, eq)));
    std::string value(text::trim(std::string_view(body).substr(eq + 1)));
    if (key.empty()) fail("config line " + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!kv.emplace(key, value).second) fail("config line " + std::to_string(lineno) + ": duplicate key " + key);
  }
  return kv;
}

KeyValues load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  return parse(in);
}

void apply(const KeyValues& kv, captioner::ModelConfig& m, captioner::TrainHyper& h, int* vocab_limit) {
  for (const auto& [key, v] : kv) {
    if (key == "k") m.k = number<int>(key, v);
    else if (key == "d_enc") m.d_enc = number<int>(key, v);
    else if (key == "d_model") m.d_model = number<int>(key, v);
    else if (key == "n_layers") m.n_layers = number<int>(key, v);
    else if (key == "n_heads") m.n_heads = number<int>(key, v);
    else if (key == "d_ff") m.d_ff = number<int>(key, v);
    else if (key == "max_seq_len") m.max_seq_len = number<int>(key, v);
    else if (key == "dropout") m.dropout = number<double>(key, v);
    else if (key == "variant") m.variant = captioner::parse_variant(v);
    else if (key == "seed") { m.seed = number<std::uint64_t>(key, v); h.seed = m.seed; }
    else if (key == "lr") h.lr = number<double>(key, v);
    else if (key == "batch_size") h.batch_size = number<int>(key, v);
    else if (key == "beta1") h.beta1 = number<double>(key, v);
    else if (key == "beta2") h.beta2 = number<double>(key, v);
    else if (key == "adam_eps") h.adam_eps = number<double>(key, v);
    else if (key == "patience") h.patience = number<int>(key, v);
    else if (key == "max_epochs") h.max_epochs = number<int>(key, v);
    else if (key == "max_steps") h.max_steps = number<long>(key, v);
    else if (key == "verbose") h.verbose = boolean(key, v);
    else if (key == "vocab_size" && vocab_limit != nullptr) *vocab_limit = number<int>(key, v);
    else fail("unknown config key '" + key + "'");
  }
}

}  // namespace alttext::config
