#include "alttext/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "alttext/error.hpp"
#include "alttext/text.hpp"

namespace alttext {

namespace {
const char* const kSpecialNames[kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocab::Vocab() {
  // Specials own ids 0..3 but have no surface form in id_of_.
  for (const char* name : kSpecialNames) token_of_.emplace_back(name);
}

void Vocab::add(std::string token) {
  id_of_.emplace(token, static_cast<TokenId>(token_of_.size()));
  token_of_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> corpus, int max_size) {
  if (max_size < kNumSpecials + 1) {
    throw Error(Errc::InvalidArgument, "vocabulary max_size must be >= 5");
  }
  std::map<std::string, long> counts;
  for (const auto& line : corpus) {
    for (auto& tok : text::metric_tokens(line)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_size - kNumSpecials));
  Vocab v;
  for (std::size_t i = 0; i < keep; ++i) v.add(ranked[i].first);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open vocabulary " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || v.contains(line)) {
      throw Error(Errc::MalformedRecord, "vocabulary line " + std::to_string(v.size() - 3) +
                                             " is empty or duplicated");
    }
    v.add(line);
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write vocabulary " + path.string());
  for (std::size_t i = kNumSpecials; i < token_of_.size(); ++i) out << token_of_[i] << '\n';
}

TokenId Vocab::id_of(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  return it == id_of_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return id_of_.count(std::string(token)) > 0;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || id >= size()) throw Error(Errc::UnknownId, std::to_string(id));
  return token_of_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text, bool add_bos_eos) const {
  std::vector<TokenId> ids;
  if (add_bos_eos) ids.push_back(kBos);
  for (const auto& tok : text::metric_tokens(text)) ids.push_back(id_of(tok));
  if (add_bos_eos) ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = token_of(id);
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += id == kUnk ? std::string(kUnkSurface) : tok;
  }
  return out;
}

}  // namespace alttext
