#pragma once

// Word-level vocabulary: lowercased whitespace tokens plus four specials.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace alttext {

using TokenId = int;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr int kNumSpecials = 4;

/// Surface form UNK takes in decoded text.
inline constexpr std::string_view kUnkSurface = "⟨unk⟩";

class Vocab {
 public:
  Vocab();  // specials only

  /// Words ranked by frequency (descending) then bytewise; the top
  /// max_size - 4 are kept.
  static Vocab build(std::span<const std::string> corpus, int max_size);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const noexcept { return static_cast<int>(token_of_.size()); }
  TokenId id_of(std::string_view token) const;  // kUnk when absent
  const std::string& token_of(TokenId id) const;  // throws Error(UnknownId)
  bool contains(std::string_view token) const;

  std::vector<TokenId> encode(std::string_view text, bool add_bos_eos = false) const;
  /// Drops PAD/BOS/EOS, renders UNK as kUnkSurface, joins with single spaces.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& other) const { return token_of_ == other.token_of_; }

 private:
  void add(std::string token);

  std::vector<std::string> token_of_;
  std::unordered_map<std::string, TokenId> id_of_;
};

}  // namespace alttext
