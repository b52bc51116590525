#pragma once

// Token and string helpers shared by corpus filtering, the tokenizer and the
// metrics. A token is a maximal run of non-whitespace bytes.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alttext::text {

bool is_space(char c) noexcept;

std::vector<std::string_view> split_view(std::string_view s);
std::vector<std::string> split(std::string_view s);
std::size_t count_tokens(std::string_view s);

std::string join(std::span<const std::string> tokens, std::string_view sep = " ");
std::string join(std::span<const std::string_view> tokens, std::string_view sep = " ");

/// ASCII-only lowercasing; multibyte UTF-8 sequences pass through untouched.
std::string to_lower(std::string_view s);

/// Collapses whitespace runs to a single space and trims both ends.
std::string normalize_whitespace(std::string_view s);

std::string_view trim_left(std::string_view s);
std::string_view trim(std::string_view s);

bool istarts_with(std::string_view s, std::string_view prefix) noexcept;

/// Lowercased whitespace tokens; the metric and vocabulary token definition.
std::vector<std::string> metric_tokens(std::string_view s);

/// 64-bit FNV-1a, used for reproducibility fingerprints.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace alttext::text
