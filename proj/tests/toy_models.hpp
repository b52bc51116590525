#pragma once

// Random next-token scorers for decoding tests: logits are a seeded
// function of the prefix, so every query is reproducible.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "alttext/decoding.hpp"

namespace toy {

inline alttext::decoding::NextLogits random_lm(std::uint64_t seed, int vocab, double scale = 3.0) {
  return [=](std::span<const alttext::TokenId> prefix) {
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ull + 0x1234567ull;
    for (auto t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001B3ull;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> out(static_cast<std::size_t>(vocab));
    for (auto& x : out) x = g(rng);
    return out;
  };
}

// Logits depend only on the last token and EOS is unlikely, so long loops
// over a few words are common.
inline alttext::decoding::NextLogits markov_lm(std::uint64_t seed, int vocab) {
  return [=](std::span<const alttext::TokenId> prefix) {
    const std::uint64_t last = prefix.empty() ? 0 : static_cast<std::uint64_t>(prefix.back() + 1);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + last);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> out(static_cast<std::size_t>(vocab));
    for (auto& x : out) x = g(rng);
    out[alttext::kEos] = -6.0;
    return out;
  };
}

}  // namespace toy
