#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ripple {

// mt19937_64 is fully specified by the standard; the std distributions are not,
// so sampling goes through the helpers below to keep results platform-stable.
using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent sub-seed from a base seed and a stage label.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

// Uniform integer in [0, n). n must be > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform double in [lo, hi).
double uniform_real(Rng& rng, double lo, double hi);

// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace ripple
