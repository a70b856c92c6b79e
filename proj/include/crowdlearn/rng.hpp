#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crowdlearn {

/// splitmix64 finaliser.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for a named consumer of a master seed, so adding a
/// consumer never shifts the draws of another.
[[nodiscard]] inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return std::mt19937_64(mix64(seed ^ mix64(h)));
}

} // namespace crowdlearn
