#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace crowdlearn {

/// Dense index into one of the dataset's lookup tables. The tag keeps user,
/// topic and item indices from being mixed up.
template <class Tag>
struct Index {
    std::uint32_t value{0};

    constexpr Index() = default;
    constexpr explicit Index(std::uint32_t v) : value(v) {}
    constexpr explicit Index(std::size_t v) : value(static_cast<std::uint32_t>(v)) {}
    constexpr explicit Index(int v) : value(static_cast<std::uint32_t>(v)) {}

    [[nodiscard]] constexpr std::size_t get() const noexcept { return value; }
    constexpr auto operator<=>(const Index&) const = default;
};

using UserId = Index<struct UserTag>;
using TopicId = Index<struct TopicTag>;
using ItemId = Index<struct ItemTag>;

} // namespace crowdlearn

template <class Tag>
struct std::hash<crowdlearn::Index<Tag>> {
    std::size_t operator()(const crowdlearn::Index<Tag>& i) const noexcept {
        return std::hash<std::uint32_t>{}(i.value);
    }
};
