#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>

namespace rqrf {

/// Dense integer id tagged by what it indexes, so a KeywordId never passes for an AdId.
template <class Tag>
struct Id {
  std::uint32_t value = std::numeric_limits<std::uint32_t>::max();

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}
  constexpr explicit Id(std::size_t v) : value(static_cast<std::uint32_t>(v)) {}
  constexpr explicit Id(int v) : value(static_cast<std::uint32_t>(v)) {}

  constexpr std::size_t index() const { return value; }

  friend constexpr auto operator<=>(Id, Id) = default;
};

using CategoryId = Id<struct CategoryTag>;
using WordId = Id<struct WordTag>;
using KeywordId = Id<struct KeywordTag>;
using AdId = Id<struct AdTag>;
using QueryId = Id<struct QueryTag>;

}  // namespace rqrf

template <class Tag>
struct std::hash<rqrf::Id<Tag>> {
  std::size_t operator()(rqrf::Id<Tag> id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
