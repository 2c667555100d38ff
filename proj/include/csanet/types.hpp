#ifndef CSANET_TYPES_HPP_
#define CSANET_TYPES_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

#include "csanet/tensor.hpp"

namespace csanet {

using ItemId = std::uint64_t;

/// Semantic category index in [0, C).
struct CategoryId {
  std::size_t value = 0;

  constexpr CategoryId() = default;
  constexpr explicit CategoryId(std::size_t v) : value(v) {}
  auto operator<=>(const CategoryId&) const = default;
};

/// A catalog item: the raw feature stands in for a CNN output.
struct Item {
  ItemId id = 0;
  CategoryId category;
  Vector raw_feature;

  bool operator==(const Item&) const = default;
};

}  // namespace csanet

template <>
struct std::hash<csanet::CategoryId> {
  std::size_t operator()(const csanet::CategoryId& c) const noexcept {
    return std::hash<std::size_t>{}(c.value);
  }
};

#endif  // CSANET_TYPES_HPP_
