#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

enum class ChangeLabel : std::uint8_t { unchanged = 0, appeared = 1, disappeared = 2 };
enum class Origin : std::uint8_t { ref = 0, src = 1 };

struct ChangeEntry {
  Origin origin = Origin::src;
  PointId id = 0;  // id in the origin cloud
  Vec3 position = Vec3::Zero();
  double response = 0.0;  // meters, in [0, delta_cd]
  ChangeLabel label = ChangeLabel::unchanged;

  bool operator==(const ChangeEntry&) const = default;
};

// Detected changes of both directions. Points not listed are unchanged.
struct ChangeMap {
  std::vector<ChangeEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  std::size_t count(ChangeLabel label) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.label == label; }));
  }

  // Sorted by (origin, id).
  void canonicalize() {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.origin != b.origin ? a.origin < b.origin : a.id < b.id;
    });
  }

  bool operator==(const ChangeMap&) const = default;
};

}  // namespace urbancd
