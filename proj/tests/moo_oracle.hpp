#pragma once

#include "hnas/moo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

namespace hnas::testing {

inline bool oracle_dominates(const ObjectivePoint& a, const ObjectivePoint& b, std::span<const Direction> dirs) {
  bool strictly = false;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const double x = dirs[i] == Direction::Maximize ? a.values[i] : -a.values[i];
    const double y = dirs[i] == Direction::Maximize ? b.values[i] : -b.values[i];
    if (x < y) return false;
    if (x > y) strictly = true;
  }
  return strictly;
}

// Peels undominated layers with an all-pairs scan; ids sorted within a front.
inline std::vector<std::vector<std::int64_t>> oracle_fronts(const std::vector<ObjectivePoint>& pts,
                                                            std::span<const Direction> dirs) {
  std::vector<bool> gone(pts.size(), false);
  std::vector<std::vector<std::int64_t>> fronts;
  std::size_t left = pts.size();
  while (left > 0) {
    std::vector<std::size_t> layer;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (gone[i]) continue;
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size() && !dominated; ++j)
        dominated = !gone[j] && j != i && oracle_dominates(pts[j], pts[i], dirs);
      if (!dominated) layer.push_back(i);
    }
    std::vector<std::int64_t> ids;
    for (auto i : layer) {
      gone[i] = true;
      ids.push_back(pts[i].id);
    }
    std::sort(ids.begin(), ids.end());
    fronts.push_back(ids);
    left -= layer.size();
  }
  return fronts;
}

// Deb crowding; equal values are ordered by id.
inline std::map<std::int64_t, double> oracle_crowding(std::vector<ObjectivePoint> front) {
  std::map<std::int64_t, double> d;
  for (const auto& p : front) d[p.id] = 0.0;
  if (front.size() <= 2) {
    for (auto& [id, v] : d) v = std::numeric_limits<double>::infinity();
    return d;
  }
  const std::size_t m = front[0].values.size();
  for (std::size_t k = 0; k < m; ++k) {
    std::sort(front.begin(), front.end(), [k](const auto& a, const auto& b) {
      return a.values[k] != b.values[k] ? a.values[k] < b.values[k] : a.id < b.id;
    });
    const double range = front.back().values[k] - front.front().values[k];
    d[front.front().id] = d[front.back().id] = std::numeric_limits<double>::infinity();
    if (range == 0.0) continue;
    for (std::size_t i = 1; i + 1 < front.size(); ++i)
      d[front[i].id] += (front[i + 1].values[k] - front[i - 1].values[k]) / range;
  }
  return d;
}

// (rank, -crowding, id) order of ids.
inline std::vector<std::int64_t> oracle_order(const std::vector<ObjectivePoint>& pts, std::span<const Direction> dirs) {
  struct Row {
    std::int64_t id;
    std::size_t rank;
    double crowd;
  };
  std::vector<Row> rows;
  const auto fronts = oracle_fronts(pts, dirs);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<ObjectivePoint> members;
    for (const auto& p : pts)
      if (std::find(fronts[r].begin(), fronts[r].end(), p.id) != fronts[r].end()) members.push_back(p);
    for (const auto& [id, c] : oracle_crowding(members)) rows.push_back({id, r, c});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    if (a.crowd != b.crowd) return a.crowd > b.crowd;
    return a.id < b.id;
  });
  std::vector<std::int64_t> ids;
  for (const auto& r : rows) ids.push_back(r.id);
  return ids;
}

// Coarse grids produce ties and duplicates as well as general position.
inline std::vector<ObjectivePoint> random_points(std::size_t n, std::mt19937_64& rng, bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> g(0, 5);
  std::vector<ObjectivePoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    ObjectivePoint p;
    for (int k = 0; k < 3; ++k) p.values.push_back(coarse ? g(rng) : u(rng));
    p.id = static_cast<std::int64_t>(i) * 3 + 7;
    pts.push_back(p);
  }
  std::shuffle(pts.begin(), pts.end(), rng);
  return pts;
}

inline std::vector<std::vector<std::int64_t>> sorted_fronts(std::vector<std::vector<std::int64_t>> fronts) {
  for (auto& f : fronts) std::sort(f.begin(), f.end());
  return fronts;
}

}  // namespace hnas::testing
