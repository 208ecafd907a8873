#include "hnas/moo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace hnas {

namespace {

void check_points(std::span<const ObjectivePoint> points, std::size_t dims) {
  for (const auto& p : points) {
    if (p.values.size() != dims) throw std::invalid_argument("objective point has wrong number of values");
    for (double v : p.values) {
      if (std::isnan(v)) throw std::invalid_argument("objective value is NaN (id " + std::to_string(p.id) + ")");
    }
  }
}

}  // namespace

bool dominates(const ObjectivePoint& a, const ObjectivePoint& b, std::span<const Direction> directions) {
  bool strictly = false;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const double x = directions[i] == Direction::Maximize ? a.values[i] : -a.values[i];
    const double y = directions[i] == Direction::Maximize ? b.values[i] : -b.values[i];
    if (x < y) return false;
    if (x > y) strictly = true;
  }
  return strictly;
}

std::vector<std::vector<std::int64_t>> non_dominated_sort(std::span<const ObjectivePoint> points,
                                                          std::span<const Direction> directions) {
  if (directions.empty()) throw std::invalid_argument("non_dominated_sort: no objectives");
  check_points(points, directions.size());
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> counts(n, 0);
  std::vector<std::size_t> current;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dominates(points[i], points[j], directions)) {
        dominated[i].push_back(j);
        ++counts[j];
      } else if (dominates(points[j], points[i], directions)) {
        dominated[j].push_back(i);
        ++counts[i];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) current.push_back(i);
  }
  std::vector<std::vector<std::int64_t>> fronts;
  while (!current.empty()) {
    std::vector<std::size_t> next;
    auto& front = fronts.emplace_back();
    for (std::size_t i : current) {
      front.push_back(points[i].id);
      for (std::size_t j : dominated[i]) {
        if (--counts[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_distance(std::span<const ObjectivePoint> front) {
  if (front.empty()) throw std::invalid_argument("crowding_distance: empty front");
  const std::size_t n = front.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, 0.0);
  if (n <= 2) return std::vector<double>(n, inf);
  const std::size_t dims = front[0].values.size();
  check_points(front, dims);
  std::vector<std::size_t> order(n);
  for (std::size_t m = 0; m < dims; ++m) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (front[a].values[m] != front[b].values[m]) return front[a].values[m] < front[b].values[m];
      return front[a].id < front[b].id;
    });
    dist[order.front()] = inf;
    dist[order.back()] = inf;
    const double range = front[order.back()].values[m] - front[order.front()].values[m];
    if (range <= 0.0) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      dist[order[k]] += (front[order[k + 1]].values[m] - front[order[k - 1]].values[m]) / range;
    }
  }
  return dist;
}

std::vector<ScoredCandidate> score(std::span<const ObjectivePoint> points, std::span<const Direction> directions) {
  const auto fronts = non_dominated_sort(points, directions);
  std::vector<ScoredCandidate> out(points.size());
  std::map<std::int64_t, std::vector<std::size_t>> positions;
  for (std::size_t i = points.size(); i-- > 0;) positions[points[i].id].push_back(i);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<std::size_t> members;
    for (std::int64_t id : fronts[r]) {
      auto& slot = positions[id];
      members.push_back(slot.back());
      slot.pop_back();
    }
    std::vector<ObjectivePoint> front;
    for (std::size_t i : members) front.push_back(points[i]);
    const auto crowd = crowding_distance(front);
    for (std::size_t k = 0; k < members.size(); ++k) {
      out[members[k]] = {points[members[k]], static_cast<int>(r), crowd[k]};
    }
  }
  return out;
}

bool eval_less(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  if (a.crowding != b.crowding) return a.crowding > b.crowding;
  return a.point.id < b.point.id;
}

std::vector<ScoredCandidate> eval_score(std::vector<ScoredCandidate> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), eval_less);
  return candidates;
}

std::size_t selection_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("selection fraction must be in (0, 1]");
  return std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
}

std::vector<ScoredCandidate> select_fraction(std::span<const ScoredCandidate> ordered, double fraction) {
  if (ordered.empty()) throw std::invalid_argument("select_fraction: empty input");
  const std::size_t k = selection_count(ordered.size(), fraction);
  return {ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(k)};
}

}  // namespace hnas
