#pragma once

// Pareto ranking: fast non-dominated sorting, crowding distance and the
// rank-then-crowding evaluation order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hnas {

enum class Direction { Maximize, Minimize };

struct ObjectivePoint {
  std::vector<double> values;
  std::int64_t id = 0;
};

// (accuracy, latency, energy)
inline const std::vector<Direction> kSearchDirections{Direction::Maximize, Direction::Minimize,
                                                      Direction::Minimize};

// True if a is no worse on every axis and strictly better on one.
bool dominates(const ObjectivePoint& a, const ObjectivePoint& b, std::span<const Direction> directions);

// Fronts of point ids, best first. std::invalid_argument on NaN or
// inconsistent dimensions.
std::vector<std::vector<std::int64_t>> non_dominated_sort(std::span<const ObjectivePoint> points,
                                                          std::span<const Direction> directions);

// Distances in the order of `front`. Fronts of one or two points are all
// infinite; an axis with zero range contributes nothing.
std::vector<double> crowding_distance(std::span<const ObjectivePoint> front);

struct ScoredCandidate {
  ObjectivePoint point;
  int rank = 0;
  double crowding = 0.0;
};

// Rank and crowding for every point, returned in input order.
std::vector<ScoredCandidate> score(std::span<const ObjectivePoint> points, std::span<const Direction> directions);

// Lower rank, then higher crowding, then lower id.
bool eval_less(const ScoredCandidate& a, const ScoredCandidate& b);
std::vector<ScoredCandidate> eval_score(std::vector<ScoredCandidate> candidates);

std::size_t selection_count(std::size_t n, double fraction);
// The ceil(fraction * n) first entries of an eval_score ordering.
std::vector<ScoredCandidate> select_fraction(std::span<const ScoredCandidate> ordered, double fraction);

}  // namespace hnas
