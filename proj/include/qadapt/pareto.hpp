// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace qadapt {

// A point in normalized objective space (both axes minimized).
struct ObjectivePoint {
    double f1 = 0.0;  // normalized task loss
    double f2 = 0.0;  // normalized average bits
    std::int64_t id = -1;
};

struct RefPoint {
    double f1 = 1.0;
    double f2 = 1.0;
};

// (loss/loss_max, bits/bits_max), each clamped to [0, 1].
std::pair<double, double> normalize(double loss, double loss_max, double bits, double bits_max);
// Accuracy-style metrics in percent: 1 - acc/100, clamped to [0, 1].
double normalize_accuracy(double accuracy_percent);

// q dominates p: q <= p componentwise and strictly better somewhere.
inline bool dominates(const ObjectivePoint& q, const ObjectivePoint& p) {
    return q.f1 <= p.f1 && q.f2 <= p.f2 && (q.f1 < p.f1 || q.f2 < p.f2);
}
inline bool weakly_dominates(const ObjectivePoint& q, const ObjectivePoint& p) {
    return q.f1 <= p.f1 && q.f2 <= p.f2;
}

// Positions (ascending) of the non-dominated points; exact duplicates all kept.
std::vector<std::size_t> pareto_indices(std::span<const ObjectivePoint> points);
std::vector<ObjectivePoint> pareto_front(std::span<const ObjectivePoint> points);

// Segment of each point: U equal-width intervals over [min f2, max f2], the
// last one closed on the right.
std::vector<int> segment_indices(std::span<const ObjectivePoint> points, int segments);
// Same, with bounds [lo, hi] fixed by the caller (e.g. the whole archive);
// points outside clamp to the end segments.
std::vector<int> segment_indices(std::span<const ObjectivePoint> points, int segments, std::pair<double, double> range);
std::pair<double, double> f2_range(std::span<const ObjectivePoint> points);
// Union of the per-segment fronts, as ascending positions into points.
std::vector<std::size_t> segmented_filter_indices(std::span<const ObjectivePoint> points, int segments);
std::vector<std::size_t> segmented_filter_indices(std::span<const ObjectivePoint> points, int segments,
                                                  std::pair<double, double> range);
std::vector<ObjectivePoint> segmented_filter(std::span<const ObjectivePoint> points, int segments);

// Dominated area up to ref. Points beyond ref are dropped with a warning.
double hypervolume_2d(std::span<const ObjectivePoint> points, RefPoint ref = {});

// HVI as a function of the first objective for a candidate with known second
// objective f2: HVI(f1) = sum_j drop_j * max(0, at_j - f1).
struct HviStep {
    double at;
    double drop;
};
std::vector<HviStep> hvi_profile(std::span<const ObjectivePoint> front, double f2, RefPoint ref = {});

// HV(front + {p}) - HV(front); exactly 0 if p is weakly dominated or beyond ref.
double hvi(const ObjectivePoint& p, std::span<const ObjectivePoint> front, RefPoint ref = {});

} // namespace qadapt
