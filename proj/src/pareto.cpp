// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "qadapt/error.hpp"
#include "qadapt/log.hpp"

namespace qadapt {

std::pair<double, double> normalize(double loss, double loss_max, double bits, double bits_max) {
    if (!(loss_max > 0.0) || !(bits_max > 0.0))
        throw InvalidArgument(fmt::format("normalize: maxima must be positive (loss_max={}, bits_max={})", loss_max,
                                          bits_max));
    return {std::clamp(loss / loss_max, 0.0, 1.0), std::clamp(bits / bits_max, 0.0, 1.0)};
}

double normalize_accuracy(double accuracy_percent) {
    return std::clamp(1.0 - accuracy_percent / 100.0, 0.0, 1.0);
}

std::vector<std::size_t> pareto_indices(std::span<const ObjectivePoint> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].f1 != points[b].f1) return points[a].f1 < points[b].f1;
        return points[a].f2 < points[b].f2;
    });
    // Sweep groups of equal f1. A point survives if it has its group's lowest
    // f2 and that f2 beats everything with strictly smaller f1.
    std::vector<std::size_t> keep;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < order.size();) {
        std::size_t e = g;
        while (e < order.size() && points[order[e]].f1 == points[order[g]].f1) ++e;
        const double lo = points[order[g]].f2;
        if (lo < best) {
            for (std::size_t k = g; k < e && points[order[k]].f2 == lo; ++k) keep.push_back(order[k]);
            best = lo;
        }
        g = e;
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::vector<ObjectivePoint> pareto_front(std::span<const ObjectivePoint> points) {
    std::vector<ObjectivePoint> out;
    for (std::size_t k : pareto_indices(points)) out.push_back(points[k]);
    return out;
}

std::pair<double, double> f2_range(std::span<const ObjectivePoint> points) {
    if (points.empty()) return {0.0, 0.0};
    double lo = points[0].f2, hi = points[0].f2;
    for (const auto& p : points) {
        lo = std::min(lo, p.f2);
        hi = std::max(hi, p.f2);
    }
    return {lo, hi};
}

std::vector<int> segment_indices(std::span<const ObjectivePoint> points, int segments) {
    return segment_indices(points, segments, f2_range(points));
}

std::vector<int> segment_indices(std::span<const ObjectivePoint> points, int segments, std::pair<double, double> range) {
    if (segments < 1) throw InvalidArgument(fmt::format("segment count must be >= 1, got {}", segments));
    std::vector<int> seg(points.size(), 0);
    const auto [lo, hi] = range;
    const double width = (hi - lo) / segments;
    if (!(width > 0.0)) return seg;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const int s = static_cast<int>(std::floor((points[k].f2 - lo) / width));
        seg[k] = std::clamp(s, 0, segments - 1);
    }
    return seg;
}

std::vector<std::size_t> segmented_filter_indices(std::span<const ObjectivePoint> points, int segments) {
    return segmented_filter_indices(points, segments, f2_range(points));
}

std::vector<std::size_t> segmented_filter_indices(std::span<const ObjectivePoint> points, int segments,
                                                  std::pair<double, double> range) {
    const std::vector<int> seg = segment_indices(points, segments, range);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(segments));
    for (std::size_t k = 0; k < points.size(); ++k) members[static_cast<std::size_t>(seg[k])].push_back(k);
    std::vector<std::size_t> keep;
    std::vector<ObjectivePoint> local;
    for (const auto& m : members) {
        local.clear();
        for (std::size_t k : m) local.push_back(points[k]);
        for (std::size_t j : pareto_indices(local)) keep.push_back(m[j]);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::vector<ObjectivePoint> segmented_filter(std::span<const ObjectivePoint> points, int segments) {
    std::vector<ObjectivePoint> out;
    for (std::size_t k : segmented_filter_indices(points, segments)) out.push_back(points[k]);
    return out;
}

namespace {

std::vector<ObjectivePoint> within_ref(std::span<const ObjectivePoint> points, RefPoint ref, bool warn) {
    std::vector<ObjectivePoint> in;
    std::size_t dropped = 0;
    for (const auto& p : points) {
        if (p.f1 > ref.f1 || p.f2 > ref.f2 || std::isnan(p.f1) || std::isnan(p.f2)) ++dropped;
        else in.push_back(p);
    }
    if (dropped > 0 && warn)
        log_warn(fmt::format("hypervolume: dropped {} point(s) beyond the reference ({}, {})", dropped, ref.f1, ref.f2));
    return in;
}

} // namespace

double hypervolume_2d(std::span<const ObjectivePoint> points, RefPoint ref) {
    std::vector<ObjectivePoint> front = pareto_front(within_ref(points, ref, true));
    std::sort(front.begin(), front.end(), [](const auto& a, const auto& b) {
        return a.f1 != b.f1 ? a.f1 < b.f1 : a.f2 < b.f2;
    });
    double hv = 0.0;
    double prev = ref.f2;
    for (const auto& p : front) {
        hv += (ref.f1 - p.f1) * (prev - p.f2);
        prev = p.f2;
    }
    return hv;
}

std::vector<HviStep> hvi_profile(std::span<const ObjectivePoint> front, double f2, RefPoint ref) {
    std::vector<HviStep> steps;
    if (!(f2 < ref.f2)) return steps;
    std::vector<ObjectivePoint> pts = within_ref(front, ref, false);
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.f1 < b.f1; });
    // Height added at abscissa x: max(0, g(x) - f2), g the front's staircase.
    double height = ref.f2 - f2;
    double g = ref.f2;
    for (const auto& p : pts) {
        g = std::min(g, p.f2);
        const double h = std::max(0.0, g - f2);
        if (h < height) {
            steps.push_back({p.f1, height - h});
            height = h;
        }
        if (height == 0.0) break;
    }
    if (height > 0.0) steps.push_back({ref.f1, height});
    return steps;
}

double hvi(const ObjectivePoint& p, std::span<const ObjectivePoint> front, RefPoint ref) {
    if (p.f1 > ref.f1 || p.f2 > ref.f2) return 0.0;
    for (const auto& q : front)
        if (weakly_dominates(q, p)) return 0.0;
    double total = 0.0;
    for (const auto& s : hvi_profile(front, p.f2, ref)) total += s.drop * std::max(0.0, s.at - p.f1);
    return total;
}

} // namespace qadapt
