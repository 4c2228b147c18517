// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles shared by the unit tests and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qadapt/pareto.hpp"

namespace qadapt::testing {

// Singular values (descending) by one-sided Jacobi rotations at fp64.
inline std::vector<double> jacobi_singular_values(Eigen::MatrixXd a) {
    if (a.rows() < a.cols()) a.transposeInPlace();
    const Eigen::Index n = a.cols();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = a.col(p).squaredNorm();
                const double beta = a.col(q).squaredNorm();
                const double gamma = a.col(p).dot(a.col(q));
                if (alpha == 0.0 || beta == 0.0) continue;
                off = std::max(off, std::fabs(gamma) / std::sqrt(alpha * beta));
                if (gamma == 0.0) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                const Eigen::VectorXd cp = a.col(p);
                a.col(p) = c * cp - s * a.col(q);
                a.col(q) = s * cp + c * a.col(q);
            }
        }
        if (off < 1e-15) break;
    }
    std::vector<double> sv(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) sv[static_cast<std::size_t>(k)] = a.col(k).norm();
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

// O(n^2) dominance check; returns ascending positions of kept points.
inline std::vector<std::size_t> brute_force_front(std::span<const ObjectivePoint> pts) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j)
            dominated = j != i && dominates(pts[j], pts[i]);
        if (!dominated) keep.push_back(i);
    }
    return keep;
}

inline std::vector<ObjectivePoint> random_points(std::mt19937_64& rng, std::size_t n, bool coarse = false) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> grid(0, 10);
    std::vector<ObjectivePoint> pts;
    for (std::size_t k = 0; k < n; ++k) {
        if (coarse) pts.push_back({grid(rng) / 10.0, grid(rng) / 10.0, static_cast<std::int64_t>(k)});
        else pts.push_back({u(rng), u(rng), static_cast<std::int64_t>(k)});
    }
    return pts;
}

// Mean and standard error of a Monte Carlo estimate.
struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline McEstimate mc_hypervolume(std::span<const ObjectivePoint> pts, RefPoint ref, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, ref.f1), uy(0.0, ref.f2);
    long hits = 0;
    for (int s = 0; s < samples; ++s) {
        const double x = ux(rng), y = uy(rng);
        for (const auto& p : pts) {
            if (p.f1 <= x && p.f2 <= y) {
                ++hits;
                break;
            }
        }
    }
    const double area = ref.f1 * ref.f2;
    const double frac = static_cast<double>(hits) / samples;
    return {area * frac, area * std::sqrt(frac * (1.0 - frac) / samples)};
}

inline McEstimate mc_ehvi(double mean, double sd, double f2, std::span<const ObjectivePoint> front, RefPoint ref,
                          int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(mean, sd);
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double v = hvi({n(rng), f2, -1}, front, ref);
        sum += v;
        sum2 += v * v;
    }
    const double m = sum / samples;
    const double var = std::max(0.0, sum2 / samples - m * m);
    return {m, std::sqrt(var / samples)};
}

} // namespace qadapt::testing
