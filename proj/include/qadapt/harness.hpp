// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qadapt/pareto.hpp"
#include "qadapt/qconfig.hpp"

namespace qadapt {

// "start:stop:step" -> inclusive grid, values rounded to 1e-9.
struct RangeSpec {
    double start = 0.0;
    double stop = 0.0;
    double step = 0.1;
};
RangeSpec parse_range(const std::string& text);
std::vector<double> range_values(const RangeSpec& r);

// Uniform random lattice points adjusted to avg_bits within tol of b. Restarts
// from a fresh draw when the single-step walk gets stuck.
ModelQuantConfig random_config_at_bits(std::span<const Shape> shapes, double b, double tol, std::mt19937_64& rng,
                                       const LayerLadder& ladder = default_ladder());

struct CurvePoint {
    double bits = 0.0;          // requested grid value
    double seen_bits = 0.0;     // achieved by the selected member
    double unseen_bits = 0.0;   // achieved by the random configuration
    double loss_seen = 0.0;
    double loss_unseen = 0.0;
    std::size_t source_index = 0;
    int rank_distance = 0;
    std::string config_id;
};

struct CurveResult {
    std::vector<CurvePoint> points;
    std::vector<double> skipped;     // grid values without a feasible selection
    double mean_relative_gap = 0.0;  // mean (unseen - seen) / seen
};

// loss(config, source_index) scores a configuration with the adapter that
// belongs to final-set member source_index.
using CurveLoss = std::function<double(const ModelQuantConfig&, std::size_t)>;

CurveResult eval_curve(std::span<const ModelQuantConfig> final_set, std::span<const double> grid,
                       std::uint64_t unseen_seed, const CurveLoss& loss, double tol = 0.05);

struct CurveInput {
    std::string name;
    std::vector<double> bits;
    std::vector<double> loss;
};

struct MethodReport {
    std::string name;
    double hv = 0.0;
    double gap = 0.0;  // mean (baseline - method) / baseline over shared grid points; > 0 is better
    std::size_t points = 0;
    std::size_t matched = 0;
};

struct ParetoReport {
    double loss_max = 0.0;
    double bits_max = 0.0;
    RefPoint ref;
    std::string baseline;
    std::vector<MethodReport> methods;
};

// Joint normalization over every curve, per-method HV, and loss gaps against
// the named baseline at matching grid values.
ParetoReport pareto_report(std::span<const CurveInput> curves, const std::string& baseline, RefPoint ref = {});

} // namespace qadapt
