// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "qadapt/layer_config.hpp"
#include "qadapt/nfquant.hpp"

namespace qadapt {

struct Shape {
    std::int64_t rows = 0;
    std::int64_t cols = 0;

    std::int64_t count() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

// All 432 layer configurations ordered by storage cost at a block-aligned
// canonical shape. Ranks are the per-layer search coordinate.
class LayerLadder {
public:
    static constexpr int kMaxRank = kLatticeSize - 1;

    // Throws InvalidArgument unless the shape's weight count is a multiple of
    // every B0*B1 (16384), which makes the order match the exact bit counts.
    static LayerLadder build(Shape canonical = {128, 128});

    int size() const { return kLatticeSize; }
    const LayerQuantConfig& at(int rank) const { return entries_.at(rank); }
    double bits_at(int rank) const { return bits_.at(rank); }
    int rank_of(const LayerQuantConfig& c) const { return rank_of_[lattice_index(c)]; }
    Shape canonical_shape() const { return canonical_; }
    double min_bits() const { return bits_.front(); }
    double max_bits() const { return bits_.back(); }

private:
    Shape canonical_;
    std::array<LayerQuantConfig, kLatticeSize> entries_{};
    std::array<double, kLatticeSize> bits_{};
    std::array<int, kLatticeSize> rank_of_{};
};

const LayerLadder& default_ladder();

struct ModelQuantConfig {
    std::vector<LayerQuantConfig> layers;
    std::vector<Shape> shapes;

    std::size_t size() const { return layers.size(); }
    friend bool operator==(const ModelQuantConfig&, const ModelQuantConfig&) = default;
};

void validate(const ModelQuantConfig& c);

// Weight-count-weighted mean of the layers' amortized bit rates (f2).
double avg_bits(const ModelQuantConfig& c);

std::vector<int> ladder_ranks(const ModelQuantConfig& c, const LayerLadder& ladder = default_ladder());
ModelQuantConfig from_ranks(std::span<const int> ranks, std::span<const Shape> shapes,
                            const LayerLadder& ladder = default_ladder());
// rank / kMaxRank per layer, the GP input space.
Vector normalized_coords(const ModelQuantConfig& c, const LayerLadder& ladder = default_ladder());

// Per-parameter value tables (rows = domain size), plus layer-name and
// block-index tables; every table has kEmbedDim columns.
struct EmbeddingTables {
    static constexpr int kEmbedDim = 4;
    static constexpr int kLayerDim = 5 * kEmbedDim + 2 * kEmbedDim;  // 28

    std::array<Matrix, 5> value_tables;  // b0, b1, b2, B0, B1
    Matrix name_table;
    Matrix block_table;

    static EmbeddingTables zeros(int num_names, int num_blocks);
    static EmbeddingTables random(int num_names, int num_blocks, std::uint64_t seed, double scale = 0.5);
};

// Domain position of each of the five parameters, e.g. b0=8 -> 3.
std::array<int, 5> value_indices(const LayerQuantConfig& c);

// [z, m, b] concatenation, length 28.
Vector embed_layer(const LayerQuantConfig& c, int name_id, int block_idx, const EmbeddingTables& tables);

// ||R - R_r||_F for R = W - dequantize(quantize_layer(W, c)), with R_r the
// rank-r truncated SVD of R. Requires 0 <= r < min(d, n).
double layer_config_error(const Matrix& w, const LayerQuantConfig& c, int r);

// --- multiple-choice knapsack -------------------------------------------------

struct MckpItem {
    double weight = 0.0;
    double cost = 0.0;
    int id = 0;
};

struct MckpSolution {
    std::vector<int> choice;  // index into each class's item list
    double cost = 0.0;
    double weight = 0.0;
};

// Picks exactly one item per class minimizing total cost with total weight
// <= capacity. Among equal-cost optima, the lexicographically largest
// (weight, id) sequence wins, i.e. heavier choices go to lower class indices.
// Exact branch-and-bound with the LP (convex-hull) relaxation as the bound.
// Throws Infeasible when even the lightest choices exceed capacity.
MckpSolution solve_mckp(const std::vector<std::vector<MckpItem>>& classes, double capacity);

// Reference enumeration with the same tie rule; exponential, for tests.
MckpSolution brute_force_mckp(const std::vector<std::vector<MckpItem>>& classes, double capacity);

struct LayerCandidate {
    LayerQuantConfig config;
    double error = 0.0;
};

// Per layer, the reconstruction error of every lattice configuration.
struct LayerErrorTable {
    std::vector<Shape> shapes;
    std::vector<std::vector<LayerCandidate>> candidates;
};

// rank r is clamped per layer to min(d, n) - 1.
LayerErrorTable compute_layer_errors(std::span<const Matrix> weights, int r);

// Minimum total error assignment with avg_bits <= budget.
ModelQuantConfig solve_budget(const LayerErrorTable& table, double budget);

// first `count` budgets of start, start+step, ... <= stop
std::vector<double> budget_grid(double start, double stop, double step, std::size_t count = 50);

std::vector<ModelQuantConfig> init_config_set(std::span<const Matrix> weights, std::span<const double> budgets,
                                              int r);

// Greedy walk over a shared non-decreasing rank->bits ladder; the engine
// behind select_for_budget. Each move takes one layer to the nearest rank with
// different bits (plateaus are crossed, every rank counts toward distance),
// preferring the largest bit change per rank step among moves that shrink the
// gap. layer_weights are relative weight counts.
struct LadderWalk {
    std::vector<int> ranks;
    int distance = 0;
};
LadderWalk walk_to_budget(std::span<const int> start, std::span<const double> rank_bits,
                          std::span<const double> layer_weights, double b, double tol);

struct BudgetSelection {
    ModelQuantConfig config;
    std::size_t source_index = 0;  // member the search started from
    int rank_distance = 0;         // total ladder steps away from that member
};

// Nearest member by avg_bits, then single-layer ladder moves (largest bit
// change per rank step first) until |avg_bits - b| <= tol. Throws Infeasible
// if no move closes the remaining gap.
BudgetSelection select_for_budget(std::span<const ModelQuantConfig> set, double b, double tol = 0.05,
                                  const LayerLadder& ladder = default_ladder());

} // namespace qadapt
