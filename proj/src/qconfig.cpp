// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/qconfig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "qadapt/error.hpp"
#include "qadapt/linalg.hpp"

namespace qadapt {

namespace {

constexpr std::int64_t kAlignment = 64 * 256;  // largest B0*B1

auto ladder_key(const LayerQuantConfig& c, double bits) {
    return std::make_tuple(bits, c.b0, c.b1, format_bits(c.b2), c.B0, c.B1, static_cast<int>(c.b2));
}

} // namespace

// --- ladder -------------------------------------------------------------------

LayerLadder LayerLadder::build(Shape canonical) {
    if (canonical.rows <= 0 || canonical.cols <= 0 || canonical.count() % kAlignment != 0) {
        throw InvalidArgument(fmt::format("ladder canonical shape {}x{} is not block-aligned (weight count must be a multiple of {})",
                                          canonical.rows, canonical.cols, kAlignment));
    }
    LayerLadder ladder;
    ladder.canonical_ = canonical;
    std::array<std::pair<double, LayerQuantConfig>, kLatticeSize> keyed{};
    for (int i = 0; i < kLatticeSize; ++i) {
        const auto& c = all_layer_configs()[i];
        keyed[i] = {effective_bits(c, canonical.rows, canonical.cols), c};
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        return ladder_key(a.second, a.first) < ladder_key(b.second, b.first);
    });
    for (int k = 0; k < kLatticeSize; ++k) {
        ladder.entries_[k] = keyed[k].second;
        ladder.bits_[k] = keyed[k].first;
        ladder.rank_of_[lattice_index(keyed[k].second)] = k;
    }
    return ladder;
}

const LayerLadder& default_ladder() {
    static const LayerLadder ladder = LayerLadder::build();
    return ladder;
}

// --- model configurations -------------------------------------------------------

void validate(const ModelQuantConfig& c) {
    if (c.layers.empty()) throw InvalidArgument("model configuration has no layers");
    if (c.layers.size() != c.shapes.size())
        throw InvalidArgument(fmt::format("model configuration has {} layers but {} shapes", c.layers.size(),
                                          c.shapes.size()));
    for (const auto& l : c.layers) validate(l);
    for (const auto& s : c.shapes)
        if (s.rows <= 0 || s.cols <= 0) throw InvalidArgument("layer shape must be positive");
}

double avg_bits(const ModelQuantConfig& c) {
    validate(c);
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < c.layers.size(); ++i) {
        const auto count = static_cast<double>(c.shapes[i].count());
        weighted += nominal_bits(c.layers[i]) * count;
        total += count;
    }
    return weighted / total;
}

std::vector<int> ladder_ranks(const ModelQuantConfig& c, const LayerLadder& ladder) {
    std::vector<int> ranks(c.layers.size());
    for (std::size_t i = 0; i < c.layers.size(); ++i) ranks[i] = ladder.rank_of(c.layers[i]);
    return ranks;
}

ModelQuantConfig from_ranks(std::span<const int> ranks, std::span<const Shape> shapes, const LayerLadder& ladder) {
    if (ranks.size() != shapes.size()) throw InvalidArgument("from_ranks: ranks and shapes differ in length");
    ModelQuantConfig c;
    c.shapes.assign(shapes.begin(), shapes.end());
    c.layers.reserve(ranks.size());
    for (int r : ranks) {
        if (r < 0 || r > LayerLadder::kMaxRank) throw InvalidArgument(fmt::format("ladder rank {} out of range", r));
        c.layers.push_back(ladder.at(r));
    }
    return c;
}

Vector normalized_coords(const ModelQuantConfig& c, const LayerLadder& ladder) {
    Vector x(static_cast<Eigen::Index>(c.layers.size()));
    for (std::size_t i = 0; i < c.layers.size(); ++i)
        x(static_cast<Eigen::Index>(i)) = static_cast<double>(ladder.rank_of(c.layers[i])) / LayerLadder::kMaxRank;
    return x;
}

// --- embeddings -----------------------------------------------------------------

EmbeddingTables EmbeddingTables::zeros(int num_names, int num_blocks) {
    if (num_names < 1 || num_blocks < 1) throw InvalidArgument("embedding tables need at least one name and block");
    EmbeddingTables t;
    const std::array<int, 5> rows{4, 4, 3, 3, 3};
    for (int p = 0; p < 5; ++p) t.value_tables[p] = Matrix::Zero(rows[p], kEmbedDim);
    t.name_table = Matrix::Zero(num_names, kEmbedDim);
    t.block_table = Matrix::Zero(num_blocks, kEmbedDim);
    return t;
}

EmbeddingTables EmbeddingTables::random(int num_names, int num_blocks, std::uint64_t seed, double scale) {
    EmbeddingTables t = zeros(num_names, num_blocks);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    auto fill = [&](Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = gauss(rng);
    };
    for (auto& m : t.value_tables) fill(m);
    fill(t.name_table);
    fill(t.block_table);
    return t;
}

std::array<int, 5> value_indices(const LayerQuantConfig& c) {
    validate(c);
    auto pos = [](const auto& arr, auto v) {
        return static_cast<int>(std::find(arr.begin(), arr.end(), v) - arr.begin());
    };
    return {pos(kCodeBitChoices, c.b0), pos(kAbsmaxBitChoices, c.b1), pos(kFormatChoices, c.b2),
            pos(kBlockSizeChoices, c.B0), pos(kGroupSizeChoices, c.B1)};
}

Vector embed_layer(const LayerQuantConfig& c, int name_id, int block_idx, const EmbeddingTables& tables) {
    constexpr int e = EmbeddingTables::kEmbedDim;
    if (name_id < 0 || name_id >= tables.name_table.rows())
        throw InvalidArgument(fmt::format("layer name id {} outside [0, {})", name_id, tables.name_table.rows()));
    if (block_idx < 0 || block_idx >= tables.block_table.rows())
        throw InvalidArgument(fmt::format("block index {} outside [0, {})", block_idx, tables.block_table.rows()));
    Vector out(EmbeddingTables::kLayerDim);
    const auto idx = value_indices(c);
    for (int p = 0; p < 5; ++p) out.segment(p * e, e) = tables.value_tables[p].row(idx[p]).transpose();
    out.segment(5 * e, e) = tables.name_table.row(name_id).transpose();
    out.segment(6 * e, e) = tables.block_table.row(block_idx).transpose();
    return out;
}

// --- reconstruction error ---------------------------------------------------------

double layer_config_error(const Matrix& w, const LayerQuantConfig& c, int r) {
    const auto min_dim = static_cast<int>(std::min(w.rows(), w.cols()));
    if (r < 0 || r >= min_dim)
        throw InvalidArgument(fmt::format("layer_config_error: rank {} must lie in [0, {})", r, min_dim));
    const Matrix residual = w - dequantize(quantize_layer(w, c));
    if (r == 0) return residual.norm();
    const TruncatedSvd svd = truncated_svd(residual, r);
    return (residual - svd.reconstruct()).norm();
}

LayerErrorTable compute_layer_errors(std::span<const Matrix> weights, int r) {
    if (weights.empty()) throw InvalidArgument("compute_layer_errors: no layers");
    if (r < 0) throw InvalidArgument("compute_layer_errors: rank must be non-negative");
    LayerErrorTable table;
    table.candidates.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Matrix& w = weights[i];
        table.shapes.push_back({w.rows(), w.cols()});
        const int rank = std::min(r, static_cast<int>(std::min(w.rows(), w.cols())) - 1);
        auto& cands = table.candidates[i];
        cands.reserve(kLatticeSize);
        for (const auto& c : all_layer_configs()) cands.push_back({c, layer_config_error(w, c, rank)});
    }
    return table;
}

ModelQuantConfig solve_budget(const LayerErrorTable& table, double budget) {
    if (table.candidates.size() != table.shapes.size() || table.candidates.empty())
        throw InvalidArgument("solve_budget: malformed error table");
    double total = 0.0;
    for (const auto& s : table.shapes) total += static_cast<double>(s.count());

    // Weight = stored bits (exact dyadic values), capacity = budget * weights.
    std::vector<std::vector<MckpItem>> classes(table.candidates.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const auto count = static_cast<double>(table.shapes[i].count());
        for (std::size_t j = 0; j < table.candidates[i].size(); ++j) {
            const auto& cand = table.candidates[i][j];
            classes[i].push_back({nominal_bits(cand.config) * count, cand.error,
                                  default_ladder().rank_of(cand.config)});
        }
    }
    const MckpSolution sol = solve_mckp(classes, budget * total);
    ModelQuantConfig out;
    out.shapes = table.shapes;
    for (std::size_t i = 0; i < classes.size(); ++i) out.layers.push_back(table.candidates[i][sol.choice[i]].config);
    return out;
}

std::vector<double> budget_grid(double start, double stop, double step, std::size_t count) {
    if (!(step > 0.0)) throw InvalidArgument("budget grid step must be positive");
    std::vector<double> out;
    for (std::size_t k = 0; out.size() < count; ++k) {
        const double b = start + static_cast<double>(k) * step;
        if (b > stop + 1e-9) break;
        out.push_back(b);
    }
    return out;
}

std::vector<ModelQuantConfig> init_config_set(std::span<const Matrix> weights, std::span<const double> budgets,
                                              int r) {
    const LayerErrorTable table = compute_layer_errors(weights, r);
    std::vector<ModelQuantConfig> out;
    out.reserve(budgets.size());
    for (double b : budgets) out.push_back(solve_budget(table, b));
    return out;
}

// --- budget selection -------------------------------------------------------------

LadderWalk walk_to_budget(std::span<const int> start, std::span<const double> rank_bits,
                          std::span<const double> layer_weights, double b, double tol) {
    if (start.size() != layer_weights.size()) throw InvalidArgument("walk_to_budget: size mismatch");
    const double total = std::accumulate(layer_weights.begin(), layer_weights.end(), 0.0);
    const int top = static_cast<int>(rank_bits.size()) - 1;

    LadderWalk walk;
    walk.ranks.assign(start.begin(), start.end());
    double weighted = 0.0;
    for (std::size_t i = 0; i < start.size(); ++i) weighted += rank_bits[walk.ranks[i]] * layer_weights[i];

    for (;;) {
        const double gap = weighted / total - b;
        if (std::fabs(gap) <= tol) return walk;
        const int dir = gap > 0 ? -1 : 1;
        // Per layer, the nearest rank in the walking direction whose bits
        // differ (crossing any plateau); take the move with the largest bit
        // change per rank step among those that shrink the gap.
        int best_layer = -1;
        int best_rank = 0;
        double best_rate = 0.0;
        double best_weighted = weighted;
        for (std::size_t i = 0; i < walk.ranks.size(); ++i) {
            const int from = walk.ranks[i];
            int next = from + dir;
            while (next >= 0 && next <= top && rank_bits[next] == rank_bits[from]) next += dir;
            if (next < 0 || next > top) continue;
            const double change = (rank_bits[next] - rank_bits[from]) * layer_weights[i];
            const double moved = weighted + change;
            if (!(std::fabs(moved / total - b) < std::fabs(gap))) continue;
            const double rate = std::fabs(change) / std::abs(next - from);
            if (rate > best_rate) {
                best_rate = rate;
                best_layer = static_cast<int>(i);
                best_rank = next;
                best_weighted = moved;
            }
        }
        if (best_layer < 0) {
            throw Infeasible(fmt::format("no ladder move brings avg_bits {:.4f} closer to {:.4f} (tol {})",
                                         weighted / total, b, tol));
        }
        walk.distance += std::abs(best_rank - walk.ranks[best_layer]);
        walk.ranks[best_layer] = best_rank;
        weighted = best_weighted;
    }
}

BudgetSelection select_for_budget(std::span<const ModelQuantConfig> set, double b, double tol,
                                  const LayerLadder& ladder) {
    if (set.empty()) throw InvalidArgument("select_for_budget: empty configuration set");
    if (!(tol >= 0.0)) throw InvalidArgument("select_for_budget: tolerance must be non-negative");
    if (b < ladder.min_bits() - tol || b > ladder.max_bits() + tol)
        throw Infeasible(fmt::format("budget {:.4f} outside ladder range [{:.4f}, {:.4f}]", b, ladder.min_bits(),
                                     ladder.max_bits()));

    std::size_t nearest = 0;
    double nearest_gap = std::fabs(avg_bits(set[0]) - b);
    for (std::size_t k = 1; k < set.size(); ++k) {
        const double g = std::fabs(avg_bits(set[k]) - b);
        if (g < nearest_gap) {
            nearest_gap = g;
            nearest = k;
        }
    }

    const ModelQuantConfig& source = set[nearest];
    std::vector<double> rank_bits(kLatticeSize);
    for (int k = 0; k < kLatticeSize; ++k) rank_bits[k] = nominal_bits(ladder.at(k));
    std::vector<double> weights;
    for (const auto& s : source.shapes) weights.push_back(static_cast<double>(s.count()));

    const auto start = ladder_ranks(source, ladder);
    const LadderWalk walk = walk_to_budget(start, rank_bits, weights, b, tol);

    BudgetSelection sel;
    sel.config = from_ranks(walk.ranks, source.shapes, ladder);
    sel.source_index = nearest;
    sel.rank_distance = walk.distance;
    if (std::fabs(avg_bits(sel.config) - b) > tol)
        throw Infeasible(fmt::format("selected configuration misses budget {:.4f} by more than {}", b, tol));
    return sel;
}

} // namespace qadapt
