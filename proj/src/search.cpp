// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "qadapt/error.hpp"
#include "qadapt/log.hpp"
#include "qadapt/parallel.hpp"

namespace qadapt {

double max_lattice_bits() {
    double best = 0.0;
    for (const auto& c : all_layer_configs()) best = std::max(best, nominal_bits(c));
    return best;
}

namespace {

double ranks_avg_bits(std::span<const int> ranks, std::span<const Shape> shapes, const LayerLadder& ladder) {
    double weighted = 0.0, total = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        const auto count = static_cast<double>(shapes[i].count());
        weighted += nominal_bits(ladder.at(ranks[i])) * count;
        total += count;
    }
    return weighted / total;
}

Vector rank_coords(std::span<const int> ranks) {
    Vector x(static_cast<Eigen::Index>(ranks.size()));
    for (std::size_t i = 0; i < ranks.size(); ++i)
        x(static_cast<Eigen::Index>(i)) = static_cast<double>(ranks[i]) / LayerLadder::kMaxRank;
    return x;
}

ObjectivePoint to_point(double loss, double bits, const ObjectiveScale& s, std::int64_t id) {
    const auto [f1, f2] = normalize(loss, s.loss_max, bits, s.bits_max);
    return {f1, f2, id};
}

void refit(SearchState& state, const SearchOptions& opts) {
    const auto m = static_cast<Eigen::Index>(state.evaluated.size());
    const auto n = static_cast<Eigen::Index>(state.shapes.size());
    Matrix x(m, n);
    Vector y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& e = state.evaluated[static_cast<std::size_t>(k)];
        x.row(k) = rank_coords(e.ranks).transpose();
        y(k) = e.point.f1;
    }
    state.gp = gp_fit(x, y, opts.gp);
}

// Scores rank vectors under one stack. Evaluations are independent.
std::vector<double> score(const Evaluator& eval, const std::vector<std::vector<int>>& ranks,
                          std::span<const Shape> shapes, const AdapterStack& stack, int threads) {
    std::vector<double> losses(ranks.size());
    parallel_for(ranks.size(), threads, [&](std::size_t i) {
        losses[i] = eval.loss(from_ranks(ranks[i], shapes), stack);
    });
    return losses;
}

} // namespace

double AcquisitionContext::alpha(std::span<const int> ranks) const {
    const GpPrediction p = gp_predict(*gp, rank_coords(ranks));
    const double f2 = std::clamp(ranks_avg_bits(ranks, shapes, *ladder) / scale.bits_max, 0.0, 1.0);
    return ehvi(p.mean, p.var, f2, front);
}

Vector fd_gradient(std::span<const int> ranks, const AcquisitionContext& ctx) {
    const auto n = static_cast<Eigen::Index>(ranks.size());
    Vector g(n);
    std::vector<int> probe(ranks.begin(), ranks.end());
    const double here = ctx.alpha(ranks);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int r = ranks[static_cast<std::size_t>(i)];
        const int up = std::min(r + 1, LayerLadder::kMaxRank);
        const int down = std::max(r - 1, 0);
        auto at = [&](int v) {
            if (v == r) return here;
            probe[static_cast<std::size_t>(i)] = v;
            const double a = ctx.alpha(probe);
            probe[static_cast<std::size_t>(i)] = r;
            return a;
        };
        const double hi = at(up);
        const double lo = at(down);
        // Central difference spans 2 ranks; a clamped side spans 1.
        g(i) = (hi - lo) / static_cast<double>(up - down);
    }
    return g;
}

std::vector<int> coordinate_step(std::span<const int> ranks, const Vector& g) {
    if (g.size() != static_cast<Eigen::Index>(ranks.size()))
        throw InvalidArgument("coordinate_step: gradient length does not match layer count");
    std::vector<int> out(ranks.begin(), ranks.end());
    Eigen::Index best = -1;
    double mag = 1e-12;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (std::abs(g(i)) >= mag && (best < 0 || std::abs(g(i)) > std::abs(g(best)))) {
            best = i;
            mag = std::abs(g(i));
        }
    }
    if (best < 0) return out;
    const int dir = g(best) > 0 ? -1 : 1;
    int& r = out[static_cast<std::size_t>(best)];
    r = std::clamp(r + dir, 0, LayerLadder::kMaxRank);
    return out;
}

double Evaluator::loss(const ModelQuantConfig& c, const AdapterStack& stack) const {
    return forward_loss(*net, *cache, c, stack, use_hyper, x, y);
}

std::vector<ObjectivePoint> SearchState::current_points() const {
    std::vector<ObjectivePoint> pts;
    pts.reserve(current.size());
    for (std::size_t k : current) pts.push_back(evaluated[k].point);
    return pts;
}

std::vector<ModelQuantConfig> SearchState::current_configs(const LayerLadder& ladder) const {
    std::vector<ModelQuantConfig> out;
    out.reserve(current.size());
    for (std::size_t k : current) out.push_back(from_ranks(evaluated[k].ranks, shapes, ladder));
    return out;
}

double SearchState::current_hv() const {
    const auto pts = current_points();
    return hypervolume_2d(pts);
}

SearchState start_search(const Evaluator& eval, std::span<const ModelQuantConfig> init_set, const AdapterStack& stack,
                         const SearchOptions& opts) {
    if (init_set.empty()) throw InvalidArgument("search needs a non-empty initial configuration set");
    SearchState state;
    state.shapes = init_set[0].shapes;
    std::vector<std::vector<int>> ranks;
    for (const auto& c : init_set) {
        if (c.shapes != state.shapes) throw InvalidArgument("initial configurations disagree on layer shapes");
        auto r = ladder_ranks(c);
        if (std::find(ranks.begin(), ranks.end(), r) == ranks.end()) ranks.push_back(std::move(r));
    }
    state.snapshots.push_back(stack);
    const std::vector<double> losses = score(eval, ranks, state.shapes, stack, opts.threads);

    state.scale.bits_max = max_lattice_bits();
    state.scale.loss_max = *std::max_element(losses.begin(), losses.end());
    if (!(state.scale.loss_max > 0.0) || !std::isfinite(state.scale.loss_max))
        throw NumericError(fmt::format("initial losses give an unusable normalizer {}", state.scale.loss_max));

    for (std::size_t k = 0; k < ranks.size(); ++k) {
        EvaluatedConfig e;
        e.id = static_cast<std::int64_t>(k);
        e.ranks = ranks[k];
        e.loss = losses[k];
        e.bits = ranks_avg_bits(e.ranks, state.shapes, default_ladder());
        e.point = to_point(e.loss, e.bits, state.scale, e.id);
        state.evaluated.push_back(std::move(e));
    }
    std::vector<ObjectivePoint> pts;
    for (const auto& e : state.evaluated) pts.push_back(e.point);
    state.current = segmented_filter_indices(pts, opts.segments);
    refit(state, opts);
    return state;
}

void run_search_epoch(SearchState& state, const Evaluator& eval, const AdapterStack& stack, const SearchOptions& opts) {
    if (opts.fd_steps < 0) throw InvalidArgument("fd step count must be non-negative");
    const int snapshot = static_cast<int>(state.snapshots.size());
    state.snapshots.push_back(stack);
    ++state.epoch;

    AcquisitionContext ctx;
    ctx.gp = &state.gp;
    ctx.front = pareto_front(state.current_points());
    ctx.shapes = state.shapes;
    ctx.scale = state.scale;

    // Coordinate search from every retained member.
    std::vector<std::vector<int>> moved(state.current.size());
    parallel_for(state.current.size(), opts.threads, [&](std::size_t j) {
        std::vector<int> r = state.evaluated[state.current[j]].ranks;
        for (int t = 0; t < opts.fd_steps; ++t) {
            std::vector<int> next = coordinate_step(r, fd_gradient(r, ctx));
            if (next == r) break;
            r = std::move(next);
        }
        moved[j] = std::move(r);
    });

    // Unseen configurations only, in a canonical order.
    std::map<std::vector<int>, std::size_t> known;
    for (std::size_t k = 0; k < state.evaluated.size(); ++k) known.emplace(state.evaluated[k].ranks, k);
    std::vector<std::vector<int>> fresh;
    for (auto& r : moved)
        if (known.find(r) == known.end()) fresh.push_back(std::move(r));
    std::sort(fresh.begin(), fresh.end());
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());

    const std::vector<double> losses = score(eval, fresh, state.shapes, stack, opts.threads);
    std::vector<std::size_t> merged = state.current;
    for (std::size_t k = 0; k < fresh.size(); ++k) {
        EvaluatedConfig e;
        e.id = static_cast<std::int64_t>(state.evaluated.size());
        e.ranks = std::move(fresh[k]);
        e.loss = losses[k];
        e.bits = ranks_avg_bits(e.ranks, state.shapes, default_ladder());
        e.point = to_point(e.loss, e.bits, state.scale, e.id);
        e.snapshot = snapshot;
        e.epoch = state.epoch;
        merged.push_back(state.evaluated.size());
        state.evaluated.push_back(std::move(e));
    }
    std::sort(merged.begin(), merged.end());

    // Segment bounds span every evaluated point, so re-filtering a filtered
    // set with no new points changes nothing.
    std::vector<ObjectivePoint> all, pts;
    for (const auto& e : state.evaluated) all.push_back(e.point);
    for (std::size_t k : merged) pts.push_back(state.evaluated[k].point);
    std::vector<std::size_t> keep;
    for (std::size_t j : segmented_filter_indices(pts, opts.segments, f2_range(all))) keep.push_back(merged[j]);
    state.current = std::move(keep);
    refit(state, opts);
}

CoaResult run_coa(const TargetNet& net, QuantCache& cache, const Dataset& data,
                  std::span<const ModelQuantConfig> init_set, const CoaOptions& opts) {
    if (opts.epochs < 0 || opts.train_epochs < 0) throw InvalidArgument("epoch counts must be non-negative");
    Evaluator eval;
    eval.net = &net;
    eval.cache = &cache;
    std::tie(eval.x, eval.y) = data.batch(data.calibration);
    eval.use_hyper = true;

    AdapterStack init = AdapterStack::init(net, opts.rank, opts.train.seed, true);
    CoaResult result{init, start_search(eval, init_set, init, opts.search_opts), {}};
    AdapterTrainer trainer(net, cache, data, std::move(init), true, opts.train);

    for (int t = 1; t <= opts.epochs; ++t) {
        const auto started = std::chrono::steady_clock::now();
        try {
            const auto configs = result.state.current_configs();
            trainer.run_steps(configs, trainer.steps_per_epoch() * opts.train_epochs);
            if (opts.search) {
                run_search_epoch(result.state, eval, trainer.stack(), opts.search_opts);
            } else {
                ++result.state.epoch;
            }
        } catch (const TrainingError& e) {
            throw CoaError(fmt::format("epoch {}: {}", t, e.what()), t);
        } catch (const NumericError& e) {
            throw CoaError(fmt::format("epoch {}: {}", t, e.what()), t);
        }
        EpochRecord rec;
        rec.epoch = t;
        rec.hv = result.state.current_hv();
        rec.set_size = result.state.current.size();
        double sum = 0.0;
        for (std::size_t k : result.state.current) sum += result.state.evaluated[k].loss;
        rec.mean_f1 = sum / static_cast<double>(result.state.current.size());
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        log_info(fmt::format("epoch {}: hv={:.6f} set={} mean_f1={:.6g}", t, rec.hv, rec.set_size, rec.mean_f1));
        result.history.push_back(rec);
    }
    result.stack = trainer.stack();
    return result;
}

} // namespace qadapt
