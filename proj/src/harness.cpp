// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "qadapt/error.hpp"
#include "qadapt/log.hpp"

namespace qadapt {

namespace {

double parse_number(std::string_view s, const std::string& whole) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw InvalidArgument(fmt::format("range '{}': '{}' is not a number", whole, s));
    return v;
}

double round9(double v) {
    return std::round(v * 1e9) / 1e9;
}

} // namespace

RangeSpec parse_range(const std::string& text) {
    const auto a = text.find(':');
    const auto b = a == std::string::npos ? a : text.find(':', a + 1);
    if (a == std::string::npos || b == std::string::npos || text.find(':', b + 1) != std::string::npos)
        throw InvalidArgument(fmt::format("range '{}': expected start:stop:step", text));
    RangeSpec r;
    r.start = parse_number(std::string_view(text).substr(0, a), text);
    r.stop = parse_number(std::string_view(text).substr(a + 1, b - a - 1), text);
    r.step = parse_number(std::string_view(text).substr(b + 1), text);
    if (!(r.step > 0.0)) throw InvalidArgument(fmt::format("range '{}': step must be positive", text));
    if (r.stop < r.start) throw InvalidArgument(fmt::format("range '{}': stop is below start", text));
    return r;
}

std::vector<double> range_values(const RangeSpec& r) {
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((r.stop - r.start) / r.step + 1e-9)) + 1;
    for (long k = 0; k < n; ++k) out.push_back(round9(r.start + static_cast<double>(k) * r.step));
    return out;
}

ModelQuantConfig random_config_at_bits(std::span<const Shape> shapes, double b, double tol, std::mt19937_64& rng,
                                       const LayerLadder& ladder) {
    if (b < ladder.min_bits() - tol || b > ladder.max_bits() + tol)
        throw Infeasible(fmt::format("no configuration reaches {:.4f} bits", b));
    // Walk over distinct nominal-bit levels so every step changes avg_bits,
    // then draw a lattice point uniformly within each layer's final level.
    std::vector<double> levels;
    for (int k = 0; k < kLatticeSize; ++k) levels.push_back(nominal_bits(ladder.at(k)));
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<std::vector<int>> members(levels.size());
    std::vector<int> level_of(kLatticeSize);
    for (int k = 0; k < kLatticeSize; ++k) {
        const auto it = std::lower_bound(levels.begin(), levels.end(), nominal_bits(ladder.at(k)));
        level_of[k] = static_cast<int>(it - levels.begin());
        members[level_of[k]].push_back(k);
    }
    std::vector<double> weights;
    for (const auto& s : shapes) weights.push_back(static_cast<double>(s.count()));
    std::uniform_int_distribution<int> pick(0, LayerLadder::kMaxRank);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<int> start(shapes.size());
        for (int& r : start) r = level_of[pick(rng)];
        try {
            const LadderWalk walk = walk_to_budget(start, levels, weights, b, tol);
            std::vector<int> ranks;
            for (int lv : walk.ranks) {
                const auto& m = members[lv];
                ranks.push_back(m[std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(rng)]);
            }
            return from_ranks(ranks, shapes, ladder);
        } catch (const Infeasible&) {
            continue;
        }
    }
    throw Infeasible(fmt::format("random configurations could not be adjusted to {:.4f} bits", b));
}

CurveResult eval_curve(std::span<const ModelQuantConfig> final_set, std::span<const double> grid,
                       std::uint64_t unseen_seed, const CurveLoss& loss, double tol) {
    if (final_set.empty()) throw InvalidArgument("eval_curve: empty configuration set");
    CurveResult out;
    std::mt19937_64 rng(unseen_seed);
    double gap_sum = 0.0;
    for (double b : grid) {
        BudgetSelection sel;
        ModelQuantConfig unseen;
        try {
            sel = select_for_budget(final_set, b, tol);
            unseen = random_config_at_bits(final_set[0].shapes, b, tol, rng);
        } catch (const Infeasible& e) {
            log_warn(fmt::format("eval-curve: skipping {:.4f} bits ({})", b, e.what()));
            out.skipped.push_back(b);
            continue;
        }
        CurvePoint p;
        p.bits = b;
        p.seen_bits = avg_bits(sel.config);
        p.unseen_bits = avg_bits(unseen);
        p.source_index = sel.source_index;
        p.rank_distance = sel.rank_distance;
        p.config_id = sel.rank_distance == 0 ? fmt::format("m{}", sel.source_index)
                                             : fmt::format("m{}+{}", sel.source_index, sel.rank_distance);
        p.loss_seen = loss(sel.config, sel.source_index);
        p.loss_unseen = loss(unseen, sel.source_index);
        gap_sum += (p.loss_unseen - p.loss_seen) / p.loss_seen;
        out.points.push_back(std::move(p));
    }
    if (!out.points.empty()) out.mean_relative_gap = gap_sum / static_cast<double>(out.points.size());
    return out;
}

ParetoReport pareto_report(std::span<const CurveInput> curves, const std::string& baseline, RefPoint ref) {
    if (curves.empty()) throw InvalidArgument("pareto-report: no curves");
    ParetoReport rep;
    rep.ref = ref;
    rep.baseline = baseline;
    const CurveInput* base = nullptr;
    for (const auto& c : curves) {
        if (c.bits.size() != c.loss.size() || c.bits.empty())
            throw InvalidArgument(fmt::format("pareto-report: curve '{}' is empty or ragged", c.name));
        if (c.name == baseline) base = &c;
        for (std::size_t k = 0; k < c.bits.size(); ++k) {
            rep.loss_max = std::max(rep.loss_max, c.loss[k]);
            rep.bits_max = std::max(rep.bits_max, c.bits[k]);
        }
    }
    if (base == nullptr) throw InvalidArgument(fmt::format("pareto-report: baseline '{}' is not among the curves", baseline));

    auto key = [](double b) { return std::llround(b * 1e6); };
    std::map<long long, double> base_loss;
    for (std::size_t k = 0; k < base->bits.size(); ++k) base_loss[key(base->bits[k])] = base->loss[k];

    for (const auto& c : curves) {
        MethodReport m;
        m.name = c.name;
        m.points = c.bits.size();
        std::vector<ObjectivePoint> pts;
        double gap = 0.0;
        std::vector<double> unmatched;
        for (std::size_t k = 0; k < c.bits.size(); ++k) {
            const auto [f1, f2] = normalize(c.loss[k], rep.loss_max, c.bits[k], rep.bits_max);
            pts.push_back({f1, f2, static_cast<std::int64_t>(k)});
            const auto it = base_loss.find(key(c.bits[k]));
            if (it == base_loss.end()) {
                unmatched.push_back(c.bits[k]);
                continue;
            }
            gap += (it->second - c.loss[k]) / it->second;
            ++m.matched;
        }
        if (m.matched == 0)
            throw InvalidArgument(fmt::format("pareto-report: curve '{}' shares no bit grid point with baseline '{}' "
                                              "(its grid: {}; baseline grid: {})",
                                              c.name, baseline, fmt::join(c.bits, ","), fmt::join(base->bits, ",")));
        if (!unmatched.empty())
            log_info(fmt::format("pareto-report: '{}' points without a baseline match: {}", c.name,
                                 fmt::join(unmatched, ",")));
        m.gap = gap / static_cast<double>(m.matched);
        m.hv = hypervolume_2d(pts, ref);
        rep.methods.push_back(std::move(m));
    }
    return rep;
}

} // namespace qadapt
