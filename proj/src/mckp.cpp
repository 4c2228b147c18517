// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "qadapt/error.hpp"
#include "qadapt/qconfig.hpp"

namespace qadapt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Increment {
    double dw;
    double dc;
    std::size_t cls = 0;
    int item = -1;  // item reached by taking this step
    double slope() const { return dc / dw; }
};

// Total order on candidate solutions: lower cost, then the lexicographically
// larger (weight, id) sequence.
bool better(const std::vector<std::vector<MckpItem>>& classes, double cost_a, const std::vector<int>& a,
            double cost_b, const std::vector<int>& b) {
    if (b.empty()) return true;
    if (cost_a != cost_b) return cost_a < cost_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& ia = classes[i][a[i]];
        const auto& ib = classes[i][b[i]];
        if (ia.weight != ib.weight) return ia.weight > ib.weight;
        if (ia.id != ib.id) return ia.id > ib.id;
    }
    return false;
}

// Drops items that some other item beats strictly on cost at no more weight.
std::vector<int> undominated(const std::vector<MckpItem>& items) {
    std::vector<int> order(items.size());
    for (std::size_t j = 0; j < items.size(); ++j) order[j] = static_cast<int>(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::tie(items[a].weight, items[a].cost) < std::tie(items[b].weight, items[b].cost);
    });
    std::vector<int> keep;
    double running_min = kInf;
    for (std::size_t g = 0; g < order.size();) {
        std::size_t end = g;
        double group_min = kInf;
        while (end < order.size() && items[order[end]].weight == items[order[g]].weight) {
            group_min = std::min(group_min, items[order[end]].cost);
            ++end;
        }
        running_min = std::min(running_min, group_min);
        for (std::size_t j = g; j < end; ++j)
            if (!(running_min < items[order[j]].cost)) keep.push_back(order[j]);
        g = end;
    }
    return keep;
}

// Lower convex hull of (weight, cost) from the lightest point down to the
// cheapest, as a start point plus increments of increasing slope.
struct Hull {
    int start;
    std::vector<Increment> inc;
};

Hull hull(const std::vector<MckpItem>& items, const std::vector<int>& kept, std::size_t cls) {
    std::vector<int> pts = kept;
    std::sort(pts.begin(), pts.end(), [&](int a, int b) {
        return std::tie(items[a].weight, items[a].cost, a) < std::tie(items[b].weight, items[b].cost, b);
    });
    std::vector<int> h;
    for (int j : pts) {
        const auto& p = items[j];
        if (!h.empty() && p.weight == items[h.back()].weight) continue;  // lightest-cost point per weight already in
        if (!h.empty() && p.cost >= items[h.back()].cost) continue;      // not cheaper: never on the descending hull
        while (h.size() >= 2) {
            const auto& a = items[h[h.size() - 2]];
            const auto& b = items[h.back()];
            // remove b when it lies on or above segment a-p
            const double cross = (b.weight - a.weight) * (p.cost - a.cost) - (b.cost - a.cost) * (p.weight - a.weight);
            if (cross <= 0.0) h.pop_back();
            else break;
        }
        h.push_back(j);
    }
    Hull out{h.front(), {}};
    for (std::size_t k = 1; k < h.size(); ++k)
        out.inc.push_back({items[h[k]].weight - items[h[k - 1]].weight, items[h[k]].cost - items[h[k - 1]].cost, cls, h[k]});
    return out;
}

class BranchAndBound {
public:
    BranchAndBound(const std::vector<std::vector<MckpItem>>& classes, double capacity)
        : classes_(classes), capacity_(capacity), n_(classes.size()) {
        order_.resize(n_);
        start_.assign(n_, 0);
        base_w_.assign(n_ + 1, 0.0);
        base_c_.assign(n_ + 1, 0.0);
        suffix_inc_.resize(n_ + 1);
        for (std::size_t k = n_; k-- > 0;) {
            const auto kept = undominated(classes_[k]);
            const Hull h = hull(classes_[k], kept, k);
            start_[k] = h.start;
            base_w_[k] = base_w_[k + 1] + classes_[k][h.start].weight;
            base_c_[k] = base_c_[k + 1] + classes_[k][h.start].cost;
            auto merged = suffix_inc_[k + 1];
            merged.insert(merged.end(), h.inc.begin(), h.inc.end());
            std::stable_sort(merged.begin(), merged.end(),
                             [](const Increment& a, const Increment& b) { return a.slope() < b.slope(); });
            suffix_inc_[k] = std::move(merged);

            order_[k] = kept;
            const auto& items = classes_[k];
            std::sort(order_[k].begin(), order_[k].end(), [&](int a, int b) {
                if (items[a].cost != items[b].cost) return items[a].cost < items[b].cost;
                if (items[a].weight != items[b].weight) return items[a].weight > items[b].weight;
                return items[a].id > items[b].id;
            });
        }
    }

    MckpSolution run() {
        if (base_w_[0] > capacity_ + slack(capacity_)) {
            throw Infeasible(fmt::format("knapsack infeasible: lightest choices need {:.6g} > capacity {:.6g}",
                                         base_w_[0], capacity_));
        }
        seed_incumbent();
        search();
        if (best_.empty()) throw Infeasible("knapsack infeasible: no assignment fits the capacity");
        MckpSolution sol;
        sol.choice = best_;
        sol.cost = best_cost_;
        for (std::size_t i = 0; i < n_; ++i) sol.weight += classes_[i][best_[i]].weight;
        return sol;
    }

private:
    static double slack(double v) { return 1e-9 * std::max(1.0, std::fabs(v)); }

    // LP relaxation over classes k.., given remaining capacity.
    double lp_bound(std::size_t k, double remaining) const {
        if (base_w_[k] > remaining + slack(capacity_)) return kInf;
        double room = remaining - base_w_[k];
        double c = base_c_[k];
        for (const auto& inc : suffix_inc_[k]) {
            if (room <= 0.0) break;
            if (inc.dw <= room) {
                c += inc.dc;
                room -= inc.dw;
            } else {
                c += inc.dc * (room / inc.dw);
                break;
            }
        }
        return c;
    }

    // Integral point of the LP greedy: hull steps in slope order while they fit.
    void seed_incumbent() {
        std::vector<int> pick(start_);
        double room = capacity_ - base_w_[0];
        for (const auto& inc : suffix_inc_[0]) {
            if (inc.dw > room) break;
            room -= inc.dw;
            pick[inc.cls] = inc.item;
        }
        double w = 0.0, c = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            w += classes_[i][pick[i]].weight;
            c += classes_[i][pick[i]].cost;
        }
        if (w <= capacity_) {
            best_ = std::move(pick);
            best_cost_ = c;
        }
    }

    // Lexicographic tie order of two prefixes over classes 0..k.
    bool lex_better(const std::vector<int>& a, const std::vector<int>& b, std::size_t k) const {
        for (std::size_t i = 0; i <= k; ++i) {
            const auto& ia = classes_[i][a[i]];
            const auto& ib = classes_[i][b[i]];
            if (ia.weight != ib.weight) return ia.weight > ib.weight;
            if (ia.id != ib.id) return ia.id > ib.id;
        }
        return false;
    }

    // Class-by-class frontier of partial sums. A prefix is dropped when its LP
    // bound exceeds the incumbent or another prefix is no heavier and cheaper
    // (or equally cheap and preferred by the tie order).
    void search() {
        struct State {
            double w, c;
            std::vector<int> pick;
        };
        std::vector<State> frontier{{0.0, 0.0, std::vector<int>(n_, -1)}};
        for (std::size_t k = 0; k < n_; ++k) {
            std::vector<State> next;
            for (const auto& s : frontier) {
                for (int j : order_[k]) {
                    const auto& item = classes_[k][j];
                    const double w = s.w + item.weight;
                    const double c = s.c + item.cost;
                    if (w + base_w_[k + 1] > capacity_ + slack(capacity_)) continue;
                    if (!best_.empty() && c + lp_bound(k + 1, capacity_ - w) > best_cost_ + slack(best_cost_)) continue;
                    State t{w, c, s.pick};
                    t.pick[k] = j;
                    next.push_back(std::move(t));
                }
            }
            std::sort(next.begin(), next.end(), [](const State& a, const State& b) {
                return a.w != b.w ? a.w < b.w : a.c < b.c;
            });
            frontier.clear();
            std::size_t champion = 0;  // cheapest so far; tie-order best among equals
            for (auto& s : next) {
                if (!frontier.empty()) {
                    const State& top = frontier[champion];
                    if (s.c > top.c) continue;
                    if (s.c == top.c && !lex_better(s.pick, top.pick, k)) continue;
                }
                frontier.push_back(std::move(s));
                champion = frontier.size() - 1;
            }
            if (frontier.empty()) return;
        }
        for (const auto& s : frontier) {
            if (s.w <= capacity_ && better(classes_, s.c, s.pick, best_cost_, best_)) {
                best_ = s.pick;
                best_cost_ = s.c;
            }
        }
    }

    const std::vector<std::vector<MckpItem>>& classes_;
    double capacity_;
    std::size_t n_;
    std::vector<std::vector<int>> order_;
    std::vector<int> start_;
    std::vector<double> base_w_;
    std::vector<double> base_c_;
    std::vector<std::vector<Increment>> suffix_inc_;
    std::vector<int> best_;
    double best_cost_ = kInf;
};

void check_classes(const std::vector<std::vector<MckpItem>>& classes) {
    if (classes.empty()) throw InvalidArgument("knapsack needs at least one class");
    for (const auto& c : classes) {
        if (c.empty()) throw InvalidArgument("knapsack class without items");
        for (const auto& it : c)
            if (!std::isfinite(it.weight) || !std::isfinite(it.cost))
                throw InvalidArgument("knapsack item with non-finite weight or cost");
    }
}

} // namespace

MckpSolution solve_mckp(const std::vector<std::vector<MckpItem>>& classes, double capacity) {
    check_classes(classes);
    return BranchAndBound(classes, capacity).run();
}

MckpSolution brute_force_mckp(const std::vector<std::vector<MckpItem>>& classes, double capacity) {
    check_classes(classes);
    const std::size_t n = classes.size();
    std::vector<int> pick(n, 0);
    std::vector<int> best;
    double best_cost = kInf;
    for (;;) {
        double w = 0.0;
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w += classes[i][pick[i]].weight;
            c += classes[i][pick[i]].cost;
        }
        if (w <= capacity && better(classes, c, pick, best_cost, best)) {
            best = pick;
            best_cost = c;
        }
        std::size_t i = 0;
        while (i < n && ++pick[i] == static_cast<int>(classes[i].size())) pick[i++] = 0;
        if (i == n) break;
    }
    if (best.empty()) throw Infeasible("knapsack infeasible: no assignment fits the capacity");
    MckpSolution sol;
    sol.choice = best;
    sol.cost = best_cost;
    for (std::size_t i = 0; i < n; ++i) sol.weight += classes[i][best[i]].weight;
    return sol;
}

} // namespace qadapt
