// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qadapt/pareto.hpp"
#include "qadapt/qconfig.hpp"
#include "qadapt/surrogate.hpp"
#include "qadapt/tinynet.hpp"

namespace qadapt {

// Largest nominal average bit-width on the lattice; the f2 normalizer.
double max_lattice_bits();

// Objective normalization, frozen for a whole run.
struct ObjectiveScale {
    double loss_max = 1.0;
    double bits_max = 8.625;
};

// What the acquisition needs to score a rank vector: the GP, the current
// normalized front, and how to turn ranks into normalized bits.
struct AcquisitionContext {
    const GpModel* gp = nullptr;
    std::vector<ObjectivePoint> front;
    std::vector<Shape> shapes;
    ObjectiveScale scale;
    const LayerLadder* ladder = &default_ladder();

    double alpha(std::span<const int> ranks) const;
};

// Central differences of EHVI along each layer's ladder rank (delta = 1), one
// sided with divisor 1 at the ladder ends.
Vector fd_gradient(std::span<const int> ranks, const AcquisitionContext& ctx);

// Moves the layer with the largest |g| one rank against the sign of its
// gradient, clamped to the ladder. Unchanged when every |g| < 1e-12.
std::vector<int> coordinate_step(std::span<const int> ranks, const Vector& g);

struct EvaluatedConfig {
    std::int64_t id = 0;
    std::vector<int> ranks;
    double loss = 0.0;       // calibration loss f1
    double bits = 0.0;       // avg_bits f2
    ObjectivePoint point;    // normalized
    int snapshot = 0;        // index of the adapter snapshot used for f1
    int epoch = 0;           // epoch that produced it (0 = initial set)
};

struct EpochRecord {
    int epoch = 0;
    double hv = 0.0;
    std::size_t set_size = 0;
    double mean_f1 = 0.0;  // mean calibration loss over the retained set
    double wall_ms = 0.0;
};

struct SearchOptions {
    int fd_steps = 3;    // T2
    int segments = 40;   // U
    GpOptions gp;
    int threads = 1;     // candidate evaluation workers
};

struct SearchState {
    std::vector<Shape> shapes;
    ObjectiveScale scale;
    std::vector<EvaluatedConfig> evaluated;  // everything ever scored
    std::vector<std::size_t> current;        // retained set, positions into evaluated
    std::vector<AdapterStack> snapshots;
    GpModel gp;
    int epoch = 0;

    std::vector<ObjectivePoint> current_points() const;
    std::vector<ModelQuantConfig> current_configs(const LayerLadder& ladder = default_ladder()) const;
    double current_hv() const;
};

// Calibration-batch loss of a configuration under a stack (with hypernetwork).
struct Evaluator {
    const TargetNet* net = nullptr;
    QuantCache* cache = nullptr;
    Matrix x;
    Matrix y;
    bool use_hyper = true;

    double loss(const ModelQuantConfig& c, const AdapterStack& stack) const;
};

// Seeds a state from an initial set: scores every member under `stack`
// (snapshot 0), freezes loss_max, filters, fits the GP.
SearchState start_search(const Evaluator& eval, std::span<const ModelQuantConfig> init_set, const AdapterStack& stack,
                         const SearchOptions& opts);

// One search epoch against a fresh snapshot of the trained stack.
void run_search_epoch(SearchState& state, const Evaluator& eval, const AdapterStack& stack, const SearchOptions& opts);

struct CoaOptions {
    int epochs = 5;             // T1
    int train_epochs = 1;       // passes over the training split per cycle
    int rank = 4;
    bool search = true;         // false freezes the initial set
    TrainOptions train;
    SearchOptions search_opts;
};

struct CoaResult {
    AdapterStack stack;
    SearchState state;
    std::vector<EpochRecord> history;
};

class CoaError : public std::runtime_error {
public:
    CoaError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

CoaResult run_coa(const TargetNet& net, QuantCache& cache, const Dataset& data,
                  std::span<const ModelQuantConfig> init_set, const CoaOptions& opts);

} // namespace qadapt
