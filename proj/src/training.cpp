// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qadapt/error.hpp"
#include "qadapt/tinynet.hpp"

namespace qadapt {

AdapterTrainer::AdapterTrainer(const TargetNet& net, QuantCache& cache, const Dataset& data, AdapterStack stack,
                               bool use_hyper, const TrainOptions& opts)
    : net_(net), cache_(cache), data_(data), stack_(std::move(stack)), use_hyper_(use_hyper), opts_(opts),
      rng_(opts.seed) {
    if (data_.train.size() < static_cast<std::size_t>(Dataset::kBatch))
        throw InvalidArgument("training split is smaller than one batch");
    if (!(opts.lr >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
    for (const auto& t : stack_.tensors()) {
        m_.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
        v_.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
    }
    order_ = data_.train;
    cursor_ = order_.size();  // shuffle on first draw
}

long AdapterTrainer::steps_per_epoch() const {
    return static_cast<long>(data_.train.size()) / Dataset::kBatch;
}

std::vector<int> AdapterTrainer::next_batch() {
    if (cursor_ + Dataset::kBatch > order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
    }
    std::vector<int> idx(order_.begin() + static_cast<long>(cursor_),
                         order_.begin() + static_cast<long>(cursor_) + Dataset::kBatch);
    cursor_ += Dataset::kBatch;
    return idx;
}

double AdapterTrainer::run_steps(std::span<const ModelQuantConfig> configs, long steps) {
    if (configs.empty()) throw InvalidArgument("training needs a non-empty configuration set");
    double total = 0.0;
    for (long s = 0; s < steps; ++s) {
        std::uniform_int_distribution<std::size_t> pick(0, configs.size() - 1);
        const ModelQuantConfig& config = configs[pick(rng_)];
        const auto [x, y] = data_.batch(next_batch());
        const LossAndGrad lg = loss_and_grad(net_, cache_, config, stack_, use_hyper_, x, y);
        if (!std::isfinite(lg.loss)) {
            throw TrainingError(fmt::format("training diverged at step {} (loss {})", step_, lg.loss), stack_, step_);
        }
        AdapterStack last_good = stack_;
        ++step_;
        const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
        auto tensors = stack_.tensors();
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            const Matrix& g = lg.grads[k];
            m_[k] = opts_.beta1 * m_[k] + (1.0 - opts_.beta1) * g;
            v_[k] = opts_.beta2 * v_[k] + (1.0 - opts_.beta2) * g.cwiseAbs2();
            if (opts_.lr == 0.0) continue;
            *tensors[k].value -= (opts_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + opts_.eps)).matrix();
        }
        for (const auto& t : tensors) {
            if (!t.value->allFinite())
                throw TrainingError(fmt::format("non-finite parameter '{}' after step {}", t.name, step_),
                                    std::move(last_good), step_ - 1);
        }
        total += lg.loss;
    }
    return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

AdapterStack train_theta(const TargetNet& net, QuantCache& cache, std::span<const ModelQuantConfig> configs,
                         const Dataset& data, int epochs, const TrainOptions& opts, int rank) {
    AdapterTrainer trainer(net, cache, data, AdapterStack::init(net, rank, opts.seed, true), true, opts);
    trainer.run_steps(configs, trainer.steps_per_epoch() * epochs);
    return trainer.stack();
}

AdapterStack train_lora_per_config(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config,
                                   const Dataset& data, int epochs, const TrainOptions& opts, int rank,
                                   bool svd_init) {
    AdapterStack stack = AdapterStack::init(net, rank, opts.seed, false);
    if (svd_init) svd_initialize(stack, net, cache, config);
    AdapterTrainer trainer(net, cache, data, std::move(stack), false, opts);
    trainer.run_steps(std::span(&config, 1), trainer.steps_per_epoch() * epochs);
    return trainer.stack();
}

AdapterStack train_shared(const TargetNet& net, QuantCache& cache, std::span<const ModelQuantConfig> configs,
                          const Dataset& data, int epochs, const TrainOptions& opts, int rank) {
    AdapterTrainer trainer(net, cache, data, AdapterStack::init(net, rank, opts.seed, false), false, opts);
    trainer.run_steps(configs, trainer.steps_per_epoch() * epochs);
    return trainer.stack();
}

} // namespace qadapt
