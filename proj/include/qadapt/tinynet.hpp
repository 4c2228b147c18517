// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "qadapt/nfquant.hpp"
#include "qadapt/qconfig.hpp"

namespace qadapt {

enum class Activation : std::uint8_t { tanh, identity };

struct NetArch {
    int in_dim = 16;
    int width = 32;
    int out_dim = 1;
    int layers = 8;
    Activation activation = Activation::tanh;

    std::vector<Shape> shapes() const;
};

// Frozen feed-forward network y = W_N(act(... act(x W_1))), no biases.
struct TargetNet {
    NetArch arch;
    std::vector<Matrix> weights;

    static TargetNet random(const NetArch& arch, std::uint64_t seed, double gain = 1.2);
    std::vector<Shape> shapes() const { return arch.shapes(); }
    Matrix forward(const Matrix& x) const;
    // Every layer gets the same name id; the block index is the layer index.
    static constexpr int kNameId = 0;
};

struct Dataset {
    Matrix inputs;   // n x in_dim
    Matrix targets;  // n x out_dim
    std::vector<int> train;
    std::vector<int> calibration;  // the first training batch
    std::vector<int> validation;

    static constexpr int kBatch = 32;

    Matrix rows_of(const Matrix& m, std::span<const int> idx) const;
    std::pair<Matrix, Matrix> batch(std::span<const int> idx) const {
        return {rows_of(inputs, idx), rows_of(targets, idx)};
    }
};

struct GeneratedTask {
    TargetNet net;
    Dataset data;
};

// Standard-normal inputs, targets from a frozen random teacher plus Gaussian
// noise. The teacher doubles as the pretrained network to be quantized.
GeneratedTask gen_teacher_student(std::uint64_t seed, int n_samples, double noise_std, const NetArch& arch = {});

// Hypernetwork 28 -> hidden (tanh) -> r*r with zero-initialized output layer.
struct HyperNet {
    Matrix w1, b1, w2, b2;
    double output_scale = 0.1;
};

struct AdapterStack {
    int rank = 4;
    std::vector<Matrix> l1;  // d_i x r
    std::vector<Matrix> l2;  // r x n_i
    bool has_hyper = false;
    HyperNet hyper;
    EmbeddingTables tables;

    static AdapterStack init(const TargetNet& net, int rank, std::uint64_t seed, bool with_hyper,
                             int hidden = 64);

    struct Tensor {
        std::string name;
        Matrix* value;
    };
    // Trainable tensors in a fixed order; hypernetwork and embeddings are
    // listed only when has_hyper.
    std::vector<Tensor> tensors();
    std::vector<std::pair<std::string, const Matrix*>> tensors() const;

    // r x r adjustment U(C_i) for layer i.
    Matrix adjustment(const LayerQuantConfig& c, int layer) const;
};

bool bitwise_equal(const AdapterStack& a, const AdapterStack& b);

// Thread-safe memo of dequantize(quantize_layer(W_i, c)).
class QuantCache {
public:
    explicit QuantCache(const TargetNet& net) : net_(&net) {}
    std::shared_ptr<const Matrix> get(int layer, const LayerQuantConfig& c);
    std::size_t size() const;

private:
    const TargetNet* net_;
    mutable std::mutex mu_;
    std::unordered_map<int, std::shared_ptr<const Matrix>> cache_;
};

struct LossAndGrad {
    double loss = 0.0;
    std::vector<Matrix> grads;  // aligned with AdapterStack::tensors()
};

// Mean squared error of x (W~_i + L1_i (I + U(C_i)) L2_i) stacked; without the
// hypernetwork the middle factor is dropped.
double forward_loss(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config, const AdapterStack& stack,
                    bool use_hyper, const Matrix& x, const Matrix& y);
LossAndGrad loss_and_grad(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config,
                          const AdapterStack& stack, bool use_hyper, const Matrix& x, const Matrix& y);

struct GradCheckOptions {
    int samples = 200;
    double step = 1e-5;
    double floor = 1e-6;  // denominator floor for relative error
    std::uint64_t seed = 7;
};

// Max relative difference between analytic gradients and central finite
// differences over up to `samples` random coordinates, drawn round-robin so
// every trainable tensor is probed.
double grad_check(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config, const AdapterStack& stack,
                  bool use_hyper, const Matrix& x, const Matrix& y, const GradCheckOptions& opts = {});

// --- training ------------------------------------------------------------------

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, AdapterStack last_good, long step)
        : std::runtime_error(what), last_good_(std::move(last_good)), step_(step) {}
    const AdapterStack& last_good() const { return last_good_; }
    long step() const { return step_; }

private:
    AdapterStack last_good_;
    long step_;
};

struct TrainOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
};

// Adam over the stack's trainable tensors. Each step draws one configuration
// uniformly from the set and the next training minibatch.
class AdapterTrainer {
public:
    AdapterTrainer(const TargetNet& net, QuantCache& cache, const Dataset& data, AdapterStack stack, bool use_hyper,
                   const TrainOptions& opts);

    // Returns the mean training loss over the steps taken.
    double run_steps(std::span<const ModelQuantConfig> configs, long steps);
    long steps_per_epoch() const;

    const AdapterStack& stack() const { return stack_; }
    long step_count() const { return step_; }

private:
    std::vector<int> next_batch();

    const TargetNet& net_;
    QuantCache& cache_;
    const Dataset& data_;
    AdapterStack stack_;
    bool use_hyper_;
    TrainOptions opts_;
    std::mt19937_64 rng_;
    std::vector<Matrix> m_, v_;
    std::vector<int> order_;
    std::size_t cursor_ = 0;
    long step_ = 0;
};

// Configuration-aware training: L1, L2, hypernetwork and embeddings.
AdapterStack train_theta(const TargetNet& net, QuantCache& cache, std::span<const ModelQuantConfig> configs,
                         const Dataset& data, int epochs, const TrainOptions& opts, int rank = 4);
// One adapter for one configuration; svd_init seeds L1, L2 from the
// quantization residual.
AdapterStack train_lora_per_config(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config,
                                   const Dataset& data, int epochs, const TrainOptions& opts, int rank = 4,
                                   bool svd_init = false);
// One adapter shared by every configuration in the set.
AdapterStack train_shared(const TargetNet& net, QuantCache& cache, std::span<const ModelQuantConfig> configs,
                          const Dataset& data, int epochs, const TrainOptions& opts, int rank = 4);

// L1 = U sqrt(S), L2 = sqrt(S) V^T of W - W~ per layer, zero-padded past min(d, n).
void svd_initialize(AdapterStack& stack, const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config);

} // namespace qadapt
