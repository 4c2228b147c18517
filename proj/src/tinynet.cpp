// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/tinynet.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "qadapt/autodiff.hpp"
#include "qadapt/error.hpp"
#include "qadapt/linalg.hpp"

namespace qadapt {

namespace {

void fill_normal(Matrix& m, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> gauss(0.0, stddev);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = gauss(rng);
}

// Distinct, reproducible streams for the parts of one seeded run.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
    });
}

struct Graph {
    ad::Tape tape;
    std::vector<ad::Var> params;  // aligned with AdapterStack::tensors()
    ad::Var pred;
    ad::Var loss;
};

// Records the forward pass; `track` marks adapter tensors as trainable leaves.
Graph build_graph(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config, const AdapterStack& stack,
                  bool use_hyper, const Matrix& x, const Matrix& y, bool track) {
    const int n_layers = static_cast<int>(net.weights.size());
    if (static_cast<int>(config.layers.size()) != n_layers)
        throw InvalidArgument(fmt::format("configuration has {} layers, network has {}", config.layers.size(), n_layers));
    if (static_cast<int>(stack.l1.size()) != n_layers || static_cast<int>(stack.l2.size()) != n_layers)
        throw InvalidArgument("adapter stack does not match the network depth");
    if (use_hyper && !stack.has_hyper) throw InvalidArgument("hypernetwork requested but the stack has none");
    if (x.cols() != net.arch.in_dim || x.rows() != y.rows() || y.cols() != net.arch.out_dim)
        throw InvalidArgument(fmt::format("batch shape {}x{} -> {}x{} does not fit the network", x.rows(), x.cols(),
                                          y.rows(), y.cols()));

    Graph g;
    auto& t = g.tape;
    std::vector<ad::Var> l1(n_layers), l2(n_layers);
    for (int i = 0; i < n_layers; ++i) {
        l1[i] = t.leaf(stack.l1[i], track);
        g.params.push_back(l1[i]);
    }
    for (int i = 0; i < n_layers; ++i) {
        l2[i] = t.leaf(stack.l2[i], track);
        g.params.push_back(l2[i]);
    }
    ad::Var w1{}, b1{}, w2{}, b2{}, name{}, block{};
    std::array<ad::Var, 5> values{};
    if (stack.has_hyper) {
        w1 = t.leaf(stack.hyper.w1, track);
        b1 = t.leaf(stack.hyper.b1, track);
        w2 = t.leaf(stack.hyper.w2, track);
        b2 = t.leaf(stack.hyper.b2, track);
        for (int p = 0; p < 5; ++p) values[p] = t.leaf(stack.tables.value_tables[p], track);
        name = t.leaf(stack.tables.name_table, track);
        block = t.leaf(stack.tables.block_table, track);
        g.params.insert(g.params.end(), {w1, b1, w2, b2});
        g.params.insert(g.params.end(), values.begin(), values.end());
        g.params.insert(g.params.end(), {name, block});
    }

    ad::Var h = t.leaf(x);
    for (int i = 0; i < n_layers; ++i) {
        const Matrix& w = net.weights[i];
        if (config.shapes[i].rows != w.rows() || config.shapes[i].cols != w.cols())
            throw InvalidArgument(fmt::format("layer {} shape mismatch between configuration and network", i));
        ad::Var wq = t.leaf(*cache.get(i, config.layers[i]));
        ad::Var right = l2[i];
        if (use_hyper) {
            const auto idx = value_indices(config.layers[i]);
            ad::Var emb = t.concat_cols({t.gather_row(values[0], idx[0]), t.gather_row(values[1], idx[1]),
                                         t.gather_row(values[2], idx[2]), t.gather_row(values[3], idx[3]),
                                         t.gather_row(values[4], idx[4]), t.gather_row(name, TargetNet::kNameId),
                                         t.gather_row(block, i)});
            ad::Var hidden = t.tanh(t.add_row(t.matmul(emb, w1), b1));
            ad::Var u = t.scale(t.add_row(t.matmul(hidden, w2), b2), stack.hyper.output_scale);
            ad::Var m = t.add_identity(t.reshape(u, stack.rank, stack.rank));
            right = t.matmul(m, l2[i]);
        }
        ad::Var weff = t.add(wq, t.matmul(l1[i], right));
        h = t.matmul(h, weff);
        if (i + 1 < n_layers && net.arch.activation == Activation::tanh) h = t.tanh(h);
    }
    g.pred = h;
    g.loss = t.mse(h, y);
    return g;
}


// Extended-precision forward pass written independently of the tape; the
// finite-difference oracle uses it so rounding stays well below the checked
// tolerances.
using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

MatrixL predict_extended(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config,
                         const AdapterStack& stack, bool use_hyper, const Matrix& x) {
    MatrixL h = x.cast<long double>();
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        MatrixL right = stack.l2[i].cast<long double>();
        if (use_hyper) {
            const auto idx = value_indices(config.layers[i]);
            const auto& tb = stack.tables;
            Eigen::Index width = tb.name_table.cols() + tb.block_table.cols();
            for (const auto& v : tb.value_tables) width += v.cols();
            MatrixL emb(1, width);
            Eigen::Index at = 0;
            auto put = [&](const Matrix& table, int row) {
                emb.block(0, at, 1, table.cols()) = table.row(row).cast<long double>();
                at += table.cols();
            };
            for (int p = 0; p < 5; ++p) put(tb.value_tables[p], idx[p]);
            put(tb.name_table, TargetNet::kNameId);
            put(tb.block_table, static_cast<int>(i));
            const auto& hy = stack.hyper;
            const MatrixL hidden =
                (emb * hy.w1.cast<long double>() + hy.b1.cast<long double>()).array().tanh().matrix();
            const MatrixL u = (hidden * hy.w2.cast<long double>() + hy.b2.cast<long double>()) *
                              static_cast<long double>(hy.output_scale);
            MatrixL m(stack.rank, stack.rank);
            for (Eigen::Index k = 0; k < u.size(); ++k) m(k / stack.rank, k % stack.rank) = u(0, k);
            m += MatrixL::Identity(stack.rank, stack.rank);
            right = m * right;
        }
        const MatrixL weff = cache.get(static_cast<int>(i), config.layers[i])->cast<long double>() +
                             stack.l1[i].cast<long double>() * right;
        h = h * weff;
        if (i + 1 < net.weights.size() && net.arch.activation == Activation::tanh) h = h.array().tanh().matrix();
    }
    return h;
}

} // namespace

// --- network and data ------------------------------------------------------------

std::vector<Shape> NetArch::shapes() const {
    if (layers < 1 || in_dim < 1 || width < 1 || out_dim < 1) throw InvalidArgument("network dimensions must be positive");
    std::vector<Shape> s;
    for (int i = 0; i < layers; ++i) {
        const int d = (i == 0) ? in_dim : width;
        const int n = (i + 1 == layers) ? out_dim : width;
        s.push_back({d, n});
    }
    return s;
}

TargetNet TargetNet::random(const NetArch& arch, std::uint64_t seed, double gain) {
    TargetNet net;
    net.arch = arch;
    auto rng = stream(seed, 0x7e4c4e7ULL);
    for (const auto& s : arch.shapes()) {
        Matrix w(s.rows, s.cols);
        fill_normal(w, rng, gain / std::sqrt(static_cast<double>(s.rows)));
        net.weights.push_back(std::move(w));
    }
    return net;
}

Matrix TargetNet::forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        h = h * weights[i];
        if (i + 1 < weights.size() && arch.activation == Activation::tanh) h = h.array().tanh().matrix();
    }
    return h;
}

Matrix Dataset::rows_of(const Matrix& m, std::span<const int> idx) const {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
    return out;
}

GeneratedTask gen_teacher_student(std::uint64_t seed, int n_samples, double noise_std, const NetArch& arch) {
    if (n_samples < 64) throw InvalidArgument(fmt::format("need at least 64 samples (got {})", n_samples));
    if (!(noise_std >= 0.0)) throw InvalidArgument("noise standard deviation must be non-negative");
    GeneratedTask task;
    task.net = TargetNet::random(arch, seed);

    auto rng = stream(seed, 0xda7aULL);
    Dataset& d = task.data;
    d.inputs.resize(n_samples, arch.in_dim);
    fill_normal(d.inputs, rng, 1.0);
    d.targets = task.net.forward(d.inputs);
    if (noise_std > 0.0) {
        Matrix noise(n_samples, arch.out_dim);
        fill_normal(noise, rng, noise_std);
        d.targets += noise;
    }
    const int n_train = static_cast<int>(std::floor(0.8 * n_samples));
    for (int k = 0; k < n_samples; ++k) (k < n_train ? d.train : d.validation).push_back(k);
    d.calibration.assign(d.train.begin(), d.train.begin() + Dataset::kBatch);
    return task;
}

// --- adapters --------------------------------------------------------------------

AdapterStack AdapterStack::init(const TargetNet& net, int rank, std::uint64_t seed, bool with_hyper, int hidden) {
    if (rank < 1) throw InvalidArgument("adapter rank must be at least 1");
    AdapterStack s;
    s.rank = rank;
    auto rng = stream(seed, 0xada97e5ULL);
    for (const auto& shape : net.shapes()) {
        Matrix l1(shape.rows, rank);
        fill_normal(l1, rng, 1.0 / std::sqrt(static_cast<double>(shape.rows)));
        s.l1.push_back(std::move(l1));
        s.l2.push_back(Matrix::Zero(rank, shape.cols));
    }
    s.has_hyper = with_hyper;
    if (with_hyper) {
        const int in = EmbeddingTables::kLayerDim;
        s.hyper.w1.resize(in, hidden);
        fill_normal(s.hyper.w1, rng, 1.0 / std::sqrt(static_cast<double>(in)));
        s.hyper.b1 = Matrix::Zero(1, hidden);
        s.hyper.w2 = Matrix::Zero(hidden, rank * rank);
        s.hyper.b2 = Matrix::Zero(1, rank * rank);
        s.tables = EmbeddingTables::random(1, static_cast<int>(net.weights.size()), rng());
    }
    return s;
}

std::vector<AdapterStack::Tensor> AdapterStack::tensors() {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < l1.size(); ++i) out.push_back({fmt::format("l1.{}", i), &l1[i]});
    for (std::size_t i = 0; i < l2.size(); ++i) out.push_back({fmt::format("l2.{}", i), &l2[i]});
    if (has_hyper) {
        out.push_back({"hyper.w1", &hyper.w1});
        out.push_back({"hyper.b1", &hyper.b1});
        out.push_back({"hyper.w2", &hyper.w2});
        out.push_back({"hyper.b2", &hyper.b2});
        for (int p = 0; p < 5; ++p) out.push_back({fmt::format("embed.value.{}", p), &tables.value_tables[p]});
        out.push_back({"embed.name", &tables.name_table});
        out.push_back({"embed.block", &tables.block_table});
    }
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> AdapterStack::tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& t : const_cast<AdapterStack*>(this)->tensors()) out.emplace_back(t.name, t.value);
    return out;
}

Matrix AdapterStack::adjustment(const LayerQuantConfig& c, int layer) const {
    if (!has_hyper) return Matrix::Zero(rank, rank);
    const Vector e = embed_layer(c, TargetNet::kNameId, layer, tables);
    const Matrix hidden = ((e.transpose() * hyper.w1) + hyper.b1).array().tanh().matrix();
    const Matrix u = (hidden * hyper.w2 + hyper.b2) * hyper.output_scale;
    Matrix out(rank, rank);
    for (int k = 0; k < rank * rank; ++k) out(k / rank, k % rank) = u(0, k);
    return out;
}

bool bitwise_equal(const AdapterStack& a, const AdapterStack& b) {
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    if (a.rank != b.rank || ta.size() != tb.size()) return false;
    for (std::size_t k = 0; k < ta.size(); ++k)
        if (ta[k].first != tb[k].first || !bitwise_equal(*ta[k].second, *tb[k].second)) return false;
    return true;
}

std::shared_ptr<const Matrix> QuantCache::get(int layer, const LayerQuantConfig& c) {
    if (layer < 0 || layer >= static_cast<int>(net_->weights.size()))
        throw InvalidArgument(fmt::format("quant cache: layer {} out of range", layer));
    const int key = layer * kLatticeSize + lattice_index(c);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto value = std::make_shared<const Matrix>(dequantize(quantize_layer(net_->weights[layer], c)));
    std::lock_guard lock(mu_);
    return cache_.try_emplace(key, std::move(value)).first->second;
}

std::size_t QuantCache::size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

// --- loss and gradients ---------------------------------------------------------

double forward_loss(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config, const AdapterStack& stack,
                    bool use_hyper, const Matrix& x, const Matrix& y) {
    Graph g = build_graph(net, cache, config, stack, use_hyper, x, y, false);
    return g.tape.value(g.loss)(0, 0);
}

LossAndGrad loss_and_grad(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config,
                          const AdapterStack& stack, bool use_hyper, const Matrix& x, const Matrix& y) {
    Graph g = build_graph(net, cache, config, stack, use_hyper, x, y, true);
    g.tape.backward(g.loss);
    LossAndGrad out;
    out.loss = g.tape.value(g.loss)(0, 0);
    for (ad::Var p : g.params) out.grads.push_back(g.tape.grad(p));
    return out;
}

double grad_check(const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config, const AdapterStack& stack,
                  bool use_hyper, const Matrix& x, const Matrix& y, const GradCheckOptions& opts) {
    const LossAndGrad analytic = loss_and_grad(net, cache, config, stack, use_hyper, x, y);
    AdapterStack probe = stack;
    auto tensors = probe.tensors();

    // Round-robin over tensors so every tensor is probed, each in shuffled order.
    std::mt19937_64 rng(opts.seed);
    std::vector<std::vector<Eigen::Index>> order(tensors.size());
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        order[t].resize(static_cast<std::size_t>(tensors[t].value->size()));
        std::iota(order[t].begin(), order[t].end(), Eigen::Index{0});
        std::shuffle(order[t].begin(), order[t].end(), rng);
    }
    std::vector<std::pair<std::size_t, Eigen::Index>> coords;
    for (std::size_t round = 0; static_cast<int>(coords.size()) < opts.samples; ++round) {
        bool any = false;
        for (std::size_t t = 0; t < tensors.size() && static_cast<int>(coords.size()) < opts.samples; ++t) {
            if (round >= order[t].size()) continue;
            coords.emplace_back(t, order[t][round]);
            any = true;
        }
        if (!any) break;
    }

    double worst = 0.0;
    for (const auto& [t, k] : coords) {
        double& slot = tensors[t].value->data()[k];
        const double saved = slot;
        // Divide by the representable step, not the requested one.
        const double hi = saved + opts.step, lo = saved - opts.step;
        slot = hi;
        const MatrixL pu = predict_extended(net, cache, config, probe, use_hyper, x);
        slot = lo;
        const MatrixL pd = predict_extended(net, cache, config, probe, use_hyper, x);
        slot = saved;
        // L(hi) - L(lo) as mean((p+ - p-)(p+ + p- - 2y)), free of the
        // cancellation in subtracting two nearly equal losses.
        const MatrixL yl = y.cast<long double>();
        const long double diff = ((pu - pd).array() * (pu + pd - 2.0L * yl).array()).mean();
        const double numeric = static_cast<double>(diff / static_cast<long double>(hi - lo));
        const double a = analytic.grads[t].data()[k];
        const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), opts.floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

void svd_initialize(AdapterStack& stack, const TargetNet& net, QuantCache& cache, const ModelQuantConfig& config) {
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        const Matrix residual = net.weights[i] - *cache.get(static_cast<int>(i), config.layers[i]);
        const int r = std::min<int>(stack.rank, static_cast<int>(std::min(residual.rows(), residual.cols())));
        const TruncatedSvd svd = truncated_svd(residual, r);
        const Vector root = svd.s.cwiseSqrt();
        stack.l1[i].setZero();
        stack.l2[i].setZero();
        stack.l1[i].leftCols(r) = svd.u * root.asDiagonal();
        stack.l2[i].topRows(r) = root.asDiagonal() * svd.v.transpose();
    }
}

} // namespace qadapt
