// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qadapt/error.hpp"
#include "qadapt/harness.hpp"
#include "qadapt/linalg.hpp"
#include "qadapt/nfquant.hpp"
#include "qadapt/tinynet.hpp"
#include "test_util.hpp"

using namespace qadapt;

namespace {

Matrix seeded(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

double mse(const Matrix& a, const Matrix& b) {
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

ModelQuantConfig uniform_config(const TargetNet& net, int rank) {
    return from_ranks(std::vector<int>(net.weights.size(), rank), net.shapes());
}

ModelQuantConfig random_config(const TargetNet& net, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> r(0, 431);
    std::vector<int> ranks(net.weights.size());
    for (int& x : ranks) x = r(rng);
    return from_ranks(ranks, net.shapes());
}

// Perturbs every trainable tensor so no gradient is trivially zero.
void randomize(AdapterStack& s, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto& t : s.tensors())
        for (Eigen::Index k = 0; k < t.value->size(); ++k) t.value->data()[k] += n(rng);
}

struct Fixture {
    GeneratedTask task = gen_teacher_student(1, 512, 0.05);
    QuantCache cache{task.net};
};

} // namespace

TEST_CASE("teacher-student data") {
    const GeneratedTask a = gen_teacher_student(7, 2000, 0.05);
    const GeneratedTask b = gen_teacher_student(7, 2000, 0.05);
    CHECK(a.data.inputs == b.data.inputs);
    CHECK(a.data.targets == b.data.targets);
    for (std::size_t i = 0; i < a.net.weights.size(); ++i) CHECK(a.net.weights[i] == b.net.weights[i]);
    CHECK(a.data.train.size() == 1600u);
    CHECK(a.data.calibration.size() == 32u);
    CHECK(a.data.validation.size() == 400u);
    const GeneratedTask clean = gen_teacher_student(7, 100, 0.0);
    CHECK(clean.data.targets == clean.net.forward(clean.data.inputs));
    CHECK(gen_teacher_student(8, 2000, 0.05).data.inputs != a.data.inputs);
    CHECK_THROWS_AS(gen_teacher_student(1, 63, 0.1), InvalidArgument);
    CHECK(a.net.shapes().size() == 8u);
}

TEST_CASE("truncated svd oracles") {
    SUBCASE("rank one is exact") {
        const Matrix m = seeded(10, 1, 1) * seeded(1, 7, 2);
        const TruncatedSvd s = truncated_svd(m, 1);
        CHECK((m - s.reconstruct()).norm() <= 1e-6);
    }
    SUBCASE("full rank matches the Jacobi oracle") {
        const Matrix m = seeded(8, 8, 3);
        const TruncatedSvd s = truncated_svd(m, 8);
        CHECK((m - s.reconstruct()).norm() <= 1e-6);
        const auto sv = testing::jacobi_singular_values(m);
        for (int k = 0; k < 8; ++k) CHECK(s.s(k) == doctest::Approx(sv[k]).epsilon(1e-8));
        CHECK((s.u.transpose() * s.u - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK((s.v.transpose() * s.v - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("zero matrix") {
        const TruncatedSvd s = truncated_svd(Matrix::Zero(6, 5), 3);
        CHECK(s.s.isZero(0.0));
    }
    SUBCASE("descending, non-negative, and Eckart-Young ordering") {
        const Matrix m = seeded(30, 20, 4);
        double prev = std::numeric_limits<double>::infinity();
        for (int r = 1; r <= 20; ++r) {
            const TruncatedSvd s = truncated_svd(m, r);
            for (int k = 0; k < r; ++k) {
                CHECK(s.s(k) >= 0.0);
                if (k > 0) CHECK(s.s(k) <= s.s(k - 1));
            }
            const double err = (m - s.reconstruct()).norm();
            CHECK(err <= prev + 1e-9);
            prev = err;
        }
    }
    CHECK_THROWS_AS(truncated_svd(Matrix::Zero(4, 3), 4), InvalidArgument);
}

TEST_CASE("fresh hypernetwork is the identity") {
    Fixture f;
    std::mt19937_64 rng(11);
    const AdapterStack plain = [&] {
        AdapterStack s = AdapterStack::init(f.task.net, 4, 3, true);
        // Non-zero L2 so the adapter path contributes.
        for (auto& l2 : s.l2) l2 = 0.1 * seeded(l2.rows(), l2.cols(), 5);
        return s;
    }();
    std::uniform_int_distribution<int> start(0, static_cast<int>(f.task.data.train.size()) - 32);
    for (int t = 0; t < 20; ++t) {
        const ModelQuantConfig c = random_config(f.task.net, rng);
        const int s = start(rng);
        const auto [x, y] = f.task.data.batch(std::span(f.task.data.train).subspan(s, 32));
        const double with = forward_loss(f.task.net, f.cache, c, plain, true, x, y);
        const double without = forward_loss(f.task.net, f.cache, c, plain, false, x, y);
        CHECK(std::fabs(with - without) <= 1e-12);
    }
}

TEST_CASE("forward loss against direct oracles") {
    SUBCASE("quantization-only error equals a two-model diff") {
        const GeneratedTask task = gen_teacher_student(2, 128, 0.0);
        QuantCache cache(task.net);
        AdapterStack s = AdapterStack::init(task.net, 4, 1, false);
        for (auto& l1 : s.l1) l1.setZero();
        const ModelQuantConfig c = uniform_config(task.net, 431);
        const auto [x, y] = task.data.batch(task.data.validation);
        TargetNet quantized = task.net;
        for (std::size_t i = 0; i < quantized.weights.size(); ++i)
            quantized.weights[i] = dequantize(quantize_layer(task.net.weights[i], c.layers[i]));
        const double want = mse(quantized.forward(x), task.net.forward(x));
        CHECK(forward_loss(task.net, cache, c, s, false, x, y) == doctest::Approx(want).epsilon(1e-13));
    }
    SUBCASE("one linear layer at max bits obeys the round-trip bound") {
        NetArch arch;
        arch.layers = 1;
        arch.activation = Activation::identity;
        const GeneratedTask task = gen_teacher_student(3, 256, 0.0, arch);
        QuantCache cache(task.net);
        AdapterStack s = AdapterStack::init(task.net, 4, 1, false);
        const ModelQuantConfig c = uniform_config(task.net, 431);
        const auto [x, y] = task.data.batch(task.data.validation);
        const Matrix& w = task.net.weights[0];
        const double eps = (w - dequantize(quantize_layer(w, c.layers[0]))).cwiseAbs().maxCoeff();
        double bound = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) bound += std::pow(x.row(i).cwiseAbs().sum() * eps, 2);
        bound /= static_cast<double>(x.rows() * y.cols());
        const double loss = forward_loss(task.net, cache, c, s, false, x, y);
        CHECK(loss <= bound);
        CHECK(loss < 1e-2 * mse(y, Matrix::Zero(y.rows(), y.cols())));
    }
    SUBCASE("shape mismatch") {
        Fixture f;
        const AdapterStack s = AdapterStack::init(f.task.net, 4, 1, false);
        const ModelQuantConfig c = uniform_config(f.task.net, 200);
        CHECK_THROWS_AS(forward_loss(f.task.net, f.cache, c, s, false, Matrix::Zero(4, 3), Matrix::Zero(4, 1)),
                        InvalidArgument);
    }
}

TEST_CASE("gradients match central differences") {
    SUBCASE("linear-only network") {
        NetArch arch;
        arch.activation = Activation::identity;
        const GeneratedTask task = gen_teacher_student(4, 256, 0.05, arch);
        QuantCache cache(task.net);
        AdapterStack s = AdapterStack::init(task.net, 4, 2, false);
        randomize(s, 9, 0.1);
        const auto [x, y] = task.data.batch(task.data.calibration);
        const ModelQuantConfig c = uniform_config(task.net, 150);
        CHECK(grad_check(task.net, cache, c, s, false, x, y) <= 1e-7);
    }
    SUBCASE("full model with hypernetwork and embeddings") {
        Fixture f;
        AdapterStack s = AdapterStack::init(f.task.net, 4, 2, true);
        randomize(s, 10, 0.1);
        const auto [x, y] = f.task.data.batch(f.task.data.calibration);
        std::mt19937_64 rng(1);
        for (int t = 0; t < 3; ++t) {
            const ModelQuantConfig c = random_config(f.task.net, rng);
            GradCheckOptions o;
            o.seed = 100 + t;
            CHECK(grad_check(f.task.net, f.cache, c, s, true, x, y, o) <= 1e-4);
        }
    }
    SUBCASE("zero batch gives zero adapter gradients") {
        Fixture f;
        AdapterStack s = AdapterStack::init(f.task.net, 4, 2, true);
        randomize(s, 11, 0.1);
        const ModelQuantConfig c = uniform_config(f.task.net, 100);
        const LossAndGrad lg = loss_and_grad(f.task.net, f.cache, c, s, true, Matrix::Zero(32, 16), Matrix::Zero(32, 1));
        const auto names = s.tensors();
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k].name.rfind("l1.", 0) == 0) CHECK(lg.grads[k].isZero(0.0));
    }
}

TEST_CASE("quantization cache is transparent") {
    Fixture f;
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        const int layer = t % 8;
        const LayerQuantConfig c = lattice_config(static_cast<int>(rng() % 432));
        const auto cached = f.cache.get(layer, c);
        CHECK(*cached == dequantize(quantize_layer(f.task.net.weights[layer], c)));
        CHECK(f.cache.get(layer, c) == cached);
    }
}

TEST_CASE("training contracts") {
    Fixture f;
    const ModelQuantConfig c = uniform_config(f.task.net, 60);
    const std::vector<ModelQuantConfig> one{c};
    TrainOptions o;
    o.lr = 1e-3;
    o.seed = 5;
    const auto [vx, vy] = f.task.data.batch(f.task.data.validation);

    SUBCASE("loss decreases over 200 steps") {
        AdapterTrainer tr(f.task.net, f.cache, f.task.data, AdapterStack::init(f.task.net, 4, 5, true), true, o);
        const double first = tr.run_steps(one, 10);
        tr.run_steps(one, 180);
        const double last = tr.run_steps(one, 10);
        CHECK(last < first);
    }
    SUBCASE("zero learning rate leaves parameters bitwise unchanged") {
        TrainOptions z = o;
        z.lr = 0.0;
        const AdapterStack init = AdapterStack::init(f.task.net, 4, z.seed, true);
        CHECK(bitwise_equal(train_theta(f.task.net, f.cache, one, f.task.data, 2, z), init));
        const AdapterStack plain = AdapterStack::init(f.task.net, 4, z.seed, false);
        CHECK(bitwise_equal(train_shared(f.task.net, f.cache, one, f.task.data, 2, z), plain));
        CHECK(bitwise_equal(train_lora_per_config(f.task.net, f.cache, c, f.task.data, 2, z), plain));
    }
    SUBCASE("zero epochs returns the initialization") {
        CHECK(bitwise_equal(train_lora_per_config(f.task.net, f.cache, c, f.task.data, 0, o),
                            AdapterStack::init(f.task.net, 4, o.seed, false)));
    }
    SUBCASE("shared over one configuration equals per-config training") {
        const AdapterStack a = train_shared(f.task.net, f.cache, one, f.task.data, 3, o);
        const AdapterStack b = train_lora_per_config(f.task.net, f.cache, c, f.task.data, 3, o);
        CHECK(std::fabs(forward_loss(f.task.net, f.cache, c, a, false, vx, vy) -
                        forward_loss(f.task.net, f.cache, c, b, false, vx, vy)) <= 1e-10);
    }
    SUBCASE("training is deterministic per seed") {
        CHECK(bitwise_equal(train_theta(f.task.net, f.cache, one, f.task.data, 1, o),
                            train_theta(f.task.net, f.cache, one, f.task.data, 1, o)));
    }
    SUBCASE("svd initialization") {
        AdapterStack full = AdapterStack::init(f.task.net, 32, 1, false);
        svd_initialize(full, f.task.net, f.cache, c);
        const double unquantized = mse(f.task.net.forward(vx), vy);
        CHECK(forward_loss(f.task.net, f.cache, c, full, false, vx, vy) == doctest::Approx(unquantized).epsilon(1e-6));
        for (int seed = 1; seed <= 3; ++seed) {
            const ModelQuantConfig low = uniform_config(f.task.net, 10 * seed);
            AdapterStack svd = AdapterStack::init(f.task.net, 4, seed, false);
            svd_initialize(svd, f.task.net, f.cache, low);
            const AdapterStack zero = AdapterStack::init(f.task.net, 4, seed, false);
            CHECK(forward_loss(f.task.net, f.cache, low, svd, false, vx, vy) <=
                  forward_loss(f.task.net, f.cache, low, zero, false, vx, vy));
        }
    }
    SUBCASE("one max-bits configuration: hypernetwork training tracks per-config") {
        const std::vector<ModelQuantConfig> top{uniform_config(f.task.net, 431)};
        const AdapterStack theta = train_theta(f.task.net, f.cache, top, f.task.data, 5, o);
        const AdapterStack base = train_lora_per_config(f.task.net, f.cache, top[0], f.task.data, 5, o);
        const double lt = forward_loss(f.task.net, f.cache, top[0], theta, true, vx, vy);
        const double lb = forward_loss(f.task.net, f.cache, top[0], base, false, vx, vy);
        CHECK(std::fabs(lt - lb) <= 0.1 * lb);
    }
    SUBCASE("shared adapter straddles dedicated ones") {
        const std::vector<ModelQuantConfig> two{uniform_config(f.task.net, 0), uniform_config(f.task.net, 431)};
        const AdapterStack shared = train_shared(f.task.net, f.cache, two, f.task.data, 5, o);
        bool worse_somewhere = false;
        for (const auto& cfg : two) {
            const AdapterStack own = train_lora_per_config(f.task.net, f.cache, cfg, f.task.data, 5, o);
            worse_somewhere |= forward_loss(f.task.net, f.cache, cfg, shared, false, vx, vy) >=
                               forward_loss(f.task.net, f.cache, cfg, own, false, vx, vy);
        }
        CHECK(worse_somewhere);
    }
    SUBCASE("divergence raises a training error with the last good state") {
        TrainOptions wild = o;
        wild.lr = 1e300;  // Adam steps are lr-bounded; L1*L2 then overflows
        AdapterTrainer tr(f.task.net, f.cache, f.task.data, AdapterStack::init(f.task.net, 4, 5, false), false, wild);
        bool raised = false;
        try {
            tr.run_steps(one, 500);
        } catch (const TrainingError& e) {
            raised = true;
            for (const auto& [name, m] : e.last_good().tensors()) CHECK(m->allFinite());
        }
        CHECK(raised);
    }
    SUBCASE("invalid setups") {
        CHECK_THROWS_AS(AdapterStack::init(f.task.net, 0, 1, false), InvalidArgument);
        TrainOptions neg = o;
        neg.lr = -1.0;
        CHECK_THROWS_AS(AdapterTrainer(f.task.net, f.cache, f.task.data, AdapterStack::init(f.task.net, 4, 1, false), false, neg),
                        InvalidArgument);
    }
}
