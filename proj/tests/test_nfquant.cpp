// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "qadapt/error.hpp"
#include "qadapt/nfquant.hpp"

using namespace qadapt;

namespace {

Matrix seeded(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

LayerQuantConfig cfg(int b0, int b1, AbsmaxFormat b2, int B0, int B1) {
    return LayerQuantConfig{b0, b1, b2, B0, B1};
}

} // namespace

TEST_CASE("codebook endpoints, zero and ordering") {
    for (int bits : {2, 3, 4, 8}) {
        const NfCodebook cb = nf_codebook(bits);
        REQUIRE(cb.levels.size() == (1u << bits));
        CHECK(cb.levels.front() == -1.0);
        CHECK(cb.levels.back() == 1.0);
        CHECK(std::count(cb.levels.begin(), cb.levels.end(), 0.0) == 1);
        for (std::size_t k = 1; k < cb.levels.size(); ++k) CHECK(cb.levels[k - 1] < cb.levels[k]);
    }
    CHECK_THROWS_AS(nf_codebook(5), InvalidArgument);
}

TEST_CASE("codebook is deterministic") {
    for (int bits : {2, 3, 4, 8}) CHECK(nf_codebook(bits).levels == nf_codebook(bits).levels);
}

TEST_CASE("3-bit codebook matches high-precision quantile oracle") {
    std::ifstream in(QADAPT_TEST_DATA "/nf3_levels.txt");
    REQUIRE(in.good());
    std::vector<double> golden;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) golden.push_back(std::stod(line));
    const NfCodebook cb = nf_codebook(3);
    REQUIRE(golden.size() == cb.levels.size());
    for (std::size_t k = 0; k < golden.size(); ++k) CHECK(cb.levels[k] == doctest::Approx(golden[k]).epsilon(1e-14));
}

TEST_CASE("nearest level breaks ties downward") {
    const NfCodebook& cb = codebook_for(2);
    const double mid = 0.5 * (cb.levels[1] + cb.levels[2]);
    CHECK(cb.nearest(mid) == 1);
    CHECK(cb.nearest(-5.0) == 0);
    CHECK(cb.nearest(5.0) == 3);
}

TEST_CASE("zero matrix round-trips exactly") {
    for (const auto& c : {cfg(2, 2, AbsmaxFormat::bf16, 64, 256), cfg(8, 3, AbsmaxFormat::fp16, 16, 16)}) {
        const QuantizedTensor qt = quantize_layer(Matrix::Zero(9, 7), c);
        const int zero = codebook_for(c.b0).zero_index();
        for (auto code : qt.codes) CHECK(code == zero);
        CHECK(dequantize(qt).isZero(0.0));
    }
}

TEST_CASE("constant matrix within one absmax grid spacing") {
    const LayerQuantConfig c = cfg(4, 8, AbsmaxFormat::fp32, 64, 256);
    const Matrix w = Matrix::Constant(8, 8, 0.5);
    const Matrix back = dequantize(quantize_layer(w, c));
    const double spacing = 0.5 / ((1 << c.b1) - 1);
    CHECK((back.array() - 0.5).abs().maxCoeff() <= spacing);
}

TEST_CASE("storage bits worked examples") {
    const QuantizedTensor qt = quantize_layer(seeded(32, 32, 11), cfg(2, 2, AbsmaxFormat::bf16, 64, 256));
    CHECK(qt.storage_bits_total == 2096);
    CHECK(serialize(qt).payload_bits == 2096);
    CHECK(effective_bits(cfg(8, 8, AbsmaxFormat::fp32, 16, 16), 64, 64) == 8.625);
    // 64x64 holds 64 blocks of 64, so B1=256 leaves one partial group: the
    // exact rate carries a whole group scale, the amortized rate a quarter.
    CHECK(nominal_bits(cfg(2, 2, AbsmaxFormat::bf16, 64, 256)) == 2.0 + 2.0 / 64 + 16.0 / 16384);
    CHECK(nominal_bits(cfg(4, 8, AbsmaxFormat::fp32, 64, 256)) == 4.0 + 0.125 + 32.0 / 16384);
    CHECK(effective_bits(cfg(2, 2, AbsmaxFormat::bf16, 64, 256), 64, 64) == (4096.0 * 2 + 64 * 2 + 16) / 4096);
    CHECK(effective_bits(cfg(2, 2, AbsmaxFormat::bf16, 64, 256), 128, 128) == nominal_bits(cfg(2, 2, AbsmaxFormat::bf16, 64, 256)));
    CHECK(effective_bits(cfg(4, 8, AbsmaxFormat::fp32, 64, 256), 128, 128) == nominal_bits(cfg(4, 8, AbsmaxFormat::fp32, 64, 256)));
}

TEST_CASE("serialized bit count equals storage formula for every lattice point") {
    const std::array<std::pair<int, int>, 3> shapes{{{32, 32}, {64, 128}, {37, 50}}};
    int shape_seed = 0;
    for (const auto& [d, n] : shapes) {
        const Matrix w = seeded(d, n, 100 + shape_seed++);
        for (const auto& c : all_layer_configs()) {
            const QuantizedTensor qt = quantize_layer(w, c);
            const SerializedTensor s = serialize(qt);
            const std::int64_t formula = storage_bits(c, d, n);
            REQUIRE(qt.storage_bits_total == formula);
            REQUIRE(s.payload_bits == formula);
            // Round trip through the packed bytes.
            const QuantizedTensor back = deserialize(s.bytes, c, d, n);
            REQUIRE(back.codes == qt.codes);
            REQUIRE(back.absmax1_codes == qt.absmax1_codes);
            REQUIRE(back.absmax2 == qt.absmax2);
        }
    }
}

TEST_CASE("per-block round-trip error bound") {
    std::mt19937_64 pick(5);
    const auto& lattice = all_layer_configs();
    for (int trial = 0; trial < 120; ++trial) {
        const LayerQuantConfig c = lattice[pick() % lattice.size()];
        const Matrix w = seeded(24 + trial % 9, 40 - trial % 7, 1000 + trial, 0.3 + 0.01 * trial);
        const QuantizedTensor qt = quantize_layer(w, c);
        const Matrix back = dequantize(qt);
        const NfCodebook& cb = codebook_for(c.b0);
        const double half_gap = 0.5 * cb.max_gap();
        const Eigen::Index n = w.cols();
        std::vector<double> true_absmax(static_cast<std::size_t>(qt.num_blocks()), 0.0);
        for (Eigen::Index k = 0; k < w.size(); ++k)
            true_absmax[k / c.B0] = std::max(true_absmax[k / c.B0], std::fabs(w(k / n, k % n)));
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            const auto blk = k / c.B0;
            const double a = true_absmax[blk];
            const double ar = qt.block_absmax(blk);
            const double level = cb.levels[qt.codes[k]];
            const double bound = a * half_gap + std::fabs(a - ar) * std::fabs(level);
            REQUIRE(std::fabs(w(k / n, k % n) - back(k / n, k % n)) <= bound + 1e-12);
        }
    }
}

TEST_CASE("quantizing a dequantized tensor reproduces its codes") {
    const auto& lattice = all_layer_configs();
    for (int k = 0; k < 40; ++k) {
        const LayerQuantConfig c = lattice[(k * 37) % lattice.size()];
        const QuantizedTensor qt = quantize_layer(seeded(16, 48, 300 + k), c);
        const QuantizedTensor again = quantize_layer(dequantize(qt), c);
        CHECK(again.codes == qt.codes);
    }
}

TEST_CASE("more code bits never increase round-trip error") {
    for (int seed = 0; seed < 20; ++seed) {
        const Matrix w = seeded(32, 32, 500 + seed);
        for (const auto& c0 : all_layer_configs()) {
            if (c0.b0 != 2) continue;
            double prev = std::numeric_limits<double>::infinity();
            for (int b0 : {2, 3, 4, 8}) {
                LayerQuantConfig c = c0;
                c.b0 = b0;
                const double err = (w - dequantize(quantize_layer(w, c))).norm();
                REQUIRE(err <= prev + 1e-12);
                prev = err;
            }
        }
    }
}

TEST_CASE("non-finite weights are rejected") {
    Matrix w = Matrix::Ones(4, 4);
    w(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(quantize_layer(w, LayerQuantConfig{}), InvalidArgument);
    CHECK_THROWS_AS(rtn_quantize(w, 4), InvalidArgument);
}

TEST_CASE("round-to-nearest baseline hand values") {
    Matrix a(1, 2);
    a << 0.0, 1.0;
    CHECK(rtn_quantize(a, 2) == a);
    CHECK(rtn_quantize(Matrix::Zero(3, 3), 4).isZero(0.0));
    Matrix b(1, 2);
    b << -2.0, 1.5;
    const Matrix q = rtn_quantize(b, 4);
    const double s = 2.0 / 7.0;
    CHECK(q(0, 0) == doctest::Approx(-7 * s).epsilon(1e-15));
    CHECK(q(0, 1) == doctest::Approx(5 * s).epsilon(1e-15));
    CHECK(q(0, 1) == doctest::Approx(10.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("half-precision formats") {
    CHECK(decode_fp16(encode_fp16(1.0)) == 1.0);
    CHECK(decode_bf16(encode_bf16(-2.5)) == -2.5);
    CHECK(round_to_format(1e6, AbsmaxFormat::fp16) == 65504.0);
    CHECK(round_to_format(0.1, AbsmaxFormat::fp32) == static_cast<double>(0.1f));
    // 1 + 2^-8 is halfway between bf16 neighbours 1 and 1 + 2^-7: ties to even.
    CHECK(round_to_format(1.0 + std::ldexp(1.0, -8), AbsmaxFormat::bf16) == 1.0);
    CHECK(round_to_format(1.0 + std::ldexp(1.0, -8), AbsmaxFormat::fp16) == 1.0 + std::ldexp(1.0, -8));
}
