// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qadapt/layer_config.hpp"

namespace qadapt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// NormalFloat code levels: 2^bits strictly increasing values in [-1, 1] with
// levels.front() == -1, levels.back() == +1 and exactly one zero.
struct NfCodebook {
    int bits = 0;
    std::vector<double> levels;

    int zero_index() const;
    // Index of the level nearest to x; ties resolve to the lower index.
    int nearest(double x) const;
    double max_gap() const;
};

NfCodebook nf_codebook(int bits);
// Shared immutable instance for bits in {2,3,4,8}.
const NfCodebook& codebook_for(int bits);

// Rounds x to the nearest value representable in the given format
// (round-to-nearest-even; fp16 saturates at its largest finite value).
double round_to_format(double x, AbsmaxFormat f);
std::uint16_t encode_fp16(double x);
double decode_fp16(std::uint16_t h);
std::uint16_t encode_bf16(double x);
double decode_bf16(std::uint16_t h);

struct QuantizedTensor {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    LayerQuantConfig cfg;
    std::vector<std::uint8_t> codes;          // one per weight, row-major
    std::vector<std::uint8_t> absmax1_codes;  // one per B0-block
    std::vector<double> absmax2;              // one per B1-group, already at b2 precision
    std::int64_t storage_bits_total = 0;

    std::int64_t num_blocks() const { return static_cast<std::int64_t>(absmax1_codes.size()); }
    std::int64_t num_groups() const { return static_cast<std::int64_t>(absmax2.size()); }
    // Reconstructed absmax of a first-level block.
    double block_absmax(std::int64_t block) const;
};

// d*n*b0 + ceil(d*n/B0)*b1 + ceil(#blocks/B1)*bits(b2).
std::int64_t storage_bits(const LayerQuantConfig& cfg, std::int64_t rows, std::int64_t cols);
double effective_bits(const LayerQuantConfig& cfg, std::int64_t rows, std::int64_t cols);

QuantizedTensor quantize_layer(const Matrix& w, const LayerQuantConfig& cfg);
Matrix dequantize(const QuantizedTensor& qt);

// Symmetric round-to-nearest with scale max|w| / (2^(bits-1) - 1).
Matrix rtn_quantize(const Matrix& w, int bits);

// Packed little-endian layout: codes (b0 bits each), absmax1 codes (b1 bits
// each), absmax2 values (bits(b2) each). Each section is padded to a byte.
struct SerializedTensor {
    std::vector<std::uint8_t> bytes;
    std::int64_t payload_bits = 0;  // bits written before padding
};

SerializedTensor serialize(const QuantizedTensor& qt);
QuantizedTensor deserialize(std::span<const std::uint8_t> bytes, const LayerQuantConfig& cfg,
                            Eigen::Index rows, Eigen::Index cols);

} // namespace qadapt
