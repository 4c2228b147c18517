// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace qadapt {

// Storage format of the second-level (per-group) absmax scale.
enum class AbsmaxFormat : std::uint8_t { bf16 = 0, fp16 = 1, fp32 = 2 };

int format_bits(AbsmaxFormat f);
std::string_view to_string(AbsmaxFormat f);
AbsmaxFormat parse_absmax_format(std::string_view s);

inline constexpr std::array<int, 4> kCodeBitChoices{2, 3, 4, 8};
inline constexpr std::array<int, 4> kAbsmaxBitChoices{2, 3, 4, 8};
inline constexpr std::array<AbsmaxFormat, 3> kFormatChoices{AbsmaxFormat::bf16, AbsmaxFormat::fp16,
                                                            AbsmaxFormat::fp32};
inline constexpr std::array<int, 3> kBlockSizeChoices{16, 32, 64};
inline constexpr std::array<int, 3> kGroupSizeChoices{16, 64, 256};
inline constexpr int kLatticeSize = 4 * 4 * 3 * 3 * 3;  // 432

// The five NormalFloat parameters of one layer.
//   b0: bits per weight code            B0: weights per first-level block
//   b1: bits per block absmax code      B1: blocks per second-level group
//   b2: storage format of group absmax
struct LayerQuantConfig {
    int b0 = 4;
    int b1 = 8;
    AbsmaxFormat b2 = AbsmaxFormat::fp32;
    int B0 = 64;
    int B1 = 256;

    friend bool operator==(const LayerQuantConfig&, const LayerQuantConfig&) = default;
    friend auto operator<=>(const LayerQuantConfig&, const LayerQuantConfig&) = default;
};

bool is_valid(const LayerQuantConfig& c);
// Throws InvalidArgument naming the offending field.
void validate(const LayerQuantConfig& c);

// Dense index in [0, 432) over the mixed-radix product of the five domains.
int lattice_index(const LayerQuantConfig& c);
LayerQuantConfig lattice_config(int index);
const std::array<LayerQuantConfig, kLatticeSize>& all_layer_configs();

// Amortized storage rate b0 + b1/B0 + bits(b2)/(B0*B1). Equal to the exact
// per-weight rate whenever the weight count is a multiple of B0*B1.
double nominal_bits(const LayerQuantConfig& c);

std::string to_string(const LayerQuantConfig& c);

} // namespace qadapt
