// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/layer_config.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt {

namespace {

template <typename Arr, typename T>
int index_in(const Arr& arr, const T& value) {
    auto it = std::find(arr.begin(), arr.end(), value);
    return it == arr.end() ? -1 : static_cast<int>(it - arr.begin());
}

} // namespace

int format_bits(AbsmaxFormat f) {
    return f == AbsmaxFormat::fp32 ? 32 : 16;
}

std::string_view to_string(AbsmaxFormat f) {
    switch (f) {
        case AbsmaxFormat::bf16: return "bf16";
        case AbsmaxFormat::fp16: return "fp16";
        case AbsmaxFormat::fp32: return "fp32";
    }
    return "?";
}

AbsmaxFormat parse_absmax_format(std::string_view s) {
    if (s == "bf16") return AbsmaxFormat::bf16;
    if (s == "fp16") return AbsmaxFormat::fp16;
    if (s == "fp32") return AbsmaxFormat::fp32;
    throw InvalidArgument(fmt::format("unknown absmax format '{}' (expected bf16|fp16|fp32)", s));
}

bool is_valid(const LayerQuantConfig& c) {
    return index_in(kCodeBitChoices, c.b0) >= 0 && index_in(kAbsmaxBitChoices, c.b1) >= 0 &&
           index_in(kFormatChoices, c.b2) >= 0 && index_in(kBlockSizeChoices, c.B0) >= 0 &&
           index_in(kGroupSizeChoices, c.B1) >= 0;
}

void validate(const LayerQuantConfig& c) {
    if (index_in(kCodeBitChoices, c.b0) < 0)
        throw InvalidArgument(fmt::format("b0={} not in {{2,3,4,8}}", c.b0));
    if (index_in(kAbsmaxBitChoices, c.b1) < 0)
        throw InvalidArgument(fmt::format("b1={} not in {{2,3,4,8}}", c.b1));
    if (index_in(kFormatChoices, c.b2) < 0)
        throw InvalidArgument("b2 is not a known absmax format");
    if (index_in(kBlockSizeChoices, c.B0) < 0)
        throw InvalidArgument(fmt::format("B0={} not in {{16,32,64}}", c.B0));
    if (index_in(kGroupSizeChoices, c.B1) < 0)
        throw InvalidArgument(fmt::format("B1={} not in {{16,64,256}}", c.B1));
}

int lattice_index(const LayerQuantConfig& c) {
    validate(c);
    int idx = index_in(kCodeBitChoices, c.b0);
    idx = idx * 4 + index_in(kAbsmaxBitChoices, c.b1);
    idx = idx * 3 + index_in(kFormatChoices, c.b2);
    idx = idx * 3 + index_in(kBlockSizeChoices, c.B0);
    idx = idx * 3 + index_in(kGroupSizeChoices, c.B1);
    return idx;
}

LayerQuantConfig lattice_config(int index) {
    if (index < 0 || index >= kLatticeSize)
        throw InvalidArgument(fmt::format("lattice index {} out of range", index));
    LayerQuantConfig c;
    c.B1 = kGroupSizeChoices[index % 3];
    index /= 3;
    c.B0 = kBlockSizeChoices[index % 3];
    index /= 3;
    c.b2 = kFormatChoices[index % 3];
    index /= 3;
    c.b1 = kAbsmaxBitChoices[index % 4];
    index /= 4;
    c.b0 = kCodeBitChoices[index];
    return c;
}

const std::array<LayerQuantConfig, kLatticeSize>& all_layer_configs() {
    static const auto table = [] {
        std::array<LayerQuantConfig, kLatticeSize> t{};
        for (int i = 0; i < kLatticeSize; ++i) t[i] = lattice_config(i);
        return t;
    }();
    return table;
}

double nominal_bits(const LayerQuantConfig& c) {
    return c.b0 + static_cast<double>(c.b1) / c.B0 +
           static_cast<double>(format_bits(c.b2)) / (static_cast<double>(c.B0) * c.B1);
}

std::string to_string(const LayerQuantConfig& c) {
    return fmt::format("(b0={},b1={},b2={},B0={},B1={})", c.b0, c.b1, to_string(c.b2), c.B0, c.B1);
}

} // namespace qadapt
