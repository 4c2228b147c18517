// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>

#include "qadapt/nfquant.hpp"

namespace qadapt {

struct TruncatedSvd {
    Matrix u;  // d x r, orthonormal columns
    Vector s;  // r, non-negative, descending
    Matrix v;  // n x r, orthonormal columns

    Matrix reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

struct SvdOptions {
    int min_iterations = 8;
    int max_iterations = 200;
    int oversample = 10;
    double tolerance = 1e-12;  // relative change of the leading r singular values
    std::uint64_t seed = 0x5eedULL;
};

// Top-r singular triplets by randomized subspace (power) iteration with a
// Rayleigh-Ritz projection. Throws NumericError if the leading singular values
// have not settled after max_iterations.
TruncatedSvd truncated_svd(const Matrix& m, int r, const SvdOptions& opts = {});

} // namespace qadapt
