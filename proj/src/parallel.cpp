// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace qadapt {

int thread_count_from_env() {
    const char* raw = std::getenv("QADAPT_THREADS");
    if (raw == nullptr) return 1;
    int n = 1;
    const auto [end, ec] = std::from_chars(raw, raw + std::strlen(raw), n);
    if (ec != std::errc{} || n < 1) return 1;
    return n;
}

} // namespace qadapt
