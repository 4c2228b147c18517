// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

#include <fmt/format.h>

namespace qadapt {

namespace {
std::atomic<LogLevel> g_level{LogLevel::warn};
std::mutex g_mu;
} // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_message(LogLevel level, std::string_view msg) {
    if (level < g_level.load()) return;
    static constexpr const char* kTags[] = {"debug", "info", "warning", "error", ""};
    std::lock_guard lock(g_mu);
    fmt::print(stderr, "qadapt {}: {}\n", kTags[static_cast<int>(level)], msg);
}

} // namespace qadapt
