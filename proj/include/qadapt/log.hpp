// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string_view>

namespace qadapt {

enum class LogLevel { debug, info, warn, error, off };

// Process-wide threshold; messages go to stderr.
void set_log_level(LogLevel level);
LogLevel log_level();
void log_message(LogLevel level, std::string_view msg);

inline void log_info(std::string_view msg) { log_message(LogLevel::info, msg); }
inline void log_warn(std::string_view msg) { log_message(LogLevel::warn, msg); }

} // namespace qadapt
