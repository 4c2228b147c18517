// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qadapt/qconfig.hpp"
#include "qadapt/search.hpp"
#include "qadapt/tinynet.hpp"

namespace qadapt {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kLadderVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

// Writes to a sibling temp file, then renames over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

// --- dataset -------------------------------------------------------------------

struct DataFile {
    std::uint64_t seed = 0;
    double noise = 0.0;
    GeneratedTask task;
};

// Little-endian binary: network weights, samples, split indices.
std::string encode_data(const DataFile& d);
DataFile decode_data(const std::string& bytes);
DataFile load_data(const std::filesystem::path& path);

// --- configuration sets ------------------------------------------------------------

Json layer_config_json(const LayerQuantConfig& c);
LayerQuantConfig layer_config_from_json(const Json& j);

struct ConfigSetMeta {
    std::uint64_t seed = 0;
    std::vector<Shape> layer_shapes;
    Json extra = Json::object();
};

Json config_set_json(std::span<const ModelQuantConfig> configs, const ConfigSetMeta& meta);
// Validates the schema version, shapes and every lattice point.
std::vector<ModelQuantConfig> config_set_from_json(const Json& j, ConfigSetMeta* meta = nullptr);

// --- checkpoints ----------------------------------------------------------------

Json checkpoint_json(const AdapterStack& stack, std::uint64_t seed, long step);
// Shapes are checked against a fresh init for net.
AdapterStack checkpoint_from_json(const Json& j, const TargetNet& net);

// --- logs and tables -------------------------------------------------------------

Json epoch_record_json(const EpochRecord& r);
std::string history_jsonl(std::span<const EpochRecord> history);

// Columns: config_id, avg_bits, loss, f1_norm, f2_norm, on_global_front, segment_index.
std::string archive_csv(std::span<const EvaluatedConfig> points, int segments);

struct CurveRow {
    double bits = 0.0;
    double loss_seen = 0.0;
    double loss_unseen = 0.0;
    std::string config_id;
};
inline constexpr const char* kCurveHeader = "bits,loss_seen,loss_unseen,config_id";
std::string curve_csv(std::span<const CurveRow> rows);
std::vector<CurveRow> parse_curve_csv(const std::string& text);

// Shortest round-trip decimal form.
std::string format_double(double v);

} // namespace qadapt
