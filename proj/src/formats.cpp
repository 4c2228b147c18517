// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", tmp.string()));
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error(fmt::format("write to {} failed", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw InvalidArgument(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
    }
}

void write_json(const std::filesystem::path& path, const Json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
    return fmt::format("{}", v);
}

// --- dataset ---------------------------------------------------------------------

namespace {

constexpr char kDataMagic[8] = {'Q', 'A', 'D', 'A', 'T', 'A', '0', '1'};

class Writer {
public:
    template <class T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void matrix(const Matrix& m) {
        put<std::int32_t>(static_cast<std::int32_t>(m.rows()));
        put<std::int32_t>(static_cast<std::int32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
    }
    void indices(const std::vector<int>& v) {
        put<std::int32_t>(static_cast<std::int32_t>(v.size()));
        for (int k : v) put<std::int32_t>(k);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }
    int count(std::int64_t limit) {
        const auto n = get<std::int32_t>();
        if (n < 0 || n > limit) throw InvalidArgument(fmt::format("data file: implausible size field {}", n));
        return n;
    }
    Matrix matrix() {
        const int r = count(1 << 24), c = count(1 << 24);
        need(static_cast<std::size_t>(r) * static_cast<std::size_t>(c) * sizeof(double));
        Matrix m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = get<double>();
        return m;
    }
    std::vector<int> indices(int bound) {
        const int n = count(bound);
        std::vector<int> v(static_cast<std::size_t>(n));
        for (int& k : v) {
            k = get<std::int32_t>();
            if (k < 0 || k >= bound) throw InvalidArgument("data file: split index out of range");
        }
        return v;
    }
    void expect(const char* p, std::size_t n) {
        need(n);
        if (std::memcmp(b_.data() + at_, p, n) != 0) throw InvalidArgument("data file: bad magic");
        at_ += n;
    }
    bool done() const { return at_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (at_ + n > b_.size()) throw InvalidArgument("data file: truncated");
    }
    const std::string& b_;
    std::size_t at_ = 0;
};

} // namespace

std::string encode_data(const DataFile& d) {
    Writer w;
    w.raw(kDataMagic, sizeof kDataMagic);
    w.put<std::uint64_t>(d.seed);
    w.put<double>(d.noise);
    const NetArch& a = d.task.net.arch;
    for (int v : {a.in_dim, a.width, a.out_dim, a.layers, static_cast<int>(a.activation)}) w.put<std::int32_t>(v);
    for (const auto& m : d.task.net.weights) w.matrix(m);
    w.matrix(d.task.data.inputs);
    w.matrix(d.task.data.targets);
    w.indices(d.task.data.train);
    w.indices(d.task.data.calibration);
    w.indices(d.task.data.validation);
    return w.take();
}

DataFile decode_data(const std::string& bytes) {
    Reader r(bytes);
    r.expect(kDataMagic, sizeof kDataMagic);
    DataFile d;
    d.seed = r.get<std::uint64_t>();
    d.noise = r.get<double>();
    NetArch& a = d.task.net.arch;
    a.in_dim = r.count(1 << 16);
    a.width = r.count(1 << 16);
    a.out_dim = r.count(1 << 16);
    a.layers = r.count(1 << 10);
    const int act = r.count(1);
    a.activation = static_cast<Activation>(act);
    const auto shapes = a.shapes();
    for (const auto& s : shapes) {
        Matrix m = r.matrix();
        if (m.rows() != s.rows || m.cols() != s.cols) throw InvalidArgument("data file: layer shape mismatch");
        d.task.net.weights.push_back(std::move(m));
    }
    Dataset& ds = d.task.data;
    ds.inputs = r.matrix();
    ds.targets = r.matrix();
    const int n = static_cast<int>(ds.inputs.rows());
    if (ds.inputs.cols() != a.in_dim || ds.targets.rows() != n || ds.targets.cols() != a.out_dim)
        throw InvalidArgument("data file: sample matrices do not match the architecture");
    ds.train = r.indices(n);
    ds.calibration = r.indices(n);
    ds.validation = r.indices(n);
    if (!r.done()) throw InvalidArgument("data file: trailing bytes");
    return d;
}

DataFile load_data(const std::filesystem::path& path) {
    return decode_data(read_file(path));
}

// --- configuration sets ------------------------------------------------------------

Json layer_config_json(const LayerQuantConfig& c) {
    return Json{{"b0", c.b0}, {"b1", c.b1}, {"b2", to_string(c.b2)}, {"B0", c.B0}, {"B1", c.B1}};
}

LayerQuantConfig layer_config_from_json(const Json& j) {
    try {
        LayerQuantConfig c;
        c.b0 = j.at("b0").get<int>();
        c.b1 = j.at("b1").get<int>();
        c.b2 = parse_absmax_format(j.at("b2").get<std::string>());
        c.B0 = j.at("B0").get<int>();
        c.B1 = j.at("B1").get<int>();
        validate(c);
        return c;
    } catch (const Json::exception& e) {
        throw InvalidArgument(fmt::format("layer configuration: {}", e.what()));
    }
}

namespace {

Json shapes_json(std::span<const Shape> shapes) {
    Json out = Json::array();
    for (const auto& s : shapes) out.push_back({s.rows, s.cols});
    return out;
}

std::vector<Shape> shapes_from_json(const Json& j) {
    std::vector<Shape> out;
    for (const auto& s : j) {
        if (!s.is_array() || s.size() != 2) throw InvalidArgument("layer_shapes entries must be [rows, cols]");
        out.push_back({s[0].get<std::int64_t>(), s[1].get<std::int64_t>()});
    }
    return out;
}

void check_schema(const Json& j, const char* what) {
    if (!j.is_object() || !j.contains("schema_version"))
        throw InvalidArgument(fmt::format("{}: missing schema_version", what));
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw InvalidArgument(fmt::format("{}: unsupported schema_version {}", what, j.at("schema_version").dump()));
}

} // namespace

Json config_set_json(std::span<const ModelQuantConfig> configs, const ConfigSetMeta& meta) {
    Json meta_j = meta.extra.is_object() ? meta.extra : Json::object();
    meta_j["seed"] = meta.seed;
    meta_j["N"] = meta.layer_shapes.size();
    meta_j["layer_shapes"] = shapes_json(meta.layer_shapes);
    meta_j["ladder_version"] = kLadderVersion;
    Json list = Json::array();
    for (const auto& c : configs) {
        if (c.shapes != meta.layer_shapes) throw InvalidArgument("configuration shapes differ from the set's layer_shapes");
        Json layers = Json::array();
        for (const auto& l : c.layers) layers.push_back(layer_config_json(l));
        list.push_back({{"layers", layers}, {"avg_bits", avg_bits(c)}});
    }
    return Json{{"schema_version", kSchemaVersion}, {"meta", meta_j}, {"configs", list}};
}

std::vector<ModelQuantConfig> config_set_from_json(const Json& j, ConfigSetMeta* meta) {
    check_schema(j, "configuration set");
    try {
        const Json& m = j.at("meta");
        if (m.at("ladder_version").get<int>() != kLadderVersion)
            throw InvalidArgument("configuration set: ladder_version mismatch");
        const std::vector<Shape> shapes = shapes_from_json(m.at("layer_shapes"));
        if (m.at("N").get<std::size_t>() != shapes.size()) throw InvalidArgument("configuration set: N != len(layer_shapes)");
        std::vector<ModelQuantConfig> out;
        for (const auto& c : j.at("configs")) {
            ModelQuantConfig mc;
            mc.shapes = shapes;
            for (const auto& l : c.at("layers")) mc.layers.push_back(layer_config_from_json(l));
            validate(mc);
            if (c.contains("avg_bits") && std::abs(c.at("avg_bits").get<double>() - avg_bits(mc)) > 1e-9)
                throw InvalidArgument("configuration set: recorded avg_bits disagrees with the layers");
            out.push_back(std::move(mc));
        }
        if (meta) {
            meta->seed = m.value("seed", std::uint64_t{0});
            meta->layer_shapes = shapes;
            meta->extra = m;
        }
        return out;
    } catch (const Json::exception& e) {
        throw InvalidArgument(fmt::format("configuration set: {}", e.what()));
    }
}

// --- checkpoints ---------------------------------------------------------------

Json checkpoint_json(const AdapterStack& stack, std::uint64_t seed, long step) {
    Json tensors = Json::object();
    for (const auto& [name, m] : stack.tensors()) {
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m->size()));
        for (Eigen::Index i = 0; i < m->rows(); ++i)
            for (Eigen::Index k = 0; k < m->cols(); ++k) data.push_back((*m)(i, k));
        tensors[name] = {{"rows", m->rows()}, {"cols", m->cols()}, {"data", data}};
    }
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "adapter_stack"},
                {"seed", seed},
                {"step", step},
                {"rank", stack.rank},
                {"has_hyper", stack.has_hyper},
                {"hidden", stack.has_hyper ? stack.hyper.w1.cols() : 0},
                {"tensors", tensors}};
}

AdapterStack checkpoint_from_json(const Json& j, const TargetNet& net) {
    check_schema(j, "checkpoint");
    try {
        if (j.at("kind").get<std::string>() != "adapter_stack") throw InvalidArgument("checkpoint: wrong kind");
        const bool hyper = j.at("has_hyper").get<bool>();
        const int hidden = hyper ? j.at("hidden").get<int>() : 64;
        AdapterStack stack = AdapterStack::init(net, j.at("rank").get<int>(), 0, hyper, hidden);
        const Json& t = j.at("tensors");
        auto slots = stack.tensors();
        if (t.size() != slots.size()) throw InvalidArgument("checkpoint: tensor count mismatch");
        for (auto& slot : slots) {
            const Json& e = t.at(slot.name);
            const auto rows = e.at("rows").get<Eigen::Index>();
            const auto cols = e.at("cols").get<Eigen::Index>();
            const auto data = e.at("data").get<std::vector<double>>();
            if (rows != slot.value->rows() || cols != slot.value->cols() ||
                data.size() != static_cast<std::size_t>(rows * cols))
                throw InvalidArgument(fmt::format("checkpoint: tensor '{}' has the wrong shape", slot.name));
            for (Eigen::Index i = 0; i < rows; ++i)
                for (Eigen::Index k = 0; k < cols; ++k) (*slot.value)(i, k) = data[static_cast<std::size_t>(i * cols + k)];
        }
        return stack;
    } catch (const Json::exception& e) {
        throw InvalidArgument(fmt::format("checkpoint: {}", e.what()));
    }
}

// --- logs and tables ---------------------------------------------------------------

Json epoch_record_json(const EpochRecord& r) {
    return Json{{"epoch", r.epoch}, {"hv", r.hv}, {"set_size", r.set_size}, {"mean_f1", r.mean_f1}, {"wall_ms", r.wall_ms}};
}

std::string history_jsonl(std::span<const EpochRecord> history) {
    std::string out;
    for (const auto& r : history) out += epoch_record_json(r).dump() + "\n";
    return out;
}

std::string archive_csv(std::span<const EvaluatedConfig> points, int segments) {
    std::vector<ObjectivePoint> pts;
    for (const auto& e : points) pts.push_back(e.point);
    const auto front = pareto_indices(pts);
    const auto seg = segment_indices(pts, segments);
    std::vector<char> on_front(pts.size(), 0);
    for (std::size_t k : front) on_front[k] = 1;
    std::string out = "config_id,avg_bits,loss,f1_norm,f2_norm,on_global_front,segment_index\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& e = points[k];
        out += fmt::format("{},{},{},{},{},{},{}\n", e.id, format_double(e.bits), format_double(e.loss),
                           format_double(e.point.f1), format_double(e.point.f2), int(on_front[k]), seg[k]);
    }
    return out;
}

std::string curve_csv(std::span<const CurveRow> rows) {
    std::string out = std::string(kCurveHeader) + "\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{}\n", format_double(r.bits), format_double(r.loss_seen),
                           format_double(r.loss_unseen), r.config_id);
    return out;
}

std::vector<CurveRow> parse_curve_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCurveHeader)
        throw InvalidArgument(fmt::format("curve CSV: expected header '{}'", kCurveHeader));
    std::vector<CurveRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 4) throw InvalidArgument(fmt::format("curve CSV line {}: expected 4 fields", lineno));
        try {
            rows.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), f[3]});
        } catch (const std::exception&) {
            throw InvalidArgument(fmt::format("curve CSV line {}: non-numeric field", lineno));
        }
    }
    return rows;
}

} // namespace qadapt
