// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// qadapt command-line harness.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "qadapt/error.hpp"
#include "qadapt/formats.hpp"
#include "qadapt/harness.hpp"
#include "qadapt/log.hpp"
#include "qadapt/parallel.hpp"
#include "qadapt/search.hpp"

namespace fs = std::filesystem;
using namespace qadapt;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kInfeasible = 3, kNumeric = 4 };

struct Invocation {
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

Json base_manifest(const Invocation& inv, const std::string& command) {
    const auto now = std::chrono::system_clock::now();
    return Json{{"schema_version", kSchemaVersion},
                {"command", command},
                {"argv", inv.argv},
                {"tool_version", kToolVersion},
                {"wall_clock", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", std::chrono::floor<std::chrono::seconds>(now))},
                {"wall_ms", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - inv.started)
                                .count()}};
}

Json shapes_json(const std::vector<Shape>& shapes) {
    Json out = Json::array();
    for (const auto& s : shapes) out.push_back({s.rows, s.cols});
    return out;
}

fs::path manifest_path_for(const fs::path& file) {
    fs::path p = file;
    p += ".manifest.json";
    return p;
}

// --- gen-data --------------------------------------------------------------------

struct GenDataArgs {
    std::uint64_t seed = 0;
    int samples = 2000;
    double noise = 0.05;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a, const Invocation& inv) {
    if (a.samples < 64) throw InvalidArgument(fmt::format("--samples must be at least 64, got {}", a.samples));
    if (!(a.noise >= 0.0)) throw InvalidArgument("--noise must be non-negative");
    DataFile d;
    d.seed = a.seed;
    d.noise = a.noise;
    d.task = gen_teacher_student(a.seed, a.samples, a.noise);
    write_file_atomic(a.out, encode_data(d));
    Json m = base_manifest(inv, "gen-data");
    m["seed"] = a.seed;
    m["dataset"] = {{"samples", a.samples},
                    {"noise", a.noise},
                    {"train", d.task.data.train.size()},
                    {"calibration", d.task.data.calibration.size()},
                    {"validation", d.task.data.validation.size()}};
    m["N"] = d.task.net.weights.size();
    m["layer_shapes"] = shapes_json(d.task.net.shapes());
    write_json(manifest_path_for(a.out), m);
    fmt::print("wrote {} ({} samples: train {}, calibration {}, validation {})\n", a.out, a.samples,
               d.task.data.train.size(), d.task.data.calibration.size(), d.task.data.validation.size());
    return kOk;
}

// --- init-configs --------------------------------------------------------------

struct InitArgs {
    std::string data;
    std::string budgets = "2.25:7.25:0.1";
    int rank = 4;
    int count = 50;
    std::string out;
};

int cmd_init_configs(const InitArgs& a, const Invocation& inv) {
    const DataFile d = load_data(a.data);
    const RangeSpec r = parse_range(a.budgets);
    if (a.count < 1) throw InvalidArgument("--count must be positive");
    const auto budgets = budget_grid(r.start, r.stop, r.step, static_cast<std::size_t>(a.count));
    const LayerErrorTable table = compute_layer_errors(d.task.net.weights, a.rank);
    std::vector<ModelQuantConfig> configs;
    Json used = Json::array();
    for (double b : budgets) {
        try {
            configs.push_back(solve_budget(table, b));
            used.push_back(b);
        } catch (const Infeasible& e) {
            log_warn(fmt::format("init-configs: budget {:.4f} skipped: {}", b, e.what()));
        }
    }
    ConfigSetMeta meta;
    meta.seed = d.seed;
    meta.layer_shapes = d.task.net.shapes();
    meta.extra = {{"rank", a.rank}, {"budgets", used}, {"data", a.data}};
    write_json(a.out, config_set_json(configs, meta));
    Json m = base_manifest(inv, "init-configs");
    m["seed"] = d.seed;
    m["rank"] = a.rank;
    m["budgets"] = a.budgets;
    write_json(manifest_path_for(a.out), m);
    fmt::print("wrote {} configurations to {} ({} budgets skipped)\n", configs.size(), a.out,
               budgets.size() - configs.size());
    return kOk;
}

// --- train --------------------------------------------------------------------------

struct TrainArgs {
    std::string mode;
    std::string data;
    std::string configs;
    int epochs = 5;
    int train_epochs = 1;
    int fd_steps = 3;
    int segments = 40;
    std::uint64_t seed = 0;
    std::string out;
    int rank = 4;
    double lr = 1e-4;
    int init_count = 0;
    bool no_search = false;
    std::vector<double> bits;
    std::vector<int> config_index;
};

struct TrainFlags {
    bool fd_steps = false, segments = false, no_search = false, bits = false, config_index = false;
};

Json train_manifest(const Invocation& inv, const TrainArgs& a, const DataFile& d) {
    Json m = base_manifest(inv, "train");
    m["mode"] = a.mode;
    m["seed"] = a.seed;
    m["N"] = d.task.net.weights.size();
    m["layer_shapes"] = shapes_json(d.task.net.shapes());
    m["rank"] = a.rank;
    m["lr"] = a.lr;
    m["T1"] = a.epochs;
    m["train_epochs"] = a.train_epochs;
    m["T2"] = a.fd_steps;
    m["U"] = a.segments;
    m["search"] = !a.no_search;
    m["data"] = fs::absolute(a.data).string();
    m["configs"] = fs::absolute(a.configs).string();
    m["dataset"] = {{"seed", d.seed}, {"samples", d.task.data.inputs.rows()}, {"noise", d.noise}};
    return m;
}

int cmd_train(const TrainArgs& a, const TrainFlags& f, const Invocation& inv) {
    const bool coa = a.mode == "coa";
    const bool per_config = a.mode == "per-config" || a.mode == "per-config-svd";
    if (!coa && (f.fd_steps || f.segments || f.no_search))
        throw InvalidArgument(fmt::format("--fd-steps, --segments and --no-search only apply to --mode coa (got {})", a.mode));
    if (!per_config && (f.bits || f.config_index))
        throw InvalidArgument(fmt::format("--bits and --config-index only apply to per-config modes (got {})", a.mode));
    if (per_config && f.bits == f.config_index)
        throw InvalidArgument("per-config modes need exactly one of --bits or --config-index");
    if (a.epochs < 0 || a.train_epochs < 0) throw InvalidArgument("epoch counts must be non-negative");
    if (a.rank < 1) throw InvalidArgument("--rank must be positive");
    if (!(a.lr >= 0.0)) throw InvalidArgument("--lr must be non-negative");

    const DataFile d = load_data(a.data);
    ConfigSetMeta meta;
    std::vector<ModelQuantConfig> configs = config_set_from_json(read_json(a.configs), &meta);
    if (configs.empty()) throw InvalidArgument("configuration set is empty");
    if (meta.layer_shapes != d.task.net.shapes()) throw InvalidArgument("configuration set does not match the network's layers");
    if (a.init_count > 0 && static_cast<std::size_t>(a.init_count) < configs.size()) configs.resize(a.init_count);

    const TargetNet& net = d.task.net;
    QuantCache cache(net);
    TrainOptions topts;
    topts.lr = a.lr;
    topts.seed = a.seed;
    const fs::path out = a.out;
    fs::create_directories(out);
    Json manifest = train_manifest(inv, a, d);
    ConfigSetMeta out_meta;
    out_meta.seed = a.seed;
    out_meta.layer_shapes = net.shapes();
    out_meta.extra = {{"mode", a.mode}};
    const long steps_per_epoch = static_cast<long>(d.task.data.train.size()) / Dataset::kBatch;

    if (coa) {
        CoaOptions o;
        o.epochs = a.epochs;
        o.train_epochs = a.train_epochs;
        o.rank = a.rank;
        o.search = !a.no_search;
        o.train = topts;
        o.search_opts.fd_steps = a.fd_steps;
        o.search_opts.segments = a.segments;
        o.search_opts.threads = thread_count_from_env();
        const CoaResult res = run_coa(net, cache, d.task.data, configs, o);
        const long steps = steps_per_epoch * a.train_epochs * a.epochs;
        write_json(out / "checkpoint.json", checkpoint_json(res.stack, a.seed, steps));
        write_json(out / "final_configs.json", config_set_json(res.state.current_configs(), out_meta));
        write_file_atomic(out / "history.jsonl", history_jsonl(res.history));
        write_file_atomic(out / "archive.csv", archive_csv(res.state.evaluated, a.segments));
        Json pts = Json::array();
        std::vector<char> retained(res.state.evaluated.size(), 0);
        for (std::size_t k : res.state.current) retained[k] = 1;
        for (std::size_t k = 0; k < res.state.evaluated.size(); ++k) {
            const auto& e = res.state.evaluated[k];
            pts.push_back({{"id", e.id}, {"ranks", e.ranks}, {"loss", e.loss}, {"avg_bits", e.bits},
                           {"f1_norm", e.point.f1}, {"f2_norm", e.point.f2}, {"snapshot", e.snapshot},
                           {"epoch", e.epoch}, {"retained", retained[k] != 0}});
        }
        write_json(out / "archive.json", Json{{"schema_version", kSchemaVersion},
                                              {"ladder_version", kLadderVersion},
                                              {"loss_max", res.state.scale.loss_max},
                                              {"bits_max", res.state.scale.bits_max},
                                              {"segments", a.segments},
                                              {"points", pts}});
        for (std::size_t k = 0; k < res.state.snapshots.size(); ++k) {
            const long at = steps_per_epoch * a.train_epochs * static_cast<long>(k);
            write_json(out / "snapshots" / fmt::format("snapshot_{}.json", k),
                       checkpoint_json(res.state.snapshots[k], a.seed, at));
        }
        manifest["history"] = Json::array();
        for (const auto& h : res.history) manifest["history"].push_back(epoch_record_json(h));
        manifest["final_set_size"] = res.state.current.size();
        manifest["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - inv.started).count();
        write_json(out / "manifest.json", manifest);
        const double hv = res.history.empty() ? res.state.current_hv() : res.history.back().hv;
        fmt::print("coa: {} epochs, final set {}, evaluated {}, hv {:.6f}\n", a.epochs, res.state.current.size(),
                   res.state.evaluated.size(), hv);
        return kOk;
    }

    const int total_epochs = a.epochs * a.train_epochs;
    if (a.mode == "shared") {
        const AdapterStack stack = train_shared(net, cache, configs, d.task.data, total_epochs, topts, a.rank);
        write_json(out / "checkpoint.json", checkpoint_json(stack, a.seed, steps_per_epoch * total_epochs));
        write_json(out / "final_configs.json", config_set_json(configs, out_meta));
        write_json(out / "manifest.json", manifest);
        fmt::print("shared: {} epochs over {} configurations\n", total_epochs, configs.size());
        return kOk;
    }
    if (!per_config) throw InvalidArgument(fmt::format("unknown --mode '{}'", a.mode));

    std::vector<ModelQuantConfig> targets;
    Json target_info = Json::array();
    if (f.bits) {
        for (double b : a.bits) {
            const BudgetSelection sel = select_for_budget(configs, b);
            targets.push_back(sel.config);
            target_info.push_back({{"bits", b}, {"avg_bits", avg_bits(sel.config)}, {"source_index", sel.source_index}});
        }
    } else {
        for (int k : a.config_index) {
            if (k < 0 || static_cast<std::size_t>(k) >= configs.size())
                throw InvalidArgument(fmt::format("--config-index {} out of range [0, {})", k, configs.size()));
            targets.push_back(configs[static_cast<std::size_t>(k)]);
            target_info.push_back({{"config_index", k}, {"avg_bits", avg_bits(configs[static_cast<std::size_t>(k)])}});
        }
    }
    const bool svd = a.mode == "per-config-svd";
    std::vector<AdapterStack> stacks(targets.size());
    parallel_for(targets.size(), thread_count_from_env(), [&](std::size_t k) {
        stacks[k] = train_lora_per_config(net, cache, targets[k], d.task.data, total_epochs, topts, a.rank, svd);
    });
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const fs::path dir = out / "per_config" / std::to_string(k);
        write_json(dir / "checkpoint.json", checkpoint_json(stacks[k], a.seed, steps_per_epoch * total_epochs));
        Json m = manifest;
        m["target"] = target_info[k];
        m["target_index"] = k;
        write_json(dir / "manifest.json", m);
    }
    manifest["targets"] = target_info;
    write_json(out / "final_configs.json", config_set_json(targets, out_meta));
    write_json(out / "manifest.json", manifest);
    fmt::print("{}: trained {} adapters for {} epochs each\n", a.mode, targets.size(), total_epochs);
    return kOk;
}

// --- run loading ------------------------------------------------------------------

struct LoadedRun {
    Json manifest;
    std::string mode;
    DataFile data;
    std::vector<ModelQuantConfig> final_set;
    ConfigSetMeta meta;
    std::vector<AdapterStack> stacks;  // one, or one per final-set member
    bool use_hyper = false;
};

LoadedRun load_run(const fs::path& dir, const std::string& data_override, bool need_stacks) {
    LoadedRun r;
    r.manifest = read_json(dir / "manifest.json");
    r.mode = r.manifest.at("mode").get<std::string>();
    r.data = load_data(data_override.empty() ? r.manifest.at("data").get<std::string>() : data_override);
    r.final_set = config_set_from_json(read_json(dir / "final_configs.json"), &r.meta);
    if (r.final_set.empty()) throw InvalidArgument(fmt::format("{}: final configuration set is empty", dir.string()));
    if (!need_stacks) return r;
    if (r.mode == "per-config" || r.mode == "per-config-svd") {
        for (std::size_t k = 0; k < r.final_set.size(); ++k)
            r.stacks.push_back(checkpoint_from_json(
                read_json(dir / "per_config" / std::to_string(k) / "checkpoint.json"), r.data.task.net));
    } else {
        r.stacks.push_back(checkpoint_from_json(read_json(dir / "checkpoint.json"), r.data.task.net));
        r.use_hyper = r.mode == "coa";
    }
    return r;
}

// --- eval-curve --------------------------------------------------------------------

struct EvalArgs {
    std::string run;
    std::string data;
    std::string bits = "2.1:8.6:0.1";
    std::uint64_t unseen_seed = 0;
    std::string out;
};

int cmd_eval_curve(const EvalArgs& a, const Invocation& inv) {
    const LoadedRun run = load_run(a.run, a.data, true);
    const TargetNet& net = run.data.task.net;
    QuantCache cache(net);
    const auto [vx, vy] = run.data.task.data.batch(run.data.task.data.validation);
    const auto grid = range_values(parse_range(a.bits));
    const CurveLoss loss = [&](const ModelQuantConfig& c, std::size_t source) {
        const AdapterStack& s = run.stacks.size() == 1 ? run.stacks[0] : run.stacks.at(source);
        return forward_loss(net, cache, c, s, run.use_hyper, vx, vy);
    };
    const CurveResult res = eval_curve(run.final_set, grid, a.unseen_seed, loss);
    std::vector<CurveRow> rows;
    Json detail = Json::array();
    for (const auto& p : res.points) {
        rows.push_back({p.bits, p.loss_seen, p.loss_unseen, p.config_id});
        detail.push_back({{"bits", p.bits}, {"seen_avg_bits", p.seen_bits}, {"unseen_avg_bits", p.unseen_bits},
                          {"config_id", p.config_id}});
    }
    write_file_atomic(a.out, curve_csv(rows));
    Json m = base_manifest(inv, "eval-curve");
    m["run"] = fs::absolute(a.run).string();
    m["mode"] = run.mode;
    m["unseen_seed"] = a.unseen_seed;
    m["bits"] = a.bits;
    m["summary"] = {{"rows", rows.size()}, {"skipped", res.skipped}, {"mean_relative_gap_unseen_vs_seen", res.mean_relative_gap}};
    m["points"] = detail;
    fs::path summary = a.out;
    summary += ".summary.json";
    write_json(summary, m);
    fmt::print("wrote {} rows to {}; mean relative gap unseen vs seen {:.4f}; skipped {}\n", rows.size(), a.out,
               res.mean_relative_gap, res.skipped.size());
    return kOk;
}

// --- pareto-report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> curves;
    std::vector<std::string> names;
    std::string baseline;
    std::string ref = "1,1";
    std::string out;
};

RefPoint parse_ref(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw InvalidArgument(fmt::format("--ref '{}': expected x,y", text));
    try {
        std::size_t used = 0;
        RefPoint r;
        r.f1 = std::stod(text.substr(0, comma), &used);
        if (used != comma) throw std::invalid_argument("x");
        const std::string y = text.substr(comma + 1);
        r.f2 = std::stod(y, &used);
        if (used != y.size()) throw std::invalid_argument("y");
        return r;
    } catch (const std::exception&) {
        throw InvalidArgument(fmt::format("--ref '{}': expected two numbers", text));
    }
}

int cmd_pareto_report(const ReportArgs& a, const Invocation& inv) {
    if (a.curves.empty()) throw InvalidArgument("--curves needs at least one file");
    if (!a.names.empty() && a.names.size() != a.curves.size())
        throw InvalidArgument("--names must list one name per curve");
    std::vector<CurveInput> inputs;
    for (std::size_t k = 0; k < a.curves.size(); ++k) {
        CurveInput c;
        c.name = a.names.empty() ? fs::path(a.curves[k]).stem().string() : a.names[k];
        for (const auto& prev : inputs)
            if (prev.name == c.name) throw InvalidArgument(fmt::format("duplicate curve name '{}'", c.name));
        for (const auto& row : parse_curve_csv(read_file(a.curves[k]))) {
            c.bits.push_back(row.bits);
            c.loss.push_back(row.loss_seen);
        }
        inputs.push_back(std::move(c));
    }
    const std::string baseline = a.baseline.empty() ? inputs[0].name : a.baseline;
    const ParetoReport rep = pareto_report(inputs, baseline, parse_ref(a.ref));
    Json methods = Json::array();
    std::string csv = "method,hv,gap,points,matched\n";
    for (const auto& m : rep.methods) {
        methods.push_back({{"name", m.name}, {"hv", m.hv}, {"gap", m.gap}, {"points", m.points}, {"matched", m.matched}});
        csv += fmt::format("{},{},{},{},{}\n", m.name, format_double(m.hv), format_double(m.gap), m.points, m.matched);
    }
    Json j = base_manifest(inv, "pareto-report");
    j["ref"] = {rep.ref.f1, rep.ref.f2};
    j["loss_max"] = rep.loss_max;
    j["bits_max"] = rep.bits_max;
    j["baseline"] = rep.baseline;
    j["curves"] = a.curves;
    j["methods"] = methods;
    write_json(a.out, j);
    fs::path csv_path = a.out;
    csv_path.replace_extension(".csv");
    write_file_atomic(csv_path, csv);
    fmt::print("{:<20} {:>10} {:>10}\n", "method", "hv", "gap");
    for (const auto& m : rep.methods) fmt::print("{:<20} {:>10.6f} {:>+10.4f}\n", m.name, m.hv, m.gap);
    return kOk;
}

// --- select-config -------------------------------------------------------------

struct SelectArgs {
    std::string run;
    double bits = 0.0;
    double tol = 0.05;
    std::string out;
};

int cmd_select_config(const SelectArgs& a, const Invocation& inv) {
    const LoadedRun run = load_run(a.run, "", false);
    const BudgetSelection sel = select_for_budget(run.final_set, a.bits, a.tol);
    const double achieved = avg_bits(sel.config);
    std::vector<std::string> layers;
    for (const auto& l : sel.config.layers) layers.push_back(to_string(l));
    fmt::print("selected from member {} ({} ladder steps): avg_bits {:.6f}\n", sel.source_index, sel.rank_distance,
               achieved);
    for (std::size_t i = 0; i < layers.size(); ++i) fmt::print("  layer {}: {}\n", i, layers[i]);
    if (!a.out.empty()) {
        ConfigSetMeta meta = run.meta;
        meta.extra["selected_for_bits"] = a.bits;
        meta.extra["source_index"] = sel.source_index;
        write_json(a.out, config_set_json(std::span(&sel.config, 1), meta));
        Json m = base_manifest(inv, "select-config");
        m["run"] = fs::absolute(a.run).string();
        m["bits"] = a.bits;
        m["tol"] = a.tol;
        m["avg_bits"] = achieved;
        m["source_index"] = sel.source_index;
        m["rank_distance"] = sel.rank_distance;
        write_json(manifest_path_for(a.out), m);
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    Invocation inv;
    for (int k = 0; k < argc; ++k) inv.argv.emplace_back(argv[k]);

    CLI::App app{"qadapt: configuration-aware low-rank adapters for mixed-precision NF quantization"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "Generate a teacher-student dataset");
    gen->add_option("--seed", gd.seed, "Random seed");
    gen->add_option("--samples", gd.samples, "Number of samples (>= 64)");
    gen->add_option("--noise", gd.noise, "Target noise standard deviation");
    gen->add_option("--out", gd.out, "Output data file")->required();

    InitArgs ia;
    auto* init = app.add_subcommand("init-configs", "Initial configurations from the SVD-residual knapsack");
    init->add_option("--data", ia.data, "Data file")->required();
    init->add_option("--budgets", ia.budgets, "Budget range start:stop:step");
    init->add_option("--rank", ia.rank, "Low-rank r for the residual error");
    init->add_option("--count", ia.count, "Maximum number of budgets");
    init->add_option("--out", ia.out, "Output configs.json")->required();

    TrainArgs ta;
    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train adapters (coa, shared, per-config, per-config-svd)");
    train->add_option("--mode", ta.mode, "Training mode")
        ->required()
        ->check(CLI::IsMember({"coa", "shared", "per-config", "per-config-svd"}));
    train->add_option("--data", ta.data, "Data file")->required();
    train->add_option("--configs", ta.configs, "Configuration set")->required();
    train->add_option("--epochs", ta.epochs, "Cyclic epochs T1 (coa) or epoch multiplier");
    train->add_option("--train-epochs", ta.train_epochs, "Passes over the training split per epoch");
    auto* fd_opt = train->add_option("--fd-steps", ta.fd_steps, "Coordinate steps T2 per search epoch");
    auto* seg_opt = train->add_option("--segments", ta.segments, "Pareto filter segments U");
    train->add_option("--seed", ta.seed, "Random seed")->required();
    train->add_option("--out", ta.out, "Run directory")->required();
    train->add_option("--rank", ta.rank, "Adapter rank r");
    train->add_option("--lr", ta.lr, "Adam learning rate");
    train->add_option("--init-count", ta.init_count, "Use only the first K configurations");
    auto* ns_opt = train->add_flag("--no-search", ta.no_search, "Freeze the initial configuration set (coa)");
    auto* bits_opt = train->add_option("--bits", ta.bits, "Per-config targets by average bits")->delimiter(',');
    auto* idx_opt = train->add_option("--config-index", ta.config_index, "Per-config targets by set index")->delimiter(',');

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval-curve", "Validation loss over a bit grid, seen and unseen configurations");
    eval->add_option("--run", ea.run, "Run directory")->required();
    eval->add_option("--data", ea.data, "Override the run's data file");
    eval->add_option("--bits", ea.bits, "Bit grid start:stop:step");
    eval->add_option("--unseen-seed", ea.unseen_seed, "Seed for unseen configurations");
    eval->add_option("--out", ea.out, "Output curve CSV")->required();

    ReportArgs ra;
    auto* report = app.add_subcommand("pareto-report", "Hypervolume and loss gaps over curves");
    report->add_option("--curves", ra.curves, "Curve CSV files")->required();
    report->add_option("--names", ra.names, "Method names (default: file stems)");
    report->add_option("--baseline", ra.baseline, "Baseline method name (default: first curve)");
    report->add_option("--ref", ra.ref, "Reference point x,y");
    report->add_option("--out", ra.out, "Output report JSON")->required();

    SelectArgs sa;
    auto* select = app.add_subcommand("select-config", "Pick a configuration for a bit budget");
    select->add_option("--run", sa.run, "Run directory")->required();
    select->add_option("--bits", sa.bits, "Target average bits")->required();
    select->add_option("--tol", sa.tol, "Accepted distance from the target");
    select->add_option("--out", sa.out, "Write the configuration as a one-entry configs.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }
    set_log_level(verbose ? LogLevel::info : LogLevel::warn);

    try {
        if (*gen) return cmd_gen_data(gd, inv);
        if (*init) return cmd_init_configs(ia, inv);
        if (*train) {
            tf.fd_steps = fd_opt->count() > 0;
            tf.segments = seg_opt->count() > 0;
            tf.no_search = ns_opt->count() > 0;
            tf.bits = bits_opt->count() > 0;
            tf.config_index = idx_opt->count() > 0;
            return cmd_train(ta, tf, inv);
        }
        if (*eval) return cmd_eval_curve(ea, inv);
        if (*report) return cmd_pareto_report(ra, inv);
        if (*select) return cmd_select_config(sa, inv);
    } catch (const InvalidArgument& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kValidation;
    } catch (const Infeasible& e) {
        fmt::print(stderr, "infeasible: {}\n", e.what());
        return kInfeasible;
    } catch (const NumericError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return kNumeric;
    } catch (const TrainingError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return kNumeric;
    } catch (const CoaError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return kNumeric;
    } catch (const Json::exception& e) {
        fmt::print(stderr, "error: malformed input ({})\n", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kFailure;
    }
    return kFailure;
}
