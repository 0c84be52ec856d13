#include "audioext/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "audioext/io.hpp"
#include "audioext/rng.hpp"

namespace audioext {

namespace fs = std::filesystem;

namespace {

void require_writable(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) {
        throw std::runtime_error("output exists, pass --force to overwrite: " + path.string());
    }
}

std::string seconds_label(double seconds) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", seconds);
    return std::string(buf);
}

double elapsed_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t hash_json(const nlohmann::ordered_json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

int TokenMapping::tokens_for(double seconds) const {
    return chunk_audio(seconds, ChunkingConfig{chunk_seconds, tokens_per_chunk}).audio_tokens;
}

SequenceLayout parse_layout_spec(const std::string& spec) {
    SequenceLayout layout;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        if (comma == std::string::npos) {
            comma = spec.size();
        }
        const std::string part = spec.substr(pos, comma - pos);
        const std::size_t colon = part.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument("layout spec: expected modality:count, got " + part);
        }
        const std::string kind = part.substr(0, colon);
        const int count = std::stoi(part.substr(colon + 1));
        if (kind == "text") {
            layout.segments.push_back({Modality::Text, count});
        } else if (kind == "audio") {
            layout.segments.push_back({Modality::Audio, count});
        } else {
            throw std::invalid_argument("layout spec: unknown modality " + kind);
        }
        pos = comma + 1;
    }
    if (layout.segments.empty()) {
        throw std::invalid_argument("layout spec: empty");
    }
    return layout;
}

PositionPlan plan_for_method(Method method, const SequenceLayout& layout,
                             const FrequencyTable& table, int anchor_tokens, int cutoff,
                             double temperature) {
    const int total = layout.total_tokens();
    if (method == Method::Vanilla) {
        return plan_vanilla(total);
    }
    const AudioWindow window = locate_audio_window(layout);
    ExtensionConfig cfg;
    cfg.method = method;
    cfg.anchor_audio_tokens = anchor_tokens > 0 ? anchor_tokens : window.length;
    cfg.target_audio_tokens = window.length;
    cfg.cutoff_pair = cutoff;
    cfg.temperature = temperature;
    switch (method) {
        case Method::WholePI:
            return plan_whole_pi(cfg, total);
        case Method::WholeYarn:
            return plan_whole_yarn(cfg, YarnRampParams{}, total, table);
        case Method::PartialPI:
            cfg.cutoff_pair = 0;
            cfg.temperature = 1.0;
            return plan_partial(cfg, layout, table);
        case Method::PartialYarn2:
        case Method::PartialYarn3:
            return plan_partial(cfg, layout, table);
        case Method::Vanilla:
            break;
    }
    throw std::invalid_argument("plan_for_method: unhandled method");
}

EvalResult evaluate_accuracy(const ModelParams& model, std::span<const TaskInstance> instances,
                             Method method, int anchor_tokens, int cutoff, double temperature) {
    const FrequencyTable table =
        build_frequencies(model.config.embed_dim, model.config.rope_base);
    std::vector<int> predictions;
    predictions.reserve(instances.size());
    for (const TaskInstance& inst : instances) {
        const AssembledSequence seq = assemble_sequence(inst);
        const PositionPlan plan =
            plan_for_method(method, seq.layout, table, anchor_tokens, cutoff, temperature);
        predictions.push_back(predict(model, seq.tokens, plan, inst.choices));
    }
    return EvalResult{score(predictions, instances), static_cast<int>(instances.size())};
}

std::vector<TrainSample> to_train_samples(std::span<const TaskInstance> instances) {
    std::vector<TrainSample> samples;
    samples.reserve(instances.size());
    for (const TaskInstance& inst : instances) {
        AssembledSequence seq = assemble_sequence(inst);
        TrainSample sample;
        sample.tokens = std::move(seq.tokens);
        sample.layout = std::move(seq.layout);
        sample.choices = inst.choices;
        sample.answer_index = inst.answer_index;
        samples.push_back(std::move(sample));
    }
    return samples;
}

void cmd_gen_data(const GenDataConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);

    struct FileJob {
        std::string name;
        DatasetSpec spec;
    };
    std::vector<FileJob> jobs;

    DatasetSpec base;
    base.n_facts = cfg.n_facts;
    base.vocab_size = cfg.vocab_size;
    base.instream_distractors = cfg.instream_distractors;

    DatasetSpec train_spec = base;
    train_spec.n_instances = cfg.n_train;
    train_spec.audio_tokens_per_instance = cfg.mapping.tokens_for(cfg.train_seconds);
    train_spec.key_pool = KeyPool::Train;
    train_spec.seed = Rng::mix(cfg.seed, 100);
    jobs.push_back({"train.jsonl", train_spec});

    for (std::size_t i = 0; i < cfg.lengths_seconds.size(); ++i) {
        const double seconds = cfg.lengths_seconds[i];
        const std::string label = seconds_label(seconds) + "s";

        DatasetSpec val_spec = base;
        val_spec.n_instances = cfg.n_val;
        val_spec.audio_tokens_per_instance = cfg.mapping.tokens_for(seconds);
        val_spec.key_pool = KeyPool::Train;
        val_spec.seed = Rng::mix(cfg.seed, 200 + i);
        jobs.push_back({"val_" + label + ".jsonl", val_spec});

        DatasetSpec test_spec = base;
        test_spec.n_instances = cfg.n_test;
        test_spec.audio_tokens_per_instance = cfg.mapping.tokens_for(seconds);
        test_spec.key_pool = KeyPool::Test;
        test_spec.seed = Rng::mix(cfg.seed, 300 + i);
        jobs.push_back({"test_" + label + ".jsonl", test_spec});
    }

    for (const FileJob& job : jobs) {
        require_writable(fs::path(cfg.out_dir) / job.name, cfg.force);
    }
    for (const FileJob& job : jobs) {
        const std::vector<TaskInstance> instances = generate(job.spec);
        export_jsonl(instances, fs::path(cfg.out_dir) / job.name);
    }

    nlohmann::ordered_json meta;
    meta["subcommand"] = "gen-data";
    meta["seed"] = cfg.seed;
    meta["train_seconds"] = cfg.train_seconds;
    meta["lengths_seconds"] = cfg.lengths_seconds;
    meta["tokens_per_chunk"] = cfg.mapping.tokens_per_chunk;
    meta["chunk_seconds"] = cfg.mapping.chunk_seconds;
    meta["n_train"] = cfg.n_train;
    meta["n_val"] = cfg.n_val;
    meta["n_test"] = cfg.n_test;
    meta["vocab_size"] = cfg.vocab_size;
    meta["n_facts"] = cfg.n_facts;
    meta["instream_distractors"] = cfg.instream_distractors;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const FileJob& job : jobs) {
        files.push_back(job.name);
    }
    meta["files"] = std::move(files);
    meta["wall_time_seconds"] = elapsed_seconds(t0);
    write_run_meta(fs::path(cfg.out_dir) / "gen_meta.json", meta);
}

namespace {

nlohmann::ordered_json train_effective_config(const TrainCmdConfig& cfg) {
    nlohmann::ordered_json j;
    j["subcommand"] = "train";
    j["data"] = cfg.data_path;
    j["method"] = cfg.method;
    j["strategy"] = cfg.strategy;
    j["factors"] = cfg.factor_override;
    j["vocab_size"] = cfg.model.vocab_size;
    j["embed_dim"] = cfg.model.embed_dim;
    j["n_layers"] = cfg.model.n_layers;
    j["mlp_hidden"] = cfg.model.mlp_hidden;
    j["rope_base"] = cfg.model.rope_base;
    j["init_scale"] = cfg.model.init_scale;
    j["model_seed"] = cfg.model.seed;
    j["learning_rate"] = cfg.train.learning_rate;
    j["batch_size"] = cfg.train.batch_size;
    j["grad_clip_norm"] = cfg.train.grad_clip_norm;
    j["epochs"] = cfg.train.epochs;
    j["weight_decay"] = cfg.train.weight_decay;
    j["train_seed"] = cfg.train.seed;
    j["vlat_base_context_tokens"] = cfg.train.vlat_base_context_tokens;
    j["vlat_cutoff"] = cfg.train.vlat_cutoff;
    j["vlat_temperature"] = cfg.train.vlat_temperature;
    return j;
}

void write_trace_csv(const fs::path& path, const std::vector<EpochStats>& trace,
                     const nlohmann::ordered_json& effective) {
    CsvWriter csv(path, effective);
    csv.header({"epoch", "mean_loss"});
    for (const EpochStats& stats : trace) {
        csv.row({std::to_string(stats.epoch), format_float(stats.mean_loss)});
    }
    csv.close();
}

}  // namespace

void cmd_train(const TrainCmdConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Method method = method_from_name(cfg.method);
    VlatStrategy strategy = VlatStrategy::from_name(cfg.strategy);
    if (!cfg.factor_override.empty()) {
        if (strategy.kind == VlatKind::None) {
            throw std::invalid_argument("--factors requires a non-none strategy");
        }
        strategy.factors = cfg.factor_override;
    }
    if (method == Method::WholeYarn && strategy.kind != VlatKind::None) {
        throw std::invalid_argument(
            "whole-yarn is refused under virtual-window training: it diverges quickly");
    }
    if (method != Method::Vanilla) {
        throw std::invalid_argument(
            "training uses vanilla positions (optionally with --strategy); got method " +
            cfg.method);
    }

    const fs::path out_path(cfg.out_path);
    const fs::path trace_path = out_path.string() + ".trace.csv";
    require_writable(out_path, cfg.force);
    require_writable(trace_path, cfg.force);

    const std::vector<TaskInstance> instances = import_jsonl(cfg.data_path);
    if (instances.empty()) {
        throw std::runtime_error("cmd_train: dataset is empty: " + cfg.data_path);
    }
    const std::vector<TrainSample> samples = to_train_samples(instances);

    const nlohmann::ordered_json effective = train_effective_config(cfg);
    const std::uint64_t config_hash = hash_json(effective);

    ModelParams model = init_model(cfg.model);
    TrainResult result;
    if (cfg.train.epochs == 0) {
        result.model = std::move(model);
    } else {
        try {
            result = train(std::move(model), samples, cfg.train, strategy);
        } catch (const training_diverged& e) {
            // Preserve the partial trace before propagating the failure.
            write_trace_csv(trace_path, e.trace, effective);
            throw;
        }
    }

    save_checkpoint(result.model, out_path, config_hash);
    write_trace_csv(trace_path, result.trace, effective);

    nlohmann::ordered_json meta = effective;
    meta["config_hash"] = config_hash;
    meta["n_samples"] = instances.size();
    meta["wall_time_seconds"] = elapsed_seconds(t0);
    write_run_meta(out_path.string() + ".meta.json", meta);
}

void cmd_eval(const EvalCmdConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path out_path(cfg.out_path);
    require_writable(out_path, cfg.force);
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);

    std::vector<std::string> methods = cfg.methods;
    if (std::find(methods.begin(), methods.end(), "vanilla") == methods.end()) {
        methods.insert(methods.begin(), "vanilla");
    }

    nlohmann::ordered_json effective;
    effective["subcommand"] = "eval";
    effective["checkpoint"] = cfg.checkpoint;
    effective["data_dir"] = cfg.data_dir;
    effective["methods"] = methods;
    effective["lengths_seconds"] = cfg.lengths_seconds;
    effective["anchor_seconds"] = cfg.anchor_seconds;
    effective["cutoff"] = cfg.cutoff;
    effective["temperature"] = cfg.temperature;
    effective["tokens_per_chunk"] = cfg.mapping.tokens_per_chunk;
    effective["chunk_seconds"] = cfg.mapping.chunk_seconds;
    effective["seed"] = cfg.seed;

    CsvWriter csv(out_path, effective);
    csv.header({"method", "anchor_seconds", "target_seconds", "cutoff", "temperature", "seed",
                "accuracy", "n_items"});

    for (const double length : cfg.lengths_seconds) {
        const std::string label = seconds_label(length) + "s";
        const std::vector<TaskInstance> instances =
            import_jsonl(fs::path(cfg.data_dir) / ("test_" + label + ".jsonl"));
        // Vanilla ignores the anchor; evaluate once per length.
        EvalResult vanilla_result;
        bool have_vanilla = false;
        for (const std::string& method_name_str : methods) {
            const Method method = method_from_name(method_name_str);
            const bool is_partial_pi = method == Method::PartialPI;
            const int cutoff = method == Method::Vanilla || is_partial_pi ? 0 : cfg.cutoff;
            const double temperature =
                method == Method::Vanilla || is_partial_pi ? 1.0 : cfg.temperature;
            for (const double anchor : cfg.anchor_seconds) {
                EvalResult result;
                if (method == Method::Vanilla) {
                    if (!have_vanilla) {
                        vanilla_result = evaluate_accuracy(ckpt.model, instances, method, 0,
                                                           cutoff, temperature);
                        have_vanilla = true;
                    }
                    result = vanilla_result;
                } else {
                    result =
                        evaluate_accuracy(ckpt.model, instances, method,
                                          cfg.mapping.tokens_for(anchor), cutoff, temperature);
                }
                csv.row({method_name_str, format_float(anchor), format_float(length),
                         std::to_string(cutoff), format_float(temperature),
                         std::to_string(cfg.seed), format_float(result.accuracy),
                         std::to_string(result.n_items)});
            }
        }
    }
    csv.close();

    nlohmann::ordered_json meta = effective;
    meta["wall_time_seconds"] = elapsed_seconds(t0);
    write_run_meta(out_path.string() + ".meta.json", meta);
}

std::vector<double> default_sweep_temperatures() {
    std::vector<double> temps;
    for (int i = 0; i <= 11; ++i) {
        temps.push_back(static_cast<double>(5 + i) / 10.0);
    }
    return temps;
}

void cmd_sweep(const SweepCmdConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path out_path(cfg.out_path);
    require_writable(out_path, cfg.force);
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    const std::vector<double> temps =
        cfg.temperatures.empty() ? default_sweep_temperatures() : cfg.temperatures;

    const int num_pairs = ckpt.model.config.embed_dim / 2;
    for (int cutoff : cfg.cutoffs) {
        if (cutoff < 0 || cutoff > num_pairs) {
            throw std::invalid_argument("cmd_sweep: cutoff " + std::to_string(cutoff) +
                                        " outside [0, d/2]");
        }
    }
    for (double t : temps) {
        if (!(t > 0.0)) {
            throw std::invalid_argument("cmd_sweep: temperatures must be positive");
        }
    }

    const std::vector<TaskInstance> instances = import_jsonl(cfg.data_path);
    const int anchor_tokens = cfg.mapping.tokens_for(cfg.anchor_seconds);
    const double target_seconds =
        instances.empty() ? 0.0
                          : static_cast<double>(instances.front().audio_tokens.size()) /
                                cfg.mapping.tokens_per_chunk * cfg.mapping.chunk_seconds;

    struct Cell {
        int cutoff;
        double temperature;
        EvalResult result;
    };
    std::vector<Cell> cells;
    for (int cutoff : cfg.cutoffs) {
        for (double t : temps) {
            cells.push_back({cutoff, t,
                             evaluate_accuracy(ckpt.model, instances, Method::PartialYarn2,
                                               anchor_tokens, cutoff, t)});
        }
    }
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        if (a.cutoff != b.cutoff) return a.cutoff < b.cutoff;
        return a.temperature < b.temperature;
    });

    nlohmann::ordered_json effective;
    effective["subcommand"] = "sweep";
    effective["checkpoint"] = cfg.checkpoint;
    effective["data"] = cfg.data_path;
    effective["cutoffs"] = cfg.cutoffs;
    effective["temperatures"] = temps;
    effective["anchor_seconds"] = cfg.anchor_seconds;
    effective["tokens_per_chunk"] = cfg.mapping.tokens_per_chunk;
    effective["chunk_seconds"] = cfg.mapping.chunk_seconds;
    effective["seed"] = cfg.seed;

    CsvWriter csv(out_path, effective);
    csv.header({"method", "anchor_seconds", "target_seconds", "cutoff", "temperature", "seed",
                "accuracy", "n_items"});
    for (const Cell& cell : cells) {
        csv.row({method_name(Method::PartialYarn2), format_float(cfg.anchor_seconds),
                 format_float(target_seconds), std::to_string(cell.cutoff),
                 format_float(cell.temperature), std::to_string(cfg.seed),
                 format_float(cell.result.accuracy), std::to_string(cell.result.n_items)});
    }
    csv.close();

    nlohmann::ordered_json meta = effective;
    meta["n_cells"] = cells.size();
    meta["wall_time_seconds"] = elapsed_seconds(t0);
    write_run_meta(out_path.string() + ".meta.json", meta);
}

void cmd_positions(const PositionsCmdConfig& cfg) {
    const fs::path out_path(cfg.out_path);
    require_writable(out_path, cfg.force);
    const SequenceLayout layout = parse_layout_spec(cfg.layout_spec);
    const FrequencyTable table = build_frequencies(cfg.head_dim, cfg.rope_base);
    if (cfg.pair < 0 || cfg.pair >= table.num_pairs()) {
        throw std::invalid_argument("cmd_positions: pair index outside [0, d/2)");
    }
    const Method method = method_from_name(cfg.method);
    const PositionPlan plan = plan_for_method(method, layout, table, cfg.anchor_tokens,
                                              cfg.cutoff, cfg.temperature);

    nlohmann::ordered_json effective;
    effective["subcommand"] = "positions";
    effective["method"] = cfg.method;
    effective["layout"] = cfg.layout_spec;
    effective["anchor_tokens"] = cfg.anchor_tokens;
    effective["cutoff"] = cfg.cutoff;
    effective["temperature"] = cfg.temperature;
    effective["pair"] = cfg.pair;
    effective["head_dim"] = cfg.head_dim;
    effective["rope_base"] = cfg.rope_base;

    CsvWriter csv(out_path, effective);
    csv.header({"token_index", "interp_position", "extrap_position", "magnitude", "angle"});
    for (std::size_t j = 0; j < plan.size(); ++j) {
        const TokenRotation rot = effective_angles(plan, table, j);
        csv.row({std::to_string(j), format_float(plan.interp_positions[j]),
                 format_float(plan.extrap_positions[j]), format_float(plan.magnitudes[j]),
                 format_float(rot.angles[static_cast<std::size_t>(cfg.pair)])});
    }
    csv.close();
}

}  // namespace audioext
