#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audioext/extension.hpp"
#include "audioext/synthtask.hpp"
#include "audioext/toymodel.hpp"

namespace audioext {

// Desk-scale default mapping: 8 tokens per 30s chunk, so a 10-minute stream
// is 160 tokens. The SALMONN (88) and Qwen2-Audio (750) rates stay
// selectable for layout-faithful runs.
struct TokenMapping {
    double chunk_seconds = 30.0;
    int tokens_per_chunk = 8;

    int tokens_for(double seconds) const;
};

struct GenDataConfig {
    std::string out_dir = "data";
    std::uint64_t seed = 0;
    TokenMapping mapping;
    double train_seconds = 150.0;
    std::vector<double> lengths_seconds = {60.0, 120.0, 300.0, 600.0};
    int n_train = 512;
    int n_val = 64;
    int n_test = 192;
    int vocab_size = 64;
    int n_facts = 4;
    int instream_distractors = 1;
    bool force = false;
};

void cmd_gen_data(const GenDataConfig& cfg);

struct TrainCmdConfig {
    std::string data_path;
    std::string out_path = "model.ckpt";
    ModelConfig model;
    TrainConfig train;
    std::string method = "vanilla";
    std::string strategy = "none";
    // Overrides the strategy's factor set (e.g. a forced single factor).
    std::vector<double> factor_override;
    bool force = false;
};

void cmd_train(const TrainCmdConfig& cfg);

struct EvalCmdConfig {
    std::string checkpoint;
    std::string data_dir = "data";
    std::string out_path = "eval.csv";
    std::vector<std::string> methods = {"vanilla", "whole-pi", "whole-yarn", "partial-pi",
                                        "partial-yarn"};
    std::vector<double> lengths_seconds = {60.0, 120.0, 300.0, 600.0};
    // Original and observed audio contexts.
    std::vector<double> anchor_seconds = {30.0, 150.0};
    int cutoff = 0;
    double temperature = 1.0;
    TokenMapping mapping;
    std::uint64_t seed = 0;
    bool force = false;
};

void cmd_eval(const EvalCmdConfig& cfg);

struct SweepCmdConfig {
    std::string checkpoint;
    std::string data_path;
    std::string out_path = "sweep.csv";
    std::vector<int> cutoffs = {56, 48, 40, 32, 24, 16, 8};
    std::vector<double> temperatures;  // default: 0.5..1.6 step 0.1
    double anchor_seconds = 150.0;
    TokenMapping mapping;
    std::uint64_t seed = 0;
    bool force = false;
};

std::vector<double> default_sweep_temperatures();

void cmd_sweep(const SweepCmdConfig& cfg);

struct PositionsCmdConfig {
    std::string method = "vanilla";
    std::string layout_spec = "text:4,audio:8,text:2";
    // 0 means "the layout's audio length" (extension factor 1).
    int anchor_tokens = 0;
    int cutoff = 0;
    double temperature = 1.0;
    int pair = 0;
    int head_dim = 128;
    double rope_base = 10000.0;
    std::string out_path = "positions.csv";
    bool force = false;
};

void cmd_positions(const PositionsCmdConfig& cfg);

// Shared pieces, also used by the acceptance suite.
SequenceLayout parse_layout_spec(const std::string& spec);

PositionPlan plan_for_method(Method method, const SequenceLayout& layout,
                             const FrequencyTable& table, int anchor_tokens, int cutoff,
                             double temperature);

struct EvalResult {
    double accuracy = 0.0;
    int n_items = 0;
};

EvalResult evaluate_accuracy(const ModelParams& model, std::span<const TaskInstance> instances,
                             Method method, int anchor_tokens, int cutoff, double temperature);

std::vector<TrainSample> to_train_samples(std::span<const TaskInstance> instances);

}  // namespace audioext
