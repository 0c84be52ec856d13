#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "audioext/extension.hpp"
#include "audioext/layout.hpp"

namespace audioext {

// Tiny decoder: embedding -> n_layers x (single-head attention + MLP, both
// with RMSNorm and residuals) -> choice head scoring candidate token spans
// at the last position. All math in 64-bit with manual backprop.
struct ModelConfig {
    int vocab_size = 64;
    int embed_dim = 128;
    int n_layers = 2;
    int mlp_hidden = 128;
    double rope_base = 10000.0;
    double init_scale = 0.02;
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Eigen::MatrixXd wq, wk, wv, wo;            // d x d
    Eigen::MatrixXd attn_norm_gain;            // d x 1
    Eigen::MatrixXd mlp_norm_gain;             // d x 1
    Eigen::MatrixXd w1;                        // h x d
    Eigen::MatrixXd b1;                        // h x 1
    Eigen::MatrixXd w2;                        // d x h
    Eigen::MatrixXd b2;                        // d x 1
};

struct ModelParams {
    ModelConfig config;
    Eigen::MatrixXd embedding;                 // vocab x d
    std::vector<LayerParams> layers;
    Eigen::MatrixXd final_norm_gain;           // d x 1
    Eigen::MatrixXd choice_head;               // vocab x d
};

ModelParams init_model(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& model);

// Named references to every parameter tensor, in a fixed order. The same
// order drives the optimizer, serialization and finite-difference checks.
std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_refs(ModelParams& model);

using ChoiceSpans = std::array<std::vector<int>, 4>;

// Logits over the four choices for one sequence under one position plan.
Eigen::Vector4d forward(const ModelParams& model, std::span<const int> tokens,
                        const PositionPlan& plan, const ChoiceSpans& choices);

int predict(const ModelParams& model, std::span<const int> tokens, const PositionPlan& plan,
            const ChoiceSpans& choices);

struct TrainSample {
    std::vector<int> tokens;
    SequenceLayout layout;
    ChoiceSpans choices;
    int answer_index = 0;
};

struct GradResult {
    double loss = 0.0;
    ModelParams grads;
};

// Mean cross-entropy over the batch and its parameter gradients. Plans are
// taken per sample.
GradResult loss_and_grads(const ModelParams& model,
                          std::span<const std::pair<const TrainSample*, PositionPlan>> batch);

// Thrown when a forward/backward pass produces non-finite values.
class numeric_error : public std::runtime_error {
  public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
};

// Divergence aborts training but keeps the loss trace up to that point.
class training_diverged : public numeric_error {
  public:
    training_diverged(const std::string& msg, std::vector<EpochStats> partial_trace)
        : numeric_error(msg), trace(std::move(partial_trace)) {}
    std::vector<EpochStats> trace;
};

// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradients(ModelParams& grads, double max_norm);

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 8;
    double grad_clip_norm = 1.0;
    int epochs = 1;
    double weight_decay = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    // Virtual-window base in tokens; 0 means "each sample's own audio
    // length", so factor 1 reproduces vanilla positions exactly.
    int vlat_base_context_tokens = 0;
    int vlat_cutoff = 0;
    double vlat_temperature = 1.0;
};

enum class VlatKind { Default, Dense100, Dense1000, LimitedRange, FixedHigh, None };

// Virtual-factor sampling strategy: a discrete factor set drawn uniformly.
struct VlatStrategy {
    VlatKind kind = VlatKind::None;
    std::vector<double> factors;

    static VlatStrategy none();
    static VlatStrategy defaults();       // {1, 5, 10, 15, 20, 25}
    static VlatStrategy dense100();       // 100 evenly spaced points in [1, 25]
    static VlatStrategy dense1000();      // 1000 evenly spaced points in [1, 25]
    static VlatStrategy limited_range();  // {1, 5, 10}
    static VlatStrategy fixed_high();     // always 20
    static VlatStrategy from_name(const std::string& name);
};

class Rng;
double sample_virtual_factor(const VlatStrategy& strategy, Rng& rng);

struct TrainResult {
    ModelParams model;
    std::vector<EpochStats> trace;
};

// AdamW steps over shuffled batches; with a non-None strategy every sample
// gets a fresh virtual factor each epoch and a matching stretched plan,
// otherwise vanilla integer positions. Deterministic per cfg.seed.
TrainResult train(ModelParams model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg, const VlatStrategy& strategy);

// Flat binary checkpoint: magic + JSON header (shapes, seed, config hash) +
// row-major 64-bit weights.
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path,
                     std::uint64_t config_hash);
struct Checkpoint {
    ModelParams model;
    std::uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace audioext
