#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "audioext/layout.hpp"
#include "audioext/rope.hpp"

namespace audioext {

// Context-extension methods. PartialPI is PartialYarn2 at the default
// hyperparameters (cutoff 0, temperature 1) and is kept as its own enum
// value so the reduction is testable.
enum class Method {
    Vanilla,
    WholePI,
    WholeYarn,
    PartialPI,
    PartialYarn2,
    PartialYarn3,
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct ExtensionConfig {
    Method method = Method::Vanilla;
    // L_audio: the window the audio region is mapped into. Either the model's
    // original audio context or the longer observed one, in tokens.
    int anchor_audio_tokens = 1;
    // L'_audio: audio tokens actually present in the sequence.
    int target_audio_tokens = 1;
    // c: pairs with index >= cutoff_pair (lower frequencies) are interpolated,
    // pairs below it are extrapolated. 0 interpolates every pair.
    int cutoff_pair = 0;
    // t: attention temperature, folded into magnitudes as 1/sqrt(t) per
    // audio endpoint.
    double temperature = 1.0;
};

// Extension factor s = L'_audio / L_audio.
double extension_factor(const ExtensionConfig& cfg);

// Throws invalid_argument on out-of-range fields. num_pairs bounds the
// cutoff; pass table.num_pairs().
void validate_config(const ExtensionConfig& cfg, int num_pairs);

// Ramp thresholds for the three-group frequency partition, in numbers of
// full rotations over the original window. Pairs rotating fewer than alpha
// times are fully interpolated, pairs rotating more than beta times are
// fully extrapolated, dimensions in between mix.
struct YarnRampParams {
    double alpha = 1.0;
    double beta = 32.0;

    double logit_scale(double s) const;  // 0.1 * ln(s) + 1
};

// Two-group partition of pair indices at a cutoff.
struct GroupSplit {
    int cutoff_pair = 0;
    // Number of pairs in the table the split was built against; 0 when the
    // plan was built without a frequency table (whole/vanilla plans).
    int num_pairs = 0;

    bool interpolated(int pair) const { return pair >= cutoff_pair; }
};

GroupSplit group_split(const FrequencyTable& table, int cutoff_pair);

// The universal output of every extension method: two real-valued position
// streams (one per frequency group), per-token magnitudes, and, for
// three-group methods, per-pair mixing weights.
struct PositionPlan {
    std::vector<double> interp_positions;
    std::vector<double> extrap_positions;
    std::vector<double> magnitudes;
    // Per-pair interpolation weight in [0,1]; empty for two-group methods.
    // Effective position of pair i is (1-w)*extrap + w*interp.
    std::vector<double> ramp_weights;
    GroupSplit split;

    std::size_t size() const { return interp_positions.size(); }
    bool has_ramp() const { return !ramp_weights.empty(); }

    double effective_position(std::size_t token, int pair) const;
};

// Angles (one per pair) and magnitude for a single token.
struct TokenRotation {
    std::vector<double> angles;
    double magnitude = 1.0;
};

// num_tokens points evenly spaced over [p, p + window_len - 1]. Endpoints
// are exact; num_tokens == window_len reproduces the integers, and
// num_tokens == 1 yields [p].
std::vector<double> stretch_window(int p, int window_len, int num_tokens);

// Integer positions 0..n-1, unit magnitudes.
PositionPlan plan_vanilla(int total_tokens);

// Every token j at position j/s in both groups.
PositionPlan plan_whole_pi(const ExtensionConfig& cfg, int total_tokens);

// Whole-context three-group plan: interp stream j/s, extrap stream j,
// per-pair ramp weights, uniform magnitude sqrt(logit_scale(s)) so that
// q.k logits scale by logit_scale(s).
PositionPlan plan_whole_yarn(const ExtensionConfig& cfg, const YarnRampParams& params,
                             int total_tokens, const FrequencyTable& table);

// Audio-only plan: the audio run is stretched into the anchor window on the
// interpolated stream while text positions are unaltered; the extrapolated
// stream keeps unit spacing over the whole sequence. Magnitudes are
// 1/sqrt(t) on audio tokens, 1 elsewhere. PartialYarn3 adds ramp weights
// computed against the anchor window.
PositionPlan plan_partial(const ExtensionConfig& cfg, const SequenceLayout& layout,
                          const FrequencyTable& table);

// Training-time positional augmentation: a partial plan whose anchor window
// is the virtual window length, stretching or compressing the audio run's
// positions to fill it.
PositionPlan plan_vlat(int p, int data_tokens, int virtual_window_tokens, int cutoff_pair,
                       double temperature, const SequenceLayout& layout,
                       const FrequencyTable& table);

// Materializes the plan for one token: angle of pair i is freqs[i] times the
// pair's effective position.
TokenRotation effective_angles(const PositionPlan& plan, const FrequencyTable& table,
                               std::size_t token_index);

}  // namespace audioext
