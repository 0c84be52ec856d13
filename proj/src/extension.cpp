#include "audioext/extension.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace audioext {

std::string method_name(Method m) {
    switch (m) {
        case Method::Vanilla: return "vanilla";
        case Method::WholePI: return "whole-pi";
        case Method::WholeYarn: return "whole-yarn";
        case Method::PartialPI: return "partial-pi";
        case Method::PartialYarn2: return "partial-yarn";
        case Method::PartialYarn3: return "partial-yarn-3g";
    }
    throw std::invalid_argument("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "vanilla") return Method::Vanilla;
    if (name == "whole-pi") return Method::WholePI;
    if (name == "whole-yarn") return Method::WholeYarn;
    if (name == "partial-pi") return Method::PartialPI;
    if (name == "partial-yarn") return Method::PartialYarn2;
    if (name == "partial-yarn-3g") return Method::PartialYarn3;
    throw std::invalid_argument("unknown method name: " + name);
}

double extension_factor(const ExtensionConfig& cfg) {
    if (cfg.anchor_audio_tokens < 1 || cfg.target_audio_tokens < 1) {
        throw std::invalid_argument("extension_factor: window lengths must be >= 1");
    }
    return static_cast<double>(cfg.target_audio_tokens) /
           static_cast<double>(cfg.anchor_audio_tokens);
}

void validate_config(const ExtensionConfig& cfg, int num_pairs) {
    if (cfg.anchor_audio_tokens < 1) {
        throw std::invalid_argument("ExtensionConfig: anchor_audio_tokens must be >= 1");
    }
    if (cfg.target_audio_tokens < 1) {
        throw std::invalid_argument("ExtensionConfig: target_audio_tokens must be >= 1");
    }
    if (cfg.cutoff_pair < 0 || cfg.cutoff_pair > num_pairs) {
        throw std::invalid_argument("ExtensionConfig: cutoff_pair out of [0, d/2]");
    }
    if (!(cfg.temperature > 0.0)) {
        throw std::invalid_argument("ExtensionConfig: temperature must be positive");
    }
    if (cfg.method == Method::PartialPI &&
        (cfg.cutoff_pair != 0 || cfg.temperature != 1.0)) {
        throw std::invalid_argument(
            "ExtensionConfig: partial-pi requires cutoff 0 and temperature 1");
    }
}

double YarnRampParams::logit_scale(double s) const {
    return 0.1 * std::log(s) + 1.0;
}

GroupSplit group_split(const FrequencyTable& table, int cutoff_pair) {
    if (cutoff_pair < 0 || cutoff_pair > table.num_pairs()) {
        throw std::invalid_argument("group_split: cutoff_pair out of [0, d/2]");
    }
    return GroupSplit{cutoff_pair, table.num_pairs()};
}

double PositionPlan::effective_position(std::size_t token, int pair) const {
    if (token >= size()) {
        throw std::invalid_argument("effective_position: token index out of range");
    }
    if (has_ramp()) {
        if (pair < 0 || pair >= static_cast<int>(ramp_weights.size())) {
            throw std::invalid_argument("effective_position: pair index out of range");
        }
        const double w = ramp_weights[static_cast<std::size_t>(pair)];
        return (1.0 - w) * extrap_positions[token] + w * interp_positions[token];
    }
    return split.interpolated(pair) ? interp_positions[token] : extrap_positions[token];
}

std::vector<double> stretch_window(int p, int window_len, int num_tokens) {
    if (window_len < 1) {
        throw std::invalid_argument("stretch_window: window_len must be >= 1");
    }
    if (num_tokens < 1) {
        throw std::invalid_argument("stretch_window: num_tokens must be >= 1");
    }
    std::vector<double> out(static_cast<std::size_t>(num_tokens));
    if (num_tokens == 1) {
        out[0] = static_cast<double>(p);
        return out;
    }
    // j*(window_len-1) is an exact integer, so the endpoints (and the whole
    // sequence when num_tokens == window_len) come out exact.
    const double denom = static_cast<double>(num_tokens - 1);
    for (int j = 0; j < num_tokens; ++j) {
        out[static_cast<std::size_t>(j)] =
            static_cast<double>(p) +
            static_cast<double>(static_cast<long long>(j) * (window_len - 1)) / denom;
    }
    return out;
}

PositionPlan plan_vanilla(int total_tokens) {
    if (total_tokens < 0) {
        throw std::invalid_argument("plan_vanilla: total_tokens must be >= 0");
    }
    PositionPlan plan;
    const auto n = static_cast<std::size_t>(total_tokens);
    plan.interp_positions.resize(n);
    std::iota(plan.interp_positions.begin(), plan.interp_positions.end(), 0.0);
    plan.extrap_positions = plan.interp_positions;
    plan.magnitudes.assign(n, 1.0);
    plan.split = GroupSplit{0, 0};
    return plan;
}

PositionPlan plan_whole_pi(const ExtensionConfig& cfg, int total_tokens) {
    if (cfg.method != Method::WholePI) {
        throw std::invalid_argument("plan_whole_pi: config method must be whole-pi");
    }
    const double s = extension_factor(cfg);
    PositionPlan plan;
    const auto n = static_cast<std::size_t>(std::max(total_tokens, 0));
    plan.interp_positions.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        plan.interp_positions[j] = static_cast<double>(j) / s;
    }
    plan.extrap_positions = plan.interp_positions;
    plan.magnitudes.assign(n, 1.0);
    plan.split = GroupSplit{0, 0};
    return plan;
}

namespace {

// Interpolation weight of one pair: 1 below alpha rotations over the
// original window, 0 above beta, linear in between.
double ramp_weight(double freq, double original_window, const YarnRampParams& params) {
    if (!(params.alpha < params.beta)) {
        throw std::invalid_argument("YarnRampParams: alpha must be < beta");
    }
    const double rotations = original_window * freq / (2.0 * std::numbers::pi);
    const double gamma =
        std::clamp((rotations - params.alpha) / (params.beta - params.alpha), 0.0, 1.0);
    return 1.0 - gamma;
}

std::vector<double> ramp_weights_for(const FrequencyTable& table, double original_window,
                                     const YarnRampParams& params) {
    std::vector<double> weights(table.freqs.size());
    for (std::size_t i = 0; i < table.freqs.size(); ++i) {
        weights[i] = ramp_weight(table.freqs[i], original_window, params);
    }
    return weights;
}

}  // namespace

PositionPlan plan_whole_yarn(const ExtensionConfig& cfg, const YarnRampParams& params,
                             int total_tokens, const FrequencyTable& table) {
    if (cfg.method != Method::WholeYarn) {
        throw std::invalid_argument("plan_whole_yarn: config method must be whole-yarn");
    }
    const double s = extension_factor(cfg);
    PositionPlan plan;
    const auto n = static_cast<std::size_t>(std::max(total_tokens, 0));
    plan.interp_positions.resize(n);
    plan.extrap_positions.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        plan.interp_positions[j] = static_cast<double>(j) / s;
        plan.extrap_positions[j] = static_cast<double>(j);
    }
    const double scale = params.logit_scale(s);
    if (!(scale > 0.0)) {
        throw std::invalid_argument("plan_whole_yarn: logit scale must be positive");
    }
    // Folded symmetrically: sqrt per endpoint, so logits scale by
    // logit_scale(s).
    plan.magnitudes.assign(n, std::sqrt(scale));
    // The window the model was trained on, implied by the current sequence:
    // shrinking the audio region back to the anchor recovers it.
    const double original_window = std::max(
        1.0, static_cast<double>(total_tokens) -
                 static_cast<double>(cfg.target_audio_tokens - cfg.anchor_audio_tokens));
    plan.ramp_weights = ramp_weights_for(table, original_window, params);
    plan.split = GroupSplit{0, table.num_pairs()};
    return plan;
}

PositionPlan plan_partial(const ExtensionConfig& cfg, const SequenceLayout& layout,
                          const FrequencyTable& table) {
    if (cfg.method != Method::PartialPI && cfg.method != Method::PartialYarn2 &&
        cfg.method != Method::PartialYarn3) {
        throw std::invalid_argument("plan_partial: method must be a partial method");
    }
    validate_config(cfg, table.num_pairs());
    const AudioWindow window = locate_audio_window(layout);
    if (window.length != cfg.target_audio_tokens) {
        throw std::invalid_argument("plan_partial: audio run length " +
                                    std::to_string(window.length) +
                                    " does not match target_audio_tokens " +
                                    std::to_string(cfg.target_audio_tokens));
    }
    const int total = layout.total_tokens();
    const int p = window.start;
    const int anchor = cfg.anchor_audio_tokens;

    PositionPlan plan;
    plan.interp_positions.reserve(static_cast<std::size_t>(total));
    for (int j = 0; j < p; ++j) {
        plan.interp_positions.push_back(static_cast<double>(j));
    }
    const std::vector<double> audio = stretch_window(p, anchor, window.length);
    plan.interp_positions.insert(plan.interp_positions.end(), audio.begin(), audio.end());
    for (int j = p + window.length; j < total; ++j) {
        // Trailing text resumes right after the anchor window, unit steps.
        plan.interp_positions.push_back(
            static_cast<double>(p + anchor + (j - p - window.length)));
    }

    plan.extrap_positions.resize(static_cast<std::size_t>(total));
    std::iota(plan.extrap_positions.begin(), plan.extrap_positions.end(), 0.0);

    const double audio_mag = 1.0 / std::sqrt(cfg.temperature);
    plan.magnitudes.assign(static_cast<std::size_t>(total), 1.0);
    for (int j = p; j < p + window.length; ++j) {
        plan.magnitudes[static_cast<std::size_t>(j)] = audio_mag;
    }

    if (cfg.method == Method::PartialYarn3) {
        // Three-group variant: the upstream ramp against the anchor window
        // replaces the hard cutoff.
        plan.ramp_weights =
            ramp_weights_for(table, static_cast<double>(anchor), YarnRampParams{});
        plan.split = GroupSplit{0, table.num_pairs()};
    } else {
        plan.split = group_split(table, cfg.cutoff_pair);
    }
    return plan;
}

PositionPlan plan_vlat(int p, int data_tokens, int virtual_window_tokens, int cutoff_pair,
                       double temperature, const SequenceLayout& layout,
                       const FrequencyTable& table) {
    if (virtual_window_tokens < 1) {
        throw std::invalid_argument("plan_vlat: virtual_window_tokens must be >= 1");
    }
    const AudioWindow window = locate_audio_window(layout);
    if (window.start != p) {
        throw std::invalid_argument("plan_vlat: p does not match the layout's audio start");
    }
    if (window.length != data_tokens) {
        throw std::invalid_argument("plan_vlat: data_tokens does not match the audio run");
    }
    ExtensionConfig cfg;
    cfg.method = Method::PartialYarn2;
    cfg.anchor_audio_tokens = virtual_window_tokens;
    cfg.target_audio_tokens = data_tokens;
    cfg.cutoff_pair = cutoff_pair;
    cfg.temperature = temperature;
    return plan_partial(cfg, layout, table);
}

TokenRotation effective_angles(const PositionPlan& plan, const FrequencyTable& table,
                               std::size_t token_index) {
    if (token_index >= plan.size()) {
        throw std::invalid_argument("effective_angles: token index out of range");
    }
    if (plan.has_ramp() &&
        plan.ramp_weights.size() != static_cast<std::size_t>(table.num_pairs())) {
        throw std::invalid_argument("effective_angles: ramp size does not match table");
    }
    TokenRotation rot;
    rot.angles.resize(static_cast<std::size_t>(table.num_pairs()));
    for (int i = 0; i < table.num_pairs(); ++i) {
        rot.angles[static_cast<std::size_t>(i)] =
            table.freqs[static_cast<std::size_t>(i)] * plan.effective_position(token_index, i);
    }
    rot.magnitude = plan.magnitudes[token_index];
    return rot;
}

}  // namespace audioext
