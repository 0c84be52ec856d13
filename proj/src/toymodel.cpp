#include "audioext/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "audioext/attention.hpp"
#include "audioext/rng.hpp"

namespace audioext {

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_config(const ModelConfig& c) {
    if (c.vocab_size < 1 || c.embed_dim < 2 || c.embed_dim % 2 != 0 || c.n_layers < 1 ||
        c.n_layers > 2 || c.mlp_hidden < 1) {
        throw std::invalid_argument("ModelConfig: invalid sizes");
    }
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) +
           x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = g .* x / rms(x) per row; returns per-row rms for the backward pass.
Eigen::MatrixXd rmsnorm_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gain,
                             Eigen::VectorXd& rms_out) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd y(n, d);
    rms_out.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const double mean_sq = x.row(t).squaredNorm() / static_cast<double>(d);
        const double rms = std::sqrt(mean_sq + kNormEps);
        rms_out(t) = rms;
        for (Eigen::Index j = 0; j < d; ++j) {
            y(t, j) = gain(j, 0) * x(t, j) / rms;
        }
    }
    return y;
}

// Accumulates dgain and returns dx.
Eigen::MatrixXd rmsnorm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& gain, const Eigen::VectorXd& rms,
                                 Eigen::MatrixXd& dgain) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd dx(n, d);
    for (Eigen::Index t = 0; t < n; ++t) {
        const double r = rms(t);
        double dot = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            dot += dy(t, j) * gain(j, 0) * x(t, j);
            dgain(j, 0) += dy(t, j) * x(t, j) / r;
        }
        const double scale = dot / (static_cast<double>(d) * r * r * r);
        for (Eigen::Index j = 0; j < d; ++j) {
            dx(t, j) = gain(j, 0) * dy(t, j) / r - x(t, j) * scale;
        }
    }
    return dx;
}

// Inverse of apply_rotations up to the magnitude (which multiplies both
// ways): rotate by -angle, scale by the same magnitude.
Eigen::MatrixXd apply_rotations_transposed(const Eigen::MatrixXd& x, const RotationTable& rot) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const double mag = rot.magnitudes(t);
        for (Eigen::Index i = 0; i < rot.pairs(); ++i) {
            const double c = rot.cosines(t, i);
            const double s = rot.sines(t, i);
            const double a = x(t, 2 * i);
            const double b = x(t, 2 * i + 1);
            out(t, 2 * i) = mag * (a * c + b * s);
            out(t, 2 * i + 1) = mag * (-a * s + b * c);
        }
    }
    return out;
}

struct LayerCache {
    Eigen::MatrixXd x_in;
    Eigen::MatrixXd a;
    Eigen::VectorXd rms_attn;
    Eigen::MatrixXd q, k, v, q_rot, k_rot;
    Eigen::MatrixXd weights;  // post-softmax attention
    Eigen::MatrixXd attn_out;
    Eigen::MatrixXd x_mid;
    Eigen::MatrixXd b;
    Eigen::VectorXd rms_mlp;
    Eigen::MatrixXd pre;
    Eigen::MatrixXd h;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Eigen::MatrixXd x_final;
    Eigen::VectorXd read_state;  // final-normed hidden at the reading row
    double read_rms = 0.0;
    Eigen::Vector4d logits;
};

void check_tokens(const ModelParams& model, std::span<const int> tokens,
                  const PositionPlan& plan, const ChoiceSpans& choices) {
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (plan.size() != tokens.size()) {
        throw std::invalid_argument("forward: plan length does not match token count");
    }
    for (int tok : tokens) {
        if (tok < 0 || tok >= model.config.vocab_size) {
            throw std::invalid_argument("forward: token id out of vocabulary");
        }
    }
    for (const std::vector<int>& span : choices) {
        if (span.empty()) {
            throw std::invalid_argument("forward: empty choice span");
        }
        for (int tok : span) {
            if (tok < 0 || tok >= model.config.vocab_size) {
                throw std::invalid_argument("forward: choice token out of vocabulary");
            }
        }
    }
}

ForwardCache run_forward(const ModelParams& model, std::span<const int> tokens,
                         const RotationTable& rot, const ChoiceSpans& choices) {
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const int d = model.config.embed_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    ForwardCache cache;
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index t = 0; t < n; ++t) {
        x.row(t) = model.embedding.row(tokens[static_cast<std::size_t>(t)]);
    }

    cache.layers.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LayerParams& layer = model.layers[l];
        LayerCache& lc = cache.layers[l];
        lc.x_in = x;
        lc.a = rmsnorm_rows(lc.x_in, layer.attn_norm_gain, lc.rms_attn);
        lc.q = lc.a * layer.wq.transpose();
        lc.k = lc.a * layer.wk.transpose();
        lc.v = lc.a * layer.wv.transpose();
        lc.q_rot = apply_rotations(lc.q, rot);
        lc.k_rot = apply_rotations(lc.k, rot);
        const Eigen::MatrixXd logits = lc.q_rot * lc.k_rot.transpose() * inv_sqrt_d;
        lc.weights = softmax_rows(logits, /*causal=*/true);
        lc.attn_out = lc.weights * lc.v;
        lc.x_mid = lc.x_in + lc.attn_out * layer.wo.transpose();
        lc.b = rmsnorm_rows(lc.x_mid, layer.mlp_norm_gain, lc.rms_mlp);
        lc.pre = lc.b * layer.w1.transpose();
        lc.pre.rowwise() += layer.b1.col(0).transpose();
        lc.h = lc.pre.unaryExpr([](double v) { return gelu(v); });
        x = lc.x_mid + lc.h * layer.w2.transpose();
        x.rowwise() += layer.b2.col(0).transpose();
    }
    cache.x_final = std::move(x);

    const Eigen::Index read = n - 1;
    const double mean_sq =
        cache.x_final.row(read).squaredNorm() / static_cast<double>(d);
    cache.read_rms = std::sqrt(mean_sq + kNormEps);
    cache.read_state.resize(d);
    for (int j = 0; j < d; ++j) {
        cache.read_state(j) =
            model.final_norm_gain(j, 0) * cache.x_final(read, j) / cache.read_rms;
    }

    for (int c = 0; c < 4; ++c) {
        const std::vector<int>& span = choices[static_cast<std::size_t>(c)];
        double acc = 0.0;
        for (int tok : span) {
            acc += model.choice_head.row(tok).dot(cache.read_state);
        }
        cache.logits(c) = acc / static_cast<double>(span.size());
    }
    return cache;
}

void accumulate_backward(const ModelParams& model, std::span<const int> tokens,
                         const RotationTable& rot, const ChoiceSpans& choices,
                         const ForwardCache& cache, const Eigen::Vector4d& dlogits,
                         ModelParams& grads) {
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const int d = model.config.embed_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const Eigen::Index read = n - 1;

    // Choice head and reading state.
    Eigen::VectorXd dread = Eigen::VectorXd::Zero(d);
    for (int c = 0; c < 4; ++c) {
        const std::vector<int>& span = choices[static_cast<std::size_t>(c)];
        const double w = dlogits(c) / static_cast<double>(span.size());
        for (int tok : span) {
            dread += w * model.choice_head.row(tok).transpose();
            grads.choice_head.row(tok) += w * cache.read_state.transpose();
        }
    }

    // Final RMSNorm at the reading row only.
    Eigen::MatrixXd dx_final = Eigen::MatrixXd::Zero(n, d);
    {
        const double r = cache.read_rms;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) {
            dot += dread(j) * model.final_norm_gain(j, 0) * cache.x_final(read, j);
            grads.final_norm_gain(j, 0) += dread(j) * cache.x_final(read, j) / r;
        }
        const double scale = dot / (static_cast<double>(d) * r * r * r);
        for (int j = 0; j < d; ++j) {
            dx_final(read, j) =
                model.final_norm_gain(j, 0) * dread(j) / r - cache.x_final(read, j) * scale;
        }
    }

    Eigen::MatrixXd dx = std::move(dx_final);
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const LayerParams& layer = model.layers[li];
        const LayerCache& lc = cache.layers[li];
        LayerParams& g = grads.layers[li];

        // MLP block.
        const Eigen::MatrixXd& dm = dx;
        Eigen::MatrixXd dh = dm * layer.w2;
        g.w2 += dm.transpose() * lc.h;
        g.b2.col(0) += dm.colwise().sum().transpose();
        Eigen::MatrixXd dpre =
            dh.array() * lc.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        Eigen::MatrixXd db = dpre * layer.w1;
        g.w1 += dpre.transpose() * lc.b;
        g.b1.col(0) += dpre.colwise().sum().transpose();
        Eigen::MatrixXd dx_mid =
            dx + rmsnorm_backward(db, lc.x_mid, layer.mlp_norm_gain, lc.rms_mlp,
                                  g.mlp_norm_gain);

        // Attention block.
        const Eigen::MatrixXd& dy = dx_mid;
        Eigen::MatrixXd dattn = dy * layer.wo;
        g.wo += dy.transpose() * lc.attn_out;
        Eigen::MatrixXd dweights = dattn * lc.v.transpose();
        Eigen::MatrixXd dv = lc.weights.transpose() * dattn;

        // Softmax backward, causal rows.
        Eigen::MatrixXd dlogits_attn = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index t = 0; t < n; ++t) {
            const Eigen::Index visible = t + 1;
            double dot = 0.0;
            for (Eigen::Index c = 0; c < visible; ++c) {
                dot += dweights(t, c) * lc.weights(t, c);
            }
            for (Eigen::Index c = 0; c < visible; ++c) {
                dlogits_attn(t, c) = lc.weights(t, c) * (dweights(t, c) - dot);
            }
        }

        Eigen::MatrixXd dq_rot = dlogits_attn * lc.k_rot * inv_sqrt_d;
        Eigen::MatrixXd dk_rot = dlogits_attn.transpose() * lc.q_rot * inv_sqrt_d;
        Eigen::MatrixXd dq = apply_rotations_transposed(dq_rot, rot);
        Eigen::MatrixXd dk = apply_rotations_transposed(dk_rot, rot);

        Eigen::MatrixXd da = dq * layer.wq + dk * layer.wk + dv * layer.wv;
        g.wq += dq.transpose() * lc.a;
        g.wk += dk.transpose() * lc.a;
        g.wv += dv.transpose() * lc.a;

        dx = dx_mid + rmsnorm_backward(da, lc.x_in, layer.attn_norm_gain, lc.rms_attn,
                                       g.attn_norm_gain);
    }

    for (Eigen::Index t = 0; t < n; ++t) {
        grads.embedding.row(tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    }
}

}  // namespace

ModelParams init_model(const ModelConfig& config) {
    check_config(config);
    ModelParams model;
    model.config = config;
    Rng rng(config.seed, 0);
    const auto randn = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                m(r, c) = rng.normal(0.0, config.init_scale);
            }
        }
        return m;
    };
    const int d = config.embed_dim;
    model.embedding = randn(config.vocab_size, d);
    model.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (LayerParams& layer : model.layers) {
        layer.wq = randn(d, d);
        layer.wk = randn(d, d);
        layer.wv = randn(d, d);
        layer.wo = randn(d, d);
        layer.attn_norm_gain = Eigen::MatrixXd::Ones(d, 1);
        layer.mlp_norm_gain = Eigen::MatrixXd::Ones(d, 1);
        layer.w1 = randn(config.mlp_hidden, d);
        layer.b1 = Eigen::MatrixXd::Zero(config.mlp_hidden, 1);
        layer.w2 = randn(d, config.mlp_hidden);
        layer.b2 = Eigen::MatrixXd::Zero(d, 1);
    }
    model.final_norm_gain = Eigen::MatrixXd::Ones(d, 1);
    model.choice_head = randn(config.vocab_size, d);
    return model;
}

ModelParams zeros_like(const ModelParams& model) {
    ModelParams z;
    z.config = model.config;
    z.embedding = Eigen::MatrixXd::Zero(model.embedding.rows(), model.embedding.cols());
    z.layers.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LayerParams& src = model.layers[l];
        LayerParams& dst = z.layers[l];
        dst.wq = Eigen::MatrixXd::Zero(src.wq.rows(), src.wq.cols());
        dst.wk = Eigen::MatrixXd::Zero(src.wk.rows(), src.wk.cols());
        dst.wv = Eigen::MatrixXd::Zero(src.wv.rows(), src.wv.cols());
        dst.wo = Eigen::MatrixXd::Zero(src.wo.rows(), src.wo.cols());
        dst.attn_norm_gain =
            Eigen::MatrixXd::Zero(src.attn_norm_gain.rows(), src.attn_norm_gain.cols());
        dst.mlp_norm_gain =
            Eigen::MatrixXd::Zero(src.mlp_norm_gain.rows(), src.mlp_norm_gain.cols());
        dst.w1 = Eigen::MatrixXd::Zero(src.w1.rows(), src.w1.cols());
        dst.b1 = Eigen::MatrixXd::Zero(src.b1.rows(), src.b1.cols());
        dst.w2 = Eigen::MatrixXd::Zero(src.w2.rows(), src.w2.cols());
        dst.b2 = Eigen::MatrixXd::Zero(src.b2.rows(), src.b2.cols());
    }
    z.final_norm_gain =
        Eigen::MatrixXd::Zero(model.final_norm_gain.rows(), model.final_norm_gain.cols());
    z.choice_head = Eigen::MatrixXd::Zero(model.choice_head.rows(), model.choice_head.cols());
    return z;
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_refs(ModelParams& model) {
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> refs;
    refs.emplace_back("embedding", &model.embedding);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        LayerParams& layer = model.layers[l];
        refs.emplace_back(prefix + "wq", &layer.wq);
        refs.emplace_back(prefix + "wk", &layer.wk);
        refs.emplace_back(prefix + "wv", &layer.wv);
        refs.emplace_back(prefix + "wo", &layer.wo);
        refs.emplace_back(prefix + "attn_norm_gain", &layer.attn_norm_gain);
        refs.emplace_back(prefix + "mlp_norm_gain", &layer.mlp_norm_gain);
        refs.emplace_back(prefix + "w1", &layer.w1);
        refs.emplace_back(prefix + "b1", &layer.b1);
        refs.emplace_back(prefix + "w2", &layer.w2);
        refs.emplace_back(prefix + "b2", &layer.b2);
    }
    refs.emplace_back("final_norm_gain", &model.final_norm_gain);
    refs.emplace_back("choice_head", &model.choice_head);
    return refs;
}

Eigen::Vector4d forward(const ModelParams& model, std::span<const int> tokens,
                        const PositionPlan& plan, const ChoiceSpans& choices) {
    check_tokens(model, tokens, plan, choices);
    const FrequencyTable table = build_frequencies(model.config.embed_dim, model.config.rope_base);
    const RotationTable rot = resolve_rotations(plan, table);
    return run_forward(model, tokens, rot, choices).logits;
}

int predict(const ModelParams& model, std::span<const int> tokens, const PositionPlan& plan,
            const ChoiceSpans& choices) {
    const Eigen::Vector4d logits = forward(model, tokens, plan, choices);
    int best = 0;
    for (int c = 1; c < 4; ++c) {
        if (logits(c) > logits(best)) {
            best = c;
        }
    }
    return best;
}

GradResult loss_and_grads(const ModelParams& model,
                          std::span<const std::pair<const TrainSample*, PositionPlan>> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("loss_and_grads: empty batch");
    }
    const FrequencyTable table = build_frequencies(model.config.embed_dim, model.config.rope_base);
    GradResult result;
    result.grads = zeros_like(model);
    for (const auto& [sample, plan] : batch) {
        check_tokens(model, sample->tokens, plan, sample->choices);
        if (sample->answer_index < 0 || sample->answer_index >= 4) {
            throw std::invalid_argument("loss_and_grads: answer index out of range");
        }
        const RotationTable rot = resolve_rotations(plan, table);
        const ForwardCache cache = run_forward(model, sample->tokens, rot, sample->choices);
        if (!cache.logits.allFinite()) {
            throw numeric_error("loss_and_grads: non-finite choice logits");
        }
        const double max_logit = cache.logits.maxCoeff();
        const double lse =
            max_logit + std::log((cache.logits.array() - max_logit).exp().sum());
        result.loss += lse - cache.logits(sample->answer_index);

        Eigen::Vector4d dlogits = (cache.logits.array() - lse).exp();
        dlogits(sample->answer_index) -= 1.0;
        dlogits /= static_cast<double>(batch.size());
        accumulate_backward(model, sample->tokens, rot, sample->choices, cache, dlogits,
                            result.grads);
    }
    result.loss /= static_cast<double>(batch.size());
    if (!std::isfinite(result.loss)) {
        throw numeric_error("loss_and_grads: non-finite loss");
    }
    return result;
}

double clip_gradients(ModelParams& grads, double max_norm) {
    if (!(max_norm > 0.0)) {
        throw std::invalid_argument("clip_gradients: max_norm must be positive");
    }
    double sq = 0.0;
    for (const auto& [name, tensor] : tensor_refs(grads)) {
        sq += tensor->squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& [name, tensor] : tensor_refs(grads)) {
            *tensor *= scale;
        }
    }
    return norm;
}

VlatStrategy VlatStrategy::none() { return VlatStrategy{VlatKind::None, {}}; }

VlatStrategy VlatStrategy::defaults() {
    return VlatStrategy{VlatKind::Default, {1.0, 5.0, 10.0, 15.0, 20.0, 25.0}};
}

namespace {
std::vector<double> even_points(int count) {
    std::vector<double> points(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        points[static_cast<std::size_t>(i)] =
            1.0 + 24.0 * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return points;
}
}  // namespace

VlatStrategy VlatStrategy::dense100() {
    return VlatStrategy{VlatKind::Dense100, even_points(100)};
}

VlatStrategy VlatStrategy::dense1000() {
    return VlatStrategy{VlatKind::Dense1000, even_points(1000)};
}

VlatStrategy VlatStrategy::limited_range() {
    return VlatStrategy{VlatKind::LimitedRange, {1.0, 5.0, 10.0}};
}

VlatStrategy VlatStrategy::fixed_high() { return VlatStrategy{VlatKind::FixedHigh, {20.0}}; }

VlatStrategy VlatStrategy::from_name(const std::string& name) {
    if (name == "none") return none();
    if (name == "default") return defaults();
    if (name == "dense100") return dense100();
    if (name == "dense1000") return dense1000();
    if (name == "limited") return limited_range();
    if (name == "fixed20") return fixed_high();
    throw std::invalid_argument("unknown VLAT strategy: " + name);
}

double sample_virtual_factor(const VlatStrategy& strategy, Rng& rng) {
    if (strategy.kind == VlatKind::None) {
        throw std::logic_error("sample_virtual_factor: strategy None has no factors");
    }
    if (strategy.factors.empty()) {
        throw std::invalid_argument("sample_virtual_factor: empty factor set");
    }
    for (double f : strategy.factors) {
        if (!(f > 0.0)) {
            throw std::invalid_argument("sample_virtual_factor: factors must be positive");
        }
    }
    if (strategy.factors.size() == 1) {
        return strategy.factors.front();
    }
    const int idx = rng.uniform_int(0, static_cast<int>(strategy.factors.size()) - 1);
    return strategy.factors[static_cast<std::size_t>(idx)];
}

namespace {

struct AdamState {
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;
    long step = 0;
};

void adamw_step(ModelParams& model, ModelParams& grads, AdamState& state,
                const TrainConfig& cfg) {
    auto params = tensor_refs(model);
    auto gradients = tensor_refs(grads);
    if (state.m.empty()) {
        for (const auto& [name, tensor] : params) {
            state.m.emplace_back(Eigen::MatrixXd::Zero(tensor->rows(), tensor->cols()));
            state.v.emplace_back(Eigen::MatrixXd::Zero(tensor->rows(), tensor->cols()));
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Eigen::MatrixXd& p = *params[i].second;
        const Eigen::MatrixXd& g = *gradients[i].second;
        Eigen::MatrixXd& m = state.m[i];
        Eigen::MatrixXd& v = state.v[i];
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
        v = (cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * g.array().square()).matrix();
        const Eigen::ArrayXXd m_hat = m.array() / bc1;
        const Eigen::ArrayXXd v_hat = v.array() / bc2;
        p.array() -= cfg.learning_rate *
                     (m_hat / (v_hat.sqrt() + cfg.adam_eps) + cfg.weight_decay * p.array());
    }
}

}  // namespace

TrainResult train(ModelParams model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg, const VlatStrategy& strategy) {
    if (dataset.empty()) {
        throw std::invalid_argument("train: dataset must be non-empty");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("train: invalid config");
    }
    const FrequencyTable table = build_frequencies(model.config.embed_dim, model.config.rope_base);

    // Independent streams: factor draws never perturb the shuffle order.
    Rng shuffle_rng(cfg.seed, 1);
    Rng factor_rng(cfg.seed, 2);

    TrainResult result;
    AdamState adam;

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t sample_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::pair<const TrainSample*, PositionPlan>> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const TrainSample& sample = dataset[static_cast<std::size_t>(
                    order[i])];
                const int total = static_cast<int>(sample.tokens.size());
                if (strategy.kind == VlatKind::None) {
                    batch.emplace_back(&sample, plan_vanilla(total));
                } else {
                    const AudioWindow window = locate_audio_window(sample.layout);
                    const double factor = sample_virtual_factor(strategy, factor_rng);
                    const int base = cfg.vlat_base_context_tokens > 0
                                         ? cfg.vlat_base_context_tokens
                                         : window.length;
                    const int virt = std::max(
                        1, static_cast<int>(std::llround(base * factor)));
                    batch.emplace_back(&sample,
                                       plan_vlat(window.start, window.length, virt,
                                                 cfg.vlat_cutoff, cfg.vlat_temperature,
                                                 sample.layout, table));
                }
            }
            GradResult grad;
            try {
                grad = loss_and_grads(model, batch);
            } catch (const numeric_error& e) {
                throw training_diverged(std::string(e.what()) + " (diverged at epoch " +
                                            std::to_string(epoch) +
                                            ", batch starting at sample " +
                                            std::to_string(start) + ")",
                                        result.trace);
            }
            clip_gradients(grad.grads, cfg.grad_clip_norm);
            adamw_step(model, grad.grads, adam, cfg);
            loss_sum += grad.loss * static_cast<double>(end - start);
            sample_count += end - start;
        }
        result.trace.push_back(
            EpochStats{epoch, loss_sum / static_cast<double>(sample_count)});
    }
    result.model = std::move(model);
    return result;
}

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'X', 'T', 'M', 'C', 'K', '0', '1'};

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["embed_dim"] = c.embed_dim;
    j["n_layers"] = c.n_layers;
    j["mlp_hidden"] = c.mlp_hidden;
    j["rope_base"] = c.rope_base;
    j["init_scale"] = c.init_scale;
    j["seed"] = c.seed;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.rope_base = j.at("rope_base").get<double>();
    c.init_scale = j.at("init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path,
                     std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    }
    ModelParams& mutable_model = const_cast<ModelParams&>(model);
    auto refs = tensor_refs(mutable_model);

    nlohmann::ordered_json header;
    header["schema_version"] = 1;
    header["config"] = config_to_json(model.config);
    header["config_hash"] = config_hash;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& [name, tensor] : refs) {
        tensors.push_back({{"name", name}, {"rows", tensor->rows()}, {"cols", tensor->cols()}});
    }
    header["tensors"] = std::move(tensors);
    const std::string header_str = header.dump();

    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : refs) {
        for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
            for (Eigen::Index c = 0; c < tensor->cols(); ++c) {
                const double value = (*tensor)(r, c);
                out.write(reinterpret_cast<const char*>(&value), sizeof(value));
            }
        }
    }
    if (!out) {
        throw std::runtime_error("save_checkpoint: write failed for " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
    }
    const nlohmann::json header = nlohmann::json::parse(header_str);
    if (header.at("schema_version").get<int>() != 1) {
        throw std::runtime_error("load_checkpoint: unsupported schema version");
    }

    Checkpoint ckpt;
    ckpt.config_hash = header.at("config_hash").get<std::uint64_t>();
    ModelParams model = init_model(config_from_json(header.at("config")));
    auto refs = tensor_refs(model);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != refs.size()) {
        throw std::runtime_error("load_checkpoint: tensor manifest mismatch");
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& meta = tensors[i];
        Eigen::MatrixXd& tensor = *refs[i].second;
        if (meta.at("name").get<std::string>() != refs[i].first ||
            meta.at("rows").get<Eigen::Index>() != tensor.rows() ||
            meta.at("cols").get<Eigen::Index>() != tensor.cols()) {
            throw std::runtime_error("load_checkpoint: tensor shape mismatch at " +
                                     refs[i].first);
        }
        for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
            for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
                double value = 0.0;
                in.read(reinterpret_cast<char*>(&value), sizeof(value));
                tensor(r, c) = value;
            }
        }
    }
    if (!in) {
        throw std::runtime_error("load_checkpoint: truncated weights in " + path.string());
    }
    ckpt.model = std::move(model);
    return ckpt;
}

}  // namespace audioext
