// Command-line front-end: dataset generation, toy-model training, method
// evaluation, hyperparameter sweeps and position-plan dumps.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>

#include "audioext/harness.hpp"

namespace {

void add_mapping_flags(CLI::App* cmd, audioext::TokenMapping& mapping) {
    cmd->add_option("--tokens-per-chunk", mapping.tokens_per_chunk,
                    "Audio tokens per 30s chunk (8 desk-scale, 88 SALMONN, 750 Qwen2-Audio)");
    cmd->add_option("--chunk-seconds", mapping.chunk_seconds, "Seconds per audio chunk");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RoPE-based audio context extension toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Config file (INI, one section per subcommand)");

    audioext::GenDataConfig gen_cfg;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate synthetic long-audio MCQA splits");
    gen->add_option("--out", gen_cfg.out_dir, "Output directory");
    gen->add_option("--seed", gen_cfg.seed, "Generation seed");
    gen->add_option("--train-seconds", gen_cfg.train_seconds, "Training split audio length");
    gen->add_option("--lengths", gen_cfg.lengths_seconds,
                    "Evaluation audio lengths in seconds")->delimiter(',');
    gen->add_option("--n-train", gen_cfg.n_train, "Training instances");
    gen->add_option("--n-val", gen_cfg.n_val, "Validation instances per length");
    gen->add_option("--n-test", gen_cfg.n_test, "Test instances per length");
    gen->add_option("--vocab-size", gen_cfg.vocab_size, "Token vocabulary size");
    gen->add_option("--n-facts", gen_cfg.n_facts, "Facts per instance");
    gen->add_option("--n-instream", gen_cfg.instream_distractors,
                    "Distractors drawn from in-stream facts (0-3)");
    gen->add_flag("--force", gen_cfg.force, "Overwrite existing outputs");
    add_mapping_flags(gen, gen_cfg.mapping);

    audioext::TrainCmdConfig train_cfg;
    CLI::App* train = app.add_subcommand("train", "Train the toy model (vanilla or VLAT)");
    train->add_option("--data", train_cfg.data_path, "Training JSONL")->required();
    train->add_option("--out", train_cfg.out_path, "Checkpoint path");
    train->add_option("--method", train_cfg.method, "Training-time positional method");
    train->add_option("--strategy", train_cfg.strategy,
                      "VLAT factor strategy: none|default|dense100|dense1000|limited|fixed20");
    train->add_option("--factors", train_cfg.factor_override,
                      "Override the strategy's virtual factor set")->delimiter(',');
    train->add_option("--epochs", train_cfg.train.epochs, "Training epochs");
    train->add_option("--lr", train_cfg.train.learning_rate, "Learning rate");
    train->add_option("--batch-size", train_cfg.train.batch_size, "Batch size");
    train->add_option("--grad-clip", train_cfg.train.grad_clip_norm, "Gradient-norm clip");
    train->add_option("--weight-decay", train_cfg.train.weight_decay, "Decoupled weight decay");
    train->add_option("--seed", train_cfg.train.seed, "Training seed (shuffling, factors)");
    train->add_option("--vlat-base-tokens", train_cfg.train.vlat_base_context_tokens,
                      "Virtual-window base in tokens (0 = sample audio length)");
    train->add_option("--vlat-cutoff", train_cfg.train.vlat_cutoff,
                      "Cutoff pair used by VLAT plans");
    train->add_option("--vlat-temperature", train_cfg.train.vlat_temperature,
                      "Temperature used by VLAT plans");
    train->add_option("--vocab-size", train_cfg.model.vocab_size, "Model vocabulary");
    train->add_option("--embed-dim", train_cfg.model.embed_dim, "Embedding width (even)");
    train->add_option("--n-layers", train_cfg.model.n_layers, "Transformer blocks (1-2)");
    train->add_option("--mlp-hidden", train_cfg.model.mlp_hidden, "MLP hidden width");
    train->add_option("--rope-base", train_cfg.model.rope_base, "Rotation base");
    train->add_option("--init-scale", train_cfg.model.init_scale, "Weight init stddev");
    train->add_option("--model-seed", train_cfg.model.seed, "Weight init seed");
    train->add_flag("--force", train_cfg.force, "Overwrite existing outputs");

    audioext::EvalCmdConfig eval_cfg;
    CLI::App* eval = app.add_subcommand("eval", "Compare methods across lengths and anchors");
    eval->add_option("--checkpoint", eval_cfg.checkpoint, "Model checkpoint")->required();
    eval->add_option("--data-dir", eval_cfg.data_dir, "Directory with test_*.jsonl");
    eval->add_option("--out", eval_cfg.out_path, "Output CSV");
    eval->add_option("--methods", eval_cfg.methods, "Methods to evaluate")->delimiter(',');
    eval->add_option("--lengths", eval_cfg.lengths_seconds, "Audio lengths in seconds")->delimiter(',');
    eval->add_option("--anchor-seconds", eval_cfg.anchor_seconds,
                     "Anchor windows in seconds (original, observed)")->delimiter(',');
    eval->add_option("--cutoff", eval_cfg.cutoff, "Cutoff pair for partial-yarn methods");
    eval->add_option("--temperature", eval_cfg.temperature,
                     "Attention temperature for partial-yarn methods");
    eval->add_option("--seed", eval_cfg.seed, "Run seed recorded in the output");
    eval->add_flag("--force", eval_cfg.force, "Overwrite existing outputs");
    add_mapping_flags(eval, eval_cfg.mapping);

    audioext::SweepCmdConfig sweep_cfg;
    CLI::App* sweep = app.add_subcommand("sweep", "Cutoff x temperature grid for partial-yarn");
    sweep->add_option("--checkpoint", sweep_cfg.checkpoint, "Model checkpoint")->required();
    sweep->add_option("--data", sweep_cfg.data_path, "Evaluation JSONL")->required();
    sweep->add_option("--out", sweep_cfg.out_path, "Output CSV");
    sweep->add_option("--cutoffs", sweep_cfg.cutoffs, "Cutoff grid")->delimiter(',');
    sweep->add_option("--temps", sweep_cfg.temperatures, "Temperature grid")->delimiter(',');
    sweep->add_option("--anchor-seconds", sweep_cfg.anchor_seconds, "Anchor window in seconds");
    sweep->add_option("--seed", sweep_cfg.seed, "Run seed recorded in the output");
    sweep->add_flag("--force", sweep_cfg.force, "Overwrite existing outputs");
    add_mapping_flags(sweep, sweep_cfg.mapping);

    audioext::PositionsCmdConfig pos_cfg;
    CLI::App* positions = app.add_subcommand("positions", "Dump a position plan as CSV");
    positions->add_option("--method", pos_cfg.method, "Extension method");
    positions->add_option("--layout", pos_cfg.layout_spec,
                          "Layout as modality:count pairs, e.g. text:4,audio:8,text:2");
    positions->add_option("--anchor-tokens", pos_cfg.anchor_tokens,
                          "Anchor window in tokens (0 = audio length)");
    positions->add_option("--cutoff", pos_cfg.cutoff, "Cutoff pair");
    positions->add_option("--temperature", pos_cfg.temperature, "Attention temperature");
    positions->add_option("--pair", pos_cfg.pair, "Pair index for the angle column");
    positions->add_option("--head-dim", pos_cfg.head_dim, "Head dimension");
    positions->add_option("--rope-base", pos_cfg.rope_base, "Rotation base");
    positions->add_option("--out", pos_cfg.out_path, "Output CSV");
    positions->add_flag("--force", pos_cfg.force, "Overwrite existing outputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            audioext::cmd_gen_data(gen_cfg);
        } else if (train->parsed()) {
            audioext::cmd_train(train_cfg);
        } else if (eval->parsed()) {
            audioext::cmd_eval(eval_cfg);
        } else if (sweep->parsed()) {
            audioext::cmd_sweep(sweep_cfg);
        } else if (positions->parsed()) {
            audioext::cmd_positions(pos_cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
