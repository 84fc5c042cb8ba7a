// Experiment command line: dataset generation, the two training stages,
// checkpoint evaluation, and convergence-curve export.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "loadseg/experiment.hpp"

namespace fs = std::filesystem;
using namespace loadseg;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
};

ExperimentConfig make_config(const CommonArgs& args) {
    ExperimentConfig config = args.config_path.empty() ? default_experiment_config()
                                                       : parse_config_file(args.config_path);
    if (args.seed) {
        config.seed = *args.seed;
        config.controller.seed = *args.seed;
    }
    if (args.out) config.output_dir = *args.out;
    config.validate();
    return config;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* opt = cmd->add_option("--config", args.config_path,
                                "configuration file (dotted key = value lines)");
    if (config_required) opt->required();
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.out, "output directory override");
}

int cmd_gen_data(const CommonArgs& args) {
    const ExperimentConfig config = make_config(args);
    const SplitData splits = build_splits(config);
    fs::create_directories(config.output_dir);
    save_dataset(splits.train, (fs::path(config.output_dir) / "train.ldsd").string());
    save_dataset(splits.val, (fs::path(config.output_dir) / "val.ldsd").string());
    save_dataset(splits.holdout, (fs::path(config.output_dir) / "holdout.ldsd").string());
    write_manifest(config, {{"run.kind", "gen-data"}},
                   (fs::path(config.output_dir) / "manifest.txt").string());
    std::printf("wrote %zu train / %zu val / %zu holdout samples to %s\n", splits.train.size(),
                splits.val.size(), splits.holdout.size(), config.output_dir.c_str());
    return 0;
}

int cmd_train_baseline(const CommonArgs& args) {
    const ExperimentConfig config = make_config(args);
    const Stage1Result result = stage1_train(config);
    fs::create_directories(config.output_dir);
    const std::string ckpt = (fs::path(config.output_dir) / "baseline.bin").string();
    save_checkpoint(result.model.arch, result.model.params, ckpt);

    std::string curve = "epoch,loss,val_miou\n";
    char buf[96];
    for (size_t i = 0; i < result.curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i, result.curve[i].loss,
                      result.curve[i].val_miou);
        curve += buf;
    }
    write_text_atomic((fs::path(config.output_dir) / "stage1_curve.csv").string(), curve);

    char miou_str[64];
    std::snprintf(miou_str, sizeof(miou_str), "%.12g", result.final_val_miou);
    write_manifest(config,
                   {{"run.kind", "train-baseline"},
                    {"result.baseline_val_miou", miou_str},
                    {"result.checkpoint", ckpt}},
                   (fs::path(config.output_dir) / "manifest.txt").string());
    std::printf("baseline checkpoint %s, val miou %.6f\n", ckpt.c_str(), result.final_val_miou);
    return 0;
}

int cmd_train_load(const CommonArgs& args, std::string checkpoint) {
    const ExperimentConfig config = make_config(args);
    if (checkpoint.empty())
        checkpoint = (fs::path(config.output_dir) / "baseline.bin").string();
    const Stage2Result result = stage2_load(config, checkpoint);
    std::printf("initial holdout miou %.6f -> returned model %.6f (%s, %zu cycles)\n",
                result.initial_holdout_miou, result.best_holdout_miou,
                result.load.peak_ever_found ? "peak found" : "no peak", result.load.cycles.size());
    for (const std::string& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (result.load.abort_message)
        std::fprintf(stderr, "aborted: %s\n", result.load.abort_message->c_str());
    std::printf("best checkpoint: %s\n",
                (fs::path(config.output_dir) / "best.bin").string().c_str());
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& split) {
    const ExperimentConfig config = make_config(args);
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.arch.kind != ModelKind::segmentor) throw ContractViolation("eval: not a segmentor checkpoint");
    SegmentorModel model;
    model.arch = ck.arch;
    for (size_t i = 0; i < ck.params.size(); ++i)
        model.params.add(ck.params.at(i).name, ck.params.at(i).value);
    const SplitData splits = build_splits(config);
    const Dataset* ds = nullptr;
    if (split == "train")
        ds = &splits.train;
    else if (split == "val")
        ds = &splits.val;
    else if (split == "holdout")
        ds = &splits.holdout;
    else
        throw ContractViolation("eval: split must be train, val, or holdout");
    std::printf("miou=%.6f\n", evaluate_model_miou(model, *ds));
    return 0;
}

int cmd_export_curve(const std::string& events_path, const std::string& out_path) {
    export_convergence_csv(read_event_log(events_path), out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lookahead adversarial training lab for toy semantic segmentation"};
    app.require_subcommand(1);

    CommonArgs gen_args, base_args, load_args, eval_args;
    std::string load_checkpoint_path, eval_checkpoint_path, eval_split;
    std::string events_path, curve_out;

    auto* gen = app.add_subcommand("gen-data", "generate and dump the synthetic dataset splits");
    add_common(gen, gen_args, false);

    auto* base = app.add_subcommand("train-baseline", "stage 1: pixel-CE training of the segmentor");
    add_common(base, base_args, false);

    auto* load = app.add_subcommand("train-load", "stage 2: lookahead adversarial training");
    add_common(load, load_args, true);
    load->add_option("--checkpoint", load_checkpoint_path,
                     "stage-1 checkpoint (default <out>/baseline.bin)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint's mIoU on a split");
    add_common(ev, eval_args, false);
    ev->add_option("--checkpoint", eval_checkpoint_path, "checkpoint to evaluate")->required();
    ev->add_option("--split", eval_split, "train, val, or holdout")->required();

    auto* exp = app.add_subcommand("export-curve", "re-export a convergence CSV from an event log");
    exp->add_option("--events", events_path, "event log written by train-load")->required();
    exp->add_option("--out", curve_out, "CSV output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (base->parsed()) return cmd_train_baseline(base_args);
        if (load->parsed()) return cmd_train_load(load_args, load_checkpoint_path);
        if (ev->parsed()) return cmd_eval(eval_args, eval_checkpoint_path, eval_split);
        if (exp->parsed()) return cmd_export_curve(events_path, curve_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
