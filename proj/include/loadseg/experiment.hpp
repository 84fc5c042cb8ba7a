#pragma once

// Experiment harness: flat dotted-key configuration, the two-stage training
// protocol, convergence CSV export, and run manifests.

#include <string>
#include <utility>
#include <vector>

#include "loadseg/controller.hpp"
#include "loadseg/data.hpp"
#include "loadseg/models.hpp"
#include "loadseg/trainer.hpp"

namespace loadseg {

enum class DatasetKind : uint8_t { shapes = 1, colors = 2 };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::shapes;
    int samples = 250;  // total; splits carve train/val/hold-out out of this
    int height = 32;
    int width = 32;
    int classes = 4;
    double train_fraction = 0.8;
    double val_fraction = 0.2;
    double holdout_fraction_of_val = 0.3;
};

struct Stage1Config {
    int epochs = 90;
    double lr = 1e-4;
    int batch_size = 8;
    int weighted_ce_epochs = 4;  // class-weighted CE for the first N epochs
};

struct ModelConfig {
    std::vector<int> segmentor_channels = {16, 16, 16};
    std::vector<int> discriminator_channels = {16, 32, 32};
};

struct ExperimentConfig {
    uint64_t seed = 1;
    DatasetConfig dataset;
    Stage1Config stage1;
    ModelConfig model;
    ControllerConfig controller;
    std::string output_dir = "out";

    void validate() const;
};

ExperimentConfig default_experiment_config();

// `key = value` lines with '#' comments; unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_entry(ExperimentConfig& config, const std::string& key, const std::string& value);

// Full echo of the configuration as (key, value) pairs, parseable back.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);

struct SplitData {
    Dataset train;
    Dataset val;      // validation minus hold-out
    Dataset holdout;  // in-training evaluation set
};

Dataset build_dataset(const ExperimentConfig& config);
SplitData build_splits(const ExperimentConfig& config);

struct Stage1Result {
    SegmentorModel model;
    struct Epoch {
        double loss = 0.0;
        double val_miou = 0.0;
    };
    std::vector<Epoch> curve;
    double final_val_miou = 0.0;
};

// Pixel-CE training at constant lr, optionally class-weighted for the first
// configured epochs. Zero epochs returns the freshly initialized model.
Stage1Result stage1_train(const ExperimentConfig& config);

struct Stage2Result {
    LoadResult load;
    double initial_holdout_miou = 0.0;  // g0, re-evaluated
    double best_holdout_miou = 0.0;     // returned model, re-evaluated
    SegmentorModel best_model;
    std::vector<std::string> warnings;
};

// Runs the controller from a stage-1 checkpoint. In-memory only.
Stage2Result run_stage2(const ExperimentConfig& config, const Checkpoint& start);

// run_stage2 plus persistence: best checkpoint, raw event log, convergence
// CSV, and manifest under config.output_dir.
Stage2Result stage2_load(const ExperimentConfig& config, const std::string& checkpoint_path);

// UTF-8 CSV with header tick,cycle,event,miou,mu_s,mu_star,gamma,omega,buffer_size
// and 6-decimal reals, one row per event in tick order.
void export_convergence_csv(const EventLog& events, const std::string& path);

// Raw event log persistence (higher precision than the CSV).
void write_event_log(const EventLog& events, const std::string& path);
EventLog read_event_log(const std::string& path);

void write_manifest(const ExperimentConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& extras,
                    const std::string& path);

void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace loadseg
