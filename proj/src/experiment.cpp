#include "loadseg/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace loadseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ContractViolation("config: bad real for '" + key + "': '" + value + "'");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ContractViolation("config: bad integer for '" + key + "': '" + value + "'");
    }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        out.push_back(static_cast<int>(parse_int(key, part)));
    }
    if (out.empty()) throw ContractViolation("config: empty list for '" + key + "'");
    return out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string int_list_string(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string csv_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset.classes < 2 || dataset.samples < 1 || dataset.height < 8 || dataset.width < 8)
        throw ContractViolation("config: bad dataset dimensions");
    if (stage1.epochs < 0 || stage1.batch_size < 1 || stage1.lr <= 0 ||
        stage1.weighted_ce_epochs < 0)
        throw ContractViolation("config: bad stage-1 settings");
    controller.validate();
    if (output_dir.empty()) throw ContractViolation("config: empty output directory");
}

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "seed") {
        c.seed = static_cast<uint64_t>(parse_int(key, value));
        c.controller.seed = c.seed;
    } else if (key == "dataset.kind") {
        if (value == "shapes")
            c.dataset.kind = DatasetKind::shapes;
        else if (value == "colors")
            c.dataset.kind = DatasetKind::colors;
        else
            throw ContractViolation("config: dataset.kind must be 'shapes' or 'colors'");
    } else if (key == "dataset.samples") {
        c.dataset.samples = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.height") {
        c.dataset.height = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.width") {
        c.dataset.width = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.classes") {
        c.dataset.classes = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.train_fraction") {
        c.dataset.train_fraction = parse_real(key, value);
    } else if (key == "dataset.val_fraction") {
        c.dataset.val_fraction = parse_real(key, value);
    } else if (key == "dataset.holdout_fraction_of_val") {
        c.dataset.holdout_fraction_of_val = parse_real(key, value);
    } else if (key == "stage1.epochs") {
        c.stage1.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "stage1.lr") {
        c.stage1.lr = parse_real(key, value);
    } else if (key == "stage1.batch_size") {
        c.stage1.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "stage1.weighted_ce_epochs") {
        c.stage1.weighted_ce_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "model.segmentor_channels") {
        c.model.segmentor_channels = parse_int_list(key, value);
    } else if (key == "model.discriminator_channels") {
        c.model.discriminator_channels = parse_int_list(key, value);
    } else if (key == "controller.beta_l") {
        c.controller.beta_l = parse_real(key, value);
    } else if (key == "controller.beta_u") {
        c.controller.beta_u = parse_real(key, value);
    } else if (key == "controller.gamma_max") {
        c.controller.gamma_max = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.omega_max") {
        c.controller.omega_max = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.psi_max") {
        c.controller.psi_max = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.buffer_max") {
        c.controller.buffer_max = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.lambda") {
        c.controller.lambda = parse_real(key, value);
    } else if (key == "controller.lr_adversarial") {
        c.controller.lr_adversarial = parse_real(key, value);
    } else if (key == "controller.momentum") {
        c.controller.momentum = parse_real(key, value);
    } else if (key == "controller.lr_discriminator") {
        c.controller.lr_discriminator = parse_real(key, value);
    } else if (key == "controller.steps_per_tick") {
        c.controller.steps_per_tick = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.batch_size") {
        c.controller.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.max_total_ticks") {
        c.controller.max_total_ticks = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.disc_target_accuracy") {
        c.controller.disc.target_accuracy = parse_real(key, value);
    } else if (key == "controller.disc_patience_epochs") {
        c.controller.disc.patience_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.disc_max_epochs") {
        c.controller.disc.max_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "controller.disc_batch_size") {
        c.controller.disc.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "output.dir") {
        c.output_dir = value;
    } else {
        throw ContractViolation("config: unknown key '" + key + "'");
    }
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    ExperimentConfig c = default_experiment_config();
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractViolation("config: line " + std::to_string(lineno) + " is not 'key = value'");
        apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("seed", std::to_string(c.seed));
    out.emplace_back("dataset.kind", c.dataset.kind == DatasetKind::shapes ? "shapes" : "colors");
    out.emplace_back("dataset.samples", std::to_string(c.dataset.samples));
    out.emplace_back("dataset.height", std::to_string(c.dataset.height));
    out.emplace_back("dataset.width", std::to_string(c.dataset.width));
    out.emplace_back("dataset.classes", std::to_string(c.dataset.classes));
    out.emplace_back("dataset.train_fraction", format_real(c.dataset.train_fraction));
    out.emplace_back("dataset.val_fraction", format_real(c.dataset.val_fraction));
    out.emplace_back("dataset.holdout_fraction_of_val", format_real(c.dataset.holdout_fraction_of_val));
    out.emplace_back("stage1.epochs", std::to_string(c.stage1.epochs));
    out.emplace_back("stage1.lr", format_real(c.stage1.lr));
    out.emplace_back("stage1.batch_size", std::to_string(c.stage1.batch_size));
    out.emplace_back("stage1.weighted_ce_epochs", std::to_string(c.stage1.weighted_ce_epochs));
    out.emplace_back("model.segmentor_channels", int_list_string(c.model.segmentor_channels));
    out.emplace_back("model.discriminator_channels", int_list_string(c.model.discriminator_channels));
    out.emplace_back("controller.beta_l", format_real(c.controller.beta_l));
    out.emplace_back("controller.beta_u", format_real(c.controller.beta_u));
    out.emplace_back("controller.gamma_max", std::to_string(c.controller.gamma_max));
    out.emplace_back("controller.omega_max", std::to_string(c.controller.omega_max));
    out.emplace_back("controller.psi_max", std::to_string(c.controller.psi_max));
    out.emplace_back("controller.buffer_max", std::to_string(c.controller.buffer_max));
    out.emplace_back("controller.lambda", format_real(c.controller.lambda));
    out.emplace_back("controller.lr_adversarial", format_real(c.controller.lr_adversarial));
    out.emplace_back("controller.momentum", format_real(c.controller.momentum));
    out.emplace_back("controller.lr_discriminator", format_real(c.controller.lr_discriminator));
    out.emplace_back("controller.steps_per_tick", std::to_string(c.controller.steps_per_tick));
    out.emplace_back("controller.batch_size", std::to_string(c.controller.batch_size));
    out.emplace_back("controller.max_total_ticks", std::to_string(c.controller.max_total_ticks));
    out.emplace_back("controller.disc_target_accuracy", format_real(c.controller.disc.target_accuracy));
    out.emplace_back("controller.disc_patience_epochs", std::to_string(c.controller.disc.patience_epochs));
    out.emplace_back("controller.disc_max_epochs", std::to_string(c.controller.disc.max_epochs));
    out.emplace_back("controller.disc_batch_size", std::to_string(c.controller.disc.batch_size));
    out.emplace_back("output.dir", c.output_dir);
    return out;
}

Dataset build_dataset(const ExperimentConfig& config) {
    switch (config.dataset.kind) {
        case DatasetKind::colors:
            return generate_color_coded_dataset(config.seed, config.dataset.samples,
                                                config.dataset.height, config.dataset.width,
                                                config.dataset.classes);
        case DatasetKind::shapes:
        default:
            return generate_shapes_dataset(config.seed, config.dataset.samples, config.dataset.height,
                                           config.dataset.width, config.dataset.classes);
    }
}

SplitData build_splits(const ExperimentConfig& config) {
    const Dataset full = build_dataset(config);
    const SplitIndices idx =
        split_dataset(full, config.dataset.train_fraction, config.dataset.val_fraction,
                      config.dataset.holdout_fraction_of_val, config.seed);
    SplitData out;
    out.train = subset(full, idx.train);
    out.val = subset(full, idx.val);
    out.holdout = subset(full, idx.holdout);
    return out;
}

namespace {

// Per-image class weights: average pixels per class in an image divided by
// the class's pixel count in this image.
std::vector<float> class_weights_for(const LabelMap& label, int classes) {
    std::vector<size_t> counts(classes, 0);
    for (uint8_t c : label.classes) ++counts[c];
    const double average = static_cast<double>(label.classes.size()) / classes;
    std::vector<float> weights(label.classes.size());
    for (size_t i = 0; i < label.classes.size(); ++i)
        weights[i] = static_cast<float>(average / static_cast<double>(counts[label.classes[i]]));
    return weights;
}

}  // namespace

Stage1Result stage1_train(const ExperimentConfig& config) {
    config.validate();
    SplitData splits = build_splits(config);
    Stage1Result result{
        SegmentorModel::create(config.dataset.height, config.dataset.width, config.dataset.classes,
                               config.model.segmentor_channels, config.seed),
        {},
        0.0};
    // The discriminator is unused at lambda = 0 but the step API wants one.
    DiscriminatorModel dummy =
        DiscriminatorModel::create(config.dataset.height, config.dataset.width,
                                   config.dataset.classes, config.model.discriminator_channels,
                                   config.seed);

    const size_t n = splits.train.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < config.stage1.epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, seed_purpose::kStage1Batch, static_cast<uint64_t>(epoch)));
        for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        const bool weighted = epoch < config.stage1.weighted_ce_epochs;
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < n; start += config.stage1.batch_size) {
            const size_t stop = std::min(n, start + static_cast<size_t>(config.stage1.batch_size));
            std::vector<Sample> batch;
            std::vector<float> weights;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) {
                Sample s = splits.train.samples[order[i]];
                if (rng.uniform01() < 0.5) s = flip_horizontal(s);
                if (weighted) {
                    const auto w = class_weights_for(s.label, config.dataset.classes);
                    weights.insert(weights.end(), w.begin(), w.end());
                }
                batch.push_back(std::move(s));
            }
            loss_sum += AdversarialTrainer::hybrid_batch_step(result.model, dummy, batch,
                                                              /*lambda=*/0.0, config.stage1.lr,
                                                              config.controller.momentum,
                                                              weighted ? &weights : nullptr);
            ++batches;
        }
        Stage1Result::Epoch ep;
        ep.loss = loss_sum / static_cast<double>(std::max<size_t>(1, batches));
        ep.val_miou = evaluate_model_miou(result.model, splits.val);
        result.curve.push_back(ep);
    }
    result.final_val_miou = result.curve.empty() ? evaluate_model_miou(result.model, splits.val)
                                                 : result.curve.back().val_miou;
    return result;
}

Stage2Result run_stage2(const ExperimentConfig& config, const Checkpoint& start) {
    config.validate();
    if (start.arch.kind != ModelKind::segmentor)
        throw ContractViolation("stage2: checkpoint is not a segmentor");
    if (start.arch.height != config.dataset.height || start.arch.width != config.dataset.width ||
        start.arch.classes != config.dataset.classes)
        throw ContractViolation("stage2: checkpoint architecture does not match the configuration");

    SplitData splits = build_splits(config);
    SegmentorModel g0;
    g0.arch = start.arch;
    for (size_t i = 0; i < start.params.size(); ++i)
        g0.params.add(start.params.at(i).name, start.params.at(i).value);
    DiscriminatorModel disc =
        DiscriminatorModel::create(config.dataset.height, config.dataset.width,
                                   config.dataset.classes, config.model.discriminator_channels,
                                   config.seed);

    ControllerConfig cc = config.controller;
    cc.seed = config.seed;
    AdversarialTrainer trainer(std::move(g0), std::move(disc), std::move(splits.train),
                               std::move(splits.holdout), cc);

    Stage2Result result;
    result.load = run_load(cc, trainer);
    result.best_model = trainer.segmentor();  // run_load leaves the live model at the best
    result.best_holdout_miou = evaluate_model_miou(result.best_model, trainer.holdout_data());

    SegmentorModel initial;
    initial.arch = result.best_model.arch;
    for (size_t i = 0; i < start.params.size(); ++i)
        initial.params.add(start.params.at(i).name, start.params.at(i).value);
    result.initial_holdout_miou = evaluate_model_miou(initial, trainer.holdout_data());
    result.warnings = trainer.warnings();
    return result;
}

Stage2Result stage2_load(const ExperimentConfig& config, const std::string& checkpoint_path) {
    const Checkpoint start = load_checkpoint(checkpoint_path);
    Stage2Result result = run_stage2(config, start);

    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    const std::string best_path = (fs::path(config.output_dir) / "best.bin").string();
    save_checkpoint(result.best_model.arch, result.best_model.params, best_path);
    write_event_log(result.load.events, (fs::path(config.output_dir) / "events.txt").string());
    export_convergence_csv(result.load.events, (fs::path(config.output_dir) / "curve.csv").string());

    std::vector<std::pair<std::string, std::string>> extras;
    extras.emplace_back("run.kind", "train-load");
    extras.emplace_back("run.start_checkpoint", checkpoint_path);
    extras.emplace_back("result.initial_holdout_miou", format_real(result.initial_holdout_miou));
    extras.emplace_back("result.best_holdout_miou", format_real(result.best_holdout_miou));
    extras.emplace_back("result.peak_found", result.load.peak_ever_found ? "yes" : "no");
    extras.emplace_back("result.cycles", std::to_string(result.load.cycles.size()));
    if (result.load.abort_message) extras.emplace_back("result.abort", *result.load.abort_message);
    for (const std::string& w : result.warnings) extras.emplace_back("warning", w);
    write_manifest(config, extras, (fs::path(config.output_dir) / "manifest.txt").string());
    return result;
}

void export_convergence_csv(const EventLog& events, const std::string& path) {
    if (events.empty()) throw ContractViolation("export: empty event log");
    std::string out = "tick,cycle,event,miou,mu_s,mu_star,gamma,omega,buffer_size\n";
    for (const ControllerEvent& e : events) {
        out += std::to_string(e.tick) + "," + std::to_string(e.cycle) + "," +
               event_kind_name(e.kind) + "," + csv_real(e.mu) + "," + csv_real(e.mu_s) + "," +
               csv_real(e.mu_star) + "," + std::to_string(e.gamma) + "," + std::to_string(e.omega) +
               "," + std::to_string(e.buffer_size) + "\n";
    }
    write_text_atomic(path, out);
}

void write_event_log(const EventLog& events, const std::string& path) {
    if (events.empty()) throw ContractViolation("write_event_log: empty event log");
    std::string out;
    for (const ControllerEvent& e : events) {
        out += std::to_string(e.tick) + " " + std::to_string(e.cycle) + " " + event_kind_name(e.kind) +
               " " + format_real(e.mu) + " " + format_real(e.mu_s) + " " + format_real(e.mu_star) +
               " " + std::to_string(e.gamma) + " " + std::to_string(e.omega) + " " +
               std::to_string(e.buffer_size) + "\n";
    }
    write_text_atomic(path, out);
}

EventLog read_event_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open event log '" + path + "'");
    EventLog events;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::stringstream ss(line);
        ControllerEvent e;
        std::string kind;
        if (!(ss >> e.tick >> e.cycle >> kind >> e.mu >> e.mu_s >> e.mu_star >> e.gamma >> e.omega >>
              e.buffer_size))
            throw IoError("bad event log line " + std::to_string(lineno) + " in '" + path + "'");
        const auto k = event_kind_from_name(kind);
        if (!k) throw IoError("unknown event kind '" + kind + "' in '" + path + "'");
        e.kind = *k;
        events.push_back(e);
    }
    if (events.empty()) throw IoError("event log '" + path + "' is empty");
    return events;
}

void write_manifest(const ExperimentConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& extras,
                    const std::string& path) {
    std::string out;
    out += "version = " + std::string(kVersionTag) + "\n";
    for (const auto& [k, v] : config_entries(config)) out += "config." + k + " = " + v + "\n";
    for (const auto& [k, v] : extras) out += k + " = " + v + "\n";
    write_text_atomic(path, out);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace loadseg
