#include "loadseg/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace loadseg {

AdversarialTrainer::AdversarialTrainer(SegmentorModel segmentor, DiscriminatorModel discriminator,
                                       Dataset train, Dataset holdout, ControllerConfig config)
    : segmentor_(std::move(segmentor)),
      discriminator_(std::move(discriminator)),
      train_(std::move(train)),
      holdout_(std::move(holdout)),
      config_(std::move(config)) {
    config_.validate();
    if (train_.empty()) throw ContractViolation("trainer: empty training set");
    if (holdout_.empty()) throw ContractViolation("trainer: empty hold-out set");
    if (segmentor_.arch.classes != train_.classes)
        throw ContractViolation("trainer: segmentor class count does not match dataset");
    if (discriminator_.arch.classes != train_.classes)
        throw ContractViolation("trainer: discriminator class count does not match dataset");
}

std::vector<Sample> AdversarialTrainer::draw_batch() {
    Rng rng(derive_seed(config_.seed, seed_purpose::kAdversarialBatch, step_counter_));
    std::vector<Sample> batch;
    batch.reserve(config_.batch_size);
    for (int b = 0; b < config_.batch_size; ++b) {
        const size_t idx = static_cast<size_t>(rng.below(train_.size()));
        Sample s = train_.samples[idx];
        if (rng.uniform01() < 0.5) s = flip_horizontal(s);
        batch.push_back(std::move(s));
    }
    return batch;
}

double AdversarialTrainer::hybrid_batch_step(SegmentorModel& segmentor,
                                             const DiscriminatorModel& discriminator,
                                             const std::vector<Sample>& batch, double lambda,
                                             double lr, double momentum,
                                             std::vector<float>* pixel_weights) {
    if (batch.empty()) throw ContractViolation("hybrid_batch_step: empty batch");
    Tape tape;
    const auto g_nodes = bind_parameters(tape, segmentor.params, /*trainable=*/true);
    std::vector<Tape::NodeId> d_nodes;
    if (lambda > 0)
        d_nodes = bind_parameters(tape, discriminator.params, /*trainable=*/false);  // frozen

    Tape::NodeId total = -1;
    for (size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = batch[i];
        const Tensor image = s.image.as_tensor();
        const auto img_node = tape.constant(image);
        const auto logits = build_segmentor_logits(tape, segmentor.arch, g_nodes, img_node);
        std::vector<float> weights;
        if (pixel_weights) weights.assign(pixel_weights->begin() + i * s.label.classes.size(),
                                          pixel_weights->begin() + (i + 1) * s.label.classes.size());
        auto sample_loss = tape.softmax_ce_mean(logits, s.label.classes, -1, std::move(weights));
        if (lambda > 0) {
            // Soft conditioning keeps the adversarial term differentiable
            // end-to-end; hard one-hot stacks are only used on stored maps.
            const auto soft = tape.softmax_channels(logits);
            const auto stack = tape.class_stack(image, soft);
            const auto score = build_discriminator_score(tape, discriminator.arch, d_nodes, stack);
            const auto adv = generator_adversarial_node(tape, score);
            sample_loss = tape.add(sample_loss, tape.affine(adv, static_cast<float>(lambda), 0.0f));
        }
        total = (total < 0) ? sample_loss : tape.add(total, sample_loss);
    }
    total = tape.affine(total, 1.0f / static_cast<float>(batch.size()), 0.0f);
    tape.backward(total);
    extract_gradients(tape, g_nodes, segmentor.params);
    sgd_momentum_step(segmentor.params, lr, momentum);
    return static_cast<double>(tape.value(total).v[0]);
}

void AdversarialTrainer::adversarial_tick() {
    for (int step = 0; step < config_.steps_per_tick; ++step) {
        const auto batch = draw_batch();
        ++step_counter_;
        hybrid_batch_step(segmentor_, discriminator_, batch, config_.lambda, config_.lr_adversarial,
                          config_.momentum);
    }
}

double AdversarialTrainer::evaluate_holdout() { return evaluate_model_miou(segmentor_, holdout_); }

SnapshotHandle AdversarialTrainer::snapshot_live(SnapTag tag) {
    ModelSnapshot snap = snapshot(segmentor_.params, tag);
    const SnapshotHandle handle = snap.id;
    snapshots_.emplace(handle, std::move(snap));
    return handle;
}

void AdversarialTrainer::restore_live(SnapshotHandle handle) {
    restore(snapshot_payload(handle), segmentor_.params);
}

const ModelSnapshot& AdversarialTrainer::snapshot_payload(SnapshotHandle handle) const {
    auto it = snapshots_.find(handle);
    if (it == snapshots_.end()) throw ContractViolation("trainer: unknown snapshot handle");
    return it->second;
}

MapSet AdversarialTrainer::generate_maps(SnapshotHandle handle, MapSetTag tag) {
    SegmentorModel frozen;
    frozen.arch = segmentor_.arch;
    for (const auto& [name, value] : snapshot_payload(handle).params) frozen.params.add(name, value);
    MapSet set;
    set.snapshot_id = handle;
    set.tag = tag;
    const int n = static_cast<int>(train_.size());
    set.maps.resize(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        set.maps[i] = predict_label_map(segmentor_forward(frozen, train_.samples[i].image));
    return set;
}

double AdversarialTrainer::discriminator_holdout_accuracy(const std::vector<Tensor>& real_stacks,
                                                          const std::vector<Tensor>& fake_stacks) const {
    size_t correct = 0;
    for (const Tensor& s : real_stacks)
        if (discriminator_forward(discriminator_, s) > 0.5f) ++correct;
    for (const Tensor& s : fake_stacks)
        if (discriminator_forward(discriminator_, s) <= 0.5f) ++correct;
    return static_cast<double>(correct) / static_cast<double>(real_stacks.size() + fake_stacks.size());
}

void AdversarialTrainer::train_discriminator(const AggregationBuffer& buffer) {
    if (buffer.size() == 0) throw ContractViolation("trainer: empty buffer");
    const size_t M = train_.size();
    const size_t sets = buffer.size();
    for (size_t b = 0; b < sets; ++b)
        if (buffer.at(b).maps.size() != M)
            throw ContractViolation("trainer: buffer map set size does not match training set");
    const float fake_weight = 1.0f / static_cast<float>(sets);

    // Hold-out early-stopping pairs: ground truth vs the live generator's
    // current predictions, both as hard one-hot conditioning stacks.
    std::vector<Tensor> ho_real, ho_fake;
    ho_real.reserve(holdout_.size());
    ho_fake.reserve(holdout_.size());
    for (const Sample& s : holdout_.samples) {
        ho_real.push_back(class_split_stack(s.image, one_hot_weights(s.label, train_.classes)));
        const LabelMap pred = predict_label_map(segmentor_forward(segmentor_, s.image));
        ho_fake.push_back(class_split_stack(s.image, one_hot_weights(pred, train_.classes)));
    }

    // Item list: every real pair once, every buffered map set once.
    struct Item {
        uint32_t sample;
        int32_t set;  // -1 = real
    };
    std::vector<Item> items;
    items.reserve(M * (1 + sets));
    for (uint32_t i = 0; i < M; ++i) items.push_back({i, -1});
    for (int32_t b = 0; b < static_cast<int32_t>(sets); ++b)
        for (uint32_t i = 0; i < M; ++i) items.push_back({i, b});

    last_disc_stats_ = {};
    last_disc_stats_.real_pairs = M;
    last_disc_stats_.fake_pairs = M * sets;

    const uint64_t call_seed = derive_seed(config_.seed, seed_purpose::kDiscriminatorBatch,
                                           disc_call_counter_++);
    double best_acc = -1.0;
    ParameterSet best_params = discriminator_.params;
    int stale_epochs = 0;
    bool reached_target = false;

    int epoch = 0;
    for (; epoch < config_.disc.max_epochs; ++epoch) {
        Rng rng(derive_seed(call_seed, seed_purpose::kDiscriminatorBatch, static_cast<uint64_t>(epoch)));
        for (size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);

        for (size_t start = 0; start < items.size(); start += config_.disc.batch_size) {
            const size_t stop = std::min(items.size(), start + config_.disc.batch_size);
            Tape tape;
            const auto d_nodes = bind_parameters(tape, discriminator_.params, /*trainable=*/true);
            Tape::NodeId total = -1;
            for (size_t it = start; it < stop; ++it) {
                const Item& item = items[it];
                Sample s = train_.samples[item.sample];
                const LabelMap& map =
                    item.set < 0 ? s.label : buffer.at(static_cast<size_t>(item.set)).maps[item.sample];
                LabelMap used = map;
                if (rng.uniform01() < 0.5) {
                    Sample flipped = flip_horizontal({s.image, used});
                    s.image = flipped.image;
                    used = flipped.label;
                }
                const Tensor stack = class_split_stack(s.image, one_hot_weights(used, train_.classes));
                const auto score =
                    build_discriminator_score(tape, discriminator_.arch, d_nodes, tape.constant(stack));
                Tape::NodeId term;
                if (item.set < 0) {
                    term = real_score_loss_node(tape, score);
                } else {
                    term = tape.affine(fake_score_loss_node(tape, score), fake_weight, 0.0f);
                }
                total = (total < 0) ? term : tape.add(total, term);
            }
            total = tape.affine(total, 1.0f / static_cast<float>(stop - start), 0.0f);
            tape.backward(total);
            extract_gradients(tape, d_nodes, discriminator_.params);
            adagrad_step(discriminator_.params, config_.lr_discriminator);
        }

        const double acc = discriminator_holdout_accuracy(ho_real, ho_fake);
        if (acc > best_acc) {
            best_acc = acc;
            best_params = discriminator_.params;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
        }
        last_disc_stats_.holdout_accuracy = acc;
        if (acc >= config_.disc.target_accuracy) {
            reached_target = true;
            ++epoch;
            break;
        }
        if (stale_epochs >= config_.disc.patience_epochs) {
            ++epoch;
            break;
        }
    }
    last_disc_stats_.epochs = epoch;

    if (!reached_target) {
        // Keep the best hold-out epoch rather than the last one.
        auto slots_kind = discriminator_.params.slot_kind();
        for (size_t i = 0; i < discriminator_.params.size(); ++i)
            discriminator_.params.at(i).value = best_params.at(i).value;
        discriminator_.params.set_slot_kind(slots_kind);
        last_disc_stats_.holdout_accuracy = best_acc;
        if (epoch >= config_.disc.max_epochs) {
            last_disc_stats_.hit_epoch_cap = true;
            warnings_.push_back("discriminator hit the epoch cap at hold-out accuracy " +
                                std::to_string(best_acc));
        }
    }
}

}  // namespace loadseg
