#pragma once

// Real TrainerHooks implementation: wires the toy segmentor/discriminator,
// the hybrid loss, and the synthetic datasets to the controller.

#include <string>
#include <unordered_map>
#include <vector>

#include "loadseg/controller.hpp"
#include "loadseg/data.hpp"
#include "loadseg/losses.hpp"
#include "loadseg/metrics.hpp"
#include "loadseg/models.hpp"

namespace loadseg {

class AdversarialTrainer : public TrainerHooks {
public:
    struct DiscRunStats {
        size_t real_pairs = 0;
        size_t fake_pairs = 0;
        int epochs = 0;
        double holdout_accuracy = 0.0;
        bool hit_epoch_cap = false;
    };

    AdversarialTrainer(SegmentorModel segmentor, DiscriminatorModel discriminator, Dataset train,
                       Dataset holdout, ControllerConfig config);

    void adversarial_tick() override;
    double evaluate_holdout() override;
    SnapshotHandle snapshot_live(SnapTag tag) override;
    void restore_live(SnapshotHandle handle) override;
    MapSet generate_maps(SnapshotHandle handle, MapSetTag tag) override;
    void train_discriminator(const AggregationBuffer& buffer) override;

    SegmentorModel& segmentor() { return segmentor_; }
    const SegmentorModel& segmentor() const { return segmentor_; }
    const DiscriminatorModel& discriminator() const { return discriminator_; }
    const Dataset& train_data() const { return train_; }
    const Dataset& holdout_data() const { return holdout_; }

    const ModelSnapshot& snapshot_payload(SnapshotHandle handle) const;
    const DiscRunStats& last_disc_stats() const { return last_disc_stats_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    // One generator update on a fixed sample batch: hybrid loss (CE plus
    // lambda times the non-saturating adversarial term), SGD with momentum.
    // Exposed so stage-1 training and tests reuse the exact step.
    static double hybrid_batch_step(SegmentorModel& segmentor, const DiscriminatorModel& discriminator,
                                    const std::vector<Sample>& batch, double lambda, double lr,
                                    double momentum, std::vector<float>* pixel_weights = nullptr);

private:
    std::vector<Sample> draw_batch();
    double discriminator_holdout_accuracy(const std::vector<Tensor>& real_stacks,
                                          const std::vector<Tensor>& fake_stacks) const;

    SegmentorModel segmentor_;
    DiscriminatorModel discriminator_;
    Dataset train_;
    Dataset holdout_;
    ControllerConfig config_;
    std::unordered_map<SnapshotHandle, ModelSnapshot> snapshots_;
    uint64_t step_counter_ = 0;
    uint64_t disc_call_counter_ = 0;
    DiscRunStats last_disc_stats_;
    std::vector<std::string> warnings_;
};

}  // namespace loadseg
