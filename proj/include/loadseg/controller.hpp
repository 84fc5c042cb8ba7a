#pragma once

// The lookahead training controller: cycles of adversarial training with
// divergence patience, dynamic peak finding, rollback to the start snapshot,
// buffer aggregation, and per-cycle discriminator retraining.
//
// The controller is a pure state machine over hold-out mIoU values and
// snapshot handles; all training work happens behind TrainerHooks so the
// same logic drives both the real trainer and scripted replay doubles.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loadseg/buffer.hpp"
#include "loadseg/common.hpp"
#include "loadseg/models.hpp"

namespace loadseg {

struct DiscriminatorStopConfig {
    double target_accuracy = 0.95;  // hold-out real-vs-fake accuracy
    int patience_epochs = 3;        // stop after this many epochs without improvement
    int max_epochs = 20;            // hard cap
    int batch_size = 16;
};

struct ControllerConfig {
    double beta_l = 0.05;        // allowed mIoU drop inside a cycle
    double beta_u = 0.001;       // required mIoU gain for a peak
    int gamma_max = 50;          // divergence patience (ticks per cycle)
    int omega_max = 5;           // peak-finder patience
    int psi_max = 50;            // cycles without a new peak before stopping
    int buffer_max = 3;          // map set cap
    double lambda = 1.0;         // adversarial weight in the hybrid loss
    double lr_adversarial = 5e-6;
    double momentum = 0.95;
    double lr_discriminator = 0.01;
    int steps_per_tick = 10;     // generator updates between hold-out evaluations
    int batch_size = 5;          // generator mini-batch
    int max_total_ticks = 0;     // safety valve; 0 = unlimited
    DiscriminatorStopConfig disc;
    uint64_t seed = 0;

    void validate() const;
};

enum class EventKind : uint8_t {
    eval = 1,
    peak = 2,
    dynamic_restart = 3,
    cycle_end = 4,
    flush = 5,
    append = 6,
    remove = 7,  // serialized as "delete"
    disc_train = 8,
};

const char* event_kind_name(EventKind kind);
std::optional<EventKind> event_kind_from_name(const std::string& name);

struct ControllerEvent {
    int tick = 0;   // global tick index; 0 is initialization
    int cycle = 0;  // psi at emission time
    EventKind kind = EventKind::eval;
    double mu = 0.0;
    double mu_s = 0.0;
    double mu_star = 0.0;
    int gamma = 0;
    int omega = 0;
    int buffer_size = 0;
};

using EventLog = std::vector<ControllerEvent>;

enum class CycleTermination : uint8_t { divergence_floor = 1, patience = 2, tick_budget = 3 };

const char* cycle_termination_name(CycleTermination t);

struct CycleReport {
    int index = 0;          // sequential cycle number
    int psi_at_start = 0;
    CycleTermination terminated_by = CycleTermination::patience;
    bool peak_found = false;          // mu_star exceeded the cycle's mu_0
    std::vector<double> trajectory;   // mu after each tick
    std::vector<BufferOp> buffer_ops; // operations applied at cycle end
};

// Snapshot handles are opaque to the controller; the hooks own storage.
using SnapshotHandle = uint64_t;

class TrainerHooks {
public:
    virtual ~TrainerHooks() = default;

    // steps_per_tick generator updates with the discriminator frozen.
    virtual void adversarial_tick() = 0;

    // Hold-out mIoU of the live generator.
    virtual double evaluate_holdout() = 0;

    virtual SnapshotHandle snapshot_live(SnapTag tag) = 0;

    // Byte-restore the live generator; optimizer slots reset.
    virtual void restore_live(SnapshotHandle handle) = 0;

    // Hard-argmax predictions of the snapshot model over all training images.
    virtual MapSet generate_maps(SnapshotHandle handle, MapSetTag tag) = 0;

    virtual void train_discriminator(const AggregationBuffer& buffer) = 0;
};

struct ControllerState {
    int psi = 0;
    int gamma = 0;
    int omega = 0;
    int tick = 0;          // global tick counter
    double mu_0 = 0.0;     // mIoU at the very start of the current cycle
    double mu_s = 0.0;     // current start mIoU
    double mu = 0.0;       // current mIoU
    double mu_star = 0.0;  // best mIoU seen
    int buffer_size = 0;   // mirrored by run_load for event records
    SnapshotHandle g_start = 0;
    std::optional<SnapshotHandle> g_best;
    std::optional<SnapshotHandle> g_end;
    EventLog events;
};

struct LoadResult {
    SnapshotHandle best;      // peak snapshot if any peak was found, else g0
    bool peak_ever_found = false;
    double best_miou = 0.0;
    double initial_miou = 0.0;
    std::vector<CycleReport> cycles;
    EventLog events;
    // Set when a cycle aborted on a numeric failure; the result still carries
    // the best model seen so far.
    std::optional<std::string> abort_message;
};

// One inner cycle (the while loop of the detailed algorithm): repeats
// tick/evaluate with peak bookkeeping and dynamic restarts until the mIoU
// falls to mu_s - beta_l or gamma reaches its limit. The generator must be
// at g_start on entry; state.mu_0 must already be set by the caller.
CycleReport run_cycle(ControllerState& state, const ControllerConfig& config, TrainerHooks& hooks);

// Full outer loop: initializes the buffer from the live model, trains the
// discriminator, and runs cycles until psi_max cycles pass without a new
// peak. The live generator is left at the returned best model.
LoadResult run_load(const ControllerConfig& config, TrainerHooks& hooks);

}  // namespace loadseg
