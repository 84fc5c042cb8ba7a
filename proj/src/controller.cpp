#include "loadseg/controller.hpp"

namespace loadseg {

void ControllerConfig::validate() const {
    if (!(beta_l > beta_u) || !(beta_u > 0))
        throw ContractViolation("controller: need beta_l > beta_u > 0");
    if (gamma_max < 1 || omega_max < 1 || psi_max < 1)
        throw ContractViolation("controller: patience and cycle limits must be >= 1");
    if (buffer_max < 2) throw ContractViolation("controller: buffer_max must be >= 2");
    if (lr_adversarial <= 0 || lr_discriminator <= 0)
        throw ContractViolation("controller: learning rates must be positive");
    if (momentum < 0 || momentum >= 1) throw ContractViolation("controller: momentum must be in [0,1)");
    if (lambda < 0) throw ContractViolation("controller: lambda must be nonnegative");
    if (steps_per_tick < 1 || batch_size < 1)
        throw ContractViolation("controller: steps_per_tick and batch_size must be >= 1");
    if (max_total_ticks < 0) throw ContractViolation("controller: max_total_ticks must be >= 0");
    if (disc.target_accuracy <= 0 || disc.target_accuracy > 1)
        throw ContractViolation("controller: discriminator accuracy target must be in (0,1]");
    if (disc.patience_epochs < 1 || disc.max_epochs < 1 || disc.batch_size < 1)
        throw ContractViolation("controller: discriminator stop settings must be >= 1");
}

const char* event_kind_name(EventKind kind) {
    switch (kind) {
        case EventKind::eval: return "eval";
        case EventKind::peak: return "peak";
        case EventKind::dynamic_restart: return "dynamic-restart";
        case EventKind::cycle_end: return "cycle-end";
        case EventKind::flush: return "flush";
        case EventKind::append: return "append";
        case EventKind::remove: return "delete";
        case EventKind::disc_train: return "disc-train";
    }
    return "?";
}

std::optional<EventKind> event_kind_from_name(const std::string& name) {
    for (EventKind k : {EventKind::eval, EventKind::peak, EventKind::dynamic_restart,
                        EventKind::cycle_end, EventKind::flush, EventKind::append,
                        EventKind::remove, EventKind::disc_train})
        if (name == event_kind_name(k)) return k;
    return std::nullopt;
}

const char* cycle_termination_name(CycleTermination t) {
    switch (t) {
        case CycleTermination::divergence_floor: return "divergence-floor";
        case CycleTermination::patience: return "patience";
        case CycleTermination::tick_budget: return "tick-budget";
    }
    return "?";
}

namespace {

void emit(ControllerState& s, EventKind kind) {
    s.events.push_back({s.tick, s.psi, kind, s.mu, s.mu_s, s.mu_star, s.gamma, s.omega,
                        s.buffer_size});
}

bool tick_budget_hit(const ControllerState& s, const ControllerConfig& c) {
    return c.max_total_ticks > 0 && s.tick >= c.max_total_ticks;
}

}  // namespace

CycleReport run_cycle(ControllerState& state, const ControllerConfig& config, TrainerHooks& hooks) {
    CycleReport report;
    report.psi_at_start = state.psi;

    state.gamma = 0;
    state.omega = 0;
    bool budget_stop = false;

    while (state.mu_s - config.beta_l < state.mu && state.gamma < config.gamma_max) {
        if (tick_budget_hit(state, config)) {
            budget_stop = true;
            break;
        }
        hooks.adversarial_tick();
        ++state.tick;
        state.mu = hooks.evaluate_holdout();
        if (state.mu < 0.0 || state.mu > 1.0)
            throw NumericFailure("controller: hold-out mIoU outside [0,1]");
        report.trajectory.push_back(state.mu);
        emit(state, EventKind::eval);
        if (state.mu > state.mu_s + config.beta_u) {
            if (state.mu > state.mu_star) {
                state.mu_star = state.mu;
                state.g_best = hooks.snapshot_live(SnapTag::peak);
                emit(state, EventKind::peak);
            }
            if (state.omega > config.omega_max) {
                state.mu_s = state.mu;
                state.g_start = hooks.snapshot_live(SnapTag::start);
                state.omega = 0;
                state.gamma = 0;
                emit(state, EventKind::dynamic_restart);
            }
            ++state.omega;
        }
        ++state.gamma;
    }

    state.g_end = hooks.snapshot_live(SnapTag::ending);
    if (state.mu <= state.mu_s - config.beta_l)
        report.terminated_by = CycleTermination::divergence_floor;
    else if (state.gamma >= config.gamma_max)
        report.terminated_by = CycleTermination::patience;
    else if (budget_stop)
        report.terminated_by = CycleTermination::tick_budget;
    else
        report.terminated_by = CycleTermination::patience;
    report.peak_found = state.mu_star > state.mu_0;
    emit(state, EventKind::cycle_end);
    return report;
}

LoadResult run_load(const ControllerConfig& config, TrainerHooks& hooks) {
    config.validate();

    ControllerState state;
    state.mu = hooks.evaluate_holdout();
    state.mu_s = state.mu;
    state.mu_star = state.mu;
    state.g_start = hooks.snapshot_live(SnapTag::start);
    const SnapshotHandle g0 = state.g_start;
    const double initial_miou = state.mu;
    emit(state, EventKind::eval);

    AggregationBuffer buffer(config.buffer_max);
    buffer.init(hooks.generate_maps(state.g_start, MapSetTag::initial));
    state.buffer_size = static_cast<int>(buffer.size());
    emit(state, EventKind::append);
    hooks.train_discriminator(buffer);
    emit(state, EventKind::disc_train);

    LoadResult result;
    int cycle_index = 0;

    while (state.psi < config.psi_max) {
        state.mu_0 = state.mu_s;  // the cycle's fixed reference point
        state.mu = state.mu_s;    // the live model sits at g_start
        CycleReport report;
        try {
            report = run_cycle(state, config, hooks);
        } catch (const NumericFailure& e) {
            result.abort_message = e.what();
            break;
        }
        report.index = cycle_index++;

        MapSet ending_maps = hooks.generate_maps(*state.g_end, MapSetTag::ending);
        if (report.peak_found) {
            state.mu_s = state.mu_star;
            state.g_start = *state.g_best;
            MapSet peak_maps = hooks.generate_maps(*state.g_best, MapSetTag::peak);
            const BufferOp op = buffer.aggregate(&peak_maps, std::move(ending_maps));
            state.buffer_size = static_cast<int>(buffer.size());
            report.buffer_ops.push_back(op);
            emit(state, EventKind::flush);
            state.psi = 0;
            hooks.restore_live(state.g_start);
        } else {
            const BufferOp op = buffer.aggregate(nullptr, std::move(ending_maps));
            state.buffer_size = static_cast<int>(buffer.size());
            report.buffer_ops.push_back(op);
            if (op == BufferOp::remove_then_append) emit(state, EventKind::remove);
            emit(state, EventKind::append);
            ++state.psi;
            hooks.restore_live(state.g_start);
        }
        hooks.train_discriminator(buffer);
        emit(state, EventKind::disc_train);
        const bool budget_stop = report.terminated_by == CycleTermination::tick_budget;
        result.cycles.push_back(std::move(report));
        if (budget_stop || tick_budget_hit(state, config)) break;
    }

    result.peak_ever_found = state.g_best.has_value();
    result.best = result.peak_ever_found ? *state.g_best : g0;
    result.best_miou = state.mu_star;
    result.initial_miou = initial_miou;
    hooks.restore_live(result.best);
    result.events = std::move(state.events);
    return result;
}

}  // namespace loadseg
