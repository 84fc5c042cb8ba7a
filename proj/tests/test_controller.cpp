#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "controller_scenarios.hpp"
#include "loadseg/buffer.hpp"
#include "loadseg/controller.hpp"

using namespace loadseg;
using namespace loadseg::testing;

namespace {

MapSet make_set(uint64_t id, MapSetTag tag, size_t count = 3) {
    MapSet s;
    s.snapshot_id = id;
    s.tag = tag;
    LabelMap m;
    m.height = 1;
    m.width = 1;
    m.classes = {0};
    s.maps.assign(count, m);
    return s;
}

bool events_equal(const ControllerEvent& a, const ControllerEvent& b) {
    return a.tick == b.tick && a.cycle == b.cycle && a.kind == b.kind && a.mu == b.mu &&
           a.mu_s == b.mu_s && a.mu_star == b.mu_star && a.gamma == b.gamma && a.omega == b.omega &&
           a.buffer_size == b.buffer_size;
}

}  // namespace

TEST_CASE("buffer init holds exactly the initial set") {
    AggregationBuffer buffer(3);
    buffer.init(make_set(1, MapSetTag::initial, 200));
    CHECK(buffer.size() == 1);
    CHECK(buffer.at(0).maps.size() == 200);
    CHECK(buffer.at(0).tag == MapSetTag::initial);

    CHECK_THROWS_AS(buffer.init(make_set(2, MapSetTag::initial, 0)), ContractViolation);
    CHECK_THROWS_AS(AggregationBuffer(1), ContractViolation);
}

TEST_CASE("map_aggregate: flush, append, delete-then-append") {
    SUBCASE("peak present flushes to [peak, ending]") {
        AggregationBuffer buffer(3);
        buffer.init(make_set(1, MapSetTag::initial));
        buffer.aggregate(nullptr, make_set(2, MapSetTag::ending));
        const MapSet peak = make_set(3, MapSetTag::peak);
        CHECK(buffer.aggregate(&peak, make_set(4, MapSetTag::ending)) == BufferOp::flush);
        REQUIRE(buffer.size() == 2);
        CHECK(buffer.at(0).snapshot_id == 3);
        CHECK(buffer.at(1).snapshot_id == 4);
    }
    SUBCASE("no peak, not full: ending appended at the end") {
        AggregationBuffer buffer(3);
        buffer.init(make_set(1, MapSetTag::initial));
        CHECK(buffer.aggregate(nullptr, make_set(2, MapSetTag::ending)) == BufferOp::append);
        REQUIRE(buffer.size() == 2);
        CHECK(buffer.at(1).snapshot_id == 2);
    }
    SUBCASE("no peak, full: oldest ending set deleted, position 0 survives") {
        AggregationBuffer buffer(3);
        buffer.init(make_set(1, MapSetTag::initial));
        buffer.aggregate(nullptr, make_set(2, MapSetTag::ending));
        buffer.aggregate(nullptr, make_set(3, MapSetTag::ending));
        CHECK(buffer.aggregate(nullptr, make_set(4, MapSetTag::ending)) ==
              BufferOp::remove_then_append);
        REQUIRE(buffer.size() == 3);
        CHECK(buffer.at(0).snapshot_id == 1);  // never removed in the no-peak path
        CHECK(buffer.at(1).snapshot_id == 3);
        CHECK(buffer.at(2).snapshot_id == 4);
    }
    SUBCASE("invalid sets rejected") {
        AggregationBuffer buffer(3);
        buffer.init(make_set(1, MapSetTag::initial));
        CHECK_THROWS_AS(buffer.aggregate(nullptr, make_set(2, MapSetTag::peak)), ContractViolation);
        CHECK_THROWS_AS(buffer.aggregate(nullptr, make_set(2, MapSetTag::ending, 5)),
                        ContractViolation);
    }
}

TEST_CASE("buffer fuzz: 1000 random peak/no-peak sequences hold the invariants") {
    Rng rng(1234);
    for (int run = 0; run < 1000; ++run) {
        const int cap = 2 + static_cast<int>(rng.below(4));  // 2..5
        AggregationBuffer buffer(cap);
        uint64_t id = 1;
        buffer.init(make_set(id++, MapSetTag::initial));
        uint64_t head_id = 1;
        const int steps = 1 + static_cast<int>(rng.below(20));
        for (int step = 0; step < steps; ++step) {
            const bool peak = rng.below(4) == 0;
            if (peak) {
                const MapSet p = make_set(id++, MapSetTag::peak);
                buffer.aggregate(&p, make_set(id++, MapSetTag::ending));
                head_id = p.snapshot_id;
                CHECK(buffer.size() == 2);  // post-peak size is always 2
            } else {
                buffer.aggregate(nullptr, make_set(id++, MapSetTag::ending));
            }
            CHECK(buffer.size() >= 1);
            CHECK(buffer.size() <= static_cast<size_t>(cap));
            // Position 0 only ever replaced by a flush.
            CHECK(buffer.at(0).snapshot_id == head_id);
            CHECK((buffer.at(0).tag == MapSetTag::initial || buffer.at(0).tag == MapSetTag::peak));
            for (size_t i = 1; i < buffer.size(); ++i) CHECK(buffer.at(i).tag == MapSetTag::ending);
        }
    }
}

TEST_CASE("scripted scenarios reproduce the hand traces exactly") {
    for (const Scenario& scenario : all_scenarios()) {
        CAPTURE(scenario.name);
        ScriptedTrainer trainer(scenario.script);
        const LoadResult result = run_load(scenario.config, trainer);

        REQUIRE(result.events.size() == scenario.expected_events.size());
        for (size_t i = 0; i < result.events.size(); ++i) {
            CAPTURE(i);
            CAPTURE(event_kind_name(result.events[i].kind));
            CHECK(events_equal(result.events[i], scenario.expected_events[i]));
        }
        REQUIRE(trainer.ops().size() == scenario.expected_ops.size());
        for (size_t i = 0; i < trainer.ops().size(); ++i) {
            CAPTURE(i);
            CHECK(trainer.ops()[i] == scenario.expected_ops[i]);
        }
        CHECK(result.peak_ever_found == scenario.expect_peak);
        CHECK(trainer.position_of(result.best) == scenario.expected_best_position);
    }
}

TEST_CASE("cycle reports carry termination causes and trajectories") {
    {
        ScriptedTrainer trainer(scenario_patience().script);
        const LoadResult r = run_load(scenario_patience().config, trainer);
        REQUIRE(r.cycles.size() == 1);
        CHECK(r.cycles[0].terminated_by == CycleTermination::patience);
        CHECK(r.cycles[0].trajectory == std::vector<double>{0.49, 0.485, 0.48});
        CHECK_FALSE(r.cycles[0].peak_found);
    }
    {
        ScriptedTrainer trainer(scenario_divergence_floor().script);
        const LoadResult r = run_load(scenario_divergence_floor().config, trainer);
        REQUIRE(r.cycles.size() == 1);
        CHECK(r.cycles[0].terminated_by == CycleTermination::divergence_floor);
        CHECK(r.cycles[0].trajectory == std::vector<double>{0.48, 0.44});
    }
    {
        const Scenario s = scenario_full_topology();
        ScriptedTrainer trainer(s.script);
        const LoadResult r = run_load(s.config, trainer);
        REQUIRE(r.cycles.size() == 6);
        CHECK(r.cycles[0].terminated_by == CycleTermination::patience);
        CHECK(r.cycles[1].terminated_by == CycleTermination::divergence_floor);
        CHECK(r.cycles[1].peak_found);
        CHECK(r.cycles[5].buffer_ops == std::vector<BufferOp>{BufferOp::remove_then_append});
    }
}

TEST_CASE("controller replay is deterministic") {
    const Scenario s = scenario_full_topology();
    ScriptedTrainer a(s.script), b(s.script);
    const LoadResult ra = run_load(s.config, a);
    const LoadResult rb = run_load(s.config, b);
    REQUIRE(ra.events.size() == rb.events.size());
    for (size_t i = 0; i < ra.events.size(); ++i) CHECK(events_equal(ra.events[i], rb.events[i]));
    CHECK(a.ops() == b.ops());
}

TEST_CASE("never-improving trainer runs exactly psi_max cycles and returns g0") {
    ControllerConfig config;
    config.beta_l = 0.05;
    config.beta_u = 0.001;
    config.gamma_max = 2;
    config.omega_max = 5;
    config.psi_max = 2;
    config.buffer_max = 3;
    ScriptedTrainer trainer({0.50, 0.49, 0.48, 0.49, 0.48});
    const LoadResult r = run_load(config, trainer);
    CHECK(r.cycles.size() == 2);
    CHECK_FALSE(r.peak_ever_found);
    CHECK(trainer.position_of(r.best) == 0);
    CHECK(r.best_miou == 0.50);
    CHECK(r.initial_miou == 0.50);
}

TEST_CASE("config validation") {
    ControllerConfig config;
    config.beta_l = 0.001;
    config.beta_u = 0.05;  // inverted bounds
    CHECK_THROWS_AS(config.validate(), ContractViolation);
    config = ControllerConfig{};
    config.buffer_max = 1;
    CHECK_THROWS_AS(config.validate(), ContractViolation);
    config = ControllerConfig{};
    CHECK_NOTHROW(config.validate());
}

namespace {

// Scripted trainer whose tick blows up after a set number of calls.
class FailingTrainer : public ScriptedTrainer {
public:
    FailingTrainer(std::vector<double> script, int fail_after)
        : ScriptedTrainer(std::move(script)), fail_after_(fail_after) {}
    void adversarial_tick() override {
        if (ticks_++ >= fail_after_) throw NumericFailure("synthetic blow-up");
        ScriptedTrainer::adversarial_tick();
    }

private:
    int fail_after_;
    int ticks_ = 0;
};

}  // namespace

TEST_CASE("numeric failure aborts with the best model so far") {
    ControllerConfig config;
    config.gamma_max = 5;
    config.omega_max = 5;
    config.psi_max = 4;
    config.buffer_max = 3;
    // Peak at tick 1, floor at tick 2; the second cycle's tick throws.
    FailingTrainer trainer({0.50, 0.56, 0.44, 0.55}, 2);
    const LoadResult r = run_load(config, trainer);
    REQUIRE(r.abort_message.has_value());
    CHECK(r.abort_message->find("blow-up") != std::string::npos);
    CHECK(r.peak_ever_found);
    CHECK(trainer.position_of(r.best) == 1);  // the tick-1 peak survives
    CHECK(r.best_miou == 0.56);
}

TEST_CASE("tick budget stops a run that keeps finding peaks") {
    ControllerConfig config;
    config.beta_l = 0.05;
    config.beta_u = 0.001;
    config.gamma_max = 3;
    config.omega_max = 5;
    config.psi_max = 2;
    config.buffer_max = 3;
    config.max_total_ticks = 7;
    // Would rise indefinitely; the budget cuts it off mid-cycle.
    std::vector<double> script(64);
    for (size_t i = 0; i < script.size(); ++i) script[i] = 0.10 + 0.01 * static_cast<double>(i);
    ScriptedTrainer trainer(script);
    const LoadResult r = run_load(config, trainer);
    CHECK(!r.cycles.empty());
    CHECK(r.cycles.back().terminated_by == CycleTermination::tick_budget);
    CHECK(r.events.back().tick <= 7);
}
