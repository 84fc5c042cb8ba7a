#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "loadseg/experiment.hpp"

using namespace loadseg;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(LOADSEG_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "";
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("usage errors exit nonzero") {
    CHECK(run("") != 0);
    CHECK(run("frobnicate") != 0);
    CHECK(run("train-load") != 0);  // --config is required
    CHECK(run("eval --split holdout") != 0);
    CHECK(run("gen-data --bogus-flag 1") != 0);
}

TEST_CASE("bad config keys exit nonzero with a message") {
    {
        std::ofstream f("cli_bad.cfg");
        f << "dataset.wibble = 3\n";
    }
    CHECK(run("gen-data --config cli_bad.cfg --out cli_tmp") != 0);
    CHECK(slurp("cli_stderr.txt").find("unknown key") != std::string::npos);
    std::remove("cli_bad.cfg");
}

TEST_CASE("gen-data is byte-deterministic per seed") {
    {
        std::ofstream f("cli_gen.cfg");
        f << "dataset.samples = 20\ndataset.height = 16\ndataset.width = 16\n";
    }
    REQUIRE(run("gen-data --config cli_gen.cfg --seed 7 --out cli_gen_a") == 0);
    REQUIRE(run("gen-data --config cli_gen.cfg --seed 7 --out cli_gen_b") == 0);
    for (const char* name : {"train.ldsd", "val.ldsd", "holdout.ldsd"}) {
        const std::string a = slurp(std::string("cli_gen_a/") + name);
        const std::string b = slurp(std::string("cli_gen_b/") + name);
        REQUIRE(!a.empty());
        CHECK(a == b);
    }
    REQUIRE(run("gen-data --config cli_gen.cfg --seed 8 --out cli_gen_c") == 0);
    CHECK(slurp("cli_gen_a/train.ldsd") != slurp("cli_gen_c/train.ldsd"));
    CHECK(slurp("cli_gen_a/manifest.txt").find("config.seed = 7") != std::string::npos);
    std::remove("cli_gen.cfg");
    fs::remove_all("cli_gen_a");
    fs::remove_all("cli_gen_b");
    fs::remove_all("cli_gen_c");
}

TEST_CASE("eval on a hand-built oracle checkpoint prints miou=1.000000") {
    // Color-coded dataset; a center-tap conv reads the class off the colors.
    {
        std::ofstream f("cli_eval.cfg");
        f << "dataset.kind = colors\n";
        f << "dataset.samples = 30\ndataset.height = 16\ndataset.width = 16\ndataset.classes = 4\n";
    }
    SegmentorModel oracle;
    oracle.arch = {ModelKind::segmentor, 16, 16, 4, {4}};
    Tensor w0({3, 3, 3, 4});
    for (int c = 0; c < 3; ++c) w0.v[((1 * 3 + 1) * 3 + c) * 4 + (c + 1)] = 12.0f;
    Tensor b0({4});
    b0.v[0] = 4.0f;
    oracle.params.add("conv0.w", w0);
    oracle.params.add("conv0.b", b0);
    Tensor wh({1, 1, 4, 4});
    for (int c = 0; c < 4; ++c) wh.v[c * 4 + c] = 1.0f;
    oracle.params.add("head.w", wh);
    oracle.params.add("head.b", Tensor({4}));
    save_checkpoint(oracle.arch, oracle.params, "cli_oracle.bin");

    REQUIRE(run("eval --config cli_eval.cfg --checkpoint cli_oracle.bin --split holdout") == 0);
    CHECK(slurp("cli_stdout.txt") == "miou=1.000000\n");

    CHECK(run("eval --config cli_eval.cfg --checkpoint cli_oracle.bin --split nope") != 0);
    CHECK(run("eval --config cli_eval.cfg --checkpoint missing.bin --split val") != 0);
    std::remove("cli_eval.cfg");
    std::remove("cli_oracle.bin");
}

TEST_CASE("export-curve reproduces the library CSV byte for byte") {
    EventLog log = {{0, 0, EventKind::eval, 0.75, 0.75, 0.75, 0, 0, 0},
                    {1, 0, EventKind::eval, 0.7012345, 0.75, 0.75, 0, 0, 1},
                    {1, 0, EventKind::cycle_end, 0.7012345, 0.75, 0.75, 1, 0, 1}};
    write_event_log(log, "cli_events.txt");
    export_convergence_csv(log, "cli_expected.csv");

    REQUIRE(run("export-curve --events cli_events.txt --out cli_actual.csv") == 0);
    CHECK(slurp("cli_actual.csv") == slurp("cli_expected.csv"));

    REQUIRE(run("export-curve --events cli_events.txt --out cli_actual2.csv") == 0);
    CHECK(slurp("cli_actual2.csv") == slurp("cli_actual.csv"));

    CHECK(run("export-curve --events missing_events.txt --out nope.csv") != 0);
    for (const char* p : {"cli_events.txt", "cli_expected.csv", "cli_actual.csv", "cli_actual2.csv"})
        std::remove(p);
}

TEST_CASE("train-baseline then train-load round trip at miniature scale") {
    {
        std::ofstream f("cli_train.cfg");
        f << "seed = 5\n";
        f << "dataset.samples = 30\ndataset.height = 16\ndataset.width = 16\ndataset.classes = 3\n";
        f << "stage1.epochs = 2\nstage1.lr = 0.001\nstage1.batch_size = 8\n";
        f << "model.segmentor_channels = 6\nmodel.discriminator_channels = 8,8\n";
        f << "controller.gamma_max = 2\ncontroller.psi_max = 1\ncontroller.steps_per_tick = 1\n";
        f << "controller.batch_size = 4\ncontroller.disc_max_epochs = 1\n";
        f << "controller.max_total_ticks = 6\n";
    }
    REQUIRE(run("train-baseline --config cli_train.cfg --out cli_train_out") == 0);
    CHECK(fs::exists("cli_train_out/baseline.bin"));
    CHECK(fs::exists("cli_train_out/stage1_curve.csv"));
    CHECK(slurp("cli_train_out/manifest.txt").find("result.baseline_val_miou") != std::string::npos);

    REQUIRE(run("train-load --config cli_train.cfg --out cli_train_out") == 0);
    CHECK(fs::exists("cli_train_out/best.bin"));
    CHECK(fs::exists("cli_train_out/events.txt"));
    CHECK(fs::exists("cli_train_out/curve.csv"));

    // Determinism check: identical run, byte-identical checkpoint.
    REQUIRE(run("train-baseline --config cli_train.cfg --out cli_train_out2") == 0);
    CHECK(slurp("cli_train_out/baseline.bin") == slurp("cli_train_out2/baseline.bin"));

    std::remove("cli_train.cfg");
    fs::remove_all("cli_train_out");
    fs::remove_all("cli_train_out2");
}
