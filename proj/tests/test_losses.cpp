#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loadseg/losses.hpp"
#include "loadseg/models.hpp"

using namespace loadseg;

namespace {

// Independent brute-force CE: per pixel, softmax probability of the true
// class, then -log p; plain mean in row-major order.
double brute_force_ce(const Tensor& logits, const LabelMap& target) {
    const int K = logits.shape[2];
    double acc = 0.0;
    size_t count = 0;
    for (size_t r = 0; r < target.classes.size(); ++r) {
        const float* in = logits.data() + r * K;
        double m = static_cast<double>(in[0]);
        for (int c = 1; c < K; ++c) m = std::max(m, static_cast<double>(in[c]));
        double z = 0.0;
        for (int c = 0; c < K; ++c) z += std::exp(static_cast<double>(in[c]) - m);
        acc += -std::log(std::exp(static_cast<double>(in[target.classes[r]]) - m) / z);
        ++count;
    }
    return acc / static_cast<double>(count);
}

LabelMap map_of(int h, int w, std::vector<uint8_t> classes) {
    LabelMap m;
    m.height = h;
    m.width = w;
    m.classes = std::move(classes);
    return m;
}

}  // namespace

TEST_CASE("pixel_ce: perfect prediction gives zero") {
    // Huge margin on the true class drives -log p to exactly 0 in double.
    Tensor logits({1, 2, 2}, {60.0f, -60.0f, -60.0f, 60.0f});
    const LabelMap target = map_of(1, 2, {0, 1});
    CHECK(pixel_ce(logits, target).total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pixel_ce: hand-computed two-pixel case") {
    // Pixel 1: probabilities (0.5, 0.5), true class 0. Pixel 2: (0.25, 0.75),
    // true class 1. Expected mean: (-ln 0.5 - ln 0.75) / 2.
    const float a = std::log(0.25f), b = std::log(0.75f);
    Tensor logits({1, 2, 2}, {0.0f, 0.0f, a, b});
    const LabelMap target = map_of(1, 2, {0, 1});
    const double expected = (-std::log(0.5) - std::log(0.75)) / 2.0;
    CHECK(pixel_ce(logits, target).total == doctest::Approx(expected).epsilon(1e-6));
    CHECK(expected == doctest::Approx(0.4904).epsilon(1e-4));
}

TEST_CASE("pixel_ce: ignore handling") {
    Tensor logits({1, 2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    const LabelMap target = map_of(1, 2, {0, 1});
    SUBCASE("all ignored is an error") {
        CHECK_THROWS_AS(pixel_ce(logits, map_of(1, 2, {2, 2}), 2), ContractViolation);
    }
    SUBCASE("ignored pixels drop out of the mean") {
        const double partial = pixel_ce(logits, map_of(1, 2, {0, 2}), 2).total;
        // One remaining pixel: mean equals that pixel's own -log p.
        Tensor one({1, 1, 2}, {1.0f, 0.0f});
        CHECK(partial == doctest::Approx(pixel_ce(one, map_of(1, 1, {0})).total).epsilon(1e-12));
    }
    SUBCASE("target class out of range") {
        CHECK_THROWS_AS(pixel_ce(logits, map_of(1, 2, {0, 3})), ContractViolation);
    }
}

TEST_CASE("pixel_ce equals brute force exactly on random 8x8 instances") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int K = rng.range_int(2, 5);
        Tensor logits({8, 8, K});
        for (float& v : logits.v) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        LabelMap target = map_of(8, 8, std::vector<uint8_t>(64));
        for (auto& c : target.classes) c = static_cast<uint8_t>(rng.below(K));
        CHECK(pixel_ce(logits, target).total == brute_force_ce(logits, target));
    }
}

TEST_CASE("discriminator_loss: hand-checked values") {
    SUBCASE("both scores one half, weight one") {
        const double v = discriminator_loss({0.5}, {0.5}, 1.0).total;
        CHECK(v == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("perfect discriminator drives the loss to zero") {
        const double v = discriminator_loss({1.0 - 1e-9}, {1e-9}, 1.0).total;
        CHECK(v == doctest::Approx(0.0).epsilon(1e-5));
    }
    SUBCASE("fake weight 1/|B| balances three fakes against one real") {
        const double three = discriminator_loss({}, {0.5, 0.5, 0.5}, 1.0 / 3.0).total;
        const double one = discriminator_loss({}, {0.5}, 1.0).total;
        CHECK(three == doctest::Approx(one).epsilon(1e-9));
        CHECK(one == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("score bounds enforced") {
        CHECK_THROWS_AS(discriminator_loss({1.0}, {0.5}, 1.0), ContractViolation);
        CHECK_THROWS_AS(discriminator_loss({0.5}, {0.0}, 1.0), ContractViolation);
        CHECK_THROWS_AS(discriminator_loss({0.5}, {0.5}, 0.0), ContractViolation);
    }
}

TEST_CASE("discriminator_loss: invariant under fake-set duplication") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> reals(3), fakes(4);
        for (auto& s : reals) s = rng.uniform(0.05, 0.95);
        for (auto& s : fakes) s = rng.uniform(0.05, 0.95);
        const size_t B = 1 + rng.below(3);
        const double base = discriminator_loss(reals, fakes, 1.0 / static_cast<double>(B)).total;
        const size_t k = 2 + rng.below(3);
        std::vector<double> dup;
        for (size_t i = 0; i < k; ++i) dup.insert(dup.end(), fakes.begin(), fakes.end());
        const double scaled =
            discriminator_loss(reals, dup, 1.0 / static_cast<double>(B * k)).total;
        CHECK(scaled == doctest::Approx(base).epsilon(1e-6));
    }
}

TEST_CASE("generator_adversarial_term: values and monotonicity") {
    CHECK(generator_adversarial_term({1.0 - 1e-9}).total == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(generator_adversarial_term({0.5}).total == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(generator_adversarial_term({0.5, 0.5}).total ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));

    // Strictly decreasing in every score: pushing a score up always helps.
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const double s = rng.uniform(0.01, 0.98);
        const double d = rng.uniform(1e-4, 0.99 - s);
        CHECK(generator_adversarial_term({s + d}).total < generator_adversarial_term({s}).total);
    }
    CHECK_THROWS_AS(generator_adversarial_term({1.0}), ContractViolation);
}

TEST_CASE("hybrid loss: breakdown and composition") {
    Tensor logits({1, 2, 2}, {60.0f, -60.0f, -60.0f, 60.0f});
    const LabelMap target = map_of(1, 2, {0, 1});

    SUBCASE("lambda zero equals pixel CE exactly") {
        const LossValue h = hybrid_generator_loss(logits, target, {0.3}, 0.0);
        const LossValue ce = pixel_ce(logits, target);
        CHECK(h.total == ce.total);
        CHECK(h.pixel == ce.pixel);
    }
    SUBCASE("perfect prediction with fake score one half gives ln 2") {
        const LossValue h = hybrid_generator_loss(logits, target, {0.5}, 1.0);
        CHECK(h.total == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("lambda 2 with the hand-checked components") {
        const float a = std::log(0.25f), b = std::log(0.75f);
        Tensor lo({1, 2, 2}, {0.0f, 0.0f, a, b});
        const LossValue h = hybrid_generator_loss(lo, target, {0.5}, 2.0);
        CHECK(h.total == doctest::Approx(0.49040774 + 2.0 * 0.69314718).epsilon(1e-5));
        CHECK(h.total == doctest::Approx(1.8766).epsilon(1e-3));
    }
    SUBCASE("breakdown recomposes within 1e-6") {
        Rng rng(12);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor lo({2, 2, 3});
            for (float& v : lo.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
            LabelMap t = map_of(2, 2, {0, 1, 2, 1});
            std::vector<double> scores(3);
            for (auto& s : scores) s = rng.uniform(0.05, 0.95);
            const double lambda = rng.uniform(0.0, 3.0);
            const LossValue h = hybrid_generator_loss(lo, t, scores, lambda);
            CHECK(h.total == doctest::Approx(h.pixel + lambda * h.adversarial).epsilon(1e-6));
        }
    }
}

TEST_CASE("tape loss builders agree with the scalar losses") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const double s = rng.uniform(0.02, 0.98);
        Tape tape;
        auto node = tape.constant(Tensor({1}, {static_cast<float>(s)}));
        const double real = tape.value(real_score_loss_node(tape, node)).v[0];
        const double fake = tape.value(fake_score_loss_node(tape, node)).v[0];
        CHECK(real == doctest::Approx(-std::log(s)).epsilon(1e-5));
        CHECK(fake == doctest::Approx(-std::log(1.0 - s)).epsilon(1e-5));
    }
}
