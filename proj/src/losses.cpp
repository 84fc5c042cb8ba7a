#include "loadseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace loadseg {

namespace {

double clipped(double s) { return std::min(1.0 - kScoreEps, std::max(kScoreEps, s)); }

void check_scores(const std::vector<double>& scores, const char* who) {
    for (double s : scores)
        if (!(s > 0.0) || !(s < 1.0))
            throw ContractViolation(std::string(who) + ": score outside (0,1)");
}

}  // namespace

LossValue pixel_ce(const Tensor& logits, const LabelMap& target, int ignore_index) {
    if (logits.shape.size() != 3) throw ContractViolation("pixel_ce: logits must be H x W x K");
    const int H = logits.shape[0], W = logits.shape[1], K = logits.shape[2];
    if (target.height != H || target.width != W)
        throw ContractViolation("pixel_ce: target shape mismatch");
    double acc = 0.0;
    size_t valid = 0;
    const size_t rows = static_cast<size_t>(H) * W;
    for (size_t r = 0; r < rows; ++r) {
        const int t = target.classes[r];
        if (t == ignore_index) continue;
        if (t >= K) throw ContractViolation("pixel_ce: target class out of range");
        const float* in = logits.data() + r * K;
        double m = static_cast<double>(in[0]);
        for (int c = 1; c < K; ++c) m = std::max(m, static_cast<double>(in[c]));
        double z = 0.0;
        for (int c = 0; c < K; ++c) z += std::exp(static_cast<double>(in[c]) - m);
        const double p = std::exp(static_cast<double>(in[t]) - m) / z;
        acc += -std::log(p);
        ++valid;
    }
    if (valid == 0) throw ContractViolation("pixel_ce: every pixel ignored");
    LossValue out;
    out.pixel = acc / static_cast<double>(valid);
    out.total = out.pixel;
    return out;
}

LossValue discriminator_loss(const std::vector<double>& real_scores,
                             const std::vector<double>& fake_scores, double fake_weight) {
    if (fake_weight <= 0) throw ContractViolation("discriminator_loss: fake_weight must be positive");
    check_scores(real_scores, "discriminator_loss");
    check_scores(fake_scores, "discriminator_loss");
    double acc = 0.0;
    for (double s : real_scores) acc -= std::log(clipped(s));
    for (double s : fake_scores) acc -= fake_weight * std::log(clipped(1.0 - s));
    LossValue out;
    out.adversarial = acc;
    out.total = acc;
    return out;
}

LossValue generator_adversarial_term(const std::vector<double>& fake_scores) {
    check_scores(fake_scores, "generator_adversarial_term");
    double acc = 0.0;
    for (double s : fake_scores) acc -= std::log(clipped(s));
    LossValue out;
    out.adversarial = acc;
    out.total = acc;
    return out;
}

LossValue hybrid_generator_loss(const Tensor& logits, const LabelMap& target,
                                const std::vector<double>& fake_scores, double lambda) {
    if (lambda < 0) throw ContractViolation("hybrid_generator_loss: lambda must be nonnegative");
    LossValue out = pixel_ce(logits, target);
    if (lambda > 0 || !fake_scores.empty()) {
        out.adversarial = generator_adversarial_term(fake_scores).adversarial;
    }
    out.total = out.pixel + lambda * out.adversarial;
    return out;
}

}  // namespace loadseg
