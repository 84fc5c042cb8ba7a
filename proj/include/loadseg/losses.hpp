#pragma once

// Loss algebra: pixel-wise CE, the adversarial discriminator objective
// (minimization form), the non-saturating generator term, and their hybrid
// combination. Scalar versions take plain score lists; tape builders produce
// the differentiable graph used in training.

#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/data.hpp"
#include "loadseg/tape.hpp"
#include "loadseg/tensor.hpp"

namespace loadseg {

// Scores are clipped to [kScoreEps, 1-kScoreEps] before any log.
inline constexpr double kScoreEps = 1e-7;

struct LossValue {
    double total = 0.0;
    double pixel = 0.0;
    double adversarial = 0.0;
};

// Mean over non-ignored pixels of -log(softmax probability of the true class).
LossValue pixel_ce(const Tensor& logits, const LabelMap& target, int ignore_index = -1);

// Minimized by D: -[ sum_real log(s) + fake_weight * sum_fake log(1-s) ].
// fake_weight = 1/|B| balances the fake mass against the single real set.
LossValue discriminator_loss(const std::vector<double>& real_scores,
                             const std::vector<double>& fake_scores, double fake_weight);

// Non-saturating generator term: -sum log(s).
LossValue generator_adversarial_term(const std::vector<double>& fake_scores);

// pixel_ce + lambda * generator_adversarial_term, breakdown retained.
LossValue hybrid_generator_loss(const Tensor& logits, const LabelMap& target,
                                const std::vector<double>& fake_scores, double lambda);

// ---- tape builders ----

// -log(clamp(score)) for a scalar score node.
template <typename T>
typename TapeT<T>::NodeId real_score_loss_node(TapeT<T>& tape, typename TapeT<T>::NodeId score) {
    auto c = tape.clamp(score, static_cast<T>(kScoreEps), static_cast<T>(1.0 - kScoreEps));
    return tape.affine(tape.log(c), T{-1}, T{0});
}

// -log(clamp(1 - score)).
template <typename T>
typename TapeT<T>::NodeId fake_score_loss_node(TapeT<T>& tape, typename TapeT<T>::NodeId score) {
    auto one_minus = tape.affine(score, T{-1}, T{1});
    auto c = tape.clamp(one_minus, static_cast<T>(kScoreEps), static_cast<T>(1.0 - kScoreEps));
    return tape.affine(tape.log(c), T{-1}, T{0});
}

// Same as generator_adversarial_term for one score.
template <typename T>
typename TapeT<T>::NodeId generator_adversarial_node(TapeT<T>& tape, typename TapeT<T>::NodeId score) {
    return real_score_loss_node(tape, score);
}

}  // namespace loadseg
