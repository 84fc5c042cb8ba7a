#pragma once

// Named parameter collections with per-parameter optimizer slots, the two
// optimizers used for training, and the finite-difference gradient oracle.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/tape.hpp"
#include "loadseg/tensor.hpp"

namespace loadseg {

enum class SlotKind { none, momentum, adagrad };

template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;  // empty until populated
    TensorT<T> slot;  // velocity or accumulator, zero-initialized on first step
};

template <typename T>
class ParameterSetT {
public:
    void add(std::string name, TensorT<T> value) {
        for (const auto& p : items_)
            if (p.name == name) throw ContractViolation("parameter '" + name + "' already exists");
        ParamT<T> p;
        p.name = std::move(name);
        p.value = std::move(value);
        items_.push_back(std::move(p));
    }

    size_t size() const { return items_.size(); }
    ParamT<T>& at(size_t i) { return items_[i]; }
    const ParamT<T>& at(size_t i) const { return items_[i]; }

    ParamT<T>& find(const std::string& name) {
        for (auto& p : items_)
            if (p.name == name) return p;
        throw ContractViolation("no parameter named '" + name + "'");
    }

    void clear_grads() {
        for (auto& p : items_) p.grad = TensorT<T>();
    }

    void reset_slots() {
        for (auto& p : items_) p.slot = TensorT<T>();
        slot_kind_ = SlotKind::none;
    }

    SlotKind slot_kind() const { return slot_kind_; }
    void set_slot_kind(SlotKind k) { slot_kind_ = k; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& p : items_) n += p.value.size();
        return n;
    }

    bool all_finite() const {
        for (const auto& p : items_)
            if (!p.value.all_finite()) return false;
        return true;
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<ParamT<T>> items_;
    SlotKind slot_kind_ = SlotKind::none;
};

using ParameterSet = ParameterSetT<float>;

// Registers every parameter on the tape; returns node ids in set order.
template <typename T>
std::vector<typename TapeT<T>::NodeId> bind_parameters(TapeT<T>& tape, const ParameterSetT<T>& params,
                                                       bool trainable = true) {
    std::vector<typename TapeT<T>::NodeId> ids;
    ids.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i)
        ids.push_back(trainable ? tape.parameter(params.at(i).value) : tape.constant(params.at(i).value));
    return ids;
}

// Copies tape gradients back into the set (assign, not accumulate).
template <typename T>
void extract_gradients(const TapeT<T>& tape, const std::vector<typename TapeT<T>::NodeId>& ids,
                       ParameterSetT<T>& params) {
    if (ids.size() != params.size()) throw ContractViolation("extract_gradients: id count mismatch");
    for (size_t i = 0; i < params.size(); ++i) params.at(i).grad = tape.grad(ids[i]);
}

// v <- momentum*v + g ; w <- w - lr*v
template <typename T>
void sgd_momentum_step(ParameterSetT<T>& params, double lr, double momentum) {
    if (lr <= 0) throw ContractViolation("sgd: lr must be positive");
    if (momentum < 0 || momentum >= 1) throw ContractViolation("sgd: momentum must be in [0,1)");
    if (params.slot_kind() == SlotKind::adagrad)
        throw ContractViolation("sgd: parameter set carries adagrad slots");
    params.set_slot_kind(SlotKind::momentum);
    for (auto& p : params) {
        if (p.grad.size() != p.value.size())
            throw ContractViolation("sgd: missing gradient for '" + p.name + "'");
        if (p.slot.size() == 0) p.slot = TensorT<T>(p.value.shape);
        for (size_t i = 0; i < p.value.size(); ++i) {
            p.slot.v[i] = static_cast<T>(momentum) * p.slot.v[i] + p.grad.v[i];
            p.value.v[i] -= static_cast<T>(lr) * p.slot.v[i];
        }
    }
}

// acc <- acc + g^2 ; w <- w - lr*g/(sqrt(acc) + eps)
template <typename T>
void adagrad_step(ParameterSetT<T>& params, double lr, double epsilon = 1e-8) {
    if (lr <= 0) throw ContractViolation("adagrad: lr must be positive");
    if (epsilon <= 0) throw ContractViolation("adagrad: epsilon must be positive");
    if (params.slot_kind() == SlotKind::momentum)
        throw ContractViolation("adagrad: parameter set carries momentum slots");
    params.set_slot_kind(SlotKind::adagrad);
    for (auto& p : params) {
        if (p.grad.size() != p.value.size())
            throw ContractViolation("adagrad: missing gradient for '" + p.name + "'");
        if (p.slot.size() == 0) p.slot = TensorT<T>(p.value.shape);
        for (size_t i = 0; i < p.value.size(); ++i) {
            p.slot.v[i] += p.grad.v[i] * p.grad.v[i];
            p.value.v[i] -= static_cast<T>(lr) * p.grad.v[i] /
                            (std::sqrt(p.slot.v[i]) + static_cast<T>(epsilon));
        }
    }
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> per_param;
};

// Central finite differences against analytic gradients already stored in
// `params`. Samples up to max_coords coordinates per parameter. The loss
// closure must be deterministic; this is verified by double evaluation.
template <typename T>
GradCheckResult finite_difference_check(const std::function<double(const ParameterSetT<T>&)>& loss,
                                        ParameterSetT<T>& params, double step,
                                        size_t max_coords = 24, uint64_t seed = 0) {
    if (step <= 0) throw ContractViolation("finite_difference_check: step must be positive");
    const double f0 = loss(params);
    const double f1 = loss(params);
    if (f0 != f1)
        throw ContractViolation("finite_difference_check: closure is not deterministic");
    GradCheckResult result;
    Rng rng(derive_seed(seed, seed_purpose::kGradCheck));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params.at(pi);
        if (p.grad.size() != p.value.size())
            throw ContractViolation("finite_difference_check: missing gradient for '" + p.name + "'");
        double worst = 0.0;
        const size_t n = p.value.size();
        const size_t samples = std::min(n, max_coords);
        for (size_t s = 0; s < samples; ++s) {
            const size_t i = (n <= max_coords) ? s : static_cast<size_t>(rng.below(n));
            const T saved = p.value.v[i];
            p.value.v[i] = static_cast<T>(static_cast<double>(saved) + step);
            const double fp = loss(params);
            p.value.v[i] = static_cast<T>(static_cast<double>(saved) - step);
            const double fm = loss(params);
            p.value.v[i] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double err = std::abs(static_cast<double>(p.grad.v[i]) - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
        result.per_param.emplace_back(p.name, worst);
        result.max_rel_error = std::max(result.max_rel_error, worst);
    }
    return result;
}

}  // namespace loadseg
