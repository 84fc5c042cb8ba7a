#pragma once

// Confusion-matrix IoU/mIoU evaluation and exact solution-space cardinality
// arithmetic.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/data.hpp"

namespace loadseg {

// Unsigned big integer, base 1e9 limbs. Just enough for K^N comparisons.
class BigUint {
public:
    BigUint() : limbs_{0} {}
    explicit BigUint(uint64_t v);

    static BigUint pow(uint64_t base, uint64_t exponent);

    BigUint& mul_small(uint64_t factor);

    int compare(const BigUint& other) const;  // -1, 0, 1
    bool operator==(const BigUint& o) const { return compare(o) == 0; }
    bool operator>=(const BigUint& o) const { return compare(o) >= 0; }
    bool operator>(const BigUint& o) const { return compare(o) > 0; }

    std::string to_string() const;

private:
    std::vector<uint32_t> limbs_;  // little-endian, base 1e9
    void trim();
};

struct ConfusionMatrix {
    explicit ConfusionMatrix(int classes);

    int classes() const { return classes_; }
    uint64_t at(int truth, int predicted) const;
    uint64_t& at(int truth, int predicted);
    uint64_t ignored() const { return ignored_; }
    uint64_t total() const;

    // Exact integer merge; order never matters.
    void merge(const ConfusionMatrix& other);

    friend void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                                     std::optional<int> ignore_index);

private:
    int classes_;
    std::vector<uint64_t> counts_;
    uint64_t ignored_ = 0;
};

void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          std::optional<int> ignore_index = std::nullopt);

struct MiouResult {
    std::vector<std::optional<double>> per_class;  // absent where truth+pred are both empty
    double mean = 0.0;
};

MiouResult miou(const ConfusionMatrix& cm);

// K^N when pixels are treated jointly, K*N under the independence assumption.
BigUint solution_space_size(uint64_t classes, uint64_t pixels, bool independent);

struct SegmentorModel;

// Dataset-level mIoU: one confusion matrix accumulated over every sample.
// Samples fan out over threads; integer merges keep the result exact.
double evaluate_model_miou(const SegmentorModel& model, const Dataset& dataset);

}  // namespace loadseg
