#include "loadseg/metrics.hpp"

namespace loadseg {

namespace {
constexpr uint32_t kLimbBase = 1000000000u;
}

BigUint::BigUint(uint64_t v) {
    if (v == 0) {
        limbs_ = {0};
        return;
    }
    while (v > 0) {
        limbs_.push_back(static_cast<uint32_t>(v % kLimbBase));
        v /= kLimbBase;
    }
}

BigUint& BigUint::mul_small(uint64_t factor) {
    // limb*factor + carry must stay below 2^64: holds for factor < 2^32.
    if (factor > 0xFFFFFFFFull) throw ContractViolation("BigUint::mul_small: factor too large");
    if (factor == 0) {
        limbs_ = {0};
        return *this;
    }
    uint64_t carry = 0;
    for (uint32_t& limb : limbs_) {
        const uint64_t cur = static_cast<uint64_t>(limb) * factor + carry;
        limb = static_cast<uint32_t>(cur % kLimbBase);
        carry = cur / kLimbBase;
    }
    while (carry > 0) {
        limbs_.push_back(static_cast<uint32_t>(carry % kLimbBase));
        carry /= kLimbBase;
    }
    trim();
    return *this;
}

BigUint BigUint::pow(uint64_t base, uint64_t exponent) {
    BigUint out(1);
    if (base == 0) return exponent == 0 ? BigUint(1) : BigUint(0);
    for (uint64_t i = 0; i < exponent; ++i) out.mul_small(base);
    return out;
}

int BigUint::compare(const BigUint& other) const {
    if (limbs_.size() != other.limbs_.size())
        return limbs_.size() < other.limbs_.size() ? -1 : 1;
    for (size_t i = limbs_.size(); i > 0; --i) {
        if (limbs_[i - 1] != other.limbs_[i - 1])
            return limbs_[i - 1] < other.limbs_[i - 1] ? -1 : 1;
    }
    return 0;
}

std::string BigUint::to_string() const {
    std::string out = std::to_string(limbs_.back());
    for (size_t i = limbs_.size() - 1; i > 0; --i) {
        std::string part = std::to_string(limbs_[i - 1]);
        out += std::string(9 - part.size(), '0') + part;
    }
    return out;
}

void BigUint::trim() {
    while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
    if (classes < 1) throw ContractViolation("confusion: class count must be >= 1");
    counts_.assign(static_cast<size_t>(classes) * classes, 0);
}

uint64_t ConfusionMatrix::at(int truth, int predicted) const {
    if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_)
        throw ContractViolation("confusion: class index out of range");
    return counts_[static_cast<size_t>(truth) * classes_ + predicted];
}

uint64_t& ConfusionMatrix::at(int truth, int predicted) {
    if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_)
        throw ContractViolation("confusion: class index out of range");
    return counts_[static_cast<size_t>(truth) * classes_ + predicted];
}

uint64_t ConfusionMatrix::total() const {
    uint64_t n = 0;
    for (uint64_t c : counts_) n += c;
    return n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ContractViolation("confusion: merge class mismatch");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    ignored_ += other.ignored_;
}

void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          std::optional<int> ignore_index) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw ContractViolation("confusion: prediction/ground-truth shape mismatch");
    const size_t n = gt.classes.size();
    for (size_t i = 0; i < n; ++i) {
        const int t = gt.classes[i];
        const int p = pred.classes[i];
        if (ignore_index && t == *ignore_index) {
            ++cm.ignored_;
            continue;
        }
        if (t >= cm.classes_ || p >= cm.classes_)
            throw ContractViolation("confusion: class index exceeds matrix size");
        ++cm.counts_[static_cast<size_t>(t) * cm.classes_ + p];
    }
}

MiouResult miou(const ConfusionMatrix& cm) {
    const int K = cm.classes();
    std::vector<uint64_t> row(K, 0), col(K, 0);
    for (int t = 0; t < K; ++t)
        for (int p = 0; p < K; ++p) {
            row[t] += cm.at(t, p);
            col[p] += cm.at(t, p);
        }
    MiouResult out;
    out.per_class.resize(K);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < K; ++c) {
        const uint64_t denom = row[c] + col[c] - cm.at(c, c);
        if (denom == 0) continue;  // class absent from both truth and prediction
        const double iou = static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
        out.per_class[c] = iou;
        sum += iou;
        ++present;
    }
    if (present == 0) throw ContractViolation("miou: every class absent");
    out.mean = sum / present;
    return out;
}

BigUint solution_space_size(uint64_t classes, uint64_t pixels, bool independent) {
    if (classes < 1 || pixels < 1)
        throw ContractViolation("solution_space_size: classes and pixels must be >= 1");
    if (independent) {
        BigUint out(classes);
        out.mul_small(pixels);
        return out;
    }
    return BigUint::pow(classes, pixels);
}

}  // namespace loadseg
