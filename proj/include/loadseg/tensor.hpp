#pragma once

// Dense row-major tensor. float is the training scalar; the double
// instantiation exists for the high-precision gradient-check path.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "loadseg/common.hpp"

namespace loadseg {

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> v;

    TensorT() = default;

    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        v.assign(element_count(shape), T{0});
    }

    TensorT(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
        if (v.size() != element_count(shape))
            throw ContractViolation("tensor: value count does not match shape");
    }

    static size_t element_count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ContractViolation("tensor: nonpositive dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

inline std::string shape_string(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace loadseg
