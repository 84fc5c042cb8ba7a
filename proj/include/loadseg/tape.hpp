#pragma once

// Define-by-run reverse-mode tape over the kernel set needed by the toy
// segmentor/discriminator stack. A fresh tape is built per training step;
// creation order is the topological order used for the backward sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/kernels.hpp"
#include "loadseg/tensor.hpp"

namespace loadseg {

template <typename T>
class TapeT {
public:
    using NodeId = int;

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    NodeId constant(TensorT<T> v) { return push("constant", std::move(v), false, {}); }

    NodeId parameter(TensorT<T> v) { return push("parameter", std::move(v), true, {}); }

    const TensorT<T>& value(NodeId id) const { return nodes_[check_id(id)].value; }

    // Valid after backward(); zero tensor for nodes the output does not reach.
    const TensorT<T>& grad(NodeId id) const {
        const Node& n = nodes_[check_id(id)];
        if (n.grad.size() == 0) {
            static thread_local TensorT<T> zero;
            zero = TensorT<T>(n.value.shape);
            return zero;
        }
        return n.grad;
    }

    bool requires_grad(NodeId id) const { return nodes_[check_id(id)].requires_grad; }

    // ---- ops ----

    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        const auto& bv = value(b);
        if (xv.shape.size() != 3 || wv.shape.size() != 4 || bv.shape.size() != 1)
            throw ContractViolation("conv2d: rank mismatch");
        const int H = xv.shape[0], W = xv.shape[1], Ci = xv.shape[2];
        const int Kh = wv.shape[0], Kw = wv.shape[1], Co = wv.shape[3];
        if (wv.shape[2] != Ci || bv.shape[0] != Co)
            throw ContractViolation("conv2d: channel mismatch " + shape_string(xv.shape) + " vs " +
                                    shape_string(wv.shape));
        if (stride < 1) throw ContractViolation("conv2d: stride must be >= 1");
        const int Ho = kernels::conv_out_dim(H, Kh, stride, pad);
        const int Wo = kernels::conv_out_dim(W, Kw, stride, pad);
        if (Ho <= 0 || Wo <= 0) throw ContractViolation("conv2d: empty output");
        TensorT<T> out({Ho, Wo, Co});
        kernels::conv2d_forward(xv.data(), H, W, Ci, wv.data(), Kh, Kw, Co, bv.data(), stride,
                                pad, out.data(), Ho, Wo);
        const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
        return push("conv2d", std::move(out), rg, [=, this](NodeId self) {
            const auto& g = nodes_[self].grad;
            const auto& xv2 = nodes_[x].value;
            const auto& wv2 = nodes_[w].value;
            if (nodes_[x].requires_grad)
                kernels::conv2d_backward_input(g.data(), Ho, Wo, Co, wv2.data(), Kh, Kw, Ci,
                                               stride, pad, nodes_[x].grad.data(), H, W);
            if (nodes_[w].requires_grad || nodes_[b].requires_grad)
                kernels::conv2d_backward_params(
                    g.data(), Ho, Wo, Co, xv2.data(), H, W, Ci, Kh, Kw, stride, pad,
                    nodes_[w].requires_grad ? nodes_[w].grad.data() : scratch(wv2.size()),
                    nodes_[b].requires_grad ? nodes_[b].grad.data() : nullptr);
        });
    }

    NodeId dense(NodeId x, NodeId w, NodeId b) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        const auto& bv = value(b);
        const int n = static_cast<int>(xv.size());
        if (wv.shape.size() != 2 || wv.shape[0] != n)
            throw ContractViolation("dense: weight shape mismatch");
        const int m = wv.shape[1];
        if (bv.shape.size() != 1 || bv.shape[0] != m) throw ContractViolation("dense: bias shape mismatch");
        TensorT<T> out({m});
        kernels::dense_forward(xv.data(), n, wv.data(), bv.data(), m, out.data());
        const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
        return push("dense", std::move(out), rg, [=, this](NodeId self) {
            const auto& g = nodes_[self].grad;
            kernels::dense_backward(g.data(), m, nodes_[x].value.data(), n, nodes_[w].value.data(),
                                    nodes_[x].requires_grad ? nodes_[x].grad.data() : nullptr,
                                    nodes_[w].requires_grad ? nodes_[w].grad.data() : nullptr,
                                    nodes_[b].requires_grad ? nodes_[b].grad.data() : nullptr);
        });
    }

    NodeId relu(NodeId x) {
        TensorT<T> out = value(x);
        for (T& v : out.v) v = v > T{0} ? v : T{0};
        return push("relu", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            const auto& xv = nodes_[x].value;
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < g.size(); ++i)
                if (xv.v[i] > T{0}) gx.v[i] += g.v[i];
        });
    }

    // Output clamped to [kSigmoidEps, 1 - kSigmoidEps] so it stays strictly
    // inside (0,1) even where the float cast would round to 0 or 1.
    static constexpr double kSigmoidEps = 1e-7;

    NodeId sigmoid(NodeId x) {
        const auto& xv = value(x);
        TensorT<T> out(xv.shape);
        for (size_t i = 0; i < xv.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xv.v[i])));
            s = std::min(1.0 - kSigmoidEps, std::max(kSigmoidEps, s));
            out.v[i] = static_cast<T>(s);
        }
        return push("sigmoid", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            const auto& sv = nodes_[self].value;
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * sv.v[i] * (T{1} - sv.v[i]);
        });
    }

    // Softmax over the last axis (the class axis of an H x W x K tensor).
    NodeId softmax_channels(NodeId x) {
        const auto& xv = value(x);
        if (xv.shape.empty()) throw ContractViolation("softmax: scalar input");
        const int K = xv.shape.back();
        const size_t rows = xv.size() / static_cast<size_t>(K);
        TensorT<T> out(xv.shape);
        for (size_t r = 0; r < rows; ++r) {
            const T* in = xv.data() + r * K;
            T* o = out.data() + r * K;
            double m = static_cast<double>(in[0]);
            for (int c = 1; c < K; ++c) m = std::max(m, static_cast<double>(in[c]));
            double z = 0.0;
            for (int c = 0; c < K; ++c) z += std::exp(static_cast<double>(in[c]) - m);
            for (int c = 0; c < K; ++c)
                o[c] = static_cast<T>(std::exp(static_cast<double>(in[c]) - m) / z);
        }
        return push("softmax", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            const auto& p = nodes_[self].value;
            auto& gx = nodes_[x].grad;
            for (size_t r = 0; r < rows; ++r) {
                const T* gp = g.data() + r * K;
                const T* pp = p.data() + r * K;
                double dot = 0.0;
                for (int c = 0; c < K; ++c) dot += static_cast<double>(gp[c]) * pp[c];
                for (int c = 0; c < K; ++c)
                    gx.v[r * K + c] += static_cast<T>(pp[c] * (static_cast<double>(gp[c]) - dot));
            }
        });
    }

    // Mean over non-ignored pixels of -log p(true class), with optional
    // per-pixel weights (weighted terms are still divided by the plain count).
    NodeId softmax_ce_mean(NodeId logits, std::vector<uint8_t> labels, int ignore_index = -1,
                           std::vector<T> pixel_weights = {}) {
        const auto& lv = value(logits);
        if (lv.shape.empty()) throw ContractViolation("ce: scalar logits");
        const int K = lv.shape.back();
        const size_t rows = lv.size() / static_cast<size_t>(K);
        if (labels.size() != rows) throw ContractViolation("ce: label count mismatch");
        if (!pixel_weights.empty() && pixel_weights.size() != rows)
            throw ContractViolation("ce: weight count mismatch");
        auto probs = std::make_shared<std::vector<double>>(lv.size());
        double acc = 0.0;
        size_t valid = 0;
        for (size_t r = 0; r < rows; ++r) {
            const int t = labels[r];
            if (t == ignore_index) continue;
            if (t < 0 || t >= K) throw ContractViolation("ce: target class out of range");
            const T* in = lv.data() + r * K;
            double m = static_cast<double>(in[0]);
            for (int c = 1; c < K; ++c) m = std::max(m, static_cast<double>(in[c]));
            double z = 0.0;
            for (int c = 0; c < K; ++c) z += std::exp(static_cast<double>(in[c]) - m);
            for (int c = 0; c < K; ++c) (*probs)[r * K + c] = std::exp(static_cast<double>(in[c]) - m) / z;
            const double p = (*probs)[r * K + t];
            const double w = pixel_weights.empty() ? 1.0 : static_cast<double>(pixel_weights[r]);
            acc += w * -std::log(p);
            ++valid;
        }
        if (valid == 0) throw ContractViolation("ce: every pixel ignored");
        TensorT<T> out({1});
        out.v[0] = static_cast<T>(acc / static_cast<double>(valid));
        auto lab = std::make_shared<std::vector<uint8_t>>(std::move(labels));
        auto wts = std::make_shared<std::vector<T>>(std::move(pixel_weights));
        return push("softmax_ce_mean", std::move(out), requires_grad(logits), [=, this](NodeId self) {
            if (!nodes_[logits].requires_grad) return;
            const T g = nodes_[self].grad.v[0];
            auto& gx = nodes_[logits].grad;
            const double inv = 1.0 / static_cast<double>(valid);
            for (size_t r = 0; r < rows; ++r) {
                const int t = (*lab)[r];
                if (t == ignore_index) continue;
                const double w = wts->empty() ? 1.0 : static_cast<double>((*wts)[r]);
                for (int c = 0; c < K; ++c) {
                    const double p = (*probs)[r * K + c];
                    const double onehot = (c == t) ? 1.0 : 0.0;
                    gx.v[r * K + c] += static_cast<T>(static_cast<double>(g) * w * (p - onehot) * inv);
                }
            }
        });
    }

    // Global average pool: H x W x C -> C.
    NodeId spatial_mean(NodeId x) {
        const auto& xv = value(x);
        if (xv.shape.size() != 3) throw ContractViolation("spatial_mean: want rank-3 input");
        const int HW = xv.shape[0] * xv.shape[1];
        const int C = xv.shape[2];
        TensorT<T> out({C});
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int i = 0; i < HW; ++i) acc += static_cast<double>(xv.v[static_cast<size_t>(i) * C + c]);
            out.v[c] = static_cast<T>(acc / HW);
        }
        return push("spatial_mean", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            auto& gx = nodes_[x].grad;
            const T inv = static_cast<T>(1.0 / HW);
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) gx.v[static_cast<size_t>(i) * C + c] += g.v[c] * inv;
        });
    }

    NodeId sum_all(NodeId x) { return reduce(x, false); }
    NodeId mean_all(NodeId x) { return reduce(x, true); }

    NodeId add(NodeId a, NodeId b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv)) throw ContractViolation("add: shape mismatch");
        TensorT<T> out(av.shape);
        for (size_t i = 0; i < out.size(); ++i) out.v[i] = av.v[i] + bv.v[i];
        const bool rg = requires_grad(a) || requires_grad(b);
        return push("add", std::move(out), rg, [=, this](NodeId self) {
            const auto& g = nodes_[self].grad;
            if (nodes_[a].requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nodes_[a].grad.v[i] += g.v[i];
            if (nodes_[b].requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nodes_[b].grad.v[i] += g.v[i];
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv)) throw ContractViolation("mul: shape mismatch");
        TensorT<T> out(av.shape);
        for (size_t i = 0; i < out.size(); ++i) out.v[i] = av.v[i] * bv.v[i];
        const bool rg = requires_grad(a) || requires_grad(b);
        return push("mul", std::move(out), rg, [=, this](NodeId self) {
            const auto& g = nodes_[self].grad;
            if (nodes_[a].requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nodes_[a].grad.v[i] += g.v[i] * nodes_[b].value.v[i];
            if (nodes_[b].requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nodes_[b].grad.v[i] += g.v[i] * nodes_[a].value.v[i];
        });
    }

    // Elementwise a*x + b.
    NodeId affine(NodeId x, T a, T b) {
        TensorT<T> out = value(x);
        for (T& v : out.v) v = a * v + b;
        return push("affine", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < g.size(); ++i) gx.v[i] += a * g.v[i];
        });
    }

    NodeId log(NodeId x) {
        const auto& xv = value(x);
        TensorT<T> out(xv.shape);
        for (size_t i = 0; i < xv.size(); ++i) out.v[i] = static_cast<T>(std::log(static_cast<double>(xv.v[i])));
        return push("log", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] / nodes_[x].value.v[i];
        });
    }

    // Gradient passes where lo <= x <= hi (a valid subgradient that keeps the
    // boundary case alive when sigmoid itself already clipped the value).
    NodeId clamp(NodeId x, T lo, T hi) {
        const auto& xv = value(x);
        TensorT<T> out(xv.shape);
        for (size_t i = 0; i < xv.size(); ++i) out.v[i] = std::min(hi, std::max(lo, xv.v[i]));
        return push("clamp", std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const auto& g = nodes_[self].grad;
            const auto& xv2 = nodes_[x].value;
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < g.size(); ++i)
                if (xv2.v[i] >= lo && xv2.v[i] <= hi) gx.v[i] += g.v[i];
        });
    }

    // Conditioning stack: channel group c of the output is the image's rgb
    // multiplied by the class-c weight plane. Image is data, never a node.
    NodeId class_stack(const TensorT<T>& image, NodeId weights) {
        const auto& wv = value(weights);
        if (image.shape.size() != 3 || image.shape[2] != 3)
            throw ContractViolation("class_stack: image must be HxWx3");
        if (wv.shape.size() != 3 || wv.shape[0] != image.shape[0] || wv.shape[1] != image.shape[1])
            throw ContractViolation("class_stack: weight plane mismatch");
        const int HW = image.shape[0] * image.shape[1];
        const int K = wv.shape[2];
        TensorT<T> out({image.shape[0], image.shape[1], 3 * K});
        for (int i = 0; i < HW; ++i)
            for (int c = 0; c < K; ++c)
                for (int r = 0; r < 3; ++r)
                    out.v[(static_cast<size_t>(i) * K + c) * 3 + r] =
                        image.v[static_cast<size_t>(i) * 3 + r] * wv.v[static_cast<size_t>(i) * K + c];
        auto img = std::make_shared<TensorT<T>>(image);
        return push("class_stack", std::move(out), requires_grad(weights), [=, this](NodeId self) {
            if (!nodes_[weights].requires_grad) return;
            const auto& g = nodes_[self].grad;
            auto& gw = nodes_[weights].grad;
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < K; ++c) {
                    T acc{0};
                    for (int r = 0; r < 3; ++r)
                        acc += g.v[(static_cast<size_t>(i) * K + c) * 3 + r] *
                               img->v[static_cast<size_t>(i) * 3 + r];
                    gw.v[static_cast<size_t>(i) * K + c] += acc;
                }
        });
    }

    // Reverse sweep from a scalar output. Populates grads of every
    // requires_grad node; unreachable ones stay zero.
    void backward(NodeId output) {
        Node& out = nodes_[check_id(output)];
        if (out.value.size() != 1)
            throw ContractViolation("backward: output is not a scalar (" +
                                    shape_string(out.value.shape) + ")");
        for (Node& n : nodes_) {
            if (n.requires_grad) {
                n.grad = TensorT<T>(n.value.shape);
            } else {
                n.grad = TensorT<T>();
            }
        }
        if (!out.requires_grad) return;  // constant output: all gradients zero
        out.grad.v[0] = T{1};
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.requires_grad && n.back) n.back(id);
        }
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        bool requires_grad = false;
        const char* op = "";
        std::function<void(NodeId)> back;
    };

    NodeId push(const char* op, TensorT<T> value, bool requires_grad,
                std::function<void(NodeId)> back) {
        if (!value.all_finite())
            throw NumericFailure(std::string("non-finite value produced by op '") + op + "'");
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.op = op;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId reduce(NodeId x, bool mean) {
        const auto& xv = value(x);
        double acc = 0.0;
        for (T v : xv.v) acc += static_cast<double>(v);
        const size_t n = xv.size();
        if (mean) acc /= static_cast<double>(n);
        TensorT<T> out({1});
        out.v[0] = static_cast<T>(acc);
        const char* op = mean ? "mean_all" : "sum_all";
        return push(op, std::move(out), requires_grad(x), [=, this](NodeId self) {
            if (!nodes_[x].requires_grad) return;
            const T g = nodes_[self].grad.v[0];
            const T scale = mean ? static_cast<T>(1.0 / static_cast<double>(n)) : T{1};
            auto& gx = nodes_[x].grad;
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += g * scale;
        });
    }

    int check_id(NodeId id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw ContractViolation("tape: bad node id");
        return id;
    }

    // Discard buffer for conv weight grads when only the bias needs them.
    T* scratch(size_t n) {
        scratch_.assign(n, T{0});
        return scratch_.data();
    }

    std::vector<Node> nodes_;
    std::vector<T> scratch_;
};

using Tape = TapeT<float>;

}  // namespace loadseg
