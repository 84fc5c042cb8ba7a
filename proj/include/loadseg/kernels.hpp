#pragma once

// Compute kernels behind the tape ops. The primary versions parallelize over
// independent output elements with OpenMP; every inner reduction runs in a
// fixed serial order, so results are bit-identical to the serial reference
// kernels in loadseg::kernels::reference (kept for tests and the benchmark).
//
// Layouts (row-major):
//   activations  H x W x C
//   conv weights Kh x Kw x Cin x Cout
//   dense weight In x Out
//
// Backward kernels accumulate (+=) into the gradient buffers.

namespace loadseg::kernels {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace reference {

template <typename T>
void conv2d_forward(const T* x, int H, int W, int Ci, const T* w, int Kh, int Kw, int Co,
                    const T* b, int stride, int pad, T* y, int Ho, int Wo) {
    for (int ho = 0; ho < Ho; ++ho) {
        for (int wo = 0; wo < Wo; ++wo) {
            for (int co = 0; co < Co; ++co) {
                T acc = b ? b[co] : T{0};
                for (int kh = 0; kh < Kh; ++kh) {
                    const int hi = ho * stride - pad + kh;
                    if (hi < 0 || hi >= H) continue;
                    for (int kw = 0; kw < Kw; ++kw) {
                        const int wi = wo * stride - pad + kw;
                        if (wi < 0 || wi >= W) continue;
                        const T* xp = x + (static_cast<size_t>(hi) * W + wi) * Ci;
                        const T* wp = w + ((static_cast<size_t>(kh) * Kw + kw) * Ci) * Co + co;
                        for (int ci = 0; ci < Ci; ++ci) acc += xp[ci] * wp[static_cast<size_t>(ci) * Co];
                    }
                }
                y[(static_cast<size_t>(ho) * Wo + wo) * Co + co] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, int Ho, int Wo, int Co, const T* w, int Kh, int Kw,
                           int Ci, int stride, int pad, T* gx, int H, int W) {
    for (int hi = 0; hi < H; ++hi) {
        for (int wi = 0; wi < W; ++wi) {
            for (int ci = 0; ci < Ci; ++ci) {
                T acc = T{0};
                for (int kh = 0; kh < Kh; ++kh) {
                    const int num_h = hi + pad - kh;
                    if (num_h < 0 || num_h % stride != 0) continue;
                    const int ho = num_h / stride;
                    if (ho >= Ho) continue;
                    for (int kw = 0; kw < Kw; ++kw) {
                        const int num_w = wi + pad - kw;
                        if (num_w < 0 || num_w % stride != 0) continue;
                        const int wo = num_w / stride;
                        if (wo >= Wo) continue;
                        const T* gp = gy + (static_cast<size_t>(ho) * Wo + wo) * Co;
                        const T* wp = w + ((static_cast<size_t>(kh) * Kw + kw) * Ci + ci) * Co;
                        for (int co = 0; co < Co; ++co) acc += gp[co] * wp[co];
                    }
                }
                gx[(static_cast<size_t>(hi) * W + wi) * Ci + ci] += acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_params(const T* gy, int Ho, int Wo, int Co, const T* x, int H, int W,
                            int Ci, int Kh, int Kw, int stride, int pad, T* gw, T* gb) {
    for (int co = 0; co < Co; ++co) {
        if (gb) {
            T acc = T{0};
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) acc += gy[(static_cast<size_t>(ho) * Wo + wo) * Co + co];
            gb[co] += acc;
        }
        for (int kh = 0; kh < Kh; ++kh) {
            for (int kw = 0; kw < Kw; ++kw) {
                for (int ci = 0; ci < Ci; ++ci) {
                    T acc = T{0};
                    for (int ho = 0; ho < Ho; ++ho) {
                        const int hi = ho * stride - pad + kh;
                        if (hi < 0 || hi >= H) continue;
                        for (int wo = 0; wo < Wo; ++wo) {
                            const int wi = wo * stride - pad + kw;
                            if (wi < 0 || wi >= W) continue;
                            acc += gy[(static_cast<size_t>(ho) * Wo + wo) * Co + co] *
                                   x[(static_cast<size_t>(hi) * W + wi) * Ci + ci];
                        }
                    }
                    gw[((static_cast<size_t>(kh) * Kw + kw) * Ci + ci) * Co + co] += acc;
                }
            }
        }
    }
}

template <typename T>
void dense_forward(const T* x, int n, const T* w, const T* b, int m, T* y) {
    for (int j = 0; j < m; ++j) {
        T acc = b ? b[j] : T{0};
        for (int i = 0; i < n; ++i) acc += x[i] * w[static_cast<size_t>(i) * m + j];
        y[j] = acc;
    }
}

template <typename T>
void dense_backward(const T* gy, int m, const T* x, int n, const T* w, T* gx, T* gw, T* gb) {
    if (gx) {
        for (int i = 0; i < n; ++i) {
            T acc = T{0};
            for (int j = 0; j < m; ++j) acc += gy[j] * w[static_cast<size_t>(i) * m + j];
            gx[i] += acc;
        }
    }
    if (gw) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) gw[static_cast<size_t>(i) * m + j] += x[i] * gy[j];
    }
    if (gb) {
        for (int j = 0; j < m; ++j) gb[j] += gy[j];
    }
}

}  // namespace reference

template <typename T>
void conv2d_forward(const T* x, int H, int W, int Ci, const T* w, int Kh, int Kw, int Co,
                    const T* b, int stride, int pad, T* y, int Ho, int Wo) {
#pragma omp parallel for schedule(static)
    for (int ho = 0; ho < Ho; ++ho) {
        for (int wo = 0; wo < Wo; ++wo) {
            for (int co = 0; co < Co; ++co) {
                T acc = b ? b[co] : T{0};
                for (int kh = 0; kh < Kh; ++kh) {
                    const int hi = ho * stride - pad + kh;
                    if (hi < 0 || hi >= H) continue;
                    for (int kw = 0; kw < Kw; ++kw) {
                        const int wi = wo * stride - pad + kw;
                        if (wi < 0 || wi >= W) continue;
                        const T* xp = x + (static_cast<size_t>(hi) * W + wi) * Ci;
                        const T* wp = w + ((static_cast<size_t>(kh) * Kw + kw) * Ci) * Co + co;
                        for (int ci = 0; ci < Ci; ++ci) acc += xp[ci] * wp[static_cast<size_t>(ci) * Co];
                    }
                }
                y[(static_cast<size_t>(ho) * Wo + wo) * Co + co] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, int Ho, int Wo, int Co, const T* w, int Kh, int Kw,
                           int Ci, int stride, int pad, T* gx, int H, int W) {
#pragma omp parallel for schedule(static)
    for (int hi = 0; hi < H; ++hi) {
        for (int wi = 0; wi < W; ++wi) {
            for (int ci = 0; ci < Ci; ++ci) {
                T acc = T{0};
                for (int kh = 0; kh < Kh; ++kh) {
                    const int num_h = hi + pad - kh;
                    if (num_h < 0 || num_h % stride != 0) continue;
                    const int ho = num_h / stride;
                    if (ho >= Ho) continue;
                    for (int kw = 0; kw < Kw; ++kw) {
                        const int num_w = wi + pad - kw;
                        if (num_w < 0 || num_w % stride != 0) continue;
                        const int wo = num_w / stride;
                        if (wo >= Wo) continue;
                        const T* gp = gy + (static_cast<size_t>(ho) * Wo + wo) * Co;
                        const T* wp = w + ((static_cast<size_t>(kh) * Kw + kw) * Ci + ci) * Co;
                        for (int co = 0; co < Co; ++co) acc += gp[co] * wp[co];
                    }
                }
                gx[(static_cast<size_t>(hi) * W + wi) * Ci + ci] += acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_params(const T* gy, int Ho, int Wo, int Co, const T* x, int H, int W,
                            int Ci, int Kh, int Kw, int stride, int pad, T* gw, T* gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
        if (gb) {
            T acc = T{0};
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) acc += gy[(static_cast<size_t>(ho) * Wo + wo) * Co + co];
            gb[co] += acc;
        }
        for (int kh = 0; kh < Kh; ++kh) {
            for (int kw = 0; kw < Kw; ++kw) {
                for (int ci = 0; ci < Ci; ++ci) {
                    T acc = T{0};
                    for (int ho = 0; ho < Ho; ++ho) {
                        const int hi = ho * stride - pad + kh;
                        if (hi < 0 || hi >= H) continue;
                        for (int wo = 0; wo < Wo; ++wo) {
                            const int wi = wo * stride - pad + kw;
                            if (wi < 0 || wi >= W) continue;
                            acc += gy[(static_cast<size_t>(ho) * Wo + wo) * Co + co] *
                                   x[(static_cast<size_t>(hi) * W + wi) * Ci + ci];
                        }
                    }
                    gw[((static_cast<size_t>(kh) * Kw + kw) * Ci + ci) * Co + co] += acc;
                }
            }
        }
    }
}

template <typename T>
void dense_forward(const T* x, int n, const T* w, const T* b, int m, T* y) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < m; ++j) {
        T acc = b ? b[j] : T{0};
        for (int i = 0; i < n; ++i) acc += x[i] * w[static_cast<size_t>(i) * m + j];
        y[j] = acc;
    }
}

template <typename T>
void dense_backward(const T* gy, int m, const T* x, int n, const T* w, T* gx, T* gw, T* gb) {
    if (gx) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            T acc = T{0};
            for (int j = 0; j < m; ++j) acc += gy[j] * w[static_cast<size_t>(i) * m + j];
            gx[i] += acc;
        }
    }
    if (gw) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) gw[static_cast<size_t>(i) * m + j] += x[i] * gy[j];
    }
    if (gb) {
        for (int j = 0; j < m; ++j) gb[j] += gy[j];
    }
}

}  // namespace loadseg::kernels
