// SPDX-License-Identifier: Apache-2.0
#include "duolearn/kernels.h"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace duolearn::kernels {

namespace {

// Tape tensors are multi-megabyte and short-lived; glibc would mmap/munmap
// each one, paying a page-fault-and-zero cycle per training step. Keeping
// large blocks on the heap arena roughly halves backward-pass time.
const bool g_malloc_tuned = [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
}();

std::atomic<bool> g_parallel{true};

// Runs f(i) for i in [0, n). The OpenMP path assigns each index to exactly
// one thread; per-index arithmetic order is the same as the serial path, so
// outputs are bit-identical either way.
template <class F>
inline void for_each(bool parallel, int64_t n, F&& f) {
    if (parallel && n > 1) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) f(i);
    } else {
        for (int64_t i = 0; i < n; ++i) f(i);
    }
}

constexpr int64_t kKBlock = 256;  // rows of B kept hot per panel in matmul

// One C row over a k panel, 4 k-steps fused per pass so the C row is loaded
// and stored once per 4 rank-1 updates. The per-element sum order is fixed
// (ascending k, grouped in fours), identical in the serial and OpenMP paths.
inline void matmul_row_panel(const double* ai, const double* b, double* ci, int64_t k0,
                             int64_t k1, int64_t n) {
    int64_t kk = k0;
    for (; kk + 4 <= k1; kk += 4) {
        const double a0 = ai[kk], a1 = ai[kk + 1], a2 = ai[kk + 2], a3 = ai[kk + 3];
        const double* b0 = b + kk * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        for (int64_t j = 0; j < n; ++j)
            ci[j] += ((a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]));
    }
    for (; kk < k1; ++kk) {
        const double av = ai[kk];
        const double* bk = b + kk * n;
        for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
}

void matmul_nn_impl(bool parallel, const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
    if (!accumulate) {
        for_each(parallel, m, [&](int64_t i) {
            double* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        });
    }
    for (int64_t k0 = 0; k0 < k; k0 += kKBlock) {
        const int64_t k1 = std::min(k, k0 + kKBlock);
        for_each(parallel, m,
                 [&](int64_t i) { matmul_row_panel(a + i * k, b, c + i * n, k0, k1, n); });
    }
}

}  // namespace

void use_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
int max_threads() { return omp_get_max_threads(); }

void matmul_nn_mode(bool parallel, const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
    matmul_nn_impl(parallel, a, b, c, m, k, n, accumulate);
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
    matmul_nn_impl(parallel_enabled(), a, b, c, m, k, n, accumulate);
}

void transpose(const double* a, double* at, int64_t rows, int64_t cols) {
    for_each(parallel_enabled(), rows, [&](int64_t i) {
        const double* ai = a + i * cols;
        for (int64_t j = 0; j < cols; ++j) at[j * rows + i] = ai[j];
    });
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
    // B is [n x k]; transposing it first keeps the hot loop contiguous.
    std::vector<double> bt(static_cast<size_t>(k * n));
    transpose(b, bt.data(), n, k);
    matmul_nn(a, bt.data(), c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
    std::vector<double> at(static_cast<size_t>(m * k));
    transpose(a, at.data(), k, m);
    matmul_nn(at.data(), b, c, m, k, n, accumulate);
}

void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols) {
    for_each(parallel_enabled(), rows, [&](int64_t i) {
        double* xi = x + i * cols;
        for (int64_t j = 0; j < cols; ++j) xi[j] += bias[j];
    });
}

namespace {

inline void softmax_row(const double* x, double* y, int64_t cols) {
    double m = x[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - m);
        s += y[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
}

}  // namespace

void softmax_rows_mode(bool parallel, const double* x, double* y, int64_t rows, int64_t cols) {
    for_each(parallel, rows, [&](int64_t i) { softmax_row(x + i * cols, y + i * cols, cols); });
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
    softmax_rows_mode(parallel_enabled(), x, y, rows, cols);
}

void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
    for_each(parallel_enabled(), rows, [&](int64_t i) {
        const double* xi = x + i * cols;
        double* yi = y + i * cols;
        double m = xi[0];
        for (int64_t j = 1; j < cols; ++j) m = std::max(m, xi[j]);
        double s = 0.0;
        for (int64_t j = 0; j < cols; ++j) s += std::exp(xi[j] - m);
        const double lse = m + std::log(s);
        for (int64_t j = 0; j < cols; ++j) yi[j] = xi[j] - lse;
    });
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta, double* y,
                        double* mean, double* rstd, int64_t rows, int64_t cols, double eps) {
    for_each(parallel_enabled(), rows, [&](int64_t i) {
        const double* xi = x + i * cols;
        double* yi = y + i * cols;
        double mu = 0.0;
        for (int64_t j = 0; j < cols; ++j) mu += xi[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            const double d = xi[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double rs = 1.0 / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;
        for (int64_t j = 0; j < cols; ++j) yi[j] = (xi[j] - mu) * rs * gamma[j] + beta[j];
    });
}

void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta, int64_t rows, int64_t cols) {
    for_each(parallel_enabled(), rows, [&](int64_t i) {
        const double* xi = x + i * cols;
        const double* dyi = dy + i * cols;
        double* dxi = dx + i * cols;
        const double mu = mean[i];
        const double rs = rstd[i];
        double s1 = 0.0, s2 = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            const double xhat = (xi[j] - mu) * rs;
            const double g = dyi[j] * gamma[j];
            s1 += g;
            s2 += g * xhat;
        }
        s1 /= static_cast<double>(cols);
        s2 /= static_cast<double>(cols);
        for (int64_t j = 0; j < cols; ++j) {
            const double xhat = (xi[j] - mu) * rs;
            const double g = dyi[j] * gamma[j];
            dxi[j] += rs * (g - s1 - xhat * s2);
        }
    });
    // Column-parallel so each accumulator is touched by one thread, rows in order.
    for_each(parallel_enabled(), cols, [&](int64_t j) {
        double dg = 0.0, db = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
            const double xhat = (x[i * cols + j] - mean[i]) * rstd[i];
            dg += dy[i * cols + j] * xhat;
            db += dy[i * cols + j];
        }
        dgamma[j] += dg;
        dbeta[j] += db;
    });
}

namespace {

constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

}  // namespace

void gelu_forward(const double* x, double* y, int64_t n) {
    for_each(parallel_enabled(), n, [&](int64_t i) {
        const double v = x[i];
        const double u = kGeluC * (v + kGeluK * v * v * v);
        y[i] = 0.5 * v * (1.0 + std::tanh(u));
    });
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
    for_each(parallel_enabled(), n, [&](int64_t i) {
        const double v = x[i];
        const double u = kGeluC * (v + kGeluK * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluK * v * v);
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        dx[i] += dy[i] * d;
    });
}

namespace {

void attention_forward_task(const double* q, const double* k, const double* v, double* out,
                            double* probs, int64_t b, int64_t h, int64_t seq, int64_t heads,
                            int64_t width) {
    const int64_t dh = width / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* qb = q + b * seq * width + h * dh;
    const double* kb = k + b * seq * width + h * dh;
    const double* vb = v + b * seq * width + h * dh;
    double* ob = out + b * seq * width + h * dh;
    double* pb = probs + (b * heads + h) * seq * seq;
    for (int64_t i = 0; i < seq; ++i) {
        double* pi = pb + i * seq;
        double m = -1e300;
        for (int64_t j = 0; j <= i; ++j) {
            double s = 0.0;
            const double* qi = qb + i * width;
            const double* kj = kb + j * width;
            for (int64_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
            pi[j] = s * inv_scale;
            m = std::max(m, pi[j]);
        }
        double z = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
            pi[j] = std::exp(pi[j] - m);
            z += pi[j];
        }
        const double inv_z = 1.0 / z;
        for (int64_t j = 0; j <= i; ++j) pi[j] *= inv_z;
        for (int64_t j = i + 1; j < seq; ++j) pi[j] = 0.0;
        double* oi = ob + i * width;
        for (int64_t d = 0; d < dh; ++d) oi[d] = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
            const double p = pi[j];
            const double* vj = vb + j * width;
            for (int64_t d = 0; d < dh; ++d) oi[d] += p * vj[d];
        }
    }
}

void attention_backward_task(const double* q, const double* k, const double* v,
                             const double* probs, const double* dout, double* dq, double* dk,
                             double* dv, int64_t b, int64_t h, int64_t seq, int64_t heads,
                             int64_t width, double* dscores) {
    const int64_t dh = width / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* qb = q + b * seq * width + h * dh;
    const double* kb = k + b * seq * width + h * dh;
    const double* vb = v + b * seq * width + h * dh;
    const double* db = dout + b * seq * width + h * dh;
    double* dqb = dq + b * seq * width + h * dh;
    double* dkb = dk + b * seq * width + h * dh;
    double* dvb = dv + b * seq * width + h * dh;
    const double* pb = probs + (b * heads + h) * seq * seq;
    for (int64_t i = 0; i < seq; ++i) {
        const double* pi = pb + i * seq;
        const double* doi = db + i * width;
        double* dsi = dscores + i * seq;
        // dP[i,j] = dOut_i . V_j ; dS = P o (dP - sum_j P*dP)
        double acc = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
            double dp = 0.0;
            const double* vj = vb + j * width;
            for (int64_t d = 0; d < dh; ++d) dp += doi[d] * vj[d];
            dsi[j] = dp;
            acc += dp * pi[j];
        }
        for (int64_t j = 0; j <= i; ++j) dsi[j] = pi[j] * (dsi[j] - acc) * inv_scale;
        // dV_j += P[i,j] * dOut_i
        for (int64_t j = 0; j <= i; ++j) {
            const double p = pi[j];
            double* dvj = dvb + j * width;
            for (int64_t d = 0; d < dh; ++d) dvj[d] += p * doi[d];
        }
        // dQ_i += dS[i,j] * K_j ; dK_j += dS[i,j] * Q_i
        double* dqi = dqb + i * width;
        const double* qi = qb + i * width;
        for (int64_t j = 0; j <= i; ++j) {
            const double s = dsi[j];
            const double* kj = kb + j * width;
            double* dkj = dkb + j * width;
            for (int64_t d = 0; d < dh; ++d) {
                dqi[d] += s * kj[d];
                dkj[d] += s * qi[d];
            }
        }
    }
}

}  // namespace

void causal_attention_forward_mode(bool parallel, const double* q, const double* k,
                                   const double* v, double* out, double* probs, int64_t batch,
                                   int64_t seq, int64_t heads, int64_t width) {
    for_each(parallel, batch * heads, [&](int64_t t) {
        attention_forward_task(q, k, v, out, probs, t / heads, t % heads, seq, heads, width);
    });
}

void causal_attention_forward(const double* q, const double* k, const double* v, double* out,
                              double* probs, int64_t batch, int64_t seq, int64_t heads,
                              int64_t width) {
    causal_attention_forward_mode(parallel_enabled(), q, k, v, out, probs, batch, seq, heads,
                                  width);
}

void causal_attention_backward(const double* q, const double* k, const double* v,
                               const double* probs, const double* dout, double* dq, double* dk,
                               double* dv, int64_t batch, int64_t seq, int64_t heads,
                               int64_t width) {
    const bool parallel = parallel_enabled();
    if (parallel) {
#pragma omp parallel
        {
            std::vector<double> dscores(static_cast<size_t>(seq * seq));
#pragma omp for schedule(static)
            for (int64_t t = 0; t < batch * heads; ++t)
                attention_backward_task(q, k, v, probs, dout, dq, dk, dv, t / heads, t % heads,
                                        seq, heads, width, dscores.data());
        }
    } else {
        std::vector<double> dscores(static_cast<size_t>(seq * seq));
        for (int64_t t = 0; t < batch * heads; ++t)
            attention_backward_task(q, k, v, probs, dout, dq, dk, dv, t / heads, t % heads, seq,
                                    heads, width, dscores.data());
    }
}

void embedding_forward(const double* table, const int32_t* ids, double* out, int64_t n_ids,
                       int64_t cols) {
    for_each(parallel_enabled(), n_ids, [&](int64_t i) {
        const double* src = table + static_cast<int64_t>(ids[i]) * cols;
        double* dst = out + i * cols;
        for (int64_t j = 0; j < cols; ++j) dst[j] = src[j];
    });
}

void embedding_backward(const double* dout, const int32_t* ids, double* dtable, int64_t n_ids,
                        int64_t /*rows_table*/, int64_t cols) {
    // Column-parallel: each (row, column) accumulator is owned by one thread.
    for_each(parallel_enabled(), cols, [&](int64_t j) {
        for (int64_t i = 0; i < n_ids; ++i)
            dtable[static_cast<int64_t>(ids[i]) * cols + j] += dout[i * cols + j];
    });
}

double reduce_sum(const double* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double dot(const double* a, const double* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_sq(const double* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

void axpy(double a, const double* x, double* y, int64_t n) {
    for_each(parallel_enabled(), n, [&](int64_t i) { y[i] += a * x[i]; });
}

void scale_inplace(double* x, double a, int64_t n) {
    for_each(parallel_enabled(), n, [&](int64_t i) { x[i] *= a; });
}

}  // namespace duolearn::kernels
