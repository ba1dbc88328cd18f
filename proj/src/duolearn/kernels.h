// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels behind the autodiff ops. Every kernel has a serial reference
// path and an OpenMP path; both compute each output element with identical
// arithmetic order, so results are bit-identical for any thread count. The
// `_mode` entry points pin the path explicitly (tests assert equality,
// tools/bench_kernels times them); the plain names dispatch on the module
// switch, which defaults to parallel.
#pragma once

#include <cstdint>

namespace duolearn::kernels {

void use_parallel(bool on);
bool parallel_enabled();
int max_threads();

// C[m x n] = A[m x k] * B[k x n]; adds into C when accumulate is set.
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
void matmul_nn_mode(bool parallel, const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate = false);

void transpose(const double* a, double* at, int64_t rows, int64_t cols);

void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols);

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
void softmax_rows_mode(bool parallel, const double* x, double* y, int64_t rows, int64_t cols);
void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);

void layer_norm_forward(const double* x, const double* gamma, const double* beta, double* y,
                        double* mean, double* rstd, int64_t rows, int64_t cols, double eps);
void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta, int64_t rows, int64_t cols);

void gelu_forward(const double* x, double* y, int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);

// Multi-head causal attention over packed [B*L x width] Q/K/V (head h owns
// columns [h*dh, (h+1)*dh)). `probs` holds the cached softmax weights,
// B*heads*L*L values, and is reused by the backward pass.
void causal_attention_forward(const double* q, const double* k, const double* v, double* out,
                              double* probs, int64_t batch, int64_t seq, int64_t heads,
                              int64_t width);
void causal_attention_forward_mode(bool parallel, const double* q, const double* k,
                                   const double* v, double* out, double* probs, int64_t batch,
                                   int64_t seq, int64_t heads, int64_t width);
void causal_attention_backward(const double* q, const double* k, const double* v,
                               const double* probs, const double* dout, double* dq, double* dk,
                               double* dv, int64_t batch, int64_t seq, int64_t heads,
                               int64_t width);

// Embedding gather/scatter. ids < rows_table; backward adds into dtable.
void embedding_forward(const double* table, const int32_t* ids, double* out, int64_t n_ids,
                       int64_t cols);
void embedding_backward(const double* dout, const int32_t* ids, double* dtable, int64_t n_ids,
                        int64_t rows_table, int64_t cols);

// Deterministic reductions (fixed serial order) and elementwise helpers.
double reduce_sum(const double* x, int64_t n);
double dot(const double* a, const double* b, int64_t n);
double sum_sq(const double* x, int64_t n);
void axpy(double a, const double* x, double* y, int64_t n);  // y += a*x
void scale_inplace(double* x, double a, int64_t n);

}  // namespace duolearn::kernels
