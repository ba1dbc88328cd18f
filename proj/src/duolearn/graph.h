// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over a define-by-run tape. Forward values are
// computed eagerly at node creation, so a trainer can read intermediate
// values (e.g. per-token log-probs), decide on loss weights, and only then
// append the loss node — learning and unlearning share one backward pass.
#pragma once

#include <cstdint>
#include <vector>

#include "duolearn/tensor.h"

namespace duolearn {

class Graph {
  public:
    // Parameter leaf. `value` is read at node creation; `grad` receives the
    // accumulated gradient on backward(). Both must outlive the graph.
    int leaf(const Tensor* value, Tensor* grad);

    // Constant leaf (no gradient).
    int constant(Tensor value);

    int matmul(int a, int b);                // [m x k] * [k x n]
    int linear(int x, int w, int bias);      // matmul + row-broadcast bias, fused
    int add(int a, int b);                   // same shape
    int add_bias(int x, int bias);           // [n x d] + [d]
    int mul(int a, int b);                   // elementwise
    int exp(int a);
    int log(int a);                          // domain-checked
    int gelu(int a);
    int scale(int a, double c);
    int sum(int a);                          // -> scalar
    int softmax_rows(int a);
    int log_softmax_rows(int a);
    int layer_norm(int x, int gamma, int beta, double eps = 1e-5);
    int embedding(int table, std::vector<int32_t> ids);
    int causal_attention(int q, int k, int v, int64_t batch, int64_t seq, int64_t heads);
    // loss = -sum_i weights[i] * logp[i, targets[i]]
    int nll_gather(int logp, std::vector<int32_t> targets, std::vector<double> weights);

    const Tensor& value(int id) const;
    double scalar_value(int id) const;

    // Clears all gradients (including bound parameter grads), then seeds
    // d(loss)=1 and propagates. Callable repeatedly on one tape; parameters
    // not reachable from `loss` are left at zero.
    void backward(int loss);

    size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op {
        leaf,
        constant,
        matmul,
        linear,
        add,
        add_bias,
        mul,
        exp_,
        log_,
        gelu,
        scale,
        sum,
        softmax_rows,
        log_softmax_rows,
        layer_norm,
        embedding,
        causal_attention,
        nll_gather,
    };

    struct Node {
        Op op;
        int in0 = -1, in1 = -1, in2 = -1;
        Tensor value;                  // owned unless leaf
        const Tensor* ext_value = nullptr;
        Tensor* ext_grad = nullptr;
        Tensor grad;
        bool has_grad = false;
        double c = 0.0;                // scale constant / layer_norm eps
        std::vector<int32_t> ids;      // embedding ids / nll targets
        std::vector<double> weights;   // nll weights
        Tensor aux0, aux1;             // op caches (ln mean/rstd, attention probs)
        int64_t batch = 0, seq = 0, heads = 0;
    };

    const Tensor& val(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.ext_value ? *n.ext_value : n.value;
    }
    Tensor& grad_of(int id);
    int push(Node n);
    void check_id(int id) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
};

}  // namespace duolearn
