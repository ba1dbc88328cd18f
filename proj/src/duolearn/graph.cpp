// SPDX-License-Identifier: Apache-2.0
#include "duolearn/graph.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "duolearn/kernels.h"

namespace duolearn {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
    require(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "graph: bad node id");
}

const Tensor& Graph::value(int id) const {
    check_id(id);
    return val(id);
}

double Graph::scalar_value(int id) const {
    check_id(id);
    require(val(id).numel() == 1, "graph: node is not a scalar");
    return val(id)[0];
}

Tensor& Graph::grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.ext_grad) return *n.ext_grad;
    if (!n.has_grad) {
        n.grad = Tensor::zeros(val(id).shape());
        n.has_grad = true;
    }
    return n.grad;
}

int Graph::leaf(const Tensor* value, Tensor* grad) {
    require(value != nullptr && grad != nullptr, "leaf: null binding");
    require(value->same_shape(*grad), "leaf: value/grad shape mismatch");
    Node n;
    n.op = Op::leaf;
    n.ext_value = value;
    n.ext_grad = grad;
    return push(std::move(n));
}

int Graph::constant(Tensor value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.ndim() == 2 && tb.ndim() == 2 && ta.cols() == tb.rows(),
            "matmul: shape mismatch " + ta.shape_str() + " * " + tb.shape_str());
    Node n;
    n.op = Op::matmul;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros({ta.rows(), tb.cols()});
    kernels::matmul_nn(ta.data(), tb.data(), n.value.data(), ta.rows(), ta.cols(), tb.cols());
    return push(std::move(n));
}

int Graph::linear(int x, int w, int bias) {
    check_id(x);
    check_id(w);
    check_id(bias);
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(bias);
    require(tx.ndim() == 2 && tw.ndim() == 2 && tx.cols() == tw.rows() && tb.ndim() == 1 &&
                tb.dim(0) == tw.cols(),
            "linear: shape mismatch " + tx.shape_str() + " * " + tw.shape_str() + " + " +
                tb.shape_str());
    Node n;
    n.op = Op::linear;
    n.in0 = x;
    n.in1 = w;
    n.in2 = bias;
    n.value = Tensor::zeros({tx.rows(), tw.cols()});
    kernels::matmul_nn(tx.data(), tw.data(), n.value.data(), tx.rows(), tx.cols(), tw.cols());
    kernels::add_bias_rows(n.value.data(), tb.data(), tx.rows(), tw.cols());
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "add: shape mismatch " + ta.shape_str() + " + " + tb.shape_str());
    Node n;
    n.op = Op::add;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros(ta.shape());
    const double* pa = ta.data();
    const double* pb = tb.data();
    double* po = n.value.data();
    const int64_t count = n.value.numel();
    for (int64_t i = 0; i < count; ++i) po[i] = pa[i] + pb[i];
    return push(std::move(n));
}

int Graph::add_bias(int x, int bias) {
    check_id(x);
    check_id(bias);
    const Tensor& tx = val(x);
    const Tensor& tb = val(bias);
    require(tx.ndim() == 2 && tb.ndim() == 1 && tx.cols() == tb.dim(0),
            "add_bias: shape mismatch " + tx.shape_str() + " + " + tb.shape_str());
    Node n;
    n.op = Op::add_bias;
    n.in0 = x;
    n.in1 = bias;
    n.value = tx;
    kernels::add_bias_rows(n.value.data(), tb.data(), tx.rows(), tx.cols());
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "mul: shape mismatch");
    Node n;
    n.op = Op::mul;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] * tb[i];
    return push(std::move(n));
}

int Graph::exp(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    Node n;
    n.op = Op::exp_;
    n.in0 = a;
    n.value = Tensor::zeros(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = std::exp(ta[i]);
    return push(std::move(n));
}

int Graph::log(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    Node n;
    n.op = Op::log_;
    n.in0 = a;
    n.value = Tensor::zeros(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) {
        if (!(ta[i] > 0.0)) throw std::domain_error("log: non-positive input");
        n.value[i] = std::log(ta[i]);
    }
    return push(std::move(n));
}

int Graph::gelu(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    Node n;
    n.op = Op::gelu;
    n.in0 = a;
    n.value = Tensor::zeros(ta.shape());
    kernels::gelu_forward(ta.data(), n.value.data(), ta.numel());
    return push(std::move(n));
}

int Graph::scale(int a, double c) {
    check_id(a);
    Node n;
    n.op = Op::scale;
    n.in0 = a;
    n.c = c;
    n.value = val(a);
    kernels::scale_inplace(n.value.data(), c, n.value.numel());
    return push(std::move(n));
}

int Graph::sum(int a) {
    check_id(a);
    Node n;
    n.op = Op::sum;
    n.in0 = a;
    n.value = Tensor::scalar(kernels::reduce_sum(val(a).data(), val(a).numel()));
    return push(std::move(n));
}

int Graph::softmax_rows(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    require(ta.ndim() == 2, "softmax_rows: want 2-d input");
    Node n;
    n.op = Op::softmax_rows;
    n.in0 = a;
    n.value = Tensor::zeros(ta.shape());
    kernels::softmax_rows(ta.data(), n.value.data(), ta.rows(), ta.cols());
    return push(std::move(n));
}

int Graph::log_softmax_rows(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    require(ta.ndim() == 2, "log_softmax_rows: want 2-d input");
    Node n;
    n.op = Op::log_softmax_rows;
    n.in0 = a;
    n.value = Tensor::zeros(ta.shape());
    kernels::log_softmax_rows(ta.data(), n.value.data(), ta.rows(), ta.cols());
    return push(std::move(n));
}

int Graph::layer_norm(int x, int gamma, int beta, double eps) {
    check_id(x);
    check_id(gamma);
    check_id(beta);
    const Tensor& tx = val(x);
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    require(tx.ndim() == 2 && tg.ndim() == 1 && tb.ndim() == 1 && tg.dim(0) == tx.cols() &&
                tb.dim(0) == tx.cols(),
            "layer_norm: shape mismatch");
    Node n;
    n.op = Op::layer_norm;
    n.in0 = x;
    n.in1 = gamma;
    n.in2 = beta;
    n.c = eps;
    n.value = Tensor::zeros(tx.shape());
    n.aux0 = Tensor::zeros({tx.rows()});
    n.aux1 = Tensor::zeros({tx.rows()});
    kernels::layer_norm_forward(tx.data(), tg.data(), tb.data(), n.value.data(), n.aux0.data(),
                                n.aux1.data(), tx.rows(), tx.cols(), eps);
    return push(std::move(n));
}

int Graph::embedding(int table, std::vector<int32_t> ids) {
    check_id(table);
    const Tensor& tt = val(table);
    require(tt.ndim() == 2, "embedding: table must be 2-d");
    for (int32_t id : ids)
        require(id >= 0 && id < tt.rows(), "embedding: id out of range");
    Node n;
    n.op = Op::embedding;
    n.in0 = table;
    n.value = Tensor::zeros({static_cast<int64_t>(ids.size()), tt.cols()});
    kernels::embedding_forward(tt.data(), ids.data(), n.value.data(),
                               static_cast<int64_t>(ids.size()), tt.cols());
    n.ids = std::move(ids);
    return push(std::move(n));
}

int Graph::causal_attention(int q, int k, int v, int64_t batch, int64_t seq, int64_t heads) {
    check_id(q);
    check_id(k);
    check_id(v);
    const Tensor& tq = val(q);
    require(tq.ndim() == 2 && tq.rows() == batch * seq, "attention: bad q shape");
    require(tq.same_shape(val(k)) && tq.same_shape(val(v)), "attention: q/k/v shape mismatch");
    require(tq.cols() % heads == 0, "attention: width not divisible by heads");
    Node n;
    n.op = Op::causal_attention;
    n.in0 = q;
    n.in1 = k;
    n.in2 = v;
    n.batch = batch;
    n.seq = seq;
    n.heads = heads;
    n.value = Tensor::zeros(tq.shape());
    n.aux0 = Tensor::zeros({batch * heads * seq * seq});
    kernels::causal_attention_forward(val(q).data(), val(k).data(), val(v).data(),
                                      n.value.data(), n.aux0.data(), batch, seq, heads,
                                      tq.cols());
    return push(std::move(n));
}

int Graph::nll_gather(int logp, std::vector<int32_t> targets, std::vector<double> weights) {
    check_id(logp);
    const Tensor& tl = val(logp);
    require(tl.ndim() == 2, "nll_gather: want 2-d log-probs");
    require(targets.size() == static_cast<size_t>(tl.rows()) && targets.size() == weights.size(),
            "nll_gather: targets/weights length mismatch");
    double loss = 0.0;
    for (int64_t i = 0; i < tl.rows(); ++i) {
        if (weights[static_cast<size_t>(i)] == 0.0) continue;
        const int32_t t = targets[static_cast<size_t>(i)];
        require(t >= 0 && t < tl.cols(), "nll_gather: target out of range");
        loss -= weights[static_cast<size_t>(i)] * tl.at(i, t);
    }
    Node n;
    n.op = Op::nll_gather;
    n.in0 = logp;
    n.value = Tensor::scalar(loss);
    n.ids = std::move(targets);
    n.weights = std::move(weights);
    return push(std::move(n));
}

void Graph::backward(int loss) {
    check_id(loss);
    require(val(loss).numel() == 1, "backward: loss must be a scalar");
    for (Node& n : nodes_) {
        if (n.ext_grad)
            n.ext_grad->zero();
        else if (n.has_grad)
            n.grad.zero();
    }
    grad_of(loss)[0] = 1.0;
    for (int id = loss; id >= 0; --id) backward_node(id);
}

void Graph::backward_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const bool touched = n.ext_grad != nullptr || n.has_grad;
    if (!touched) return;
    const Tensor& g = n.ext_grad ? *n.ext_grad : n.grad;
    switch (n.op) {
        case Op::leaf:
        case Op::constant:
            return;
        case Op::matmul: {
            const Tensor& a = val(n.in0);
            const Tensor& b = val(n.in1);
            kernels::matmul_nt(g.data(), b.data(), grad_of(n.in0).data(), a.rows(), b.cols(),
                               a.cols(), /*accumulate=*/true);
            kernels::matmul_tn(a.data(), g.data(), grad_of(n.in1).data(), a.cols(), a.rows(),
                               b.cols(), /*accumulate=*/true);
            return;
        }
        case Op::linear: {
            const Tensor& x = val(n.in0);
            const Tensor& w = val(n.in1);
            kernels::matmul_nt(g.data(), w.data(), grad_of(n.in0).data(), x.rows(), w.cols(),
                               x.cols(), /*accumulate=*/true);
            kernels::matmul_tn(x.data(), g.data(), grad_of(n.in1).data(), x.cols(), x.rows(),
                               w.cols(), /*accumulate=*/true);
            Tensor& db = grad_of(n.in2);
            const int64_t rows = g.rows(), cols = g.cols();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < cols; ++j) db[j] += g.at(i, j);
            return;
        }
        case Op::add: {
            kernels::axpy(1.0, g.data(), grad_of(n.in0).data(), g.numel());
            kernels::axpy(1.0, g.data(), grad_of(n.in1).data(), g.numel());
            return;
        }
        case Op::add_bias: {
            kernels::axpy(1.0, g.data(), grad_of(n.in0).data(), g.numel());
            Tensor& db = grad_of(n.in1);
            const int64_t rows = g.rows(), cols = g.cols();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < cols; ++j) db[j] += g.at(i, j);
            return;
        }
        case Op::mul: {
            const Tensor& a = val(n.in0);
            const Tensor& b = val(n.in1);
            Tensor& da = grad_of(n.in0);
            Tensor& db = grad_of(n.in1);
            for (int64_t i = 0; i < g.numel(); ++i) {
                da[i] += g[i] * b[i];
                db[i] += g[i] * a[i];
            }
            return;
        }
        case Op::exp_: {
            Tensor& dx = grad_of(n.in0);
            for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * n.value[i];
            return;
        }
        case Op::log_: {
            const Tensor& x = val(n.in0);
            Tensor& dx = grad_of(n.in0);
            for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i] / x[i];
            return;
        }
        case Op::gelu: {
            kernels::gelu_backward(val(n.in0).data(), g.data(), grad_of(n.in0).data(),
                                   g.numel());
            return;
        }
        case Op::scale: {
            kernels::axpy(n.c, g.data(), grad_of(n.in0).data(), g.numel());
            return;
        }
        case Op::sum: {
            Tensor& dx = grad_of(n.in0);
            const double gv = g[0];
            for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += gv;
            return;
        }
        case Op::softmax_rows: {
            Tensor& dx = grad_of(n.in0);
            const int64_t rows = n.value.rows(), cols = n.value.cols();
            for (int64_t i = 0; i < rows; ++i) {
                double acc = 0.0;
                for (int64_t j = 0; j < cols; ++j) acc += g.at(i, j) * n.value.at(i, j);
                for (int64_t j = 0; j < cols; ++j)
                    dx.at(i, j) += n.value.at(i, j) * (g.at(i, j) - acc);
            }
            return;
        }
        case Op::log_softmax_rows: {
            Tensor& dx = grad_of(n.in0);
            const int64_t rows = n.value.rows(), cols = n.value.cols();
            for (int64_t i = 0; i < rows; ++i) {
                double acc = 0.0;
                for (int64_t j = 0; j < cols; ++j) acc += g.at(i, j);
                if (acc == 0.0) {
                    bool any = false;
                    for (int64_t j = 0; j < cols && !any; ++j) any = g.at(i, j) != 0.0;
                    if (!any) continue;  // untouched row, common with sparse nll grads
                }
                for (int64_t j = 0; j < cols; ++j)
                    dx.at(i, j) += g.at(i, j) - std::exp(n.value.at(i, j)) * acc;
            }
            return;
        }
        case Op::layer_norm: {
            const Tensor& x = val(n.in0);
            kernels::layer_norm_backward(x.data(), val(n.in1).data(), n.aux0.data(),
                                         n.aux1.data(), g.data(), grad_of(n.in0).data(),
                                         grad_of(n.in1).data(), grad_of(n.in2).data(), x.rows(),
                                         x.cols());
            return;
        }
        case Op::embedding: {
            kernels::embedding_backward(g.data(), n.ids.data(), grad_of(n.in0).data(),
                                        static_cast<int64_t>(n.ids.size()), val(n.in0).rows(),
                                        val(n.in0).cols());
            return;
        }
        case Op::causal_attention: {
            kernels::causal_attention_backward(
                val(n.in0).data(), val(n.in1).data(), val(n.in2).data(), n.aux0.data(),
                g.data(), grad_of(n.in0).data(), grad_of(n.in1).data(), grad_of(n.in2).data(),
                n.batch, n.seq, n.heads, val(n.in0).cols());
            return;
        }
        case Op::nll_gather: {
            Tensor& dl = grad_of(n.in0);
            const double gv = g[0];
            for (size_t i = 0; i < n.ids.size(); ++i) {
                if (n.weights[i] == 0.0) continue;
                dl.at(static_cast<int64_t>(i), n.ids[i]) -= n.weights[i] * gv;
            }
            return;
        }
    }
}

}  // namespace duolearn
