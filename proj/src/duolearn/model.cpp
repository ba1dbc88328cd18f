// SPDX-License-Identifier: Apache-2.0
#include "duolearn/model.h"

#include <cmath>
#include <limits>

#include "duolearn/errors.h"
#include "duolearn/rng.h"

namespace duolearn {

void ModelConfig::validate() const {
    if (vocab_size < 1 || layers < 1 || heads < 1 || width < 1 || ffn_width < 1 || max_seq < 1)
        throw config_error("model config: all counts must be >= 1");
    if (width % heads != 0)
        throw config_error("model config: width " + std::to_string(width) +
                           " not divisible by heads " + std::to_string(heads));
}

CausalLM::CausalLM(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const double std_base = 0.02;
    // Residual-branch output projections get the usual 1/sqrt(2*layers) shrink.
    const double std_resid = std_base / std::sqrt(2.0 * static_cast<double>(cfg_.layers));

    const auto normal_init = [&](std::vector<int64_t> shape, double std) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_gaussian() * std;
        return t;
    };
    const auto add_p = [&](const std::string& name, Tensor t) {
        params_.emplace_back(name, std::move(t));
    };

    add_p("tok_emb", normal_init({cfg_.vocab_size, cfg_.width}, std_base));
    add_p("pos_emb", normal_init({cfg_.max_seq, cfg_.width}, std_base));
    for (int64_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add_p(p + "ln1.gamma", Tensor::full({cfg_.width}, 1.0));
        add_p(p + "ln1.beta", Tensor::zeros({cfg_.width}));
        add_p(p + "attn.wq", normal_init({cfg_.width, cfg_.width}, std_base));
        add_p(p + "attn.bq", Tensor::zeros({cfg_.width}));
        add_p(p + "attn.wk", normal_init({cfg_.width, cfg_.width}, std_base));
        add_p(p + "attn.bk", Tensor::zeros({cfg_.width}));
        add_p(p + "attn.wv", normal_init({cfg_.width, cfg_.width}, std_base));
        add_p(p + "attn.bv", Tensor::zeros({cfg_.width}));
        add_p(p + "attn.wo", normal_init({cfg_.width, cfg_.width}, std_resid));
        add_p(p + "attn.bo", Tensor::zeros({cfg_.width}));
        add_p(p + "ln2.gamma", Tensor::full({cfg_.width}, 1.0));
        add_p(p + "ln2.beta", Tensor::zeros({cfg_.width}));
        add_p(p + "ffn.w1", normal_init({cfg_.width, cfg_.ffn_width}, std_base));
        add_p(p + "ffn.b1", Tensor::zeros({cfg_.ffn_width}));
        add_p(p + "ffn.w2", normal_init({cfg_.ffn_width, cfg_.width}, std_resid));
        add_p(p + "ffn.b2", Tensor::zeros({cfg_.width}));
    }
    add_p("final_ln.gamma", Tensor::full({cfg_.width}, 1.0));
    add_p("final_ln.beta", Tensor::zeros({cfg_.width}));
    add_p("lm_head.w", normal_init({cfg_.width, cfg_.vocab_size}, std_base));
    add_p("lm_head.b", Tensor::zeros({cfg_.vocab_size}));
}

Param& CausalLM::param(const std::string& name) {
    for (Param& p : params_)
        if (p.name == name) return p;
    throw data_error("no such parameter: " + name);
}

int64_t CausalLM::param_count() const {
    int64_t n = 0;
    for (const Param& p : params_) n += p.value.numel();
    return n;
}

uint64_t CausalLM::param_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Param& p : params_) {
        h = fnv1a64(p.name.data(), p.name.size(), h);
        h = fnv1a64(p.value.data(), static_cast<size_t>(p.value.numel()) * sizeof(double), h);
    }
    return h;
}

void CausalLM::zero_grads() {
    for (Param& p : params_) p.grad.zero();
}

void CausalLM::check_batch(const Batch& batch) const {
    if (batch.seq_len > cfg_.max_seq)
        throw data_error("batch seq_len " + std::to_string(batch.seq_len) +
                         " exceeds model max_seq " + std::to_string(cfg_.max_seq));
    for (int32_t t : batch.tokens)
        if (t < 0 || t >= cfg_.vocab_size)
            throw data_error("token id " + std::to_string(t) + " out of vocab range");
}

int CausalLM::forward_logprob_node(Graph& g, const Batch& batch) const {
    check_batch(batch);
    const int64_t B = batch.batch_size, L = batch.seq_len;
    auto* self = const_cast<CausalLM*>(this);

    std::vector<int32_t> pos_ids(static_cast<size_t>(B * L));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < L; ++i)
            pos_ids[static_cast<size_t>(b * L + i)] = static_cast<int32_t>(i);

    const auto leaf = [&](const std::string& name) {
        Param& p = self->param(name);
        return g.leaf(&p.value, &p.grad);
    };

    int x = g.add(g.embedding(leaf("tok_emb"), batch.tokens),
                  g.embedding(leaf("pos_emb"), pos_ids));
    for (int64_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        int h = g.layer_norm(x, leaf(p + "ln1.gamma"), leaf(p + "ln1.beta"));
        int q = g.linear(h, leaf(p + "attn.wq"), leaf(p + "attn.bq"));
        int k = g.linear(h, leaf(p + "attn.wk"), leaf(p + "attn.bk"));
        int v = g.linear(h, leaf(p + "attn.wv"), leaf(p + "attn.bv"));
        int a = g.causal_attention(q, k, v, B, L, cfg_.heads);
        int o = g.linear(a, leaf(p + "attn.wo"), leaf(p + "attn.bo"));
        x = g.add(x, o);
        int h2 = g.layer_norm(x, leaf(p + "ln2.gamma"), leaf(p + "ln2.beta"));
        int f = g.gelu(g.linear(h2, leaf(p + "ffn.w1"), leaf(p + "ffn.b1")));
        int f2 = g.linear(f, leaf(p + "ffn.w2"), leaf(p + "ffn.b2"));
        x = g.add(x, f2);
    }
    x = g.layer_norm(x, leaf("final_ln.gamma"), leaf("final_ln.beta"));
    int logits = g.linear(x, leaf("lm_head.w"), leaf("lm_head.b"));
    return g.log_softmax_rows(logits);
}

namespace {

// Maps target-cell weights [B x L] onto prediction rows: row (b, i) predicts
// the token at cell (b, i+1).
void shift_targets(const Batch& batch, const Tensor& weights, std::vector<int32_t>& targets,
                   std::vector<double>& w_flat) {
    const int64_t B = batch.batch_size, L = batch.seq_len;
    if (weights.ndim() != 2 || weights.rows() != B || weights.cols() != L)
        throw std::invalid_argument("ce_loss: weights must be [B x L]");
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < L; ++i)
            if (weights.at(b, i) != 0.0 && !batch.valid_at(b, i))
                throw std::invalid_argument("ce_loss: nonzero weight on invalid cell");
    targets.assign(static_cast<size_t>(B * L), 0);
    w_flat.assign(static_cast<size_t>(B * L), 0.0);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i + 1 < L; ++i) {
            if (!batch.valid_at(b, i + 1)) continue;
            targets[static_cast<size_t>(b * L + i)] = batch.token_at(b, i + 1);
            w_flat[static_cast<size_t>(b * L + i)] = weights.at(b, i + 1);
        }
    }
}

}  // namespace

int CausalLM::ce_loss_from_logprobs(Graph& g, int logp_node, const Batch& batch,
                                    const Tensor& weights) const {
    std::vector<int32_t> targets;
    std::vector<double> w_flat;
    shift_targets(batch, weights, targets, w_flat);
    return g.nll_gather(logp_node, std::move(targets), std::move(w_flat));
}

int CausalLM::ce_loss(Graph& g, const Batch& batch, const Tensor& weights) const {
    return ce_loss_from_logprobs(g, forward_logprob_node(g, batch), batch, weights);
}

Tensor CausalLM::logprobs_from_node(const Graph& g, int logp_node, const Batch& batch) {
    const Tensor& lp = g.value(logp_node);
    const int64_t B = batch.batch_size, L = batch.seq_len;
    Tensor out = Tensor::full({B, L}, std::numeric_limits<double>::quiet_NaN());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 1; i < L; ++i)
            if (batch.valid_at(b, i))
                out.at(b, i) = lp.at(b * L + i - 1, batch.token_at(b, i));
    return out;
}

Tensor CausalLM::token_logprobs(const Batch& batch) const {
    Graph g;
    const int lp = forward_logprob_node(g, batch);
    return logprobs_from_node(g, lp, batch);
}

Tensor CausalLM::uniform_weights(const Batch& batch) {
    const int64_t n = batch.valid_count();
    Tensor w = Tensor::zeros({batch.batch_size, batch.seq_len});
    if (n == 0) return w;
    const double u = 1.0 / static_cast<double>(n);
    for (int64_t b = 0; b < batch.batch_size; ++b)
        for (int64_t i = 0; i < batch.seq_len; ++i)
            if (batch.valid_at(b, i)) w.at(b, i) = u;
    return w;
}

double CausalLM::mean_ce(const Batch& batch) const {
    Graph g;
    const int loss = ce_loss(g, batch, uniform_weights(batch));
    return g.scalar_value(loss);
}

double mean_ce_over_split(const CausalLM& model, const std::vector<TokenizedDoc>& split,
                          int64_t seq_len, int64_t batch_size) {
    if (split.empty()) throw data_error("cannot evaluate an empty split");
    const int32_t pad = static_cast<int32_t>(model.config().vocab_size - 2);
    const auto batches = make_batches(split, seq_len, batch_size, /*seed=*/0, /*epoch=*/0, pad);
    double nll_sum = 0.0;
    int64_t n = 0;
    for (const Batch& b : batches) {
        const int64_t v = b.valid_count();
        nll_sum += model.mean_ce(b) * static_cast<double>(v);
        n += v;
    }
    return nll_sum / static_cast<double>(n);
}

double perplexity(const CausalLM& model, const std::vector<TokenizedDoc>& split,
                  int64_t seq_len, int64_t batch_size) {
    return std::exp(mean_ce_over_split(model, split, seq_len, batch_size));
}

}  // namespace duolearn
