// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duolearn/corpus.h"
#include "duolearn/graph.h"
#include "duolearn/param.h"

namespace duolearn {

struct ModelConfig {
    int64_t vocab_size = 258;
    int64_t layers = 4;
    int64_t heads = 4;
    int64_t width = 128;
    int64_t ffn_width = 512;
    int64_t max_seq = 128;
    uint64_t init_seed = 42;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Pre-norm causal transformer with learned positional embeddings and an
// untied output projection. One instance may serve as the training model, a
// frozen defender/attacker reference, or a backdoor warm-up model.
class CausalLM {
  public:
    explicit CausalLM(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    Param& param(const std::string& name);
    int64_t param_count() const;
    uint64_t param_hash() const;
    void zero_grads();

    // Builds the forward tape on `g` for one batch and returns the
    // log-softmax node over all B*L prediction positions ([B*L x V]).
    int forward_logprob_node(Graph& g, const Batch& batch) const;

    // Differentiable weighted cross entropy: loss = -sum w[b,i] * log
    // P(t_i | t_<i). `weights` is [B x L], keyed by target cell, and must be
    // zero on invalid cells. Returns the scalar loss node.
    int ce_loss(Graph& g, const Batch& batch, const Tensor& weights) const;
    // Same, reusing an existing forward (logprob node) on the same batch.
    int ce_loss_from_logprobs(Graph& g, int logp_node, const Batch& batch,
                              const Tensor& weights) const;

    // Per-token log-probabilities of the actual next token, [B x L] keyed by
    // target cell; NaN sentinel at invalid cells. Gradient-free.
    Tensor token_logprobs(const Batch& batch) const;
    static Tensor logprobs_from_node(const Graph& g, int logp_node, const Batch& batch);

    // Uniform weights 1/|valid| on valid cells ([B x L]).
    static Tensor uniform_weights(const Batch& batch);

    // Mean CE over the valid cells of one batch, gradient-free.
    double mean_ce(const Batch& batch) const;

  private:
    void check_batch(const Batch& batch) const;

    ModelConfig cfg_;
    std::vector<Param> params_;
};

// exp(token-weighted mean CE) over every valid position of the split.
double perplexity(const CausalLM& model, const std::vector<TokenizedDoc>& split,
                  int64_t seq_len, int64_t batch_size = 32);
double mean_ce_over_split(const CausalLM& model, const std::vector<TokenizedDoc>& split,
                          int64_t seq_len, int64_t batch_size = 32);

}  // namespace duolearn
