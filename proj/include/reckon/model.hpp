#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reckon/params.hpp"
#include "reckon/tensor.hpp"

namespace reckon {

struct ModelConfig {
  long vocab_size = 0;
  long context_length = 256;
  long layers = 4;
  long heads = 4;
  long embed_dim = 128;
  std::uint64_t seed = 0;

  void validate() const;
  // Closed form: embed_dim=D, layers=B, vocab=V, context=C:
  //   V*D + C*D + B*(12*D^2 + 13*D) + 2*D + D*V + V
  long param_count() const;
};

// Decoder-only causal transformer: learned absolute positions, pre-norm
// blocks, tanh GELU, 4x MLP width, separate (untied) output head.
class GptModel {
 public:
  explicit GptModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // Seeded init: N(0, 0.02) weights, zero biases, unit norm gains.
  NamedParameterSet init_params() const;

  // Logits per position, [T, vocab].
  ad::Tensor forward_logits(const NamedParameterSet& params, std::span<const int> tokens) const;
  // Batched over padded sequences, [B, Tmax, vocab]; rows are left-aligned so
  // causal masking keeps padding out of every real position's view.
  ad::Tensor forward_logits_batch(const NamedParameterSet& params,
                                  const std::vector<std::vector<int>>& seqs) const;

  // Mean next-token NLL over positions 2..T; loss_mask (length T, entry t
  // gates the prediction of token t) defaults to all positions.
  ad::Tensor clm_loss(const NamedParameterSet& params, std::span<const int> tokens,
                      std::span<const double> loss_mask = {}) const;
  // Mean of per-sequence clm losses, computed in one padded batch.
  ad::Tensor clm_loss_mean(const NamedParameterSet& params,
                           const std::vector<std::vector<int>>& seqs) const;

  // Unnormalized weighted sum of next-token NLLs: weights[t] scales the
  // prediction of token t (entry 0 unused). Composite objectives pick their
  // own normalization through the weights.
  ad::Tensor clm_weighted_sum(const NamedParameterSet& params, std::span<const int> tokens,
                              std::span<const double> weights) const;
  // Batched form: grand weighted sum over all sequences in one padded pass.
  ad::Tensor clm_weighted_sum_batch(const NamedParameterSet& params,
                                    const std::vector<std::vector<int>>& seqs,
                                    const std::vector<std::vector<double>>& weights) const;

  // Argmax over candidate logits at the final position; ties -> lowest id.
  int predict_answer(const NamedParameterSet& params, std::span<const int> question,
                     std::span<const int> candidates) const;

  struct Generated {
    std::vector<int> tokens;  // prompt + continuation
    bool truncated = false;   // budget hit before the stop token
  };
  // Greedy decode; stops at stop_token (pass -1 to disable) or max_new.
  Generated generate_greedy(const NamedParameterSet& params, std::span<const int> prompt,
                            long max_new, int stop_token) const;

 private:
  ad::Tensor block_forward(const NamedParameterSet& params, const ad::Tensor& x, long block,
                           const ad::Tensor& mask) const;
  ModelConfig cfg_;
};

}  // namespace reckon
