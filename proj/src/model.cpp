#include "reckon/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "reckon/ops.hpp"
#include "reckon/rng.hpp"
#include "reckon/tape.hpp"
#include "reckon/vocab.hpp"

namespace reckon {

using namespace ad;

void ModelConfig::validate() const {
  if (vocab_size < 5) throw std::runtime_error("model config: vocab_size must cover specials");
  if (embed_dim % heads != 0) {
    throw std::runtime_error("model config: embed_dim " + std::to_string(embed_dim) +
                             " not divisible by heads " + std::to_string(heads));
  }
  if (layers < 1 || context_length < 2) {
    throw std::runtime_error("model config: layers >= 1 and context_length >= 2 required");
  }
}

long ModelConfig::param_count() const {
  const long V = vocab_size, D = embed_dim, B = layers, C = context_length;
  return V * D + C * D + B * (12 * D * D + 13 * D) + 2 * D + D * V + V;
}

GptModel::GptModel(ModelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

namespace {

Tensor init_normal(Rng& rng, Shape shape, double stddev) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_data(std::move(shape), std::move(v));
}

std::string blk(long i, const char* suffix) { return "blk" + std::to_string(i) + "." + suffix; }

// Additive causal mask: 0 at or before the diagonal, -1e30 after.
Tensor causal_mask(long t) {
  std::vector<double> m(static_cast<size_t>(t * t), 0.0);
  for (long r = 0; r < t; ++r) {
    for (long c = r + 1; c < t; ++c) m[static_cast<size_t>(r * t + c)] = -1e30;
  }
  return Tensor::from_data({t, t}, std::move(m));
}

}  // namespace

NamedParameterSet GptModel::init_params() const {
  const long V = cfg_.vocab_size, D = cfg_.embed_dim, C = cfg_.context_length;
  Rng rng(cfg_.seed);
  NamedParameterSet p;
  p.add("wte", 0, init_normal(rng, {V, D}, 0.02));
  p.add("wpe", 0, init_normal(rng, {C, D}, 0.02));
  for (long i = 1; i <= cfg_.layers; ++i) {
    const int layer = static_cast<int>(i);
    p.add(blk(i, "ln1.gain"), layer, Tensor::full({D}, 1.0));
    p.add(blk(i, "ln1.bias"), layer, Tensor::zeros({D}));
    p.add(blk(i, "attn.wqkv"), layer, init_normal(rng, {D, 3 * D}, 0.02));
    p.add(blk(i, "attn.bqkv"), layer, Tensor::zeros({3 * D}));
    p.add(blk(i, "attn.wo"), layer, init_normal(rng, {D, D}, 0.02));
    p.add(blk(i, "attn.bo"), layer, Tensor::zeros({D}));
    p.add(blk(i, "ln2.gain"), layer, Tensor::full({D}, 1.0));
    p.add(blk(i, "ln2.bias"), layer, Tensor::zeros({D}));
    p.add(blk(i, "mlp.wi"), layer, init_normal(rng, {D, 4 * D}, 0.02));
    p.add(blk(i, "mlp.bi"), layer, Tensor::zeros({4 * D}));
    p.add(blk(i, "mlp.wo"), layer, init_normal(rng, {4 * D, D}, 0.02));
    p.add(blk(i, "mlp.bo"), layer, Tensor::zeros({D}));
  }
  const int head_layer = static_cast<int>(cfg_.layers) + 1;
  p.add("lnf.gain", head_layer, Tensor::full({D}, 1.0));
  p.add("lnf.bias", head_layer, Tensor::zeros({D}));
  p.add("head.w", head_layer, init_normal(rng, {D, V}, 0.02));
  p.add("head.b", head_layer, Tensor::zeros({V}));
  return p;
}

Tensor GptModel::block_forward(const NamedParameterSet& p, const Tensor& x, long i,
                               const Tensor& mask) const {
  const long D = cfg_.embed_dim, H = cfg_.heads, dh = D / H;
  const long B = x.dim(0), T = x.dim(1);

  Tensor h = layer_norm(x, p.at(blk(i, "ln1.gain")), p.at(blk(i, "ln1.bias")));
  Tensor qkv = add(matmul(h, p.at(blk(i, "attn.wqkv"))), p.at(blk(i, "attn.bqkv")));
  auto heads_view = [&](Tensor t) {
    return swap_axes(reshape(std::move(t), {B, T, H, dh}), 1, 2);  // [B, H, T, dh]
  };
  Tensor q = heads_view(slice(qkv, 2, 0, D));
  Tensor k = heads_view(slice(qkv, 2, D, D));
  Tensor v = heads_view(slice(qkv, 2, 2 * D, D));
  Tensor scores = mul_scalar(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax_last(add(scores, mask));
  Tensor ctx = reshape(swap_axes(matmul(attn, v), 1, 2), {B, T, D});
  Tensor proj = add(matmul(ctx, p.at(blk(i, "attn.wo"))), p.at(blk(i, "attn.bo")));
  Tensor x1 = add(x, proj);

  Tensor h2 = layer_norm(x1, p.at(blk(i, "ln2.gain")), p.at(blk(i, "ln2.bias")));
  Tensor mid = gelu(add(matmul(h2, p.at(blk(i, "mlp.wi"))), p.at(blk(i, "mlp.bi"))));
  Tensor out = add(matmul(mid, p.at(blk(i, "mlp.wo"))), p.at(blk(i, "mlp.bo")));
  return add(x1, out);
}

Tensor GptModel::forward_logits_batch(const NamedParameterSet& p,
                                      const std::vector<std::vector<int>>& seqs) const {
  if (seqs.empty()) throw std::runtime_error("forward: empty batch");
  const long B = static_cast<long>(seqs.size());
  long T = 0;
  for (const auto& s : seqs) {
    if (s.empty()) throw std::runtime_error("forward: empty sequence");
    T = std::max(T, static_cast<long>(s.size()));
  }
  if (T > cfg_.context_length) {
    throw std::runtime_error("forward: sequence length " + std::to_string(T) +
                             " exceeds context length " + std::to_string(cfg_.context_length));
  }
  std::vector<int> ids(static_cast<size_t>(B * T), Vocabulary::kPad);
  for (long b = 0; b < B; ++b) {
    const auto& s = seqs[static_cast<size_t>(b)];
    std::copy(s.begin(), s.end(), ids.begin() + b * T);
  }
  std::vector<int> pos(static_cast<size_t>(T));
  for (long t = 0; t < T; ++t) pos[static_cast<size_t>(t)] = static_cast<int>(t);

  const long D = cfg_.embed_dim;
  Tensor tok = reshape(embedding(p.at("wte"), ids), {B, T, D});
  Tensor x = add(tok, embedding(p.at("wpe"), pos));
  Tensor mask = causal_mask(T);
  for (long i = 1; i <= cfg_.layers; ++i) x = block_forward(p, x, i, mask);
  Tensor xf = layer_norm(x, p.at("lnf.gain"), p.at("lnf.bias"));
  return add(matmul(xf, p.at("head.w")), p.at("head.b"));
}

Tensor GptModel::forward_logits(const NamedParameterSet& p, std::span<const int> tokens) const {
  std::vector<std::vector<int>> one{std::vector<int>(tokens.begin(), tokens.end())};
  Tensor logits = forward_logits_batch(p, one);
  return reshape(logits, {static_cast<long>(tokens.size()), cfg_.vocab_size});
}

Tensor GptModel::clm_loss(const NamedParameterSet& p, std::span<const int> tokens,
                          std::span<const double> loss_mask) const {
  const long T = static_cast<long>(tokens.size());
  if (T < 2) throw std::runtime_error("clm_loss: sequence too short (length " +
                                      std::to_string(T) + ")");
  if (!loss_mask.empty() && static_cast<long>(loss_mask.size()) != T) {
    throw std::runtime_error("clm_loss: mask length != sequence length");
  }
  Tensor logits = forward_logits(p, tokens);
  Tensor rows = slice(logits, 0, 0, T - 1);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  if (loss_mask.empty()) {
    return cross_entropy_from_logits(rows, targets);
  }
  std::vector<double> w(loss_mask.begin() + 1, loss_mask.end());
  double total = 0.0;
  for (double x : w) total += x;
  if (total <= 0.0) throw std::runtime_error("clm_loss: loss mask selects no positions");
  return cross_entropy_from_logits(rows, targets, w);
}

Tensor GptModel::clm_loss_mean(const NamedParameterSet& p,
                               const std::vector<std::vector<int>>& seqs) const {
  if (seqs.empty()) throw std::runtime_error("clm_loss_mean: empty set");
  const long B = static_cast<long>(seqs.size());
  long T = 0;
  for (const auto& s : seqs) {
    if (s.size() < 2) throw std::runtime_error("clm_loss_mean: sequence too short");
    T = std::max(T, static_cast<long>(s.size()));
  }
  Tensor logits = forward_logits_batch(p, seqs);                   // [B, T, V]
  Tensor rows = reshape(slice(logits, 1, 0, T - 1), {B * (T - 1), cfg_.vocab_size});
  std::vector<int> targets(static_cast<size_t>(B * (T - 1)), 0);
  std::vector<double> weights(static_cast<size_t>(B * (T - 1)), 0.0);
  for (long b = 0; b < B; ++b) {
    const auto& s = seqs[static_cast<size_t>(b)];
    const long n = static_cast<long>(s.size()) - 1;
    for (long t = 0; t < n; ++t) {
      targets[static_cast<size_t>(b * (T - 1) + t)] = s[static_cast<size_t>(t + 1)];
      // 1/(n*B): the weighted sum becomes the mean of per-sequence means.
      weights[static_cast<size_t>(b * (T - 1) + t)] = 1.0 / (static_cast<double>(n) * B);
    }
  }
  return cross_entropy_from_logits(rows, targets, weights);
}

Tensor GptModel::clm_weighted_sum(const NamedParameterSet& p, std::span<const int> tokens,
                                  std::span<const double> weights) const {
  const long T = static_cast<long>(tokens.size());
  if (T < 2) throw std::runtime_error("clm_weighted_sum: sequence too short");
  if (static_cast<long>(weights.size()) != T) {
    throw std::runtime_error("clm_weighted_sum: weight length != sequence length");
  }
  std::vector<double> w(weights.begin() + 1, weights.end());
  double total = 0.0;
  for (double x : w) total += x;
  if (total <= 0.0) throw std::runtime_error("clm_weighted_sum: weights select no positions");
  Tensor logits = forward_logits(p, tokens);
  Tensor rows = slice(logits, 0, 0, T - 1);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  // cross_entropy_from_logits normalizes by the weight total; undo it.
  return mul_scalar(cross_entropy_from_logits(rows, targets, w), total);
}

Tensor GptModel::clm_weighted_sum_batch(const NamedParameterSet& p,
                                        const std::vector<std::vector<int>>& seqs,
                                        const std::vector<std::vector<double>>& weights) const {
  if (seqs.empty()) throw std::runtime_error("clm_weighted_sum_batch: empty set");
  if (weights.size() != seqs.size()) {
    throw std::runtime_error("clm_weighted_sum_batch: weight rows != sequence rows");
  }
  const long B = static_cast<long>(seqs.size());
  long T = 0;
  for (size_t b = 0; b < seqs.size(); ++b) {
    if (seqs[b].size() < 2) throw std::runtime_error("clm_weighted_sum_batch: sequence too short");
    if (weights[b].size() != seqs[b].size()) {
      throw std::runtime_error("clm_weighted_sum_batch: weight length != sequence length");
    }
    T = std::max(T, static_cast<long>(seqs[b].size()));
  }
  Tensor logits = forward_logits_batch(p, seqs);  // [B, T, V]
  Tensor rows = reshape(slice(logits, 1, 0, T - 1), {B * (T - 1), cfg_.vocab_size});
  std::vector<int> targets(static_cast<size_t>(B * (T - 1)), 0);
  std::vector<double> w(static_cast<size_t>(B * (T - 1)), 0.0);
  double total = 0.0;
  for (long b = 0; b < B; ++b) {
    const auto& s = seqs[static_cast<size_t>(b)];
    for (long t = 0; t + 1 < static_cast<long>(s.size()); ++t) {
      targets[static_cast<size_t>(b * (T - 1) + t)] = s[static_cast<size_t>(t + 1)];
      const double x = weights[static_cast<size_t>(b)][static_cast<size_t>(t + 1)];
      w[static_cast<size_t>(b * (T - 1) + t)] = x;
      total += x;
    }
  }
  if (total <= 0.0) {
    throw std::runtime_error("clm_weighted_sum_batch: weights select no positions");
  }
  return mul_scalar(cross_entropy_from_logits(rows, targets, w), total);
}

int GptModel::predict_answer(const NamedParameterSet& p, std::span<const int> question,
                             std::span<const int> candidates) const {
  if (candidates.empty()) throw std::runtime_error("predict_answer: empty candidate set");
  if (question.empty() || question.back() != Vocabulary::kSep) {
    throw std::runtime_error("predict_answer: question must end with the separator token");
  }
  NoGradScope ng;
  Tensor logits = forward_logits(p, question);
  const long T = static_cast<long>(question.size());
  const double* last = logits.raw() + (T - 1) * cfg_.vocab_size;
  std::vector<int> cands(candidates.begin(), candidates.end());
  std::sort(cands.begin(), cands.end());
  int best = cands[0];
  for (int c : cands) {
    if (c < 0 || c >= cfg_.vocab_size) {
      throw std::runtime_error("predict_answer: candidate " + std::to_string(c) +
                               " outside vocabulary");
    }
    if (last[c] > last[best]) best = c;
  }
  return best;
}

GptModel::Generated GptModel::generate_greedy(const NamedParameterSet& p,
                                              std::span<const int> prompt, long max_new,
                                              int stop_token) const {
  if (static_cast<long>(prompt.size()) + max_new > cfg_.context_length) {
    throw std::runtime_error("generate: prompt " + std::to_string(prompt.size()) + " + budget " +
                             std::to_string(max_new) + " exceeds context length " +
                             std::to_string(cfg_.context_length));
  }
  NoGradScope ng;
  Generated out;
  out.tokens.assign(prompt.begin(), prompt.end());
  for (long step = 0; step < max_new; ++step) {
    Tensor logits = forward_logits(p, out.tokens);
    const long T = static_cast<long>(out.tokens.size());
    const double* last = logits.raw() + (T - 1) * cfg_.vocab_size;
    int best = 0;
    for (long c = 1; c < cfg_.vocab_size; ++c) {
      if (last[c] > last[best]) best = static_cast<int>(c);
    }
    out.tokens.push_back(best);
    if (best == stop_token) return out;
  }
  out.truncated = (max_new > 0 && stop_token >= 0);
  return out;
}

}  // namespace reckon
