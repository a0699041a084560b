#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reckon/model.hpp"
#include "reckon/params.hpp"
#include "reckon/tasks.hpp"
#include "reckon/tensor.hpp"

namespace reckon::train {

// One scalar step size per (layer group, inner step). Entries are rank-0
// leaf tensors so the outer loop can differentiate through them; they are
// unconstrained (no positivity clamp).
struct LearnedStepSizes {
  std::vector<std::vector<ad::Tensor>> entries;  // [layer][step]

  static LearnedStepSizes make(long layer_count, long steps, double init);

  long layer_count() const { return static_cast<long>(entries.size()); }
  long steps() const { return entries.empty() ? 0 : static_cast<long>(entries[0].size()); }
  // Row-major (layer, step) view; the canonical outer-graph leaf order.
  std::vector<ad::Tensor> flat() const;
  ad::Tensor to_tensor() const;  // [layer_count, steps] snapshot
  static LearnedStepSizes from_tensor(const ad::Tensor& t);
  LearnedStepSizes deep_copy() const;
  bool all_finite() const;
};

// Inner-loop optimizer: plain elementwise gradient descent is the primary,
// differentiable rule. The adaptive-moment variant keeps running moments as
// constants, so it is valid only where the outer gradient does not flow
// through the inner gradients (first-order or inference).
enum class InnerOpt { gd, adam };

struct TrainConfig {
  long inner_steps = 4;      // N
  double outer_lr = 1e-3;    // shared by the meta-parameters and step sizes
  double alpha_init = 1e-2;
  enum class Order { second, first };
  Order order = Order::second;
  bool multi_task = false;
  bool learn_alpha = true;   // false = fixed shared step size ablation
  InnerOpt inner_opt = InnerOpt::gd;
  long meta_batch = 4;
  long grad_accum = 1;
  long epochs = 60;
  long patience = 8;         // validations without improvement before stopping
  double stop_acc = 2.0;     // halt once val accuracy reaches this (2 = never)
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  long episode_batch() const { return meta_batch * grad_accum; }
};

// Raised when an inner-loop loss stops being finite; callers treat it as an
// aborted episode, not a programming error.
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// True when an error from the op layer reports an exploded value rather than
// a shape or contract violation; only those abort episodes.
bool is_non_finite_error(const std::exception& e);

// How the adapted parameters relate to the outer graph.
//   none:   values only; per-step throwaway tapes (inference/validation).
//   first:  update chain recorded, inner gradients detached.
//   second: fully differentiable through the inner gradients.
enum class GradMode { none, first, second };

struct AdaptResult {
  NamedParameterSet params;   // adapted copy; theta itself is never mutated
  std::vector<double> trace;  // inner loss at steps 0..N (N+1 entries)
};

// Generic inner loop over an arbitrary scalar loss of the parameters; the
// model-coupled overload feeds it the mean per-fact CLM loss.
using InnerLossFn = std::function<ad::Tensor(const NamedParameterSet&)>;
AdaptResult inner_adapt_fn(const InnerLossFn& inner_loss, const NamedParameterSet& theta,
                           const LearnedStepSizes& alpha, long steps, GradMode mode,
                           InnerOpt opt = InnerOpt::gd);
AdaptResult inner_adapt(const GptModel& model, const NamedParameterSet& theta,
                        const std::vector<std::vector<int>>& facts,
                        const LearnedStepSizes& alpha, long steps, GradMode mode,
                        InnerOpt opt = InnerOpt::gd);

// Answer cross-entropy at the post-separator position; the multi-task form
// adds the mean recall NLL of the relevant-fact tokens, conditioned on the
// question and the gold answer, summed unweighted.
ad::Tensor outer_loss(const GptModel& model, const NamedParameterSet& adapted,
                      const tasks::EncodedProblem& ep, bool multi_task);

struct MetaGrads {
  std::vector<ad::Tensor> theta;                  // aligned with the parameter set
  std::vector<std::vector<ad::Tensor>> alpha;     // [layer][step]
  double mean_loss = 0.0;  // episode losses summed over the batch divisor
  long skipped = 0;        // episodes dropped for non-finite loss/gradients
};

// Mean meta-gradient over a batch of episodes. Episodes yielding non-finite
// values are skipped and counted; the divisor stays the batch size.
MetaGrads meta_gradients(const GptModel& model, const NamedParameterSet& theta,
                         const LearnedStepSizes& alpha,
                         std::span<const tasks::EncodedProblem> batch, const TrainConfig& cfg);

// Decoupled-weight-decay adaptive-moment state over [theta..., alpha...].
struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamWState init(const NamedParameterSet& theta, const LearnedStepSizes& alpha);
};

// One outer update of theta and alpha with a shared learning rate; weight
// decay applies to theta only (alpha is a step-size meta-parameter, decaying
// it toward zero would fight the inner loop). Alpha moves only when
// cfg.learn_alpha is set.
void meta_step(NamedParameterSet& theta, LearnedStepSizes& alpha, AdamWState& state,
               const MetaGrads& grads, const TrainConfig& cfg);

// Inference-mode episode: adapt without an outer graph, then pick the
// candidate with the highest post-separator logit.
int answer_problem(const GptModel& model, const NamedParameterSet& theta,
                   const LearnedStepSizes& alpha, long steps, const tasks::EncodedProblem& ep,
                   InnerOpt opt = InnerOpt::gd);

struct TrainResult {
  NamedParameterSet best_theta;
  LearnedStepSizes best_alpha;
  double best_val_acc = -1.0;
  long best_epoch = -1;
  long epochs_run = 0;
  long skipped_episodes = 0;
  bool early_stopped = false;
  bool reached_target = false;
  bool diverged = false;
  std::vector<nlohmann::json> log;  // one record per validation, logical time only
};

TrainResult train(const GptModel& model, const TrainConfig& cfg,
                  std::span<const tasks::EncodedProblem> train_set,
                  std::span<const tasks::EncodedProblem> val_set);

struct InferResult {
  std::vector<int> answers;
  std::vector<GptModel::Generated> recalled;  // filled when recall_budget > 0
  long knowledge_tokens = 0;                  // steps x total fact tokens, question-independent
  std::vector<long> question_tokens;
  std::vector<double> trace;
};

// Encode the fact set once, then answer every question from the adapted
// parameters. Recall generation continues from question + predicted answer.
InferResult infer(const GptModel& model, const NamedParameterSet& theta,
                  const LearnedStepSizes& alpha, long steps,
                  const std::vector<std::vector<int>>& facts,
                  const std::vector<std::vector<int>>& questions,
                  const std::vector<int>& candidates, long recall_budget = 0,
                  InnerOpt opt = InnerOpt::gd);

// Checkpoints carry theta, alpha, optimizer moments, and caller metadata.
void save_training_checkpoint(const std::string& path, const NamedParameterSet& theta,
                              const LearnedStepSizes& alpha, const AdamWState* state,
                              nlohmann::json meta);
struct LoadedCheckpoint {
  NamedParameterSet theta;
  LearnedStepSizes alpha;
  AdamWState state;
  bool has_state = false;
  nlohmann::json meta;
};
LoadedCheckpoint load_training_checkpoint(const std::string& path);

}  // namespace reckon::train
