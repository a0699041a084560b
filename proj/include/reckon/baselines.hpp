#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "reckon/model.hpp"
#include "reckon/rng.hpp"
#include "reckon/tasks.hpp"
#include "reckon/trainer.hpp"

namespace reckon::baseline {

// Comparison systems sharing the decoder: a fine-tuned reader that sees the
// facts in context, two input ablations, and a control that runs the
// gradient-encoding trainer on facts resampled from unrelated problems.
enum class BaselineKind { ft_icr, no_facts, no_question, random_facts };

const char* kind_name(BaselineKind kind);
BaselineKind kind_from_name(const std::string& name);

// "BOS <fact tokens...> <question words> SEP": the concatenated context-and-
// question input. Fact order is preserved; an empty fact set degenerates to
// the bare question. Throws with both lengths when the result would not fit.
std::vector<int> build_icr_input(const tasks::EncodedProblem& ep, long context_length);

// One supervised example: the token sequence with per-token loss weights
// (weights[t] scales the prediction of token t, entry 0 unused).
struct BaselineExample {
  std::vector<int> tokens;
  std::vector<double> weights;
};

// The answer position weighs 1; with multi_task each recall token weighs 1/R.
// no_facts ignores multi_task: its recall target is defined to be empty, so
// its loss path is the question-plus-answer path and nothing else.
BaselineExample make_example(BaselineKind kind, const tasks::EncodedProblem& ep, bool multi_task,
                             long context_length);

// The example's prompt prefix, up to and including the separator.
std::vector<int> eval_input(BaselineKind kind, const tasks::EncodedProblem& ep,
                            long context_length);

// Replaces every problem's facts with those of another problem drawn
// uniformly from the rest of the set; whole fact sets move, so the fact-count
// distribution is preserved. The recall target becomes the replacement facts;
// question, answer, and candidates stay put.
std::vector<tasks::EncodedProblem> make_random_facts(std::span<const tasks::EncodedProblem> problems,
                                                     Rng& rng);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::ft_icr;
  bool multi_task = false;
  long batch_size = 16;
  long epochs = 6;
  long patience = 8;      // validations without improvement before stopping
  double stop_acc = 2.0;  // > 1 means never stop on accuracy
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  train::TrainConfig inner;  // trainer settings used by random_facts only

  void validate() const;
};

struct BaselineResult {
  NamedParameterSet best_theta;
  train::LearnedStepSizes best_alpha;  // random_facts only; empty otherwise
  double best_val_acc = -1.0;
  long best_epoch = -1;
  long epochs_run = 0;
  long skipped_batches = 0;
  bool early_stopped = false;
  bool reached_target = false;
  std::vector<nlohmann::json> log;  // one record per validation, logical time only
};

// Supervised fine-tuning with the same twice-per-epoch validation and early
// stopping as the gradient-encoding trainer. random_facts resamples the fact
// sets of both splits and delegates to that trainer.
BaselineResult train_baseline(const GptModel& model, const BaselineConfig& cfg,
                              std::span<const tasks::EncodedProblem> train_set,
                              std::span<const tasks::EncodedProblem> val_set);

// Single-forward answer from the kind-specific input (not for random_facts,
// which answers through the adapted-parameter path).
int answer_with_baseline(const GptModel& model, const NamedParameterSet& theta, BaselineKind kind,
                         const tasks::EncodedProblem& ep, long context_length);

}  // namespace reckon::baseline
