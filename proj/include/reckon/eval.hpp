#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reckon/baselines.hpp"
#include "reckon/model.hpp"
#include "reckon/tasks.hpp"
#include "reckon/trainer.hpp"

namespace reckon::eval {

// One measured value with its experimental condition. Timestamps are logical
// (assigned in append order), so serialized records are byte-reproducible.
struct MetricRecord {
  std::string experiment;
  std::map<std::string, std::string> condition;  // ordered keys -> stable serialization
  std::string metric;
  double value = 0.0;
  long timestamp = -1;
};

// Append-only set enforcing one value per (experiment, condition, metric).
// Re-adding an identical record is a no-op, so protocol re-runs are harmless;
// a conflicting value for an existing key is an error.
class RecordSet {
 public:
  void add(MetricRecord r);
  void add_all(std::vector<MetricRecord> rs);
  const std::vector<MetricRecord>& records() const { return records_; }
  void write_jsonl(const std::string& path) const;

 private:
  std::vector<MetricRecord> records_;
  std::map<std::string, size_t> index_;
};

// How a system under test answers or reproduces knowledge for one problem.
// Returning -1 (or an empty recall) marks the item failed, scored incorrect.
using Answerer = std::function<int(const tasks::EncodedProblem&)>;
using Recaller = std::function<std::vector<int>(const tasks::EncodedProblem&)>;

// Adapt on the fact set, then answer / reproduce facts from the updated
// parameters. Recall prompts with the question plus the gold answer and
// generates exactly the gold token budget.
Answerer adapted_answerer(const GptModel& model, const NamedParameterSet& theta,
                          const train::LearnedStepSizes& alpha, long steps,
                          train::InnerOpt opt = train::InnerOpt::gd);
Recaller adapted_recaller(const GptModel& model, const NamedParameterSet& theta,
                          const train::LearnedStepSizes& alpha, long steps,
                          train::InnerOpt opt = train::InnerOpt::gd);

// Single-forward systems reading their kind-specific input.
Answerer reader_answerer(const GptModel& model, const NamedParameterSet& theta,
                         baseline::BaselineKind kind, long context_length);
Recaller reader_recaller(const GptModel& model, const NamedParameterSet& theta,
                         long context_length);

// Mean exact answer-token match.
double label_accuracy(const Answerer& answer, std::span<const tasks::EncodedProblem> test);

// Strict token-for-token match of the reproduced relevant-fact concatenation.
double recall_exact_match(const Recaller& recall, std::span<const tasks::EncodedProblem> test);

// Predictions dumped one JSON object per line for independent re-scoring.
void write_predictions_jsonl(const std::string& path, std::span<const int> predicted,
                             std::span<const int> gold);

struct InnerLossReport {
  double final_mean = 0.0;  // mean last-step fact-set loss
  double delta_mean = 0.0;  // mean first-to-last decrease
  long problems = 0;
  long failures = 0;  // non-finite adaptations, excluded from the means
};

// Aggregates the per-problem adaptation traces on a validation set.
InnerLossReport inner_loss_report(const GptModel& model, const NamedParameterSet& theta,
                                  const train::LearnedStepSizes& alpha, long steps,
                                  std::span<const tasks::EncodedProblem> val,
                                  train::InnerOpt opt = train::InnerOpt::gd);

// Accuracy of each train-hop system on each test-hop set; one record per
// requested (train_hops, test_hops) cell, so the emitted grid is complete.
// A system or set missing for a requested hop count is an error naming it.
std::vector<MetricRecord> hop_generalization(
    const std::vector<long>& train_hops, const std::vector<long>& test_hops,
    const std::map<long, Answerer>& systems,
    const std::map<long, std::vector<tasks::EncodedProblem>>& test_sets,
    const std::map<std::string, std::string>& tags);

// Accuracy per requested distractor count; -1 means every generated
// distractor. Missing conditions are errors naming the count.
std::vector<MetricRecord> distractor_sweep(
    const std::vector<long>& counts, const std::map<long, Answerer>& systems,
    const std::map<long, std::vector<tasks::EncodedProblem>>& test_sets,
    const std::map<std::string, std::string>& tags);

// Accuracy per requested inner-step count over one test set.
std::vector<MetricRecord> inner_steps_ablation(const std::vector<long>& step_counts,
                                               const std::map<long, Answerer>& systems,
                                               std::span<const tasks::EncodedProblem> test,
                                               const std::map<std::string, std::string>& tags);

// Learned per-(layer, step) step sizes against one fixed shared value.
std::vector<MetricRecord> adaptive_lr_ablation(const Answerer& learned, const Answerer& fixed,
                                               std::span<const tasks::EncodedProblem> test,
                                               const std::map<std::string, std::string>& tags);

struct RuntimeResult {
  std::string method;
  long questions = 0;
  long knowledge_tokens = 0;  // exact counter, hardware-independent
  long question_tokens = 0;   // prompt tokens consumed answering
  double median_seconds = 0.0;
  long reps = 0;
};

// Wall-clock median over reps (after one warmup) plus deterministic token
// counters. The adapted system encodes the facts once per rep and reuses the
// updated parameters for all questions; the reader reprocesses the facts
// inside every question prompt. Both answer with batch size 1 per question.
RuntimeResult runtime_bench_adapted(const GptModel& model, const NamedParameterSet& theta,
                                    const train::LearnedStepSizes& alpha, long steps,
                                    const tasks::EncodedProblem& problem, long questions,
                                    long reps = 20);
RuntimeResult runtime_bench_reader(const GptModel& model, const NamedParameterSet& theta,
                                   const tasks::EncodedProblem& problem, long questions,
                                   long reps = 20);

// Deterministic CSV: header then rows, fields joined by commas, newline
// endings, doubles rendered with %.10g.
std::string format_double(double x);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace reckon::eval
