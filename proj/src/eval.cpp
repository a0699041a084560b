#include "reckon/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "reckon/vocab.hpp"

namespace reckon::eval {

namespace {

std::string record_key(const MetricRecord& r) {
  std::string key = r.experiment;
  key.push_back('\x1f');
  key += r.metric;
  for (const auto& [k, v] : r.condition) {
    key.push_back('\x1f');
    key += k;
    key.push_back('=');
    key += v;
  }
  return key;
}

}  // namespace

void RecordSet::add(MetricRecord r) {
  const std::string key = record_key(r);
  auto it = index_.find(key);
  if (it != index_.end()) {
    if (records_[it->second].value != r.value) {
      throw std::runtime_error("metric records: conflicting value for " + r.experiment + "/" +
                               r.metric);
    }
    return;  // identical re-run, keep the original record
  }
  r.timestamp = static_cast<long>(records_.size());
  index_.emplace(key, records_.size());
  records_.push_back(std::move(r));
}

void RecordSet::add_all(std::vector<MetricRecord> rs) {
  for (auto& r : rs) add(std::move(r));
}

void RecordSet::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metric records: cannot open " + path);
  for (const MetricRecord& r : records_) {
    nlohmann::json j{{"experiment", r.experiment},
                     {"condition", r.condition},
                     {"metric", r.metric},
                     {"value", r.value},
                     {"timestamp", r.timestamp}};
    out << j.dump() << "\n";
  }
}

// --- systems under test ------------------------------------------------------------

Answerer adapted_answerer(const GptModel& model, const NamedParameterSet& theta,
                          const train::LearnedStepSizes& alpha, long steps, train::InnerOpt opt) {
  return [&model, theta, alpha, steps, opt](const tasks::EncodedProblem& ep) {
    try {
      return train::answer_problem(model, theta, alpha, steps, ep, opt);
    } catch (const std::exception& e) {
      if (!train::is_non_finite_error(e)) throw;
      return -1;
    }
  };
}

Recaller adapted_recaller(const GptModel& model, const NamedParameterSet& theta,
                          const train::LearnedStepSizes& alpha, long steps, train::InnerOpt opt) {
  return [&model, theta, alpha, steps, opt](const tasks::EncodedProblem& ep) {
    try {
      train::AdaptResult ar =
          train::inner_adapt(model, theta, ep.facts, alpha, steps, train::GradMode::none, opt);
      std::vector<int> prompt = ep.question;
      prompt.push_back(ep.answer);
      auto gen = model.generate_greedy(ar.params, prompt,
                                       static_cast<long>(ep.recall_target.size()), -1);
      return std::vector<int>(gen.tokens.begin() + static_cast<long>(prompt.size()),
                              gen.tokens.end());
    } catch (const std::exception& e) {
      if (!train::is_non_finite_error(e)) throw;
      return std::vector<int>{};
    }
  };
}

Answerer reader_answerer(const GptModel& model, const NamedParameterSet& theta,
                         baseline::BaselineKind kind, long context_length) {
  return [&model, theta, kind, context_length](const tasks::EncodedProblem& ep) {
    try {
      return baseline::answer_with_baseline(model, theta, kind, ep, context_length);
    } catch (const std::exception& e) {
      if (!train::is_non_finite_error(e)) throw;
      return -1;
    }
  };
}

Recaller reader_recaller(const GptModel& model, const NamedParameterSet& theta,
                         long context_length) {
  return [&model, theta, context_length](const tasks::EncodedProblem& ep) {
    try {
      std::vector<int> prompt = baseline::build_icr_input(ep, context_length);
      prompt.push_back(ep.answer);
      auto gen = model.generate_greedy(theta, prompt,
                                       static_cast<long>(ep.recall_target.size()), -1);
      return std::vector<int>(gen.tokens.begin() + static_cast<long>(prompt.size()),
                              gen.tokens.end());
    } catch (const std::exception& e) {
      if (!train::is_non_finite_error(e)) throw;
      return std::vector<int>{};
    }
  };
}

// --- metrics -----------------------------------------------------------------------

double label_accuracy(const Answerer& answer, std::span<const tasks::EncodedProblem> test) {
  if (test.empty()) throw std::runtime_error("label accuracy: empty test set");
  double correct = 0.0;
  for (const auto& ep : test) {
    if (answer(ep) == ep.answer) correct += 1.0;
  }
  return correct / static_cast<double>(test.size());
}

double recall_exact_match(const Recaller& recall, std::span<const tasks::EncodedProblem> test) {
  if (test.empty()) throw std::runtime_error("recall: empty test set");
  double matched = 0.0;
  for (const auto& ep : test) {
    if (recall(ep) == ep.recall_target) matched += 1.0;
  }
  return matched / static_cast<double>(test.size());
}

void write_predictions_jsonl(const std::string& path, std::span<const int> predicted,
                             std::span<const int> gold) {
  if (predicted.size() != gold.size()) {
    throw std::runtime_error("predictions: predicted/gold size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("predictions: cannot open " + path);
  for (size_t i = 0; i < predicted.size(); ++i) {
    nlohmann::json j{{"index", i}, {"predicted", predicted[i]}, {"gold", gold[i]}};
    out << j.dump() << "\n";
  }
}

InnerLossReport inner_loss_report(const GptModel& model, const NamedParameterSet& theta,
                                  const train::LearnedStepSizes& alpha, long steps,
                                  std::span<const tasks::EncodedProblem> val,
                                  train::InnerOpt opt) {
  if (val.empty()) throw std::runtime_error("inner loss report: empty validation set");
  InnerLossReport rep;
  double final_sum = 0.0, delta_sum = 0.0;
  for (const auto& ep : val) {
    try {
      train::AdaptResult ar =
          train::inner_adapt(model, theta, ep.facts, alpha, steps, train::GradMode::none, opt);
      final_sum += ar.trace.back();
      delta_sum += ar.trace.front() - ar.trace.back();
      ++rep.problems;
    } catch (const std::exception& e) {
      if (!train::is_non_finite_error(e)) throw;
      ++rep.failures;
    }
  }
  if (rep.problems > 0) {
    rep.final_mean = final_sum / static_cast<double>(rep.problems);
    rep.delta_mean = delta_sum / static_cast<double>(rep.problems);
  }
  return rep;
}

// --- protocols ---------------------------------------------------------------------

namespace {

MetricRecord make_record(std::string experiment, std::map<std::string, std::string> condition,
                         std::string metric, double value) {
  MetricRecord r;
  r.experiment = std::move(experiment);
  r.condition = std::move(condition);
  r.metric = std::move(metric);
  r.value = value;
  return r;
}

}  // namespace

std::vector<MetricRecord> hop_generalization(
    const std::vector<long>& train_hops, const std::vector<long>& test_hops,
    const std::map<long, Answerer>& systems,
    const std::map<long, std::vector<tasks::EncodedProblem>>& test_sets,
    const std::map<std::string, std::string>& tags) {
  if (train_hops.empty() || test_hops.empty()) {
    throw std::runtime_error("hop grid: empty hop list");
  }
  std::vector<MetricRecord> out;
  for (long ht : train_hops) {
    auto sys = systems.find(ht);
    if (sys == systems.end()) {
      throw std::runtime_error("hop grid: no system trained at hops " + std::to_string(ht));
    }
    for (long hx : test_hops) {
      auto set = test_sets.find(hx);
      if (set == test_sets.end() || set->second.empty()) {
        throw std::runtime_error("hop grid: no test set at hops " + std::to_string(hx));
      }
      std::map<std::string, std::string> cond = tags;
      cond["train_hops"] = std::to_string(ht);
      cond["test_hops"] = std::to_string(hx);
      out.push_back(make_record("hop_generalization", std::move(cond), "label_accuracy",
                                label_accuracy(sys->second, set->second)));
    }
  }
  return out;
}

std::vector<MetricRecord> distractor_sweep(
    const std::vector<long>& counts, const std::map<long, Answerer>& systems,
    const std::map<long, std::vector<tasks::EncodedProblem>>& test_sets,
    const std::map<std::string, std::string>& tags) {
  if (counts.empty()) throw std::runtime_error("distractor sweep: empty count list");
  std::vector<MetricRecord> out;
  for (long c : counts) {
    const std::string label = c < 0 ? "all" : std::to_string(c);
    auto sys = systems.find(c);
    if (sys == systems.end()) {
      throw std::runtime_error("distractor sweep: no system for count " + label);
    }
    auto set = test_sets.find(c);
    if (set == test_sets.end() || set->second.empty()) {
      throw std::runtime_error("distractor sweep: no test set for count " + label);
    }
    std::map<std::string, std::string> cond = tags;
    cond["distractors"] = label;
    out.push_back(make_record("distractor_sweep", std::move(cond), "label_accuracy",
                              label_accuracy(sys->second, set->second)));
  }
  return out;
}

std::vector<MetricRecord> inner_steps_ablation(const std::vector<long>& step_counts,
                                               const std::map<long, Answerer>& systems,
                                               std::span<const tasks::EncodedProblem> test,
                                               const std::map<std::string, std::string>& tags) {
  if (step_counts.empty()) throw std::runtime_error("inner-step ablation: empty step list");
  if (test.empty()) throw std::runtime_error("inner-step ablation: empty test set");
  std::vector<MetricRecord> out;
  for (long n : step_counts) {
    auto sys = systems.find(n);
    if (sys == systems.end()) {
      throw std::runtime_error("inner-step ablation: no system for N=" + std::to_string(n));
    }
    std::map<std::string, std::string> cond = tags;
    cond["inner_steps"] = std::to_string(n);
    out.push_back(make_record("inner_steps_ablation", std::move(cond), "label_accuracy",
                              label_accuracy(sys->second, test)));
  }
  return out;
}

std::vector<MetricRecord> adaptive_lr_ablation(const Answerer& learned, const Answerer& fixed,
                                               std::span<const tasks::EncodedProblem> test,
                                               const std::map<std::string, std::string>& tags) {
  if (test.empty()) throw std::runtime_error("step-size ablation: empty test set");
  std::vector<MetricRecord> out;
  auto score = [&](const char* name, const Answerer& sys) {
    std::map<std::string, std::string> cond = tags;
    cond["step_sizes"] = name;
    out.push_back(make_record("adaptive_lr_ablation", std::move(cond), "label_accuracy",
                              label_accuracy(sys, test)));
  };
  score("learned", learned);
  score("fixed", fixed);
  return out;
}

// --- runtime -----------------------------------------------------------------------

namespace {

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

long fact_tokens_of(const tasks::EncodedProblem& ep) {
  long k = 0;
  for (const auto& f : ep.facts) k += static_cast<long>(f.size());
  return k;
}

}  // namespace

RuntimeResult runtime_bench_adapted(const GptModel& model, const NamedParameterSet& theta,
                                    const train::LearnedStepSizes& alpha, long steps,
                                    const tasks::EncodedProblem& problem, long questions,
                                    long reps) {
  if (questions < 1 || reps < 1) throw std::runtime_error("runtime bench: questions and reps >= 1");
  RuntimeResult res;
  res.method = "reckoning";
  res.questions = questions;
  res.reps = reps;
  res.knowledge_tokens = steps * fact_tokens_of(problem);  // encoded once, shared by questions
  res.question_tokens = questions * static_cast<long>(problem.question.size());
  auto one_rep = [&] {
    train::AdaptResult ar = train::inner_adapt(model, theta, problem.facts, alpha, steps,
                                               train::GradMode::none);
    for (long q = 0; q < questions; ++q) {
      model.predict_answer(ar.params, problem.question, problem.candidates);
    }
  };
  one_rep();  // warmup
  std::vector<double> secs;
  for (long r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    one_rep();
    auto t1 = std::chrono::steady_clock::now();
    secs.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  res.median_seconds = median_of(std::move(secs));
  return res;
}

RuntimeResult runtime_bench_reader(const GptModel& model, const NamedParameterSet& theta,
                                   const tasks::EncodedProblem& problem, long questions,
                                   long reps) {
  if (questions < 1 || reps < 1) throw std::runtime_error("runtime bench: questions and reps >= 1");
  RuntimeResult res;
  res.method = "ft_icr";
  res.questions = questions;
  res.reps = reps;
  res.knowledge_tokens = questions * fact_tokens_of(problem);  // reprocessed per question
  res.question_tokens = questions * static_cast<long>(problem.question.size());
  const long ctx = model.config().context_length;
  auto one_rep = [&] {
    for (long q = 0; q < questions; ++q) {
      baseline::answer_with_baseline(model, theta, baseline::BaselineKind::ft_icr, problem, ctx);
    }
  };
  one_rep();  // warmup
  std::vector<double> secs;
  for (long r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    one_rep();
    auto t1 = std::chrono::steady_clock::now();
    secs.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  res.median_seconds = median_of(std::move(secs));
  return res;
}

// --- CSV ---------------------------------------------------------------------------

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv: cannot open " + path);
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n\"") != std::string::npos) {
        throw std::runtime_error("csv: field needs quoting, refusing: " + fields[i]);
      }
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::runtime_error("csv: row width != header width");
    }
    emit(row);
  }
}

}  // namespace reckon::eval
