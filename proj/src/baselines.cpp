#include "reckon/baselines.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "reckon/ops.hpp"
#include "reckon/tape.hpp"
#include "reckon/vocab.hpp"

namespace reckon::baseline {

const char* kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::ft_icr: return "ft_icr";
    case BaselineKind::no_facts: return "no_facts";
    case BaselineKind::no_question: return "no_question";
    case BaselineKind::random_facts: return "random_facts";
  }
  throw std::runtime_error("baseline: unknown kind");
}

BaselineKind kind_from_name(const std::string& name) {
  if (name == "ft_icr") return BaselineKind::ft_icr;
  if (name == "no_facts") return BaselineKind::no_facts;
  if (name == "no_question") return BaselineKind::no_question;
  if (name == "random_facts") return BaselineKind::random_facts;
  throw std::runtime_error("baseline: unknown kind '" + name + "'");
}

std::vector<int> build_icr_input(const tasks::EncodedProblem& ep, long context_length) {
  if (ep.question.empty() || ep.question.front() != Vocabulary::kBos ||
      ep.question.back() != Vocabulary::kSep) {
    throw std::runtime_error("icr input: question must run from BOS to SEP");
  }
  std::vector<int> seq{Vocabulary::kBos};
  long fact_tokens = 0;
  for (const auto& f : ep.facts) {
    seq.insert(seq.end(), f.begin(), f.end());
    fact_tokens += static_cast<long>(f.size());
  }
  seq.insert(seq.end(), ep.question.begin() + 1, ep.question.end());
  if (static_cast<long>(seq.size()) > context_length) {
    throw std::runtime_error("icr input: length " + std::to_string(seq.size()) +
                             " exceeds context length " + std::to_string(context_length) +
                             " (facts " + std::to_string(fact_tokens) + ", question " +
                             std::to_string(ep.question.size()) + ")");
  }
  return seq;
}

std::vector<int> eval_input(BaselineKind kind, const tasks::EncodedProblem& ep,
                            long context_length) {
  switch (kind) {
    case BaselineKind::ft_icr:
      return build_icr_input(ep, context_length);
    case BaselineKind::no_facts:
      return ep.question;
    case BaselineKind::no_question: {
      tasks::EncodedProblem bare = ep;
      bare.question = {Vocabulary::kBos, Vocabulary::kSep};
      return build_icr_input(bare, context_length);
    }
    case BaselineKind::random_facts:
      break;
  }
  throw std::runtime_error("baseline: random_facts answers through the adapted-parameter path");
}

BaselineExample make_example(BaselineKind kind, const tasks::EncodedProblem& ep, bool multi_task,
                             long context_length) {
  BaselineExample ex;
  ex.tokens = eval_input(kind, ep, context_length);
  ex.weights.assign(ex.tokens.size(), 0.0);
  ex.tokens.push_back(ep.answer);
  ex.weights.push_back(1.0);
  if (multi_task && kind != BaselineKind::no_facts) {
    if (ep.recall_target.empty()) {
      throw std::runtime_error("baseline example: empty recall target in multi-task mode");
    }
    const double w = 1.0 / static_cast<double>(ep.recall_target.size());
    for (int t : ep.recall_target) {
      ex.tokens.push_back(t);
      ex.weights.push_back(w);
    }
  }
  if (static_cast<long>(ex.tokens.size()) > context_length) {
    throw std::runtime_error("baseline example: length " + std::to_string(ex.tokens.size()) +
                             " exceeds context length " + std::to_string(context_length));
  }
  return ex;
}

std::vector<tasks::EncodedProblem> make_random_facts(std::span<const tasks::EncodedProblem> problems,
                                                     Rng& rng) {
  if (problems.size() < 2) {
    throw std::runtime_error("random facts: need at least two problems to swap between");
  }
  std::vector<tasks::EncodedProblem> out(problems.begin(), problems.end());
  const long n = static_cast<long>(problems.size());
  for (long i = 0; i < n; ++i) {
    long j = rng.uniform_int(n - 1);
    if (j >= i) ++j;  // uniform over the other problems
    const auto& donor = problems[static_cast<size_t>(j)];
    auto& p = out[static_cast<size_t>(i)];
    p.facts = donor.facts;
    p.recall_target.clear();
    for (const auto& f : p.facts) {
      p.recall_target.insert(p.recall_target.end(), f.begin(), f.end());
    }
  }
  return out;
}

void BaselineConfig::validate() const {
  if (batch_size < 1) throw std::runtime_error("baseline config: batch_size must be >= 1");
  if (epochs < 1) throw std::runtime_error("baseline config: epochs must be >= 1");
  if (patience < 1) throw std::runtime_error("baseline config: patience must be >= 1");
  if (lr <= 0.0) throw std::runtime_error("baseline config: lr must be positive");
  if (weight_decay < 0.0) throw std::runtime_error("baseline config: weight_decay must be >= 0");
  if (kind == BaselineKind::random_facts) inner.validate();
}

int answer_with_baseline(const GptModel& model, const NamedParameterSet& theta, BaselineKind kind,
                         const tasks::EncodedProblem& ep, long context_length) {
  return model.predict_answer(theta, eval_input(kind, ep, context_length), ep.candidates);
}

namespace {

BaselineResult from_train_result(train::TrainResult&& tr) {
  BaselineResult res;
  res.best_theta = std::move(tr.best_theta);
  res.best_alpha = std::move(tr.best_alpha);
  res.best_val_acc = tr.best_val_acc;
  res.best_epoch = tr.best_epoch;
  res.epochs_run = tr.epochs_run;
  res.early_stopped = tr.early_stopped;
  res.reached_target = tr.reached_target;
  res.log = std::move(tr.log);
  return res;
}

}  // namespace

BaselineResult train_baseline(const GptModel& model, const BaselineConfig& cfg,
                              std::span<const tasks::EncodedProblem> train_set,
                              std::span<const tasks::EncodedProblem> val_set) {
  cfg.validate();
  if (train_set.empty()) throw std::runtime_error("baseline train: empty training set");
  if (val_set.empty()) throw std::runtime_error("baseline train: empty validation set");

  if (cfg.kind == BaselineKind::random_facts) {
    // The control: full gradient-encoding training, but every problem carries
    // another problem's facts so the answer is never derivable from them.
    Rng rng(cfg.seed);
    Rng train_rng(rng.fork(1)), val_rng(rng.fork(2));
    auto shuffled_train = make_random_facts(train_set, train_rng);
    auto shuffled_val = make_random_facts(val_set, val_rng);
    return from_train_result(train::train(model, cfg.inner, shuffled_train, shuffled_val));
  }

  const long ctx = model.config().context_length;
  NamedParameterSet theta = model.init_params();
  train::LearnedStepSizes no_alpha;  // optimizer slots cover theta only
  train::AdamWState state = train::AdamWState::init(theta, no_alpha);
  train::TrainConfig step_cfg;
  step_cfg.outer_lr = cfg.lr;
  step_cfg.weight_decay = cfg.weight_decay;
  step_cfg.learn_alpha = false;
  Rng master(cfg.seed);

  BaselineResult res;
  res.best_theta = theta.deep_copy();
  long validations = 0;
  long since_best = 0;
  bool stop = false;
  double window_loss = 0.0;
  long window_batches = 0;

  auto validate = [&](long epoch, long batch_index) {
    double correct = 0.0;
    long failed = 0;
    for (const tasks::EncodedProblem& ep : val_set) {
      try {
        if (answer_with_baseline(model, theta, cfg.kind, ep, ctx) == ep.answer) correct += 1.0;
      } catch (const std::runtime_error& e) {
        if (!train::is_non_finite_error(e)) throw;
        ++failed;  // counted as incorrect
      }
    }
    const double acc = correct / static_cast<double>(val_set.size());
    res.log.push_back(nlohmann::json{{"event", "validation"},
                                     {"kind", kind_name(cfg.kind)},
                                     {"epoch", epoch},
                                     {"batch", batch_index},
                                     {"outer_step", state.step},
                                     {"val_index", validations},
                                     {"val_accuracy", acc},
                                     {"train_loss",
                                      window_batches ? window_loss / window_batches : 0.0},
                                     {"val_failures", failed}});
    window_loss = 0.0;
    window_batches = 0;
    ++validations;
    if (acc > res.best_val_acc) {
      res.best_val_acc = acc;
      res.best_epoch = epoch;
      res.best_theta = theta.deep_copy();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (acc >= cfg.stop_acc) {
      res.reached_target = true;
      stop = true;
    } else if (since_best >= cfg.patience) {
      res.early_stopped = true;
      stop = true;
    }
  };

  const long n = static_cast<long>(train_set.size());
  const long B = cfg.batch_size;
  std::vector<long> order(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (long epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    Rng erng(master.fork(static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    const long batches = (n + B - 1) / B;
    const long mid = batches / 2;  // with a single batch, only the end validation runs
    for (long b = 0; b < batches && !stop; ++b) {
      std::vector<std::vector<int>> seqs;
      std::vector<std::vector<double>> weights;
      for (long i = b * B; i < std::min(n, (b + 1) * B); ++i) {
        const auto& ep = train_set[static_cast<size_t>(order[static_cast<size_t>(i)])];
        BaselineExample ex = make_example(cfg.kind, ep, cfg.multi_task, ctx);
        seqs.push_back(std::move(ex.tokens));
        weights.push_back(std::move(ex.weights));
      }
      try {
        ad::Tape tape;
        ad::TapeScope scope(tape);
        ad::Tensor loss = ad::mul_scalar(model.clm_weighted_sum_batch(theta, seqs, weights),
                                         1.0 / static_cast<double>(seqs.size()));
        const double lv = loss.item();
        if (!std::isfinite(lv)) throw train::NonFiniteLoss("non-finite baseline loss");
        train::MetaGrads mg;
        mg.theta = ad::grad(loss, theta.tensors(), /*create_graph=*/false);
        for (const ad::Tensor& g : mg.theta) {
          if (!g.all_finite()) throw train::NonFiniteLoss("non-finite baseline gradient");
        }
        train::meta_step(theta, no_alpha, state, mg, step_cfg);
        window_loss += lv;
        ++window_batches;
      } catch (const std::exception& e) {
        if (!train::is_non_finite_error(e)) throw;
        ++res.skipped_batches;
        std::fprintf(stderr, "baseline batch skipped: %s\n", e.what());
      }
      if (b + 1 == mid && mid < batches) validate(epoch, b);
    }
    res.epochs_run = epoch + 1;
    if (!stop) validate(epoch, batches - 1);
  }
  return res;
}

}  // namespace reckon::baseline
