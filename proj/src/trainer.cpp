#include "reckon/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <string_view>

#include "reckon/checkpoint.hpp"
#include "reckon/ops.hpp"
#include "reckon/rng.hpp"
#include "reckon/tape.hpp"
#include "reckon/vocab.hpp"

namespace reckon::train {

using ad::Tensor;

// --- step sizes ---------------------------------------------------------------

LearnedStepSizes LearnedStepSizes::make(long layer_count, long steps, double init) {
  if (layer_count < 1 || steps < 1) {
    throw std::runtime_error("step sizes need layer_count >= 1 and steps >= 1");
  }
  LearnedStepSizes a;
  a.entries.resize(static_cast<size_t>(layer_count));
  for (auto& row : a.entries) {
    row.reserve(static_cast<size_t>(steps));
    for (long s = 0; s < steps; ++s) row.push_back(Tensor::scalar(init));
  }
  return a;
}

std::vector<Tensor> LearnedStepSizes::flat() const {
  std::vector<Tensor> out;
  for (const auto& row : entries) out.insert(out.end(), row.begin(), row.end());
  return out;
}

Tensor LearnedStepSizes::to_tensor() const {
  std::vector<double> data;
  for (const auto& row : entries) {
    for (const Tensor& t : row) data.push_back(t.item());
  }
  return Tensor::from_data({layer_count(), steps()}, std::move(data));
}

LearnedStepSizes LearnedStepSizes::from_tensor(const Tensor& t) {
  if (t.ndim() != 2) throw std::runtime_error("step-size tensor must be rank 2");
  LearnedStepSizes a;
  a.entries.resize(static_cast<size_t>(t.dim(0)));
  const double* p = t.raw();
  for (long l = 0; l < t.dim(0); ++l) {
    for (long s = 0; s < t.dim(1); ++s) {
      a.entries[static_cast<size_t>(l)].push_back(Tensor::scalar(p[l * t.dim(1) + s]));
    }
  }
  return a;
}

LearnedStepSizes LearnedStepSizes::deep_copy() const { return from_tensor(to_tensor()); }

bool LearnedStepSizes::all_finite() const {
  for (const auto& row : entries) {
    for (const Tensor& t : row) {
      if (!std::isfinite(t.item())) return false;
    }
  }
  return true;
}

// --- config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (inner_steps < 1) throw std::runtime_error("config: inner_steps must be >= 1");
  if (outer_lr <= 0.0) throw std::runtime_error("config: outer_lr must be positive");
  if (alpha_init <= 0.0) throw std::runtime_error("config: alpha_init must be positive");
  if (meta_batch < 1) throw std::runtime_error("config: meta_batch must be >= 1");
  if (grad_accum < 1) throw std::runtime_error("config: grad_accum must be >= 1");
  if (epochs < 1) throw std::runtime_error("config: epochs must be >= 1");
  if (patience < 1) throw std::runtime_error("config: patience must be >= 1");
  if (weight_decay < 0.0) throw std::runtime_error("config: weight_decay must be >= 0");
  if (inner_opt == InnerOpt::adam && order == Order::second) {
    throw std::runtime_error("config: adaptive inner optimizer requires first-order outer mode");
  }
}

bool is_non_finite_error(const std::exception& e) {
  return std::string_view(e.what()).find("non-finite") != std::string_view::npos;
}

// --- inner loop -------------------------------------------------------------------

namespace {

// Adaptive-moment inner direction, computed on plain values. The result is a
// constant of the outer graph by design.
struct AdamInner {
  std::vector<std::vector<double>> m, v;

  void init(const NamedParameterSet& ps) {
    m.resize(ps.size());
    v.resize(ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
      m[i].assign(static_cast<size_t>(ps.item(i).tensor.numel()), 0.0);
      v[i].assign(static_cast<size_t>(ps.item(i).tensor.numel()), 0.0);
    }
  }

  Tensor direction(size_t i, const Tensor& g, long step1) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step1));
    std::span<const double> gd = g.data();
    std::vector<double> out(gd.size());
    for (size_t j = 0; j < gd.size(); ++j) {
      m[i][j] = b1 * m[i][j] + (1.0 - b1) * gd[j];
      v[i][j] = b2 * v[i][j] + (1.0 - b2) * gd[j] * gd[j];
      out[j] = (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
    }
    std::vector<long> shape(g.shape().begin(), g.shape().end());
    return Tensor::from_data(std::move(shape), std::move(out));
  }
};

void check_inner_finite(double value, long step) {
  if (!std::isfinite(value)) {
    throw NonFiniteLoss("inner loss is " + std::to_string(value) + " at step " +
                        std::to_string(step));
  }
}

// The numeric guards in the op layer report exploded values as runtime
// errors; inside an episode those mean "this episode diverged", not a bug.
template <typename Fn>
auto guard_non_finite(Fn&& fn, const char* where) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NonFiniteLoss&) {
    throw;
  } catch (const std::runtime_error& e) {
    if (is_non_finite_error(e)) throw NonFiniteLoss(std::string(where) + ": " + e.what());
    throw;
  }
}

}  // namespace

AdaptResult inner_adapt_fn(const InnerLossFn& inner_loss, const NamedParameterSet& theta,
                           const LearnedStepSizes& alpha, long steps, GradMode mode,
                           InnerOpt opt) {
  if (steps < 1) throw std::runtime_error("inner_adapt: steps must be >= 1");
  if (alpha.steps() < steps) {
    throw std::runtime_error("inner_adapt: step sizes cover " + std::to_string(alpha.steps()) +
                             " steps, " + std::to_string(steps) + " requested");
  }
  if (alpha.layer_count() <= theta.max_layer()) {
    throw std::runtime_error("inner_adapt: step-size rows do not cover every layer");
  }
  if (opt == InnerOpt::adam && mode == GradMode::second) {
    throw std::runtime_error("inner_adapt: adaptive inner optimizer is first-order only");
  }
  if (mode != GradMode::none && ad::Tape::active() == nullptr) {
    throw std::runtime_error("inner_adapt: differentiable mode needs an active tape");
  }

  AdaptResult res;
  res.params = theta;  // shares tensors; updates replace, never mutate
  AdamInner adam;
  if (opt == InnerOpt::adam) adam.init(theta);

  for (long n = 0; n < steps; ++n) {
    std::optional<ad::Tape> local;
    std::optional<ad::TapeScope> scope;
    if (mode == GradMode::none) {
      local.emplace();
      scope.emplace(*local);
    }
    Tensor loss = guard_non_finite([&] { return inner_loss(res.params); }, "inner loss");
    const double lv = loss.item();
    check_inner_finite(lv, n);
    res.trace.push_back(lv);

    std::vector<Tensor> grads =
        ad::grad(loss, res.params.tensors(), /*create_graph=*/mode != GradMode::none);

    std::optional<ad::NoGradScope> ng;
    if (mode == GradMode::none) ng.emplace();
    for (size_t i = 0; i < res.params.size(); ++i) {
      const NamedParam& item = res.params.item(i);
      Tensor g = grads[i];
      if (mode == GradMode::first) g = ad::detach(g);
      Tensor update;
      if (opt == InnerOpt::adam) {
        // Step size is read as a value: the adaptive path never carries an
        // outer gradient onto alpha.
        Tensor dir = adam.direction(i, g, n + 1);
        update = ad::mul_scalar(dir, alpha.entries[static_cast<size_t>(item.layer)]
                                         [static_cast<size_t>(n)].item());
      } else {
        update = ad::mul(g, alpha.entries[static_cast<size_t>(item.layer)][static_cast<size_t>(n)]);
      }
      res.params.set(item.name, ad::sub(item.tensor, update));
    }
  }

  {
    ad::NoGradScope ng;
    const double final_loss =
        guard_non_finite([&] { return inner_loss(res.params); }, "inner loss").item();
    check_inner_finite(final_loss, steps);
    res.trace.push_back(final_loss);
  }
  return res;
}

AdaptResult inner_adapt(const GptModel& model, const NamedParameterSet& theta,
                        const std::vector<std::vector<int>>& facts,
                        const LearnedStepSizes& alpha, long steps, GradMode mode, InnerOpt opt) {
  if (facts.empty()) throw std::runtime_error("inner_adapt: empty fact set");
  return inner_adapt_fn(
      [&](const NamedParameterSet& p) { return model.clm_loss_mean(p, facts); }, theta, alpha,
      steps, mode, opt);
}

// --- outer loss ---------------------------------------------------------------------

Tensor outer_loss(const GptModel& model, const NamedParameterSet& adapted,
                  const tasks::EncodedProblem& ep, bool multi_task) {
  if (ep.question.empty() || ep.question.back() != Vocabulary::kSep) {
    throw std::runtime_error("outer_loss: question must end with the separator token");
  }
  std::vector<int> seq = ep.question;
  std::vector<double> w(seq.size(), 0.0);
  seq.push_back(ep.answer);
  w.push_back(1.0);
  if (multi_task) {
    if (ep.recall_target.empty()) {
      throw std::runtime_error("outer_loss: multi-task objective needs a recall target");
    }
    const double rw = 1.0 / static_cast<double>(ep.recall_target.size());
    for (int t : ep.recall_target) {
      seq.push_back(t);
      w.push_back(rw);
    }
  }
  if (static_cast<long>(seq.size()) > model.config().context_length) {
    throw std::runtime_error("outer_loss: sequence length " + std::to_string(seq.size()) +
                             " exceeds context length " +
                             std::to_string(model.config().context_length));
  }
  return model.clm_weighted_sum(adapted, seq, w);
}

// --- meta gradients ---------------------------------------------------------------

MetaGrads meta_gradients(const GptModel& model, const NamedParameterSet& theta,
                         const LearnedStepSizes& alpha,
                         std::span<const tasks::EncodedProblem> batch, const TrainConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw std::runtime_error("meta_gradients: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  const size_t P = theta.size();
  const size_t A = static_cast<size_t>(alpha.layer_count() * alpha.steps());

  std::vector<std::vector<double>> acc(P + A);
  for (size_t i = 0; i < P; ++i) {
    acc[i].assign(static_cast<size_t>(theta.item(i).tensor.numel()), 0.0);
  }
  for (size_t i = P; i < P + A; ++i) acc[i].assign(1, 0.0);

  MetaGrads out;
  const GradMode mode = cfg.order == TrainConfig::Order::second ? GradMode::second
                                                                : GradMode::first;
  for (const tasks::EncodedProblem& ep : batch) {
    try {
      ad::Tape tape;
      ad::TapeScope scope(tape);
      AdaptResult ar = inner_adapt(model, theta, ep.facts, alpha, cfg.inner_steps, mode,
                                   cfg.inner_opt);
      Tensor loss =
          guard_non_finite([&] { return outer_loss(model, ar.params, ep, cfg.multi_task); },
                           "outer loss");
      const double lv = loss.item();
      if (!std::isfinite(lv)) throw NonFiniteLoss("outer loss is " + std::to_string(lv));

      std::vector<Tensor> wrt = theta.tensors();
      for (const Tensor& a : alpha.flat()) wrt.push_back(a);
      std::vector<Tensor> grads = ad::grad(ad::mul_scalar(loss, inv), wrt, false);
      for (const Tensor& g : grads) {
        if (!g.all_finite()) throw NonFiniteLoss("non-finite meta-gradient");
      }
      for (size_t i = 0; i < grads.size(); ++i) {
        std::span<const double> gd = grads[i].data();
        for (size_t j = 0; j < gd.size(); ++j) acc[i][j] += gd[j];
      }
      out.mean_loss += lv * inv;
    } catch (const NonFiniteLoss& e) {
      ++out.skipped;
      std::fprintf(stderr, "episode skipped: %s\n", e.what());
    }
  }

  out.theta.reserve(P);
  for (size_t i = 0; i < P; ++i) {
    std::vector<long> shape(theta.item(i).tensor.shape().begin(),
                            theta.item(i).tensor.shape().end());
    out.theta.push_back(Tensor::from_data(std::move(shape), std::move(acc[i])));
  }
  out.alpha.resize(static_cast<size_t>(alpha.layer_count()));
  size_t k = P;
  for (auto& row : out.alpha) {
    for (long s = 0; s < alpha.steps(); ++s) row.push_back(Tensor::scalar(acc[k++][0]));
  }
  return out;
}

// --- outer optimizer -----------------------------------------------------------------

AdamWState AdamWState::init(const NamedParameterSet& theta, const LearnedStepSizes& alpha) {
  AdamWState st;
  for (size_t i = 0; i < theta.size(); ++i) {
    st.m.emplace_back(static_cast<size_t>(theta.item(i).tensor.numel()), 0.0);
    st.v.emplace_back(static_cast<size_t>(theta.item(i).tensor.numel()), 0.0);
  }
  for (long i = 0; i < alpha.layer_count() * alpha.steps(); ++i) {
    st.m.emplace_back(1, 0.0);
    st.v.emplace_back(1, 0.0);
  }
  return st;
}

namespace {

// One decoupled-weight-decay adaptive-moment update on a flat buffer.
std::vector<double> adamw_apply(std::span<const double> p, std::span<const double> g,
                                std::vector<double>& m, std::vector<double>& v, double lr,
                                double wd, double beta1, double beta2, double eps, long step) {
  if (p.size() != g.size() || p.size() != m.size()) {
    throw std::runtime_error("meta_step: gradient shape mismatch");
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  std::vector<double> out(p.size());
  for (size_t j = 0; j < p.size(); ++j) {
    m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
    v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
    out[j] = p[j] - lr * ((m[j] / c1) / (std::sqrt(v[j] / c2) + eps) + wd * p[j]);
  }
  return out;
}

}  // namespace

void meta_step(NamedParameterSet& theta, LearnedStepSizes& alpha, AdamWState& state,
               const MetaGrads& grads, const TrainConfig& cfg) {
  const size_t P = theta.size();
  const size_t A = static_cast<size_t>(alpha.layer_count() * alpha.steps());
  if (grads.theta.size() != P) throw std::runtime_error("meta_step: parameter count mismatch");
  if (state.m.size() != P + A) throw std::runtime_error("meta_step: optimizer state mismatch");
  ++state.step;
  for (size_t i = 0; i < P; ++i) {
    const NamedParam& item = theta.item(i);
    std::vector<long> shape(item.tensor.shape().begin(), item.tensor.shape().end());
    theta.set(item.name,
              Tensor::from_data(std::move(shape),
                                adamw_apply(item.tensor.data(), grads.theta[i].data(), state.m[i],
                                            state.v[i], cfg.outer_lr, cfg.weight_decay,
                                            state.beta1, state.beta2, state.eps, state.step)));
  }
  if (!cfg.learn_alpha) return;
  size_t k = P;
  for (long l = 0; l < alpha.layer_count(); ++l) {
    for (long s = 0; s < alpha.steps(); ++s, ++k) {
      const Tensor& cur = alpha.entries[static_cast<size_t>(l)][static_cast<size_t>(s)];
      const Tensor& g = grads.alpha[static_cast<size_t>(l)][static_cast<size_t>(s)];
      std::vector<double> next = adamw_apply(cur.data(), g.data(), state.m[k], state.v[k],
                                             cfg.outer_lr, 0.0, state.beta1, state.beta2,
                                             state.eps, state.step);
      alpha.entries[static_cast<size_t>(l)][static_cast<size_t>(s)] = Tensor::scalar(next[0]);
    }
  }
}

// --- episodes at inference ------------------------------------------------------------

int answer_problem(const GptModel& model, const NamedParameterSet& theta,
                   const LearnedStepSizes& alpha, long steps, const tasks::EncodedProblem& ep,
                   InnerOpt opt) {
  AdaptResult ar = inner_adapt(model, theta, ep.facts, alpha, steps, GradMode::none, opt);
  return model.predict_answer(ar.params, ep.question, ep.candidates);
}

InferResult infer(const GptModel& model, const NamedParameterSet& theta,
                  const LearnedStepSizes& alpha, long steps,
                  const std::vector<std::vector<int>>& facts,
                  const std::vector<std::vector<int>>& questions,
                  const std::vector<int>& candidates, long recall_budget, InnerOpt opt) {
  AdaptResult ar = inner_adapt(model, theta, facts, alpha, steps, GradMode::none, opt);
  InferResult res;
  res.trace = ar.trace;
  long k_tokens = 0;
  for (const auto& f : facts) k_tokens += static_cast<long>(f.size());
  res.knowledge_tokens = steps * k_tokens;
  for (const auto& q : questions) {
    res.question_tokens.push_back(static_cast<long>(q.size()));
    const int answer = model.predict_answer(ar.params, q, candidates);
    res.answers.push_back(answer);
    if (recall_budget > 0) {
      std::vector<int> prompt = q;
      prompt.push_back(answer);
      res.recalled.push_back(model.generate_greedy(ar.params, prompt, recall_budget, -1));
    }
  }
  return res;
}

// --- training loop ---------------------------------------------------------------------

TrainResult train(const GptModel& model, const TrainConfig& cfg,
                  std::span<const tasks::EncodedProblem> train_set,
                  std::span<const tasks::EncodedProblem> val_set) {
  cfg.validate();
  if (train_set.empty()) throw std::runtime_error("train: empty training set");
  if (val_set.empty()) throw std::runtime_error("train: empty validation set");

  NamedParameterSet theta = model.init_params();
  LearnedStepSizes alpha =
      LearnedStepSizes::make(theta.max_layer() + 1, cfg.inner_steps, cfg.alpha_init);
  AdamWState state = AdamWState::init(theta, alpha);
  Rng master(cfg.seed);

  TrainResult res;
  res.best_theta = theta.deep_copy();
  res.best_alpha = alpha.deep_copy();
  long validations = 0;
  long since_best = 0;
  bool stop = false;
  double window_loss = 0.0;
  long window_batches = 0;

  auto validate = [&](long epoch, long batch_index) {
    double correct = 0.0, first = 0.0, last = 0.0;
    long traced = 0, failed = 0;
    for (const tasks::EncodedProblem& ep : val_set) {
      try {
        AdaptResult ar =
            inner_adapt(model, theta, ep.facts, alpha, cfg.inner_steps, GradMode::none,
                        cfg.inner_opt);
        const int pred = guard_non_finite(
            [&] { return model.predict_answer(ar.params, ep.question, ep.candidates); },
            "validation forward");
        if (pred == ep.answer) correct += 1.0;
        first += ar.trace.front();
        last += ar.trace.back();
        ++traced;
      } catch (const NonFiniteLoss&) {
        ++failed;  // counted as incorrect
      }
    }
    const double acc = correct / static_cast<double>(val_set.size());
    nlohmann::json rec{{"event", "validation"},
                       {"epoch", epoch},
                       {"batch", batch_index},
                       {"outer_step", state.step},
                       {"val_index", validations},
                       {"val_accuracy", acc},
                       {"train_loss", window_batches ? window_loss / window_batches : 0.0},
                       {"val_failures", failed}};
    if (traced > 0) {
      rec["inner_first"] = first / traced;
      rec["inner_final"] = last / traced;
      rec["inner_delta"] = (first - last) / traced;
    }
    res.log.push_back(std::move(rec));
    window_loss = 0.0;
    window_batches = 0;
    ++validations;
    if (acc > res.best_val_acc) {
      res.best_val_acc = acc;
      res.best_epoch = epoch;
      res.best_theta = theta.deep_copy();
      res.best_alpha = alpha.deep_copy();
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
  const long B = cfg.episode_batch();
  std::vector<long> order(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (long epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    Rng erng(master.fork(static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    const long batches = (n + B - 1) / B;
    const long mid = batches / 2;  // with a single batch, only the end validation runs
    long usable = 0;
    for (long b = 0; b < batches && !stop; ++b) {
      std::vector<tasks::EncodedProblem> batch;
      for (long i = b * B; i < std::min(n, (b + 1) * B); ++i) {
        batch.push_back(train_set[static_cast<size_t>(order[static_cast<size_t>(i)])]);
      }
      MetaGrads mg = meta_gradients(model, theta, alpha, batch, cfg);
      res.skipped_episodes += mg.skipped;
      if (mg.skipped < static_cast<long>(batch.size())) {
        meta_step(theta, alpha, state, mg, cfg);
        window_loss += mg.mean_loss;
        ++window_batches;
        ++usable;
      }
      if (b + 1 == mid && mid < batches) validate(epoch, b);
    }
    res.epochs_run = epoch + 1;
    if (!stop) validate(epoch, batches - 1);
    if (usable == 0 && !stop) {
      // A whole epoch of non-finite episodes: stop with the last good state.
      res.diverged = true;
      break;
    }
  }
  return res;
}

// --- checkpoints -----------------------------------------------------------------------

void save_training_checkpoint(const std::string& path, const NamedParameterSet& theta,
                              const LearnedStepSizes& alpha, const AdamWState* state,
                              nlohmann::json meta) {
  Checkpoint c;
  c.meta = std::move(meta);
  c.add_params("theta", theta);
  c.add_blob("alpha", alpha.to_tensor());
  if (state != nullptr) {
    c.meta["optimizer"] = {{"step", state->step},
                           {"beta1", state->beta1},
                           {"beta2", state->beta2},
                           {"eps", state->eps},
                           {"slots", state->m.size()}};
    for (size_t i = 0; i < state->m.size(); ++i) {
      const long len = static_cast<long>(state->m[i].size());
      c.add_blob("opt.m." + std::to_string(i), Tensor::from_data({len}, state->m[i]));
      c.add_blob("opt.v." + std::to_string(i), Tensor::from_data({len}, state->v[i]));
    }
  }
  c.save(path);
}

LoadedCheckpoint load_training_checkpoint(const std::string& path) {
  Checkpoint c = Checkpoint::load(path);
  LoadedCheckpoint out;
  out.theta = c.extract_params("theta");
  out.alpha = LearnedStepSizes::from_tensor(c.blob("alpha"));
  out.meta = c.meta;
  if (c.meta.contains("optimizer")) {
    const auto& o = c.meta.at("optimizer");
    out.state.step = o.at("step").get<long>();
    out.state.beta1 = o.at("beta1").get<double>();
    out.state.beta2 = o.at("beta2").get<double>();
    out.state.eps = o.at("eps").get<double>();
    const size_t slots = o.at("slots").get<size_t>();
    for (size_t i = 0; i < slots; ++i) {
      std::span<const double> m = c.blob("opt.m." + std::to_string(i)).data();
      std::span<const double> v = c.blob("opt.v." + std::to_string(i)).data();
      out.state.m.emplace_back(m.begin(), m.end());
      out.state.v.emplace_back(v.begin(), v.end());
    }
    out.has_state = true;
  }
  return out;
}

}  // namespace reckon::train
