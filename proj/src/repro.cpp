#include "reckon/repro.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "reckon/baselines.hpp"
#include "reckon/chart.hpp"
#include "reckon/eval.hpp"
#include "reckon/model.hpp"
#include "reckon/ops.hpp"
#include "reckon/rng.hpp"
#include "reckon/tape.hpp"
#include "reckon/tasks.hpp"
#include "reckon/trainer.hpp"

namespace reckon::repro {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Every tunable count and hyperparameter of the suite lives here, so the
// full and smoke-scale variants differ in data only.
struct Sizes {
  // 2-hop relation chains, default model (the headline run).
  long c4_train = 5000, c4_val = 500, c4_test = 500;
  long c4_steps = 2;
  bool c4_second_order = false;
  double c4_alpha0 = 1e-2, c4_lr = 1e-3;
  long c4_epochs = 8;
  long rf_epochs = 1;  // decorrelated-fact control cannot improve with more

  // 4-hop chains, small model: inner-step and step-size ablations.
  long c5_train = 2000, c5_val = 300, c5_test = 300;
  long c5_epochs = 5;
  long seeds = 3;

  // hop-generalization grid test sets
  long grid_count = 200;

  // deduction task, small model: distractor, recall, and objective studies.
  long pw_train = 2000, pw_val = 300, pw_test = 300;
  long pw_steps = 4;
  long pw_epochs = 4;
  long bl_epochs = 6;  // reader baselines see each example once per epoch

  // letter-run counting bench
  long bench_questions = 18, bench_steps = 4, bench_reps = 5;
  // finite-difference coordinates for the numeric gradient check
  long fd_coords = 20;
  long oracle_count = 10000;

  static Sizes quick() {
    Sizes s;
    s.c4_train = 80;
    s.c4_val = 40;
    s.c4_test = 40;
    s.c4_epochs = 1;
    s.c5_train = 48;
    s.c5_val = 24;
    s.c5_test = 24;
    s.c5_epochs = 1;
    s.seeds = 1;
    s.grid_count = 16;
    s.pw_train = 48;
    s.pw_val = 24;
    s.pw_test = 24;
    s.pw_epochs = 1;
    s.bl_epochs = 1;
    s.bench_questions = 6;  // keeps N * |K| < Q * |K| observable at smoke scale
    s.bench_reps = 2;
    s.fd_coords = 4;
    s.oracle_count = 400;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Label oracles re-derived from the surface text, independent of the
// generators' internal bookkeeping.

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

using Lit = std::pair<std::string, std::string>;

struct TextRule {
  std::vector<std::string> antecedents;
  std::string consequent;
};

struct TextContext {
  std::vector<Lit> facts;
  std::vector<TextRule> rules;
  std::set<std::string> entities;
};

TextContext parse_deduction(const std::vector<std::string>& lines) {
  TextContext ctx;
  for (const std::string& line : lines) {
    auto w = words_of(line);
    if (w.at(0) == "if") {
      TextRule r;
      r.antecedents.push_back(w.at(1));
      size_t i = 2;
      if (w.at(i) == "and") {
        r.antecedents.push_back(w.at(3));
        i = 4;
      }
      if (w.at(i) != "then") throw std::runtime_error("oracle: malformed rule: " + line);
      r.consequent = w.at(i + 1);
      ctx.rules.push_back(std::move(r));
    } else {
      if (w.size() != 3 || w.at(1) != "is")
        throw std::runtime_error("oracle: malformed fact: " + line);
      ctx.facts.emplace_back(w.at(0), w.at(2));
      ctx.entities.insert(w.at(0));
    }
  }
  return ctx;
}

// Breadth-layered closure straight from the definition.
std::set<Lit> saturate(const TextContext& ctx) {
  std::set<Lit> holds(ctx.facts.begin(), ctx.facts.end());
  for (;;) {
    std::vector<Lit> found;
    for (const std::string& e : ctx.entities) {
      for (const TextRule& r : ctx.rules) {
        bool fires = true;
        for (const std::string& a : r.antecedents) {
          if (!holds.count({e, a})) {
            fires = false;
            break;
          }
        }
        if (fires && !holds.count({e, r.consequent})) found.push_back({e, r.consequent});
      }
    }
    if (found.empty()) return holds;
    for (const Lit& l : found) holds.insert(l);
  }
}

std::string deduction_oracle(const tasks::ReasoningProblem& p) {
  auto w = words_of(p.question);
  if (w.back() != "?" || w.at(1) != "is") throw std::runtime_error("oracle: bad question");
  const bool negated = w.at(2) == "not";
  const std::string attr = negated ? w.at(3) : w.at(2);
  auto holds = saturate(parse_deduction(p.facts));
  if (!holds.count({w.at(0), attr})) return "unknown";
  return negated ? "false" : "true";
}

// Hand-checked relation composition, independent of the shipped table.
std::string compose_by_hand(const std::string& s, const std::string& r) {
  const bool parent = s == "father" || s == "mother";
  const bool sibling = s == "brother" || s == "sister";
  const bool child = s == "son" || s == "daughter";
  if (parent) {
    if (r == "father") return "grandfather";
    if (r == "mother") return "grandmother";
    if (r == "son") return "brother";
    if (r == "daughter") return "sister";
  } else if (sibling) {
    if (r == "father" || r == "mother" || r == "brother" || r == "sister" ||
        r == "grandfather" || r == "grandmother") {
      return r;
    }
  } else if (child) {
    if (r == "brother") return "son";
    if (r == "sister") return "daughter";
  }
  return "";
}

std::string chain_oracle(const tasks::ReasoningProblem& p) {
  auto qw = words_of(p.question);
  if (qw.size() != 7) throw std::runtime_error("oracle: bad chain question");
  const std::string end = qw.at(2), start = qw.at(4);
  std::map<std::string, std::pair<std::string, std::string>> edge;  // from -> (to, rel)
  for (const std::string& f : p.facts) {
    auto w = words_of(f);
    if (w.size() != 6 || w.at(1) != "is" || w.at(4) != "of")
      throw std::runtime_error("oracle: malformed chain fact: " + f);
    if (edge.count(w.at(5))) throw std::runtime_error("oracle: branching chain");
    edge[w.at(5)] = {w.at(0), w.at(3)};
  }
  std::string cur = start, rel;
  bool first = true;
  while (edge.count(cur)) {
    const auto& [to, r] = edge.at(cur);
    rel = first ? r : compose_by_hand(rel, r);
    if (rel.empty()) throw std::runtime_error("oracle: dead-end composition");
    first = false;
    cur = to;
  }
  if (cur != end) throw std::runtime_error("oracle: chain does not reach the target");
  return rel;
}

std::string histogram_oracle(const tasks::ReasoningProblem& p) {
  std::array<long, 26> hist{};
  for (const std::string& f : p.facts) {
    for (const std::string& l : words_of(f)) {
      if (l.size() != 1 || l[0] < 'a' || l[0] > 'z')
        throw std::runtime_error("oracle: non-letter token " + l);
      ++hist[static_cast<size_t>(l[0] - 'a')];
    }
  }
  size_t best = 0;
  for (size_t l = 1; l < 26; ++l) {
    if (hist[l] > hist[best]) best = l;  // ties stay with the earlier letter
  }
  return std::string(1, static_cast<char>('a' + static_cast<char>(best)));
}

// ---------------------------------------------------------------------------
// Shared helpers

std::vector<tasks::EncodedProblem> encode_all(const std::vector<tasks::ReasoningProblem>& ps,
                                              const Vocabulary& v) {
  std::vector<tasks::EncodedProblem> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(tasks::encode_problem(p, v));
  return out;
}

std::vector<tasks::ReasoningProblem> gen_chains(std::uint64_t seed, long hops, long count) {
  tasks::ClutrrOptions o;
  o.seed = seed;
  o.hops = hops;
  o.count = count;
  return tasks::gen_clutrr(o, tasks::KinshipTable::builtin());
}

std::vector<tasks::ReasoningProblem> gen_deduction(std::uint64_t seed, long depth, long count,
                                                   long distractors) {
  tasks::PwOptions o;
  o.seed = seed;
  o.depth = depth;
  o.count = count;
  o.distractors = distractors;
  return tasks::gen_proofwriter(o);
}

struct TrainedSystem {
  NamedParameterSet theta;
  train::LearnedStepSizes alpha;
  json meta;
};

// Finished trainings are persisted under <out>/runs/<name>.ckpt and reloaded
// on the next invocation, so an interrupted suite resumes instead of
// retraining. Checkpoints round-trip bit-exactly, so cached and fresh runs
// evaluate identically.
template <class TrainFn>
TrainedSystem cached_run(const fs::path& out, const std::string& name, TrainFn fn) {
  const fs::path ck = out / "runs" / (name + ".ckpt");
  if (fs::exists(ck)) {
    auto lc = train::load_training_checkpoint(ck.string());
    return {std::move(lc.theta), std::move(lc.alpha), std::move(lc.meta)};
  }
  std::fprintf(stderr, "[suite] training %s\n", name.c_str());
  TrainedSystem sys = fn();
  sys.meta["name"] = name;
  train::save_training_checkpoint(ck.string(), sys.theta, sys.alpha, nullptr, sys.meta);
  return sys;
}

json train_result_meta(const train::TrainResult& r) {
  return json{{"best_val_acc", r.best_val_acc},
              {"best_epoch", r.best_epoch},
              {"epochs_run", r.epochs_run},
              {"skipped_episodes", r.skipped_episodes},
              {"early_stopped", r.early_stopped},
              {"reached_target", r.reached_target},
              {"diverged", r.diverged},
              {"log", r.log}};
}

json baseline_result_meta(const baseline::BaselineResult& r) {
  return json{{"best_val_acc", r.best_val_acc},
              {"best_epoch", r.best_epoch},
              {"epochs_run", r.epochs_run},
              {"skipped_batches", r.skipped_batches},
              {"early_stopped", r.early_stopped},
              {"reached_target", r.reached_target},
              {"log", r.log}};
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Analytic and numeric gradient checks

// Inner loss w^2, one gradient step of size 0.25 from w = 1, outer loss
// w_hat^2. Closed form: w_hat = 1 - 2a = 0.5; the exact outer gradient is
// 2*w_hat*(1 - 2a) = 0.5, its first-order approximation drops dghat/dw and
// gives 2*w_hat = 1.0, and d/da = 2*w_hat*(-2w) = -2.0 either way.
CriterionResult check_toy_gradients() {
  CriterionResult c{1, "meta-gradients, closed form", false, ""};
  const auto t0 = Clock::now();
  auto run = [](train::GradMode mode) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    NamedParameterSet th;
    th.add("w", 0, ad::Tensor::scalar(1.0));
    train::LearnedStepSizes al = train::LearnedStepSizes::make(1, 1, 0.25);
    auto inner = [](const NamedParameterSet& p) {
      return ad::mul(p.at("w"), p.at("w"));
    };
    train::AdaptResult ar = train::inner_adapt_fn(inner, th, al, 1, mode);
    ad::Tensor L = ad::mul(ar.params.at("w"), ar.params.at("w"));
    std::vector<ad::Tensor> wrt = {th.at("w"), al.entries[0][0]};
    auto g = ad::grad(L, wrt);
    return std::pair(g[0].item(), g[1].item());
  };
  auto [g2_w, g2_a] = run(train::GradMode::second);
  auto [g1_w, g1_a] = run(train::GradMode::first);
  const double secs = seconds_since(t0);
  const bool values = std::abs(g2_w - 0.5) < 1e-10 && std::abs(g1_w - 1.0) < 1e-10 &&
                      std::abs(g2_a - (-2.0)) < 1e-10 && std::abs(g1_a - (-2.0)) < 1e-10;
  c.pass = values && secs < 1.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "second dL/dw=%.12f (want 0.5), first=%.12f (want 1.0), dL/da=%.12f "
                "(want -2.0), %.3fs",
                g2_w, g1_w, g2_a, secs);
  c.detail = buf;
  return c;
}

CriterionResult check_numeric_gradients(long coords) {
  CriterionResult c{2, "meta-gradients vs central differences", false, ""};
  const auto t0 = Clock::now();
  auto vocab = tasks::build_vocab("clutrr");
  GptModel model(ModelConfig{vocab.size(), 128, 2, 2, 32, 3});
  auto problems = encode_all(gen_chains(3, 2, 2), vocab);

  train::TrainConfig cfg;
  cfg.inner_steps = 1;
  cfg.alpha_init = 1e-2;
  cfg.multi_task = true;
  cfg.meta_batch = 2;
  NamedParameterSet theta = model.init_params();
  auto alpha = train::LearnedStepSizes::make(theta.max_layer() + 1, 1, cfg.alpha_init);

  train::MetaGrads mg = train::meta_gradients(model, theta, alpha, problems, cfg);
  if (mg.skipped != 0) {
    c.detail = "analytic pass skipped episodes";
    return c;
  }

  auto batch_value = [&](const NamedParameterSet& th) {
    double total = 0.0;
    for (const auto& ep : problems) {
      ad::Tape tape;
      ad::TapeScope scope(tape);
      auto ar = train::inner_adapt(model, th, ep.facts, alpha, 1, train::GradMode::second);
      total += train::outer_loss(model, ar.params, ep, true).item();
    }
    return total / static_cast<double>(problems.size());
  };

  // The small floor keeps near-zero gradients (unused vocabulary rows) from
  // blowing up the relative error.
  Rng rng(99);
  const double eps = 1e-4;
  long checked = 0, ok = 0;
  double worst = 0.0;
  for (long k = 0; k < coords; ++k) {
    const size_t pi = static_cast<size_t>(rng.uniform_int(static_cast<long>(theta.size())));
    const long j = rng.uniform_int(theta.item(pi).tensor.numel());
    NamedParameterSet tp = theta.deep_copy(), tm = theta.deep_copy();
    ad::Tensor a = tp.at(theta.item(pi).name);  // handle copy, shared buffer
    ad::Tensor b = tm.at(theta.item(pi).name);
    a.mutable_data()[static_cast<size_t>(j)] += eps;
    b.mutable_data()[static_cast<size_t>(j)] -= eps;
    const double fd = (batch_value(tp) - batch_value(tm)) / (2 * eps);
    const double an = mg.theta[pi].data()[static_cast<size_t>(j)];
    const double rel = std::abs(an - fd) / (std::abs(fd) + 1e-3);
    worst = std::max(worst, rel);
    ++checked;
    if (rel < 1e-3) ++ok;
  }
  const double secs = seconds_since(t0);
  c.pass = ok == checked && secs < 120.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%ld/%ld coordinates within 1e-3 (worst %.2e), %.1fs", ok,
                checked, worst, secs);
  c.detail = buf;
  return c;
}

CriterionResult check_oracles(long count, std::uint64_t base) {
  CriterionResult c{3, "generators vs independent oracles", false, ""};
  const auto t0 = Clock::now();
  long mismatches = 0, flips = 0;

  auto ded_all = gen_deduction(base + 61, 2, count, -1);
  auto ded_none = gen_deduction(base + 61, 2, count, 0);
  for (size_t i = 0; i < ded_all.size(); ++i) {
    if (deduction_oracle(ded_all[i]) != ded_all[i].answer) ++mismatches;
    // the same generation with distractors stripped must keep its label
    if (ded_all[i].answer != ded_none[i].answer || ded_all[i].question != ded_none[i].question)
      ++flips;
  }
  for (const auto& p : gen_chains(base + 62, 2, count)) {
    if (chain_oracle(p) != p.answer) ++mismatches;
  }
  tasks::LetterFreqOptions lo;
  lo.seed = base + 63;
  lo.count = count;
  for (const auto& p : tasks::gen_letterfreq(lo)) {
    if (histogram_oracle(p) != p.answer) ++mismatches;
  }

  const double secs = seconds_since(t0);
  c.pass = mismatches == 0 && flips == 0 && secs < 60.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%ld problems/task, %ld label mismatches, %ld distractor flips, %.1fs",
                count, mismatches, flips, secs);
  c.detail = buf;
  return c;
}

}  // namespace

bool ReproSummary::all_pass() const {
  for (const auto& c : criteria) {
    if (!c.pass) return false;
  }
  return true;
}

void print_summary(const ReproSummary& s) {
  for (const auto& c : s.criteria) {
    std::printf("criterion %2d [%s] %s: %s\n", c.id, c.name.c_str(),
                c.pass ? "PASS" : "FAIL", c.detail.c_str());
  }
  std::printf("%s (%.0fs, artifacts in %s)\n", s.all_pass() ? "all criteria passed" : "FAILURES present",
              s.wall_seconds, s.out_dir.c_str());
}

ReproSummary run_repro_suite(const ReproOptions& opt) {
  const auto t0 = Clock::now();
  const Sizes S = opt.quick ? Sizes::quick() : Sizes();
  const std::uint64_t base = opt.seed;
  const fs::path out(opt.out_dir);
  fs::create_directories(out / "runs");

  ReproSummary summary;
  summary.out_dir = out.string();
  auto& crit = summary.criteria;
  eval::RecordSet records;
  json wallclock;  // medians and other host-dependent times, kept out of CSVs

  // ---- exact and numeric gradient checks, data oracles ---------------------
  crit.push_back(check_toy_gradients());
  crit.push_back(check_numeric_gradients(S.fd_coords));
  crit.push_back(check_oracles(S.oracle_count, base));

  std::deque<GptModel> models;  // stable addresses; answerers hold references

  // ---- relation chains, 2 hops: headline learnability ----------------------
  auto cvocab = tasks::build_vocab("clutrr");
  const auto train2 = encode_all(gen_chains(base + 11, 2, S.c4_train), cvocab);
  const auto val2 = encode_all(gen_chains(base + 12, 2, S.c4_val), cvocab);
  const auto test2 = encode_all(gen_chains(base + 13, 2, S.c4_test), cvocab);

  train::TrainConfig cfg4;
  cfg4.inner_steps = S.c4_steps;
  cfg4.order = S.c4_second_order ? train::TrainConfig::Order::second
                                 : train::TrainConfig::Order::first;
  cfg4.multi_task = true;
  cfg4.meta_batch = 4;
  cfg4.epochs = S.c4_epochs;
  cfg4.patience = 1000;  // the epoch budget and the accuracy target govern
  cfg4.stop_acc = 0.90;
  cfg4.alpha_init = S.c4_alpha0;
  cfg4.outer_lr = S.c4_lr;
  cfg4.seed = base + 1;

  GptModel& model4 = models.emplace_back(ModelConfig{cvocab.size(), 256, 4, 4, 128, base + 100});
  TrainedSystem sys4 = cached_run(out, "chains2_adapted", [&] {
    auto r = train::train(model4, cfg4, train2, val2);
    return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha), train_result_meta(r)};
  });
  const double c4_val_acc = sys4.meta.at("best_val_acc").get<double>();

  eval::Answerer ans2 = eval::adapted_answerer(model4, sys4.theta, sys4.alpha, S.c4_steps);
  const double c4_test_acc = eval::label_accuracy(ans2, test2);
  records.add({"headline", {{"task", "chains2"}, {"method", "adapted"}}, "test_accuracy",
               c4_test_acc});
  records.add({"headline", {{"task", "chains2"}, {"method", "adapted"}}, "val_accuracy",
               c4_val_acc});

  // Decorrelated-fact control: the same bi-level trainer on problems whose
  // whole fact sets were swapped between questions. Accuracy has to sit at
  // the 1-in-8 answer prior; extra epochs cannot create information, so one
  // is enough.
  baseline::BaselineConfig rfcfg;
  rfcfg.kind = baseline::BaselineKind::random_facts;
  rfcfg.seed = base + 1;
  rfcfg.inner = cfg4;
  rfcfg.inner.epochs = S.rf_epochs;
  rfcfg.inner.stop_acc = 2.0;
  TrainedSystem sysrf = cached_run(out, "chains2_randomfacts", [&] {
    auto r = baseline::train_baseline(model4, rfcfg, train2, val2);
    return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha),
                         baseline_result_meta(r)};
  });
  const double rf_acc = sysrf.meta.at("best_val_acc").get<double>();
  records.add({"headline", {{"task", "chains2"}, {"method", "random-facts"}}, "val_accuracy",
               rf_acc});

  {
    CriterionResult c{4, "desk-scale learnability with control", false, ""};
    const bool learned = c4_val_acc >= 0.90;
    const bool chance = std::abs(rf_acc - 0.125) <= 0.05;
    c.pass = learned && chance;
    c.detail = "val_acc=" + pct(c4_val_acc) + " (need >=0.900), random-facts=" + pct(rf_acc) +
               " (need within 0.125+-0.050)";
    crit.push_back(c);
  }

  // ---- relation chains, 4 hops: inner-step and step-size ablations ---------
  const auto train4 = encode_all(gen_chains(base + 21, 4, S.c5_train), cvocab);
  const auto val4 = encode_all(gen_chains(base + 22, 4, S.c5_val), cvocab);
  const auto test4 = encode_all(gen_chains(base + 23, 4, S.c5_test), cvocab);

  train::TrainConfig cfg5;
  cfg5.order = train::TrainConfig::Order::first;
  cfg5.multi_task = true;
  cfg5.meta_batch = 4;
  cfg5.epochs = S.c5_epochs;
  cfg5.patience = 1000;
  cfg5.alpha_init = S.c4_alpha0;
  cfg5.outer_lr = S.c4_lr;

  std::vector<double> acc_n1, acc_n4, acc_fixed;
  eval::Answerer grid_sys4;  // seed-1 system reused by the hop grid
  for (long s = 1; s <= S.seeds; ++s) {
    GptModel& m = models.emplace_back(ModelConfig{cvocab.size(), 128, 2, 2, 64, base + 200 + s});
    std::map<long, eval::Answerer> by_steps;
    for (long n : {1L, 4L}) {
      train::TrainConfig cfg = cfg5;
      cfg.inner_steps = n;
      cfg.seed = base + static_cast<std::uint64_t>(s);
      TrainedSystem sys =
          cached_run(out, "chains4_N" + std::to_string(n) + "_s" + std::to_string(s), [&] {
            auto r = train::train(m, cfg, train4, val4);
            return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha),
                                 train_result_meta(r)};
          });
      by_steps[n] = eval::adapted_answerer(m, sys.theta, sys.alpha, n);
      if (n == 4 && s == 1) grid_sys4 = by_steps[n];
    }
    auto recs = eval::inner_steps_ablation({1, 4}, by_steps, test4,
                                           {{"task", "chains4"}, {"seed", std::to_string(s)}});
    acc_n1.push_back(recs.at(0).value);
    acc_n4.push_back(recs.at(1).value);
    records.add_all(recs);

    // fixed shared step size, otherwise the same N = 4 recipe
    train::TrainConfig cfgf = cfg5;
    cfgf.inner_steps = 4;
    cfgf.seed = base + static_cast<std::uint64_t>(s);
    cfgf.learn_alpha = false;
    TrainedSystem sysf = cached_run(out, "chains4_fixedalpha_s" + std::to_string(s), [&] {
      auto r = train::train(m, cfgf, train4, val4);
      return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha),
                           train_result_meta(r)};
    });
    auto arecs = eval::adaptive_lr_ablation(
        by_steps[4], eval::adapted_answerer(m, sysf.theta, sysf.alpha, 4), test4,
        {{"task", "chains4"}, {"seed", std::to_string(s)}});
    acc_fixed.push_back(arecs.at(1).value);
    records.add_all(arecs);
  }

  {
    CriterionResult c{5, "more inner steps help", false, ""};
    const double gap = mean_of(acc_n4) - mean_of(acc_n1);
    c.pass = gap >= 0.05;
    c.detail = "N=4 mean=" + pct(mean_of(acc_n4)) + ", N=1 mean=" + pct(mean_of(acc_n1)) +
               ", gap=" + pct(gap) + " (need >=0.050)";
    crit.push_back(c);
  }

  // ---- hop-generalization grid ---------------------------------------------
  std::map<long, std::vector<tasks::EncodedProblem>> grid_sets;
  for (long h = 2; h <= 6; ++h) {
    grid_sets[h] =
        encode_all(gen_chains(base + 30 + static_cast<std::uint64_t>(h), h, S.grid_count), cvocab);
  }
  auto grid_recs = eval::hop_generalization({2, 4}, {2, 3, 4, 5, 6},
                                            {{2, ans2}, {4, grid_sys4}}, grid_sets, {});
  records.add_all(grid_recs);

  // ---- deduction task: distractors, objectives, recall ----------------------
  auto pvocab = tasks::build_vocab("proofwriter");
  const auto ptrain = encode_all(gen_deduction(base + 41, 2, S.pw_train, -1), pvocab);
  const auto pval = encode_all(gen_deduction(base + 42, 2, S.pw_val, -1), pvocab);
  std::map<long, std::vector<tasks::EncodedProblem>> ptest;
  for (long d : {0L, 2L, 4L, -1L}) {
    ptest[d] = encode_all(gen_deduction(base + 43, 2, S.pw_test, d), pvocab);
  }

  train::TrainConfig cfgp;
  cfgp.inner_steps = S.pw_steps;
  cfgp.order = train::TrainConfig::Order::first;
  cfgp.multi_task = true;
  cfgp.meta_batch = 4;
  cfgp.epochs = S.pw_epochs;
  cfgp.patience = 1000;
  cfgp.alpha_init = S.c4_alpha0;
  cfgp.outer_lr = S.c4_lr;

  baseline::BaselineConfig cfgb;
  cfgb.kind = baseline::BaselineKind::ft_icr;
  cfgb.multi_task = true;
  cfgb.epochs = S.bl_epochs;
  cfgb.lr = 1e-3;

  const std::vector<long> sweep_counts = {0, 2, 4, -1};
  std::map<long, std::vector<double>> sweep_adapted, sweep_reader;  // distractors -> per-seed
  std::vector<double> recall_adapted_all, recall_reader_all;
  TrainedSystem pw_mt_s1;  // seed-1 system reused by the objective study
  const GptModel* pw_model_s1 = nullptr;

  for (long s = 1; s <= S.seeds; ++s) {
    GptModel& m = models.emplace_back(ModelConfig{pvocab.size(), 256, 2, 2, 64, base + 300 + s});
    cfgp.seed = base + static_cast<std::uint64_t>(s);
    TrainedSystem sysa = cached_run(out, "deduction_adapted_s" + std::to_string(s), [&] {
      auto r = train::train(m, cfgp, ptrain, pval);
      return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha),
                           train_result_meta(r)};
    });
    if (s == 1) {
      pw_mt_s1 = sysa;
      pw_model_s1 = &m;
    }

    cfgb.seed = base + static_cast<std::uint64_t>(s);
    TrainedSystem sysr = cached_run(out, "deduction_reader_s" + std::to_string(s), [&] {
      auto r = baseline::train_baseline(m, cfgb, ptrain, pval);
      return TrainedSystem{std::move(r.best_theta), train::LearnedStepSizes::make(1, 1, 0.0),
                           baseline_result_meta(r)};
    });

    eval::Answerer aa = eval::adapted_answerer(m, sysa.theta, sysa.alpha, S.pw_steps);
    eval::Answerer ra =
        eval::reader_answerer(m, sysr.theta, baseline::BaselineKind::ft_icr, m.config().context_length);
    std::map<long, eval::Answerer> amap, rmap;
    for (long d : sweep_counts) {
      amap[d] = aa;
      rmap[d] = ra;
    }
    auto arecs = eval::distractor_sweep(sweep_counts, amap, ptest,
                                        {{"method", "adapted"}, {"seed", std::to_string(s)}});
    auto rrecs = eval::distractor_sweep(sweep_counts, rmap, ptest,
                                        {{"method", "reader"}, {"seed", std::to_string(s)}});
    for (size_t i = 0; i < sweep_counts.size(); ++i) {
      sweep_adapted[sweep_counts[i]].push_back(arecs.at(i).value);
      sweep_reader[sweep_counts[i]].push_back(rrecs.at(i).value);
    }
    records.add_all(arecs);
    records.add_all(rrecs);

    // knowledge recall on the hardest (every-distractor) condition
    recall_adapted_all.push_back(eval::recall_exact_match(
        eval::adapted_recaller(m, sysa.theta, sysa.alpha, S.pw_steps), ptest.at(-1)));
    recall_reader_all.push_back(eval::recall_exact_match(
        eval::reader_recaller(m, sysr.theta, m.config().context_length), ptest.at(-1)));
  }

  {
    CriterionResult c{6, "distractor robustness gap", false, ""};
    const double drop_a = mean_of(sweep_adapted.at(0)) - mean_of(sweep_adapted.at(-1));
    const double drop_r = mean_of(sweep_reader.at(0)) - mean_of(sweep_reader.at(-1));
    c.pass = drop_a < drop_r;
    c.detail = "adapted drop=" + pct(drop_a) + " (acc " + pct(mean_of(sweep_adapted.at(0))) +
               "->" + pct(mean_of(sweep_adapted.at(-1))) + "), reader drop=" + pct(drop_r) +
               " (acc " + pct(mean_of(sweep_reader.at(0))) + "->" +
               pct(mean_of(sweep_reader.at(-1))) + ")";
    crit.push_back(c);
  }

  // Objective study: the multi-task outer loss should leave the inner loop
  // memorizing the fact set better than answer-only training does.
  train::TrainConfig cfgst = cfgp;
  cfgst.multi_task = false;
  cfgst.seed = base + 1;
  GptModel& model_st = models.emplace_back(ModelConfig{pvocab.size(), 256, 2, 2, 64, base + 301});
  TrainedSystem sys_st = cached_run(out, "deduction_answeronly_s1", [&] {
    auto r = train::train(model_st, cfgst, ptrain, pval);
    return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha), train_result_meta(r)};
  });

  auto rep_mt = eval::inner_loss_report(*pw_model_s1, pw_mt_s1.theta, pw_mt_s1.alpha, S.pw_steps,
                                        pval);
  auto rep_st = eval::inner_loss_report(model_st, sys_st.theta, sys_st.alpha, S.pw_steps, pval);
  records.add({"objective_study", {{"objective", "multi-task"}}, "final_inner_loss",
               rep_mt.final_mean});
  records.add({"objective_study", {{"objective", "multi-task"}}, "inner_loss_drop",
               rep_mt.delta_mean});
  records.add({"objective_study", {{"objective", "answer-only"}}, "final_inner_loss",
               rep_st.final_mean});
  records.add({"objective_study", {{"objective", "answer-only"}}, "inner_loss_drop",
               rep_st.delta_mean});

  {
    CriterionResult c{7, "multi-task strengthens memorization", false, ""};
    c.pass = rep_mt.delta_mean > rep_st.delta_mean && rep_mt.final_mean < rep_st.final_mean;
    c.detail = "drop mt=" + pct(rep_mt.delta_mean) + " vs st=" + pct(rep_st.delta_mean) +
               "; final mt=" + pct(rep_mt.final_mean) + " vs st=" + pct(rep_st.final_mean);
    crit.push_back(c);
  }

  // Recall fidelity: a distractor-free run trained to the accuracy target
  // must reproduce its fact sets nearly verbatim.
  const auto ptrain0 = encode_all(gen_deduction(base + 41, 2, S.pw_train, 0), pvocab);
  const auto pval0 = encode_all(gen_deduction(base + 42, 2, S.pw_val, 0), pvocab);
  train::TrainConfig cfg9 = cfgp;
  cfg9.seed = base + 1;
  cfg9.stop_acc = 0.90;
  GptModel& model9 = models.emplace_back(ModelConfig{pvocab.size(), 256, 2, 2, 64, base + 310});
  TrainedSystem sys9 = cached_run(out, "deduction_nodistractor", [&] {
    auto r = train::train(model9, cfg9, ptrain0, pval0);
    return TrainedSystem{std::move(r.best_theta), std::move(r.best_alpha), train_result_meta(r)};
  });
  const double acc9 = sys9.meta.at("best_val_acc").get<double>();
  const double recall9 = eval::recall_exact_match(
      eval::adapted_recaller(model9, sys9.theta, sys9.alpha, S.pw_steps), ptest.at(0));
  records.add({"recall", {{"condition", "none"}, {"method", "adapted"}}, "exact_match", recall9});
  records.add({"recall", {{"condition", "all"}, {"method", "adapted"}}, "exact_match",
               mean_of(recall_adapted_all)});
  records.add({"recall", {{"condition", "all"}, {"method", "reader"}}, "exact_match",
               mean_of(recall_reader_all)});

  {
    CriterionResult c{9, "knowledge recall fidelity", false, ""};
    const bool premise = acc9 >= 0.90;
    const bool clean = recall9 >= 0.80;
    const bool gap = mean_of(recall_adapted_all) > mean_of(recall_reader_all);
    c.pass = premise && clean && gap;
    c.detail = "no-distractor val_acc=" + pct(acc9) + " recall=" + pct(recall9) +
               " (need >=0.800); all-distractor recall adapted=" +
               pct(mean_of(recall_adapted_all)) + " vs reader=" + pct(mean_of(recall_reader_all));
    crit.push_back(c);
  }

  {
    CriterionResult c{10, "learned step sizes beat a fixed one", false, ""};
    const double gap = mean_of(acc_n4) - mean_of(acc_fixed);
    c.pass = gap >= 0.03;
    c.detail = "learned mean=" + pct(mean_of(acc_n4)) + ", fixed mean=" + pct(mean_of(acc_fixed)) +
               ", gap=" + pct(gap) + " (need >=0.030)";
    crit.push_back(c);
  }

  // Reader-only control rows for the headline table (answer from facts
  // without the question, and from the question without facts).
  double acc_nofacts = 0, acc_noquestion = 0;
  {
    GptModel& m = models.emplace_back(ModelConfig{pvocab.size(), 256, 2, 2, 64, base + 320});
    for (auto kind : {baseline::BaselineKind::no_facts, baseline::BaselineKind::no_question}) {
      baseline::BaselineConfig cb = cfgb;
      cb.kind = kind;
      cb.multi_task = false;
      cb.seed = base + 1;
      const std::string name = baseline::kind_name(kind);
      TrainedSystem sys = cached_run(out, std::string("deduction_") + name, [&] {
        auto r = baseline::train_baseline(m, cb, ptrain, pval);
        return TrainedSystem{std::move(r.best_theta), train::LearnedStepSizes::make(1, 1, 0.0),
                             baseline_result_meta(r)};
      });
      const double acc = eval::label_accuracy(
          eval::reader_answerer(m, sys.theta, kind, m.config().context_length), ptest.at(-1));
      records.add({"headline", {{"task", "deduction2"}, {"method", name}}, "test_accuracy", acc});
      (kind == baseline::BaselineKind::no_facts ? acc_nofacts : acc_noquestion) = acc;
    }
  }

  // ---- letter-run counting: amortized cost of encoded knowledge -------------
  auto lvocab = tasks::build_vocab("letterfreq");
  tasks::LetterFreqOptions lopt;
  lopt.seed = base + 51;
  lopt.count = 1;
  const auto lprob = encode_all(tasks::gen_letterfreq(lopt), lvocab).at(0);
  GptModel& bench_model =
      models.emplace_back(ModelConfig{lvocab.size(), 1024, 2, 4, 64, base + 500});
  NamedParameterSet bench_theta = bench_model.init_params();
  auto bench_alpha =
      train::LearnedStepSizes::make(bench_theta.max_layer() + 1, S.bench_steps, 1e-4);

  auto rk = eval::runtime_bench_adapted(bench_model, bench_theta, bench_alpha, S.bench_steps,
                                        lprob, S.bench_questions, S.bench_reps);
  auto rk1 = eval::runtime_bench_adapted(bench_model, bench_theta, bench_alpha, S.bench_steps,
                                         lprob, 1, 1);
  auto ri = eval::runtime_bench_reader(bench_model, bench_theta, lprob, S.bench_questions,
                                       S.bench_reps);
  long fact_tokens = 0;
  for (const auto& f : lprob.facts) fact_tokens += static_cast<long>(f.size());

  {
    CriterionResult c{8, "knowledge cost amortizes across questions", false, ""};
    const bool adapted_exact = rk.knowledge_tokens == S.bench_steps * fact_tokens;
    const bool q_independent = rk.knowledge_tokens == rk1.knowledge_tokens;
    const bool reader_exact = ri.knowledge_tokens == S.bench_questions * fact_tokens;
    c.pass = adapted_exact && q_independent && reader_exact &&
             rk.knowledge_tokens < ri.knowledge_tokens;
    c.detail = "adapted=" + std::to_string(rk.knowledge_tokens) + " (want " +
               std::to_string(S.bench_steps * fact_tokens) + ", q-independent " +
               (q_independent ? "yes" : "NO") + "), reader=" + std::to_string(ri.knowledge_tokens) +
               " (want " + std::to_string(S.bench_questions * fact_tokens) + ")";
    crit.push_back(c);
  }
  wallclock["adapted_median_seconds"] = rk.median_seconds;
  wallclock["reader_median_seconds"] = ri.median_seconds;
  wallclock["bench_reps"] = S.bench_reps;

  // ---- artifacts -------------------------------------------------------------
  using Row = std::vector<std::string>;
  auto fmt = eval::format_double;

  eval::write_csv((out / "table1_headline.csv").string(), {"system", "task", "accuracy"},
                  {Row{"adapted", "chains2", fmt(c4_test_acc)},
                   Row{"random-facts", "chains2", fmt(rf_acc)},
                   Row{"adapted", "deduction2", fmt(mean_of(sweep_adapted.at(-1)))},
                   Row{"reader", "deduction2", fmt(mean_of(sweep_reader.at(-1)))},
                   Row{"no-facts", "deduction2", fmt(acc_nofacts)},
                   Row{"no-question", "deduction2", fmt(acc_noquestion)}});

  {
    std::vector<Row> rows;
    for (long h = 2; h <= 6; ++h) {
      // grid records arrive ordered by (train_hops, test_hops)
      const double a2 = grid_recs.at(static_cast<size_t>(h - 2)).value;
      const double a4 = grid_recs.at(static_cast<size_t>(5 + h - 2)).value;
      rows.push_back({std::to_string(h), fmt(a2), fmt(a4)});
    }
    eval::write_csv((out / "fig3_hop_grid.csv").string(), {"test_hops", "train2", "train4"}, rows);
  }

  {
    std::vector<Row> rows;
    for (long d : sweep_counts) {
      rows.push_back({d < 0 ? "all" : std::to_string(d), fmt(mean_of(sweep_adapted.at(d))),
                      fmt(mean_of(sweep_reader.at(d)))});
    }
    eval::write_csv((out / "fig4_distractors.csv").string(), {"distractors", "adapted", "reader"},
                    rows);
  }

  eval::write_csv((out / "table4_runtime.csv").string(),
                  {"method", "questions", "knowledge_tokens", "question_tokens", "reps"},
                  {Row{"adapted", std::to_string(rk.questions), std::to_string(rk.knowledge_tokens),
                       std::to_string(rk.question_tokens), std::to_string(rk.reps)},
                   Row{"reader", std::to_string(ri.questions), std::to_string(ri.knowledge_tokens),
                       std::to_string(ri.question_tokens), std::to_string(ri.reps)}});

  eval::write_csv((out / "table5_innerloss.csv").string(),
                  {"objective", "final_inner_loss", "inner_loss_drop", "problems", "failures"},
                  {Row{"multi-task", fmt(rep_mt.final_mean), fmt(rep_mt.delta_mean),
                       std::to_string(rep_mt.problems), std::to_string(rep_mt.failures)},
                   Row{"answer-only", fmt(rep_st.final_mean), fmt(rep_st.delta_mean),
                       std::to_string(rep_st.problems), std::to_string(rep_st.failures)}});

  eval::write_csv((out / "table6_recall.csv").string(), {"condition", "method", "recall"},
                  {Row{"none", "adapted", fmt(recall9)},
                   Row{"all", "adapted", fmt(mean_of(recall_adapted_all))},
                   Row{"all", "reader", fmt(mean_of(recall_reader_all))}});

  records.write_jsonl((out / "records.jsonl").string());

  {
    std::ifstream f3(out / "fig3_hop_grid.csv");
    std::stringstream s3;
    s3 << f3.rdbuf();
    auto spec = chart::chart_from_csv(s3.str(), "accuracy by test hops");
    spec.y_label = "label accuracy";
    chart::write_text_file((out / "fig3_hop_grid.svg").string(), chart::render_line_chart(spec));

    std::ifstream f4(out / "fig4_distractors.csv");
    std::stringstream s4;
    s4 << f4.rdbuf();
    auto spec4 = chart::chart_from_csv(s4.str(), "accuracy by distractor count");
    spec4.y_label = "label accuracy";
    chart::write_text_file((out / "fig4_distractors.svg").string(),
                           chart::render_line_chart(spec4));

    chart::ChartSpec bar;
    bar.title = "knowledge recall";
    bar.x_label = "distractor condition";
    bar.y_label = "exact match";
    bar.x_ticks = {"none", "all"};
    bar.series = {{"adapted", {recall9, mean_of(recall_adapted_all)}},
                  {"reader", {0.0, mean_of(recall_reader_all)}}};
    chart::write_text_file((out / "table6_recall.svg").string(), chart::render_bar_chart(bar));
  }

  {
    std::ofstream wf(out / "runtime_wallclock.json", std::ios::binary);
    wf << wallclock.dump(2) << "\n";
  }

  // ---- determinism self-check -------------------------------------------------
  {
    CriterionResult c{11, "byte-identical reruns", false, ""};
    if (!opt.self_check) {
      c.pass = true;
      c.detail = "self-check disabled for this invocation (see parent run)";
    } else {
      ReproOptions sub = opt;
      sub.quick = true;
      sub.self_check = false;
      const std::vector<std::string> csvs = {"table1_headline.csv",  "fig3_hop_grid.csv",
                                             "fig4_distractors.csv", "table4_runtime.csv",
                                             "table5_innerloss.csv", "table6_recall.csv",
                                             "records.jsonl"};
      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
      };
      // Fresh directories: cached checkpoints must not stand in for a rerun.
      fs::remove_all(out / "selfcheck_a");
      fs::remove_all(out / "selfcheck_b");
      sub.out_dir = (out / "selfcheck_a").string();
      run_repro_suite(sub);
      sub.out_dir = (out / "selfcheck_b").string();
      run_repro_suite(sub);
      long same = 0;
      std::string first_diff;
      for (const auto& f : csvs) {
        const fs::path a = out / "selfcheck_a" / f;
        const fs::path b = out / "selfcheck_b" / f;
        if (fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b)) {
          ++same;
        } else if (first_diff.empty()) {
          first_diff = f;
        }
      }
      c.pass = same == static_cast<long>(csvs.size());
      c.detail = std::to_string(same) + "/" + std::to_string(csvs.size()) +
                 " artifacts byte-identical across smoke-scale reruns" +
                 (first_diff.empty() ? "" : ("; first difference: " + first_diff));
    }
    crit.push_back(c);
  }

  std::sort(crit.begin(), crit.end(),
            [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
  summary.wall_seconds = seconds_since(t0);

  json jsum;
  jsum["quick"] = opt.quick;
  jsum["seed"] = opt.seed;
  jsum["threads"] = opt.threads;
  jsum["wall_seconds"] = summary.wall_seconds;
  jsum["criteria"] = json::array();
  for (const auto& c : crit) {
    jsum["criteria"].push_back(
        {{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  }
  {
    std::ofstream sf(out / "summary.json", std::ios::binary);
    sf << jsum.dump(2) << "\n";
  }
  return summary;
}

}  // namespace reckon::repro
