#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "reckon/baselines.hpp"
#include "reckon/model.hpp"
#include "reckon/ops.hpp"
#include "reckon/rng.hpp"
#include "reckon/tape.hpp"
#include "reckon/tasks.hpp"
#include "reckon/trainer.hpp"
#include "reckon/vocab.hpp"

using namespace reckon;
using namespace reckon::ad;
using namespace reckon::baseline;

namespace {

struct ClutrrSetup {
  Vocabulary vocab;
  GptModel model;
  std::vector<tasks::EncodedProblem> problems;

  explicit ClutrrSetup(long count = 8, long layers = 2, long dim = 32, std::uint64_t seed = 1,
                       long ctx = 128)
      : vocab(tasks::build_vocab("clutrr")),
        model(ModelConfig{vocab.size(), ctx, layers, 2, dim, seed}) {
    tasks::ClutrrOptions opt;
    opt.seed = seed;
    opt.hops = 2;
    opt.count = count;
    for (const auto& p : tasks::gen_clutrr(opt, tasks::KinshipTable::builtin())) {
      problems.push_back(tasks::encode_problem(p, vocab));
    }
  }
};

}  // namespace

TEST_CASE("in-context input is BOS, facts in order, then the question") {
  ClutrrSetup s(4);
  const tasks::EncodedProblem& ep = s.problems[0];
  std::vector<int> seq = build_icr_input(ep, 128);

  std::vector<int> expect{Vocabulary::kBos};
  for (const auto& f : ep.facts) expect.insert(expect.end(), f.begin(), f.end());
  expect.insert(expect.end(), ep.question.begin() + 1, ep.question.end());
  CHECK(seq == expect);
  CHECK(seq.front() == Vocabulary::kBos);
  CHECK(seq.back() == Vocabulary::kSep);

  // An empty fact set degenerates to the bare question.
  tasks::EncodedProblem bare = ep;
  bare.facts.clear();
  CHECK(build_icr_input(bare, 128) == ep.question);

  // Overflow reports both lengths.
  try {
    build_icr_input(ep, 8);
    FAIL("expected overflow error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(seq.size())) != std::string::npos);
    CHECK(msg.find("context length 8") != std::string::npos);
  }
}

TEST_CASE("letter-run supervised example fills exactly 1024 tokens") {
  Vocabulary vocab = tasks::build_vocab("letterfreq");
  tasks::LetterFreqOptions opt;
  opt.seed = 7;
  opt.count = 2;
  auto probs = tasks::gen_letterfreq(opt);
  for (const auto& p : probs) {
    tasks::EncodedProblem ep = tasks::encode_problem(p, vocab);
    long fact_tokens = 0;
    for (const auto& f : ep.facts) fact_tokens += static_cast<long>(f.size());
    CHECK(fact_tokens == 1016);
    BaselineExample ex = make_example(BaselineKind::ft_icr, ep, false, 1024);
    CHECK(ex.tokens.size() == 1024);
    CHECK(ex.weights.back() == 1.0);
    CHECK(ex.tokens.back() == ep.answer);
  }
}

TEST_CASE("example weights supervise the answer and spread over recall tokens") {
  ClutrrSetup s(4);
  const tasks::EncodedProblem& ep = s.problems[1];

  BaselineExample st = make_example(BaselineKind::ft_icr, ep, false, 128);
  CHECK(st.tokens.size() == st.weights.size());
  CHECK(st.tokens.back() == ep.answer);
  double total = 0.0;
  for (double w : st.weights) total += w;
  CHECK(total == 1.0);

  BaselineExample mt = make_example(BaselineKind::ft_icr, ep, true, 128);
  const size_t R = ep.recall_target.size();
  REQUIRE(mt.tokens.size() == st.tokens.size() + R);
  for (size_t i = 0; i < R; ++i) {
    CHECK(mt.tokens[st.tokens.size() + i] == ep.recall_target[i]);
    CHECK(mt.weights[st.tokens.size() + i] == 1.0 / static_cast<double>(R));
  }

  // The question-only ablation never carries recall supervision.
  BaselineExample nf_st = make_example(BaselineKind::no_facts, ep, false, 128);
  BaselineExample nf_mt = make_example(BaselineKind::no_facts, ep, true, 128);
  CHECK(nf_st.tokens == nf_mt.tokens);
  CHECK(nf_st.weights == nf_mt.weights);
  std::vector<int> expect = ep.question;
  expect.push_back(ep.answer);
  CHECK(nf_st.tokens == expect);

  // The question-free ablation carries the facts and nothing else.
  std::vector<int> nq = eval_input(BaselineKind::no_question, ep, 128);
  std::vector<int> nq_expect{Vocabulary::kBos};
  for (const auto& f : ep.facts) nq_expect.insert(nq_expect.end(), f.begin(), f.end());
  nq_expect.push_back(Vocabulary::kSep);
  CHECK(nq == nq_expect);
}

TEST_CASE("the reader baseline and the trainer share one forward implementation") {
  ClutrrSetup s(2);
  NamedParameterSet theta = s.model.init_params();
  const tasks::EncodedProblem& ep = s.problems[0];
  std::vector<int> shared = build_icr_input(ep, 128);

  // Same entry point, same bits: the checksum of the logits is identical
  // across repeated calls, and the batched loss at B=1 equals the
  // single-sequence loss used by the episode trainer.
  Tensor a = s.model.forward_logits(theta, shared);
  Tensor b = s.model.forward_logits(theta, shared);
  REQUIRE(a.numel() == b.numel());
  bool identical = true;
  for (long i = 0; i < a.numel(); ++i) {
    if (a.data()[static_cast<size_t>(i)] != b.data()[static_cast<size_t>(i)]) identical = false;
  }
  CHECK(identical);

  BaselineExample ex = make_example(BaselineKind::ft_icr, ep, false, 128);
  Tensor batched = s.model.clm_weighted_sum_batch(theta, {ex.tokens}, {ex.weights});
  Tensor single = s.model.clm_weighted_sum(theta, ex.tokens, ex.weights);
  CHECK(batched.item() == single.item());
}

TEST_CASE("question-only loss path matches the zero-step-size adapted path bitwise") {
  ClutrrSetup s(6);
  NamedParameterSet theta = s.model.init_params();
  train::LearnedStepSizes zero = train::LearnedStepSizes::make(theta.max_layer() + 1, 2, 1e-2);
  for (auto& row : zero.entries) {
    for (auto& t : row) t = Tensor::scalar(0.0);
  }
  for (const auto& ep : s.problems) {
    train::AdaptResult ar =
        train::inner_adapt(s.model, theta, ep.facts, zero, 2, train::GradMode::none);
    const double adapted = train::outer_loss(s.model, ar.params, ep, false).item();

    BaselineExample ex = make_example(BaselineKind::no_facts, ep, false, 128);
    Tensor loss = s.model.clm_weighted_sum_batch(theta, {ex.tokens}, {ex.weights});
    CHECK(loss.item() == adapted);
  }
}

TEST_CASE("random-fact resampling moves whole fact sets and rewrites recall") {
  ClutrrSetup s(20);
  Rng rng(5);
  auto shuffled = make_random_facts(s.problems, rng);
  REQUIRE(shuffled.size() == s.problems.size());

  long moved = 0;
  for (size_t i = 0; i < shuffled.size(); ++i) {
    const auto& orig = s.problems[i];
    const auto& got = shuffled[i];
    CHECK(got.question == orig.question);
    CHECK(got.answer == orig.answer);
    CHECK(got.candidates == orig.candidates);
    CHECK(got.facts.size() == orig.facts.size());
    if (got.facts != orig.facts) ++moved;
    std::vector<int> expect;
    for (const auto& f : got.facts) expect.insert(expect.end(), f.begin(), f.end());
    CHECK(got.recall_target == expect);
    // The donor set must be some problem's fact set, never a mixture.
    bool found = false;
    for (const auto& other : s.problems) {
      if (other.facts == got.facts) found = true;
    }
    CHECK(found);
  }
  CHECK(moved >= 18);  // same-looking donors are possible but rare

  Rng rng2(5);
  auto again = make_random_facts(s.problems, rng2);
  for (size_t i = 0; i < again.size(); ++i) CHECK(again[i].facts == shuffled[i].facts);

  std::vector<tasks::EncodedProblem> one{s.problems[0]};
  Rng rng3(5);
  CHECK_THROWS_AS(make_random_facts(one, rng3), std::runtime_error);
}

TEST_CASE("the reader overfits a tiny corpus to perfect accuracy") {
  ClutrrSetup s(50, 2, 64, 3);
  BaselineConfig cfg;
  cfg.kind = BaselineKind::ft_icr;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.0;  // decay fights pure memorization
  cfg.epochs = 100;
  cfg.patience = 10000;
  cfg.stop_acc = 1.0;
  cfg.seed = 3;
  BaselineResult res = train_baseline(s.model, cfg, s.problems, s.problems);
  CHECK(res.reached_target);
  CHECK(res.best_val_acc == 1.0);
  CHECK(res.skipped_batches == 0);

  // The checkpointed parameters answer every training problem.
  long correct = 0;
  for (const auto& ep : s.problems) {
    if (answer_with_baseline(s.model, res.best_theta, cfg.kind, ep, 128) == ep.answer) ++correct;
  }
  CHECK(correct == 50);
}

TEST_CASE("baseline training is deterministic under a seed") {
  ClutrrSetup s(12);
  BaselineConfig cfg;
  cfg.kind = BaselineKind::no_question;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 11;
  BaselineResult a = train_baseline(s.model, cfg, s.problems, s.problems);
  BaselineResult b = train_baseline(s.model, cfg, s.problems, s.problems);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i] == b.log[i]);
  CHECK(a.best_theta.content_hash() == b.best_theta.content_hash());
  CHECK(a.epochs_run == 2);
  CHECK(a.log.size() == 4);  // two validations per epoch
}

TEST_CASE("an exploding learning rate skips batches instead of crashing") {
  ClutrrSetup s(8);
  BaselineConfig cfg;
  cfg.kind = BaselineKind::ft_icr;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.lr = 1e200;
  BaselineResult res = train_baseline(s.model, cfg, s.problems, s.problems);
  CHECK(res.skipped_batches >= 1);
  for (const auto& rec : res.log) CHECK(rec.at("val_failures").get<long>() >= 0);
}

TEST_CASE("the mismatched-facts control runs the episode trainer") {
  ClutrrSetup s(6);
  BaselineConfig cfg;
  cfg.kind = BaselineKind::random_facts;
  cfg.seed = 2;
  cfg.inner.inner_steps = 1;
  cfg.inner.order = train::TrainConfig::Order::first;
  cfg.inner.meta_batch = 3;
  cfg.inner.epochs = 1;
  cfg.inner.seed = 2;
  BaselineResult res = train_baseline(s.model, cfg, s.problems, s.problems);
  CHECK(res.best_alpha.layer_count() == s.model.init_params().max_layer() + 1);
  CHECK(res.epochs_run == 1);
  REQUIRE(!res.log.empty());
  CHECK(res.log.front().at("event") == "validation");
}
