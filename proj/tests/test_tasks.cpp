#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "reckon/tasks.hpp"
#include "reckon/vocab.hpp"

using namespace reckon;
using namespace reckon::tasks;

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Breadth-layered closure, straight from the definition: S_0 = facts,
// S_{d+1} adds every rule firing inside S_d. Depth = first layer reached.
// Serves as an oracle for the relaxation-based library implementation.
using Lit = std::pair<std::string, std::string>;

struct ParsedRule {
  std::vector<std::string> antecedents;
  std::string consequent;
};

struct ParsedContext {
  std::vector<Lit> facts;
  std::vector<ParsedRule> rules;
  std::set<std::string> entities;
};

ParsedContext parse_context(const std::vector<std::string>& lines) {
  ParsedContext ctx;
  for (const std::string& line : lines) {
    auto w = words_of(line);
    if (w.at(0) == "if") {
      // "if a then b" | "if a and b then c"
      ParsedRule r;
      r.antecedents.push_back(w.at(1));
      size_t i = 2;
      if (w.at(i) == "and") {
        r.antecedents.push_back(w.at(3));
        i = 4;
      }
      REQUIRE(w.at(i) == "then");
      r.consequent = w.at(i + 1);
      ctx.rules.push_back(std::move(r));
    } else {
      REQUIRE(w.size() == 3);
      REQUIRE(w.at(1) == "is");
      ctx.facts.emplace_back(w.at(0), w.at(2));
      ctx.entities.insert(w.at(0));
    }
  }
  return ctx;
}

std::map<Lit, int> layered_closure(const ParsedContext& ctx) {
  std::map<Lit, int> depth;
  for (const Lit& f : ctx.facts) {
    if (!depth.count(f)) depth[f] = 0;
  }
  for (int layer = 1;; ++layer) {
    std::vector<Lit> found;
    for (const std::string& e : ctx.entities) {
      for (const ParsedRule& r : ctx.rules) {
        bool fires = true;
        for (const std::string& a : r.antecedents) {
          auto it = depth.find({e, a});
          if (it == depth.end() || it->second >= layer) {
            fires = false;
            break;
          }
        }
        Lit lit{e, r.consequent};
        if (fires && !depth.count(lit)) found.push_back(lit);
      }
    }
    if (found.empty()) break;
    for (const Lit& l : found) depth[l] = layer;
  }
  return depth;
}

struct ParsedQuestion {
  std::string entity;
  std::string attr;
  bool negated = false;
};

ParsedQuestion parse_question(const std::string& q) {
  auto w = words_of(q);
  REQUIRE(w.back() == "?");
  ParsedQuestion out;
  out.entity = w.at(0);
  REQUIRE(w.at(1) == "is");
  if (w.at(2) == "not") {
    out.negated = true;
    out.attr = w.at(3);
  } else {
    out.attr = w.at(2);
  }
  return out;
}

// Hand-checked composition facts, kept independent of the library table:
// walking r from a node that is s-of-origin lands on the returned relation.
std::string oracle_compose(const std::string& s, const std::string& r) {
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

// Rebuilds the relation chain from the shuffled facts by walking the unique
// outgoing edge from the question's origin node.
std::vector<std::string> reconstruct_chain(const ReasoningProblem& p) {
  auto qw = words_of(p.question);
  REQUIRE(qw.size() == 7);  // how are X and Y related ?
  const std::string end = qw.at(2);
  const std::string start = qw.at(4);
  std::map<std::string, std::pair<std::string, std::string>> edge;  // from -> (to, rel)
  for (const std::string& f : p.facts) {
    auto w = words_of(f);
    REQUIRE(w.size() == 6);  // A is the R of B
    REQUIRE(w.at(1) == "is");
    REQUIRE(w.at(2) == "the");
    REQUIRE(w.at(4) == "of");
    REQUIRE(!edge.count(w.at(5)));
    edge[w.at(5)] = {w.at(0), w.at(3)};
  }
  std::vector<std::string> rels;
  std::string cur = start;
  while (edge.count(cur)) {
    rels.push_back(edge.at(cur).second);
    cur = edge.at(cur).first;
  }
  REQUIRE(cur == end);
  return rels;
}

}  // namespace

TEST_CASE("closure depths on a hand proof tree") {
  // harry is red; red -> kind (depth 1); kind & big -> round (depth 2 via big at 0)
  RuleBase rb;
  rb.num_entities = 2;
  rb.num_attrs = 5;
  rb.facts = {{0, 0}, {0, 3}};                 // harry red, harry big
  rb.rules = {AttrRule{{0}, 1},                // red -> kind
              AttrRule{{1, 3}, 2},             // kind & big -> round
              AttrRule{{2}, 4}};               // round -> nice
  Closure c = deductive_closure(rb);
  CHECK(c.depth(0, 0) == 0);
  CHECK(c.depth(0, 1) == 1);
  CHECK(c.depth(0, 2) == 2);
  CHECK(c.depth(0, 4) == 3);
  CHECK_FALSE(c.holds(1, 0));
  CHECK(c.depth(1, 1) == -1);
}

TEST_CASE("closure keeps the shallowest derivation") {
  // Two routes to attr 2: direct (depth 1) and via attr 1 (depth 2). The
  // rule order lists the long route first.
  RuleBase rb;
  rb.num_entities = 1;
  rb.num_attrs = 3;
  rb.facts = {{0, 0}};
  rb.rules = {AttrRule{{0}, 1}, AttrRule{{1}, 2}, AttrRule{{0}, 2}};
  Closure c = deductive_closure(rb);
  CHECK(c.depth(0, 2) == 1);
}

TEST_CASE("closure rejects empty antecedents") {
  RuleBase rb;
  rb.num_entities = 1;
  rb.num_attrs = 1;
  rb.rules = {AttrRule{{}, 0}};
  CHECK_THROWS_WITH_AS(deductive_closure(rb), "rule with empty antecedent", std::runtime_error);
}

TEST_CASE("deduction generator matches the layered-closure oracle") {
  for (long depth : {1L, 2L, 3L, 5L}) {
    PwOptions opt;
    opt.seed = 91 + static_cast<std::uint64_t>(depth);
    opt.depth = depth;
    opt.count = depth <= 2 ? 999 : 240;
    auto problems = gen_proofwriter(opt);
    REQUIRE(static_cast<long>(problems.size()) == opt.count);
    long n_true = 0, n_false = 0, n_unknown = 0;
    for (const ReasoningProblem& p : problems) {
      CHECK(p.task == "proofwriter");
      CHECK(p.hops == depth);
      REQUIRE(p.candidates == std::vector<std::string>{"true", "false", "unknown"});
      ParsedContext ctx = parse_context(p.facts);
      ParsedQuestion q = parse_question(p.question);
      auto closure = layered_closure(ctx);
      auto it = closure.find({q.entity, q.attr});
      if (p.answer == "unknown") {
        ++n_unknown;
        CHECK(it == closure.end());
        CHECK(p.relevant_ids.empty());
      } else {
        p.answer == "true" ? ++n_true : ++n_false;
        CHECK(p.answer == (q.negated ? "false" : "true"));
        REQUIRE(it != closure.end());
        CHECK(it->second == depth);
        // Sufficiency: the flagged support alone still derives the literal
        // at the same depth.
        ParsedContext sup = parse_context(relevant_facts(p));
        auto sup_closure = layered_closure(sup);
        REQUIRE(sup_closure.count({q.entity, q.attr}));
        CHECK(sup_closure.at({q.entity, q.attr}) == depth);
        // Necessity: dropping any single support item breaks the proof.
        for (size_t drop = 0; drop < p.relevant_ids.size(); ++drop) {
          std::vector<std::string> reduced;
          for (size_t k = 0; k < p.relevant_ids.size(); ++k) {
            if (k != drop) reduced.push_back(p.facts[static_cast<size_t>(p.relevant_ids[k])]);
          }
          auto rc = layered_closure(parse_context(reduced));
          auto rit = rc.find({q.entity, q.attr});
          CHECK((rit == rc.end() || rit->second != depth));
        }
      }
    }
    // Round-robin labels: exact three-way balance up to remainder.
    CHECK(std::abs(n_true - n_false) <= 1);
    CHECK(std::abs(n_true - n_unknown) <= 1);
  }
}

TEST_CASE("single-support necessity holds outright at depth 2") {
  // With distinct chain attributes, removing a support item must erase the
  // literal entirely, not just change its depth.
  PwOptions opt;
  opt.seed = 5;
  opt.depth = 2;
  opt.count = 300;
  for (const ReasoningProblem& p : gen_proofwriter(opt)) {
    if (p.answer == "unknown") continue;
    ParsedQuestion q = parse_question(p.question);
    for (size_t drop = 0; drop < p.relevant_ids.size(); ++drop) {
      std::vector<std::string> reduced;
      for (size_t k = 0; k < p.relevant_ids.size(); ++k) {
        if (k != drop) reduced.push_back(p.facts[static_cast<size_t>(p.relevant_ids[k])]);
      }
      auto rc = layered_closure(parse_context(reduced));
      CHECK(rc.count({q.entity, q.attr}) == 0);
    }
  }
}

TEST_CASE("distractors never flip the label") {
  PwOptions opt;
  opt.seed = 17;
  opt.depth = 2;
  opt.count = 600;
  for (const ReasoningProblem& p : gen_proofwriter(opt)) {
    ParsedQuestion q = parse_question(p.question);
    auto full = layered_closure(parse_context(p.facts));
    const bool derivable = full.count({q.entity, q.attr}) > 0;
    CHECK(derivable == (p.answer != "unknown"));
  }
}

TEST_CASE("distractor count is a pure prefix condition") {
  auto run = [](long d) {
    PwOptions opt;
    opt.seed = 23;
    opt.depth = 2;
    opt.count = 90;
    opt.distractors = d;
    return gen_proofwriter(opt);
  };
  auto all = run(-1);
  auto none = run(0);
  auto four = run(4);
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].question == none[i].question);
    CHECK(all[i].question == four[i].question);
    CHECK(all[i].answer == none[i].answer);
    CHECK(all[i].answer == four[i].answer);
    auto support = [](const ReasoningProblem& p) {
      auto v = relevant_facts(p);
      std::sort(v.begin(), v.end());
      return v;
    };
    CHECK(support(all[i]) == support(none[i]));
    CHECK(support(all[i]) == support(four[i]));
    if (all[i].answer != "unknown") {
      CHECK(none[i].facts.size() == none[i].relevant_ids.size());
    }
    const long pool = 5 + (static_cast<long>(i) % 5);
    CHECK(static_cast<long>(all[i].facts.size()) ==
          static_cast<long>(none[i].facts.size()) + pool);
    CHECK(static_cast<long>(four[i].facts.size()) ==
          static_cast<long>(none[i].facts.size()) + std::min(4L, pool));
  }
}

TEST_CASE("composition table agrees with the hand oracle everywhere") {
  KinshipTable t = KinshipTable::builtin();
  REQUIRE(t.relations.size() == 8);
  long defined = 0;
  for (const std::string& s : t.relations) {
    for (const std::string& r : t.relations) {
      const std::string want = oracle_compose(s, r);
      if (want.empty()) {
        CHECK_FALSE(t.can_compose(s, r));
      } else {
        ++defined;
        REQUIRE(t.can_compose(s, r));
        CHECK(t.composed(s, r) == want);
      }
    }
  }
  CHECK(defined == 24);
  CHECK(compose_chain(t, std::vector<std::string>{"father", "father"}) == "grandfather");
  CHECK(compose_chain(t, std::vector<std::string>{"sister", "mother", "daughter"}) == "sister");
  CHECK_THROWS_AS(compose_chain(t, std::vector<std::string>{"grandfather", "father"}),
                  std::runtime_error);
}

TEST_CASE("shipped kinship config equals the builtin table") {
  std::ifstream in(std::string(REPO_ROOT) + "/configs/kinship.json");
  REQUIRE(in.good());
  KinshipTable file = KinshipTable::from_json(nlohmann::json::parse(in));
  KinshipTable t = KinshipTable::builtin();
  CHECK(file.relations == t.relations);
  CHECK(file.gender == t.gender);
  CHECK(file.compose == t.compose);
}

TEST_CASE("relation chains fold to the stated answer") {
  KinshipTable t = KinshipTable::builtin();
  for (long hops : {2L, 3L, 4L, 6L, 8L}) {
    ClutrrOptions opt;
    opt.seed = 1000 + static_cast<std::uint64_t>(hops);
    opt.hops = hops;
    opt.count = hops == 2 ? 800 : 200;
    auto problems = gen_clutrr(opt, t);
    std::map<std::string, long> answer_count;
    for (const ReasoningProblem& p : problems) {
      CHECK(p.task == "clutrr");
      CHECK(p.hops == hops);
      CHECK(static_cast<long>(p.facts.size()) == hops);
      CHECK(p.candidates == t.relations);
      CHECK(static_cast<long>(p.relevant_ids.size()) == hops);
      auto rels = reconstruct_chain(p);
      REQUIRE(static_cast<long>(rels.size()) == hops);
      std::string state = rels[0];
      for (size_t i = 1; i < rels.size(); ++i) {
        state = oracle_compose(state, rels[i]);
        REQUIRE(!state.empty());
      }
      CHECK(state == p.answer);
      ++answer_count[p.answer];
    }
    // Round-robin targets: every relation appears equally often.
    CHECK(answer_count.size() == 8);
    for (const auto& [rel, n] : answer_count) CHECK(n == opt.count / 8);
  }
}

TEST_CASE("chain entities are distinct and gendered by relation") {
  KinshipTable t = KinshipTable::builtin();
  ClutrrOptions opt;
  opt.seed = 77;
  opt.hops = 4;
  opt.count = 200;
  for (const ReasoningProblem& p : gen_clutrr(opt, t)) {
    std::set<std::string> names;
    std::map<std::string, std::string> rel_of;  // node -> relation introducing it
    for (const std::string& f : p.facts) {
      auto w = words_of(f);
      names.insert(w.at(0));
      names.insert(w.at(5));
      auto it = rel_of.find(w.at(0));
      if (it != rel_of.end()) {
        // A node reached twice must carry a single gender.
        CHECK(t.gender.at(it->second) == t.gender.at(w.at(3)));
      }
      rel_of[w.at(0)] = w.at(3);
    }
    CHECK(names.size() == static_cast<size_t>(opt.hops + 1));
  }
}

TEST_CASE("letter runs match their histogram") {
  LetterFreqOptions opt;
  opt.seed = 3;
  opt.count = 200;
  auto problems = gen_letterfreq(opt);
  for (const ReasoningProblem& p : problems) {
    CHECK(p.task == "letterfreq");
    REQUIRE(p.facts.size() == 8);
    CHECK(p.question == "which letter occurs most often");
    CHECK(p.relevant_ids.size() == 8);
    CHECK(p.candidates.size() == 26);
    std::array<long, 26> hist{};
    long total = 0;
    for (const std::string& f : p.facts) {
      auto w = words_of(f);
      CHECK(w.size() == 127);
      for (const std::string& l : w) {
        REQUIRE(l.size() == 1);
        REQUIRE((l[0] >= 'a' && l[0] <= 'z'));
        ++hist[static_cast<size_t>(l[0] - 'a')];
        ++total;
      }
    }
    CHECK(total == 1016);
    long best = 0;
    for (long l = 1; l < 26; ++l) {
      if (hist[static_cast<size_t>(l)] > hist[static_cast<size_t>(best)]) best = l;
    }
    CHECK(p.answer == std::string(1, static_cast<char>('a' + best)));
  }
}

TEST_CASE("generation is reproducible and jsonl round-trips") {
  PwOptions opt;
  opt.seed = 42;
  opt.depth = 2;
  opt.count = 30;
  auto a = gen_proofwriter(opt);
  auto b = gen_proofwriter(opt);
  std::string dump_a, dump_b;
  for (const auto& p : a) dump_a += problem_to_json(p).dump() + "\n";
  for (const auto& p : b) dump_b += problem_to_json(p).dump() + "\n";
  CHECK(dump_a == dump_b);

  const std::string path = "tasks_roundtrip.jsonl";
  write_jsonl(path, a);
  auto back = read_jsonl(path);
  REQUIRE(back.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(problem_to_json(back[i]) == problem_to_json(a[i]));
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_jsonl("no_such_file.jsonl"), std::runtime_error);
}

TEST_CASE("vocabularies place answers in a contiguous low range") {
  Vocabulary pw = build_vocab("proofwriter");
  CHECK(pw.id("true") == 4);
  CHECK(pw.id("false") == 5);
  CHECK(pw.id("unknown") == 6);
  CHECK(pw.answer_first() == 4);
  CHECK(pw.answer_count() == 3);

  Vocabulary cl = build_vocab("clutrr");
  CHECK(cl.id("father") == 4);
  CHECK(cl.id("grandmother") == 11);
  CHECK(cl.answer_count() == 8);

  Vocabulary lf = build_vocab("letterfreq");
  CHECK(lf.id("a") == 4);
  CHECK(lf.id("z") == 29);
  CHECK(lf.answer_count() == 26);
  CHECK(lf.size() == 4 + 26 + 5);

  CHECK_THROWS_AS(build_vocab("sudoku"), std::runtime_error);
}

TEST_CASE("encoding wraps numbered facts and brackets the question") {
  PwOptions opt;
  opt.seed = 8;
  opt.depth = 2;
  opt.count = 9;
  Vocabulary v = build_vocab("proofwriter");
  for (const ReasoningProblem& p : gen_proofwriter(opt)) {
    EncodedProblem enc = encode_problem(p, v);
    REQUIRE(enc.facts.size() == p.facts.size());
    for (size_t i = 0; i < enc.facts.size(); ++i) {
      const auto& seq = enc.facts[i];
      REQUIRE(seq.size() >= 5);
      CHECK(seq[0] == v.id("FACT"));
      CHECK(seq[1] == v.id(std::to_string(i + 1)));
      CHECK(seq[2] == v.id(":"));
      CHECK(seq.back() == Vocabulary::kEos);
      const auto body = words_of(p.facts[i]);
      REQUIRE(seq.size() == body.size() + 4);
      for (size_t k = 0; k < body.size(); ++k) CHECK(seq[3 + k] == v.id(body[k]));
    }
    CHECK(enc.question.front() == Vocabulary::kBos);
    CHECK(enc.question.back() == Vocabulary::kSep);
    CHECK(enc.answer == v.id(p.answer));
    REQUIRE(enc.candidates.size() == 3);

    if (p.answer == "unknown") {
      CHECK(enc.recall_target == std::vector<int>{Vocabulary::kEos});
    } else {
      // Recall concatenates supports by fact index, independent of the id
      // order stored on the problem.
      std::vector<long> order = p.relevant_ids;
      std::sort(order.begin(), order.end());
      std::vector<int> want;
      for (long id : order) {
        const auto& seg = enc.facts[static_cast<size_t>(id)];
        want.insert(want.end(), seg.begin(), seg.end());
      }
      CHECK(enc.recall_target == want);
    }
  }
}

TEST_CASE("letter runs encode raw with a fixed-width budget") {
  LetterFreqOptions opt;
  opt.seed = 12;
  opt.count = 4;
  Vocabulary v = build_vocab("letterfreq");
  for (const ReasoningProblem& p : gen_letterfreq(opt)) {
    EncodedProblem enc = encode_problem(p, v);
    CHECK(enc.question.size() == 7);  // BOS + 5 words + SEP
    long total = 0;
    for (const auto& seq : enc.facts) {
      CHECK(seq.size() == 127);
      for (int tok : seq) {
        CHECK(tok >= v.answer_first());
        CHECK(tok < v.answer_first() + 26);
      }
      total += static_cast<long>(seq.size());
    }
    CHECK(total == 1016);
    CHECK(enc.recall_target.size() == 1016);
  }
}
