#include "reckon/tasks.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reckon/rng.hpp"

namespace reckon::tasks {

namespace {

const std::array<const char*, 20> kPwEntities = {
    "harry", "dave",   "anne", "bob",  "erin",   "fiona", "gary", "charlie", "alan", "bella",
    "colin", "daisy",  "edna", "fred", "george", "hazel", "ian",  "june",    "kate", "lily"};

const std::array<const char*, 24> kPwAttrs = {
    "nice",  "round", "furry",  "green", "red",   "white", "blue", "kind",
    "big",   "cold",  "young",  "quiet", "smart", "rough", "happy", "sad",
    "strong", "weak", "tall",   "short", "warm",  "loud",  "gentle", "bright"};

const std::array<const char*, 32> kMaleNames = {
    "james",  "john",    "robert", "michael", "william", "david",  "richard", "joseph",
    "thomas", "charles", "chris",  "daniel",  "matthew", "anthony", "mark",   "donald",
    "steven", "paul",    "andrew", "joshua",  "kenneth", "kevin",  "brian",   "timothy",
    "ronald", "edward",  "jason",  "jeffrey", "ryan",    "jacob",  "gary",    "eric"};

const std::array<const char*, 32> kFemaleNames = {
    "mary",   "patricia", "jennifer", "linda",  "elizabeth", "barbara", "susan",  "jessica",
    "sarah",  "karen",    "lisa",     "nancy",  "betty",     "margaret", "sandra", "ashley",
    "emily",  "donna",    "michelle", "carol",  "amanda",    "dorothy", "melissa", "deborah",
    "stephanie", "rebecca", "sharon", "laura",  "cynthia",   "kathleen", "amy",    "angela"};

constexpr long kMaxFactNumber = 24;

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

// --- problem serialization ---------------------------------------------------

nlohmann::json problem_to_json(const ReasoningProblem& p) {
  return nlohmann::json{{"task", p.task},
                        {"facts", p.facts},
                        {"question", p.question},
                        {"answer", p.answer},
                        {"candidates", p.candidates},
                        {"relevant_ids", p.relevant_ids},
                        {"hops", p.hops},
                        {"split", p.split}};
}

ReasoningProblem problem_from_json(const nlohmann::json& j) {
  ReasoningProblem p;
  p.task = j.at("task").get<std::string>();
  p.facts = j.at("facts").get<std::vector<std::string>>();
  p.question = j.at("question").get<std::string>();
  p.answer = j.at("answer").get<std::string>();
  p.candidates = j.at("candidates").get<std::vector<std::string>>();
  p.relevant_ids = j.at("relevant_ids").get<std::vector<long>>();
  p.hops = j.at("hops").get<long>();
  p.split = j.at("split").get<std::string>();
  return p;
}

void write_jsonl(const std::string& path, std::span<const ReasoningProblem> problems) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const ReasoningProblem& p : problems) out << problem_to_json(p).dump() << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<ReasoningProblem> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<ReasoningProblem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(problem_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

std::vector<std::string> relevant_facts(const ReasoningProblem& p) {
  std::vector<std::string> out;
  for (long id : p.relevant_ids) {
    if (id < 0 || id >= static_cast<long>(p.facts.size())) {
      throw std::runtime_error("problem '" + p.question + "': relevant id " + std::to_string(id) +
                               " out of range");
    }
    out.push_back(p.facts[static_cast<size_t>(id)]);
  }
  return out;
}

// --- deductive closure --------------------------------------------------------

void Closure::set(int entity, int attr, int depth) {
  auto key = std::make_pair(entity, attr);
  auto it = depth_.find(key);
  if (it == depth_.end() || it->second > depth) depth_[key] = depth;
}

bool Closure::holds(int entity, int attr) const { return depth_.count({entity, attr}) > 0; }

int Closure::depth(int entity, int attr) const {
  auto it = depth_.find({entity, attr});
  return it == depth_.end() ? -1 : it->second;
}

Closure deductive_closure(const RuleBase& rb) {
  for (const AttrRule& r : rb.rules) {
    if (r.antecedents.empty()) throw std::runtime_error("rule with empty antecedent");
  }
  Closure c;
  for (const auto& [e, a] : rb.facts) c.set(e, a, 0);
  // Depths can shrink when a later-found derivation is shallower, so iterate
  // to a fixed point over both membership and depth.
  bool changed = true;
  while (changed) {
    changed = false;
    for (int e = 0; e < rb.num_entities; ++e) {
      for (const AttrRule& r : rb.rules) {
        int worst = -1;
        bool all = true;
        for (int a : r.antecedents) {
          const int d = c.depth(e, a);
          if (d < 0) {
            all = false;
            break;
          }
          worst = std::max(worst, d);
        }
        if (!all) continue;
        const int derived = worst + 1;
        const int cur = c.depth(e, r.consequent);
        if (cur < 0 || derived < cur) {
          c.set(e, r.consequent, derived);
          changed = true;
        }
      }
    }
  }
  return c;
}

// --- deduction problem generator ----------------------------------------------

namespace {

struct PwItem {
  std::string text;
  bool relevant = false;
  // rule base entry (facts reference the entity pool, rules are universal)
  bool is_rule = false;
  int entity = -1;
  std::vector<int> antecedents;
  int attr = -1;  // fact attribute or rule consequent
};

}  // namespace

std::vector<ReasoningProblem> gen_proofwriter(const PwOptions& opt) {
  const long h = opt.depth;
  if (h < 1) throw std::runtime_error("deduction depth must be >= 1");
  if (opt.count < 1) throw std::runtime_error("count must be >= 1");
  const long attrs_needed = 2 * h + 2;
  if (attrs_needed > static_cast<long>(kPwAttrs.size())) {
    throw std::runtime_error("depth " + std::to_string(h) + " needs " +
                             std::to_string(attrs_needed) + " attributes, pool has " +
                             std::to_string(kPwAttrs.size()));
  }

  Rng master(opt.seed);
  std::vector<ReasoningProblem> out;
  out.reserve(static_cast<size_t>(opt.count));

  for (long idx = 0; idx < opt.count; ++idx) {
    Rng rng(master.fork(static_cast<std::uint64_t>(idx)));
    const int label_kind = static_cast<int>(idx % 3);  // 0 true, 1 false, 2 unknown

    const int e = static_cast<int>(rng.uniform_int(static_cast<long>(kPwEntities.size())));
    std::vector<long> attr_perm =
        rng.sample_without_replacement(static_cast<long>(kPwAttrs.size()),
                                       static_cast<long>(kPwAttrs.size()));
    size_t next_attr = 0;
    auto draw_attr = [&]() { return static_cast<int>(attr_perm[next_attr++]); };

    std::vector<int> chain(static_cast<size_t>(h + 1));
    for (long i = 0; i <= h; ++i) chain[static_cast<size_t>(i)] = draw_attr();
    const int unknown_attr = draw_attr();

    std::vector<PwItem> items;
    {
      PwItem base;
      base.text = std::string(kPwEntities[static_cast<size_t>(e)]) + " is " +
                  kPwAttrs[static_cast<size_t>(chain[0])];
      base.relevant = true;
      base.entity = e;
      base.attr = chain[0];
      items.push_back(std::move(base));
    }
    for (long i = 1; i <= h; ++i) {
      const bool conj = rng.uniform() < opt.conj_prob;
      PwItem rule;
      rule.is_rule = true;
      rule.relevant = true;
      rule.attr = chain[static_cast<size_t>(i)];
      rule.antecedents.push_back(chain[static_cast<size_t>(i - 1)]);
      if (conj) {
        const int side = draw_attr();
        rule.antecedents.push_back(side);
        PwItem side_fact;
        side_fact.text = std::string(kPwEntities[static_cast<size_t>(e)]) + " is " +
                         kPwAttrs[static_cast<size_t>(side)];
        side_fact.relevant = true;
        side_fact.entity = e;
        side_fact.attr = side;
        items.push_back(std::move(side_fact));
        rule.text = std::string("if ") + kPwAttrs[static_cast<size_t>(rule.antecedents[0])] +
                    " and " + kPwAttrs[static_cast<size_t>(side)] + " then " +
                    kPwAttrs[static_cast<size_t>(rule.attr)];
      } else {
        rule.text = std::string("if ") + kPwAttrs[static_cast<size_t>(rule.antecedents[0])] +
                    " then " + kPwAttrs[static_cast<size_t>(rule.attr)];
      }
      items.push_back(std::move(rule));
    }

    // Attributes whose derivability for e must not change.
    std::vector<char> protected_attr(kPwAttrs.size(), 0);
    for (int a : chain) protected_attr[static_cast<size_t>(a)] = 1;
    protected_attr[static_cast<size_t>(unknown_attr)] = 1;
    for (const PwItem& it : items) {
      if (!it.is_rule) protected_attr[static_cast<size_t>(it.attr)] = 1;
      for (int a : it.antecedents) protected_attr[static_cast<size_t>(a)] = 1;
    }
    std::vector<int> open_attrs;
    for (size_t a = 0; a < kPwAttrs.size(); ++a) {
      if (!protected_attr[a]) open_attrs.push_back(static_cast<int>(a));
    }

    // Full distractor pool: 5..9 cycling by index (mean 7); a run requesting
    // fewer keeps a prefix, so the underlying problem is condition-invariant.
    const long full = 5 + (idx % 5);
    std::vector<PwItem> distractors;
    for (long d = 0; d < full; ++d) {
      if (rng.uniform() < 0.5) {
        PwItem f;
        int other = e;
        while (other == e) {
          other = static_cast<int>(rng.uniform_int(static_cast<long>(kPwEntities.size())));
        }
        f.entity = other;
        f.attr = static_cast<int>(rng.uniform_int(static_cast<long>(kPwAttrs.size())));
        f.text = std::string(kPwEntities[static_cast<size_t>(other)]) + " is " +
                 kPwAttrs[static_cast<size_t>(f.attr)];
        distractors.push_back(std::move(f));
      } else {
        PwItem r;
        r.is_rule = true;
        r.antecedents.push_back(
            static_cast<int>(rng.uniform_int(static_cast<long>(kPwAttrs.size()))));
        if (rng.uniform() < 0.3) {
          r.antecedents.push_back(
              static_cast<int>(rng.uniform_int(static_cast<long>(kPwAttrs.size()))));
        }
        r.attr = open_attrs[static_cast<size_t>(
            rng.uniform_int(static_cast<long>(open_attrs.size())))];
        if (r.antecedents.size() == 2) {
          r.text = std::string("if ") + kPwAttrs[static_cast<size_t>(r.antecedents[0])] + " and " +
                   kPwAttrs[static_cast<size_t>(r.antecedents[1])] + " then " +
                   kPwAttrs[static_cast<size_t>(r.attr)];
        } else {
          r.text = std::string("if ") + kPwAttrs[static_cast<size_t>(r.antecedents[0])] +
                   " then " + kPwAttrs[static_cast<size_t>(r.attr)];
        }
        distractors.push_back(std::move(r));
      }
    }
    const long want = opt.distractors < 0 ? full : std::min(opt.distractors, full);
    for (long d = 0; d < want; ++d) items.push_back(distractors[static_cast<size_t>(d)]);

    rng.shuffle(items);

    ReasoningProblem p;
    p.task = "proofwriter";
    p.hops = h;
    p.candidates = {"true", "false", "unknown"};
    const char* ename = kPwEntities[static_cast<size_t>(e)];
    const char* qattr = kPwAttrs[static_cast<size_t>(chain[static_cast<size_t>(h)])];
    switch (label_kind) {
      case 0:
        p.question = std::string(ename) + " is " + qattr + " ?";
        p.answer = "true";
        break;
      case 1:
        p.question = std::string(ename) + " is not " + qattr + " ?";
        p.answer = "false";
        break;
      default: {
        const char* uattr = kPwAttrs[static_cast<size_t>(unknown_attr)];
        const bool neg = ((idx / 3) % 2) == 1;
        p.question = std::string(ename) + (neg ? " is not " : " is ") + uattr + " ?";
        p.answer = "unknown";
        break;
      }
    }
    for (size_t i = 0; i < items.size(); ++i) {
      p.facts.push_back(items[i].text);
      if (items[i].relevant && label_kind != 2) p.relevant_ids.push_back(static_cast<long>(i));
    }

    // Re-derive the label from the assembled context; a mismatch is a
    // generator bug, not bad data.
    RuleBase rb;
    rb.num_entities = static_cast<int>(kPwEntities.size());
    rb.num_attrs = static_cast<int>(kPwAttrs.size());
    for (const PwItem& it : items) {
      if (it.is_rule) {
        rb.rules.push_back(AttrRule{it.antecedents, it.attr});
      } else {
        rb.facts.emplace_back(it.entity, it.attr);
      }
    }
    Closure c = deductive_closure(rb);
    const int queried = (label_kind == 2) ? unknown_attr : chain[static_cast<size_t>(h)];
    if (label_kind == 2) {
      if (c.holds(e, queried)) throw std::runtime_error("generator: unknown query became derivable");
    } else {
      if (c.depth(e, queried) != static_cast<int>(h)) {
        throw std::runtime_error("generator: query depth " + std::to_string(c.depth(e, queried)) +
                                 " != " + std::to_string(h));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

// --- kinship composition --------------------------------------------------------

bool KinshipTable::can_compose(const std::string& s, const std::string& r) const {
  auto it = compose.find(s);
  return it != compose.end() && it->second.count(r) > 0;
}

const std::string& KinshipTable::composed(const std::string& s, const std::string& r) const {
  auto it = compose.find(s);
  if (it != compose.end()) {
    auto jt = it->second.find(r);
    if (jt != it->second.end()) return jt->second;
  }
  throw std::runtime_error("kinship: composition undefined for (" + s + ", " + r + ")");
}

nlohmann::json KinshipTable::to_json() const {
  return nlohmann::json{{"relations", relations}, {"gender", gender}, {"composition", compose}};
}

KinshipTable KinshipTable::from_json(const nlohmann::json& j) {
  KinshipTable t;
  t.relations = j.at("relations").get<std::vector<std::string>>();
  t.gender = j.at("gender").get<std::map<std::string, std::string>>();
  t.compose =
      j.at("composition").get<std::map<std::string, std::map<std::string, std::string>>>();
  for (const std::string& r : t.relations) {
    if (!t.gender.count(r)) throw std::runtime_error("kinship: missing gender for " + r);
  }
  for (const auto& [s, row] : t.compose) {
    for (const auto& [r, v] : row) {
      if (std::find(t.relations.begin(), t.relations.end(), v) == t.relations.end()) {
        throw std::runtime_error("kinship: composition (" + s + ", " + r +
                                 ") maps outside the relation set");
      }
    }
  }
  return t;
}

KinshipTable KinshipTable::builtin() {
  // "C is the s of O" composed with "N is the r of C" gives "N is the
  // <value> of O". Pairs whose everyday answer (uncle, nephew, in-laws,
  // great-grandparents) falls outside the 8 relations are omitted;
  // grandparent states accept no further step.
  KinshipTable t;
  t.relations = {"father", "mother", "brother", "sister",
                 "son",    "daughter", "grandfather", "grandmother"};
  t.gender = {{"father", "m"},      {"mother", "f"},   {"brother", "m"}, {"sister", "f"},
              {"son", "m"},         {"daughter", "f"}, {"grandfather", "m"},
              {"grandmother", "f"}};
  const std::map<std::string, std::string> parent_row = {{"father", "grandfather"},
                                                         {"mother", "grandmother"},
                                                         {"son", "brother"},
                                                         {"daughter", "sister"}};
  const std::map<std::string, std::string> sibling_row = {
      {"father", "father"},         {"mother", "mother"},
      {"brother", "brother"},       {"sister", "sister"},
      {"grandfather", "grandfather"}, {"grandmother", "grandmother"}};
  const std::map<std::string, std::string> child_row = {{"brother", "son"},
                                                        {"sister", "daughter"}};
  t.compose = {{"father", parent_row},  {"mother", parent_row}, {"brother", sibling_row},
               {"sister", sibling_row}, {"son", child_row},     {"daughter", child_row}};
  return t;
}

std::string compose_chain(const KinshipTable& table, std::span<const std::string> rels) {
  if (rels.empty()) throw std::runtime_error("kinship: empty chain");
  std::string state = rels[0];
  for (size_t i = 1; i < rels.size(); ++i) state = table.composed(state, rels[i]);
  return state;
}

std::vector<ReasoningProblem> gen_clutrr(const ClutrrOptions& opt, const KinshipTable& table) {
  if (opt.hops < 2) throw std::runtime_error("relation chains need hops >= 2");
  if (opt.count < 1) throw std::runtime_error("count must be >= 1");
  const long h = opt.hops;
  if (h + 1 > static_cast<long>(kMaleNames.size() + kFemaleNames.size())) {
    throw std::runtime_error("hops exceed the name pool");
  }
  const long R = static_cast<long>(table.relations.size());

  // ways[t][s]: chains completing from state s after t steps to end at the
  // target answer exactly at step h. Recomputed per target.
  auto completions = [&](const std::string& target) {
    std::vector<std::map<std::string, double>> ways(static_cast<size_t>(h + 1));
    for (const std::string& s : table.relations) {
      ways[static_cast<size_t>(h)][s] = (s == target) ? 1.0 : 0.0;
    }
    for (long t = h - 1; t >= 1; --t) {
      for (const std::string& s : table.relations) {
        double total = 0.0;
        for (const std::string& r : table.relations) {
          if (table.can_compose(s, r)) {
            total += ways[static_cast<size_t>(t + 1)][table.composed(s, r)];
          }
        }
        ways[static_cast<size_t>(t)][s] = total;
      }
    }
    return ways;
  };
  std::map<std::string, std::vector<std::map<std::string, double>>> ways_by_target;
  for (const std::string& a : table.relations) ways_by_target[a] = completions(a);

  Rng master(opt.seed);
  std::vector<ReasoningProblem> out;
  out.reserve(static_cast<size_t>(opt.count));
  for (long idx = 0; idx < opt.count; ++idx) {
    Rng rng(master.fork(static_cast<std::uint64_t>(idx)));
    const std::string& target = table.relations[static_cast<size_t>(idx % R)];
    const auto& ways = ways_by_target.at(target);

    // Weighted step-by-step sampling, uniform over all valid chains. Rounding
    // in the running sum can leave pick barely positive at the end, so the
    // last positive-weight option always wins.
    auto weighted_pick = [&](const std::map<std::string, double>& weight) -> std::string {
      double total = 0.0;
      for (const auto& [r, w] : weight) total += w;
      if (total <= 0.0) {
        throw std::runtime_error("kinship: no " + std::to_string(h) + "-hop chain composes to " +
                                 target);
      }
      double pick = rng.uniform() * total;
      std::string chosen;
      for (const std::string& r : table.relations) {
        auto it = weight.find(r);
        if (it == weight.end() || it->second <= 0.0) continue;
        chosen = r;
        pick -= it->second;
        if (pick < 0.0) break;
      }
      return chosen;
    };

    std::vector<std::string> rels;
    std::string state;
    {
      std::map<std::string, double> weight;
      for (const std::string& r : table.relations) weight[r] = ways[1].at(r);
      state = weighted_pick(weight);
      rels.push_back(state);
    }
    for (long t = 2; t <= h; ++t) {
      std::map<std::string, double> weight;
      for (const std::string& r : table.relations) {
        if (table.can_compose(state, r)) {
          weight[r] = ways[static_cast<size_t>(t)].at(table.composed(state, r));
        }
      }
      const std::string chosen = weighted_pick(weight);
      rels.push_back(chosen);
      state = table.composed(state, chosen);
    }
    if (state != target) throw std::runtime_error("kinship: sampler missed its target relation");

    // Names: v1 free gender, later nodes follow the relation's gender.
    std::vector<long> male_perm = rng.sample_without_replacement(
        static_cast<long>(kMaleNames.size()), static_cast<long>(kMaleNames.size()));
    std::vector<long> female_perm = rng.sample_without_replacement(
        static_cast<long>(kFemaleNames.size()), static_cast<long>(kFemaleNames.size()));
    size_t next_m = 0, next_f = 0;
    auto draw_name = [&](char g) -> std::string {
      if (g == 'm') return kMaleNames[static_cast<size_t>(male_perm[next_m++])];
      return kFemaleNames[static_cast<size_t>(female_perm[next_f++])];
    };
    std::vector<std::string> nodes;
    nodes.push_back(draw_name(rng.uniform() < 0.5 ? 'm' : 'f'));
    for (long i = 0; i < h; ++i) {
      nodes.push_back(draw_name(table.gender.at(rels[static_cast<size_t>(i)])[0]));
    }

    std::vector<std::string> facts;
    for (long i = 0; i < h; ++i) {
      facts.push_back(nodes[static_cast<size_t>(i + 1)] + " is the " +
                      rels[static_cast<size_t>(i)] + " of " + nodes[static_cast<size_t>(i)]);
    }
    rng.shuffle(facts);

    ReasoningProblem p;
    p.task = "clutrr";
    p.hops = h;
    p.facts = std::move(facts);
    p.question = "how are " + nodes[static_cast<size_t>(h)] + " and " + nodes[0] + " related ?";
    p.answer = compose_chain(table, rels);
    p.candidates = table.relations;
    for (long i = 0; i < h; ++i) p.relevant_ids.push_back(i);
    out.push_back(std::move(p));
  }
  return out;
}

// --- letter frequency -----------------------------------------------------------

std::vector<ReasoningProblem> gen_letterfreq(const LetterFreqOptions& opt) {
  if (opt.count < 1) throw std::runtime_error("count must be >= 1");
  constexpr long kFacts = 8, kLettersPerFact = 127;
  Rng master(opt.seed);
  std::vector<ReasoningProblem> out;
  out.reserve(static_cast<size_t>(opt.count));
  for (long idx = 0; idx < opt.count; ++idx) {
    Rng rng(master.fork(static_cast<std::uint64_t>(idx)));
    std::array<long, 26> hist{};
    ReasoningProblem p;
    p.task = "letterfreq";
    p.hops = 0;
    for (long f = 0; f < kFacts; ++f) {
      std::string text;
      for (long i = 0; i < kLettersPerFact; ++i) {
        const long letter = rng.uniform_int(26);
        ++hist[static_cast<size_t>(letter)];
        if (i) text += ' ';
        text += static_cast<char>('a' + letter);
      }
      p.facts.push_back(std::move(text));
      p.relevant_ids.push_back(f);
    }
    long best = 0;
    for (long l = 1; l < 26; ++l) {
      if (hist[static_cast<size_t>(l)] > hist[static_cast<size_t>(best)]) best = l;
    }
    p.question = "which letter occurs most often";
    p.answer = std::string(1, static_cast<char>('a' + best));
    for (long l = 0; l < 26; ++l) p.candidates.push_back(std::string(1, static_cast<char>('a' + l)));
    out.push_back(std::move(p));
  }
  return out;
}

// --- encoding --------------------------------------------------------------------

Vocabulary build_vocab(const std::string& task) {
  Vocabulary v;
  if (task == "proofwriter") {
    v.add("true");
    v.add("false");
    v.add("unknown");
    v.set_answer_range(4, 3);
    for (const char* w : {"FACT", ":", "if", "and", "then", "is", "not", "?"}) v.add(w);
    for (long i = 1; i <= kMaxFactNumber; ++i) v.add(std::to_string(i));
    for (const char* w : kPwEntities) v.add(w);
    for (const char* w : kPwAttrs) v.add(w);
  } else if (task == "clutrr") {
    KinshipTable t = KinshipTable::builtin();
    for (const std::string& r : t.relations) v.add(r);
    v.set_answer_range(4, static_cast<int>(t.relations.size()));
    for (const char* w : {"FACT", ":", "is", "the", "of", "how", "are", "and", "related", "?"}) {
      v.add(w);
    }
    for (long i = 1; i <= kMaxFactNumber; ++i) v.add(std::to_string(i));
    for (const char* w : kMaleNames) v.add(w);
    for (const char* w : kFemaleNames) v.add(w);
  } else if (task == "letterfreq") {
    for (char c = 'a'; c <= 'z'; ++c) v.add(std::string(1, c));
    v.set_answer_range(4, 26);
    for (const char* w : {"which", "letter", "occurs", "most", "often"}) v.add(w);
  } else {
    throw std::runtime_error("unknown task '" + task + "'");
  }
  return v;
}

EncodedProblem encode_problem(const ReasoningProblem& p, const Vocabulary& vocab) {
  EncodedProblem enc;
  const bool numbered = (p.task != "letterfreq");
  if (numbered && static_cast<long>(p.facts.size()) > kMaxFactNumber) {
    throw std::runtime_error("problem has " + std::to_string(p.facts.size()) +
                             " facts, numbering covers " + std::to_string(kMaxFactNumber));
  }
  for (size_t i = 0; i < p.facts.size(); ++i) {
    std::vector<int> seq;
    if (numbered) {
      seq.push_back(vocab.id("FACT"));
      seq.push_back(vocab.id(std::to_string(i + 1)));
      seq.push_back(vocab.id(":"));
    }
    for (int t : vocab.encode_words(p.facts[i])) seq.push_back(t);
    if (numbered) seq.push_back(Vocabulary::kEos);
    enc.facts.push_back(std::move(seq));
  }
  enc.question.push_back(Vocabulary::kBos);
  for (int t : vocab.encode_words(p.question)) enc.question.push_back(t);
  enc.question.push_back(Vocabulary::kSep);

  enc.answer = vocab.id(p.answer);
  if (enc.answer < vocab.answer_first() ||
      enc.answer >= vocab.answer_first() + vocab.answer_count()) {
    throw std::runtime_error("answer '" + p.answer + "' outside the answer token range");
  }
  for (const std::string& c : p.candidates) enc.candidates.push_back(vocab.id(c));

  std::vector<long> order(p.relevant_ids.begin(), p.relevant_ids.end());
  std::sort(order.begin(), order.end());
  for (long id : order) {
    if (id < 0 || id >= static_cast<long>(enc.facts.size())) {
      throw std::runtime_error("relevant id " + std::to_string(id) + " out of range");
    }
    const auto& seg = enc.facts[static_cast<size_t>(id)];
    enc.recall_target.insert(enc.recall_target.end(), seg.begin(), seg.end());
  }
  if (enc.recall_target.empty()) enc.recall_target.push_back(Vocabulary::kEos);
  return enc;
}

}  // namespace reckon::tasks
