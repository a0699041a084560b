#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "reckon/vocab.hpp"

namespace reckon::tasks {

// One (K, x, y*, Y) tuple. `facts` holds the full context K in emission
// order (rules included for deduction problems); `relevant_ids` indexes the
// minimal supporting subset.
struct ReasoningProblem {
  std::string task;  // proofwriter | clutrr | letterfreq
  std::vector<std::string> facts;
  std::string question;
  std::string answer;
  std::vector<std::string> candidates;
  std::vector<long> relevant_ids;
  long hops = 0;
  std::string split = "train";
};

nlohmann::json problem_to_json(const ReasoningProblem& p);
ReasoningProblem problem_from_json(const nlohmann::json& j);
void write_jsonl(const std::string& path, std::span<const ReasoningProblem> problems);
std::vector<ReasoningProblem> read_jsonl(const std::string& path);

// Returns the surface strings of the minimal support; validates provenance.
std::vector<std::string> relevant_facts(const ReasoningProblem& p);

// --- forward-chaining deduction (attribute rules over entities) -------------

// Ground literal (entity, attribute); rules are universally quantified over
// entities: if every antecedent attribute holds for e, the consequent does.
struct AttrRule {
  std::vector<int> antecedents;
  int consequent = -1;
};

struct RuleBase {
  int num_entities = 0;
  int num_attrs = 0;
  std::vector<std::pair<int, int>> facts;  // (entity, attr)
  std::vector<AttrRule> rules;
};

// Least fixed point with proof depth: facts at 0, a rule application at
// 1 + max over its antecedents' depths, minimized over derivations.
class Closure {
 public:
  void set(int entity, int attr, int depth);
  bool holds(int entity, int attr) const;
  int depth(int entity, int attr) const;  // -1 when absent
  const std::map<std::pair<int, int>, int>& literals() const { return depth_; }

 private:
  std::map<std::pair<int, int>, int> depth_;
};

Closure deductive_closure(const RuleBase& rb);

struct PwOptions {
  std::uint64_t seed = 0;
  long depth = 2;       // rule applications needed for the queried literal
  long count = 1;
  long distractors = -1;  // -1 = every generated distractor, else first d
  double conj_prob = 0.35;
};
std::vector<ReasoningProblem> gen_proofwriter(const PwOptions& opt);

// --- relation composition chains ---------------------------------------------

// compose[s][r]: s relates the chain end C to the origin O ("C is the s of
// O"), r relates the next node N to C; the value relates N to O. Pairs
// absent from the table are dead ends the sampler must avoid.
struct KinshipTable {
  std::vector<std::string> relations;
  std::map<std::string, std::string> gender;  // relation -> m | f
  std::map<std::string, std::map<std::string, std::string>> compose;

  bool can_compose(const std::string& s, const std::string& r) const;
  const std::string& composed(const std::string& s, const std::string& r) const;

  nlohmann::json to_json() const;
  static KinshipTable from_json(const nlohmann::json& j);
  static KinshipTable builtin();
};

// Fold of the table along the chain; throws on an undefined step.
std::string compose_chain(const KinshipTable& table, std::span<const std::string> rels);

struct ClutrrOptions {
  std::uint64_t seed = 0;
  long hops = 2;
  long count = 1;
};
std::vector<ReasoningProblem> gen_clutrr(const ClutrrOptions& opt, const KinshipTable& table);

// --- letter frequency ---------------------------------------------------------

struct LetterFreqOptions {
  std::uint64_t seed = 0;
  long count = 1;
};
// 8 facts of 127 letter tokens; the question asks for the most frequent
// letter, ties resolved alphabetically.
std::vector<ReasoningProblem> gen_letterfreq(const LetterFreqOptions& opt);

// --- encoding -----------------------------------------------------------------

struct EncodedProblem {
  std::vector<std::vector<int>> facts;  // numbered "FACT i : ... EOS" segments
  std::vector<int> question;            // BOS ... SEP
  int answer = -1;
  std::vector<int> candidates;
  std::vector<int> recall_target;  // relevant segments in index order; [EOS] if none
};

// Fixed vocabulary per task, independent of any particular dataset.
Vocabulary build_vocab(const std::string& task);

// Letter-run facts are encoded raw (no numbering) so the context budget of
// the runtime benchmark stays at 127 tokens per fact.
EncodedProblem encode_problem(const ReasoningProblem& p, const Vocabulary& vocab);

}  // namespace reckon::tasks
