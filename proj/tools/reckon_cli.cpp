#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "reckon/baselines.hpp"
#include "reckon/chart.hpp"
#include "reckon/config.hpp"
#include "reckon/eval.hpp"
#include "reckon/model.hpp"
#include "reckon/repro.hpp"
#include "reckon/tasks.hpp"
#include "reckon/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reckon;

namespace {

// exit codes: 0 success, 1 failed acceptance check, 2 missing or invalid input
constexpr int kOk = 0;
constexpr int kFailedCheck = 1;
constexpr int kBadInput = 2;

struct Cli {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_root;
  int threads = 1;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? v : fallback;
}

int env_threads() {
  const std::string v = env_or("RECKON_THREADS", "");
  if (v.empty()) return 1;
  try {
    const int n = std::stoi(v);
    if (n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("RECKON_THREADS must be a positive integer, got " + v);
}

// Parses and schema-validates the experiment file; throws with a field path
// on any violation.
cfg::ExperimentConfig load_config(const std::string& path) {
  const fs::path schema_path = fs::path(REPO_ROOT) / "configs" / "schema.json";
  json doc = cfg::load_json_file(path);
  json schema = cfg::load_json_file(schema_path.string());
  cfg::validate_against_schema(doc, schema);
  return cfg::parse_config(doc);
}

std::uint64_t run_seed(const Cli& cli, const cfg::ExperimentConfig& c) {
  return cli.seed ? *cli.seed : c.seeds.at(0);
}

// Every run lives in its own directory named by the canonical config hash
// plus the seed, so distinct settings never collide and nothing is mutated.
fs::path run_dir(const Cli& cli, const cfg::ExperimentConfig& c, std::uint64_t seed) {
  const std::string root = !cli.out_root.empty() ? cli.out_root : env_or("RECKON_OUT", c.out);
  const std::string hash = cfg::config_hash_hex(cfg::config_to_json(c));
  return fs::path(root) /
         (c.task + "-" + c.method + "-" + hash.substr(0, 12) + "-s" + std::to_string(seed));
}

std::vector<tasks::ReasoningProblem> gen_split(const cfg::ExperimentConfig& c, std::uint64_t seed,
                                               long count) {
  if (c.task == "proofwriter") {
    tasks::PwOptions o;
    o.seed = seed;
    o.depth = c.data.depth;
    o.count = count;
    o.distractors = c.data.distractors;
    o.conj_prob = c.data.conj_prob;
    return tasks::gen_proofwriter(o);
  }
  if (c.task == "clutrr") {
    tasks::ClutrrOptions o;
    o.seed = seed;
    o.hops = c.data.hops;
    o.count = count;
    return tasks::gen_clutrr(o, tasks::KinshipTable::builtin());
  }
  tasks::LetterFreqOptions o;
  o.seed = seed;
  o.count = count;
  return tasks::gen_letterfreq(o);
}

struct SplitSpec {
  const char* name;
  long count;
  std::uint64_t seed;
};

std::vector<SplitSpec> splits_of(const cfg::ExperimentConfig& c, std::uint64_t base) {
  return {{"train", c.data.train, base + 11},
          {"val", c.data.val, base + 12},
          {"test", c.data.test, base + 13}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest_for(const cfg::ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  json files = json::object();
  for (const SplitSpec& s : splits_of(c, seed)) {
    const std::string text = slurp(dir / (std::string(s.name) + ".jsonl"));
    long lines = 0;
    for (char ch : text) lines += ch == '\n';
    files[s.name] = {{"count", lines},
                     {"fnv1a64", cfg::config_hash_hex(json(cfg::fnv1a64(text)))}};
  }
  return json{{"config_hash", cfg::config_hash_hex(cfg::config_to_json(c))},
              {"seed", seed},
              {"task", c.task},
              {"files", files}};
}

int cmd_gen(const Cli& cli) {
  auto c = load_config(cli.config_path);
  const std::uint64_t seed = run_seed(cli, c);
  const fs::path dir = run_dir(cli, c, seed);

  if (fs::exists(dir / "manifest.json")) {
    // Never rewrite a finished run; re-derive in a scratch area and confirm
    // the existing files are what this config still produces.
    const fs::path tmp = dir.string() + ".verify";
    fs::create_directories(tmp);
    for (const SplitSpec& s : splits_of(c, seed)) {
      tasks::write_jsonl((tmp / (std::string(s.name) + ".jsonl")).string(),
                         gen_split(c, s.seed, s.count));
    }
    const bool same =
        manifest_for(c, seed, tmp) == json::parse(slurp(dir / "manifest.json"));
    fs::remove_all(tmp);
    if (!same) {
      std::fprintf(stderr, "error: %s exists and differs from what this config generates\n",
                   dir.string().c_str());
      return kBadInput;
    }
    std::printf("%s already generated; files verified identical\n", dir.string().c_str());
    return kOk;
  }

  fs::create_directories(dir);
  for (const SplitSpec& s : splits_of(c, seed)) {
    tasks::write_jsonl((dir / (std::string(s.name) + ".jsonl")).string(),
                       gen_split(c, s.seed, s.count));
  }
  const json manifest = manifest_for(c, seed, dir);
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  std::printf("wrote %s (train %ld, val %ld, test %ld)\n", dir.string().c_str(), c.data.train,
              c.data.val, c.data.test);
  return kOk;
}

ModelConfig model_config(const cfg::ExperimentConfig& c, long vocab_size, std::uint64_t seed) {
  ModelConfig mc = c.model;
  mc.vocab_size = vocab_size;
  mc.seed = seed + 100;
  return mc;
}

int cmd_train(const Cli& cli) {
  auto c = load_config(cli.config_path);
  const std::uint64_t seed = run_seed(cli, c);
  const fs::path dir = run_dir(cli, c, seed);
  const fs::path ck = dir / "checkpoint.ckpt";
  if (fs::exists(ck)) {
    std::printf("already trained: %s\n", ck.string().c_str());
    return kOk;
  }
  fs::create_directories(dir);

  auto vocab = tasks::build_vocab(c.task);
  auto encode = [&](std::vector<tasks::ReasoningProblem> ps) {
    std::vector<tasks::EncodedProblem> out;
    out.reserve(ps.size());
    for (const auto& p : ps) out.push_back(tasks::encode_problem(p, vocab));
    return out;
  };
  const auto train_set = encode(gen_split(c, seed + 11, c.data.train));
  const auto val_set = encode(gen_split(c, seed + 12, c.data.val));

  GptModel model(model_config(c, vocab.size(), seed));
  json meta = {{"config_hash", cfg::config_hash_hex(cfg::config_to_json(c))},
               {"seed", seed},
               {"method", c.method},
               {"task", c.task}};

  if (c.method == "reckoning") {
    train::TrainConfig tc = c.train;
    tc.seed = seed + 1;
    auto r = train::train(model, tc, train_set, val_set);
    meta["best_val_acc"] = r.best_val_acc;
    meta["best_epoch"] = r.best_epoch;
    meta["epochs_run"] = r.epochs_run;
    meta["reached_target"] = r.reached_target;
    meta["log"] = r.log;
    train::save_training_checkpoint(ck.string(), r.best_theta, r.best_alpha, nullptr, meta);
    std::printf("best val accuracy %.4f (epoch %ld); checkpoint %s\n", r.best_val_acc,
                r.best_epoch, ck.string().c_str());
  } else {
    baseline::BaselineConfig bc = c.baseline;
    bc.kind = baseline::kind_from_name(c.method);
    bc.seed = seed + 1;
    bc.inner = c.train;
    bc.inner.seed = seed + 1;
    auto r = baseline::train_baseline(model, bc, train_set, val_set);
    meta["best_val_acc"] = r.best_val_acc;
    meta["best_epoch"] = r.best_epoch;
    meta["epochs_run"] = r.epochs_run;
    meta["log"] = r.log;
    const bool adapted = bc.kind == baseline::BaselineKind::random_facts;
    train::save_training_checkpoint(
        ck.string(), r.best_theta,
        adapted ? r.best_alpha : train::LearnedStepSizes::make(1, 1, 0.0), nullptr, meta);
    std::printf("best val accuracy %.4f (epoch %ld); checkpoint %s\n", r.best_val_acc,
                r.best_epoch, ck.string().c_str());
  }
  std::ofstream(dir / "result.json", std::ios::binary) << meta.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const Cli& cli, const std::string& checkpoint, const std::string& protocol) {
  auto c = load_config(cli.config_path);
  const std::uint64_t seed = run_seed(cli, c);
  if (!fs::exists(checkpoint)) {
    std::fprintf(stderr, "error: checkpoint %s does not exist\n", checkpoint.c_str());
    return kBadInput;
  }
  const fs::path dir = run_dir(cli, c, seed);
  const fs::path out_csv = dir / ("eval_" + protocol + ".csv");
  if (fs::exists(out_csv)) {
    std::fprintf(stderr, "error: %s already exists; refusing to overwrite a finished run\n",
                 out_csv.string().c_str());
    return kBadInput;
  }
  fs::create_directories(dir);

  auto vocab = tasks::build_vocab(c.task);
  std::vector<tasks::EncodedProblem> test;
  for (const auto& p : gen_split(c, seed + 13, c.data.test)) {
    test.push_back(tasks::encode_problem(p, vocab));
  }
  auto lc = train::load_training_checkpoint(checkpoint);
  GptModel model(model_config(c, vocab.size(), seed));

  const bool adapted = c.method == "reckoning" || c.method == "random-facts";
  using Row = std::vector<std::string>;
  std::vector<Row> rows;

  if (protocol == "accuracy") {
    eval::Answerer answer =
        adapted ? eval::adapted_answerer(model, lc.theta, lc.alpha, c.train.inner_steps)
                : eval::reader_answerer(model, lc.theta, baseline::kind_from_name(c.method),
                                        model.config().context_length);
    std::vector<int> predicted, gold;
    for (const auto& ep : test) {
      predicted.push_back(answer(ep));
      gold.push_back(ep.answer);
    }
    long hits = 0;
    for (size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == gold[i];
    const double acc = static_cast<double>(hits) / static_cast<double>(test.size());
    eval::write_predictions_jsonl((dir / "predictions.jsonl").string(), predicted, gold);
    rows.push_back({"label_accuracy", eval::format_double(acc)});
    std::printf("label accuracy %.4f over %zu problems\n", acc, test.size());
  } else if (protocol == "recall") {
    eval::Recaller recall =
        adapted ? eval::adapted_recaller(model, lc.theta, lc.alpha, c.train.inner_steps)
                : eval::reader_recaller(model, lc.theta, model.config().context_length);
    const double r = eval::recall_exact_match(recall, test);
    rows.push_back({"recall_exact_match", eval::format_double(r)});
    std::printf("recall exact match %.4f over %zu problems\n", r, test.size());
  } else if (protocol == "innerloss") {
    if (!adapted) {
      std::fprintf(stderr, "error: inner-loss protocol needs an adapted-parameter method\n");
      return kBadInput;
    }
    auto rep = eval::inner_loss_report(model, lc.theta, lc.alpha, c.train.inner_steps, test);
    rows.push_back({"final_inner_loss", eval::format_double(rep.final_mean)});
    rows.push_back({"inner_loss_drop", eval::format_double(rep.delta_mean)});
    rows.push_back({"failures", std::to_string(rep.failures)});
    std::printf("inner loss %.4f (drop %.4f) over %ld problems\n", rep.final_mean,
                rep.delta_mean, rep.problems);
  } else {
    std::fprintf(stderr, "error: unknown protocol %s (accuracy | recall | innerloss)\n",
                 protocol.c_str());
    return kBadInput;
  }

  eval::write_csv(out_csv.string(), {"metric", "value"}, rows);
  std::printf("wrote %s\n", out_csv.string().c_str());
  return kOk;
}

int cmd_chart(const std::string& csv, std::string out, const std::string& title, bool bar) {
  if (!fs::exists(csv)) {
    std::fprintf(stderr, "error: %s does not exist\n", csv.c_str());
    return kBadInput;
  }
  if (out.empty()) out = fs::path(csv).replace_extension(".svg").string();
  auto spec = chart::chart_from_csv(slurp(csv), title.empty() ? fs::path(csv).stem().string()
                                                              : title);
  chart::write_text_file(out, bar ? chart::render_bar_chart(spec)
                                  : chart::render_line_chart(spec));
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

int cmd_repro(const Cli& cli, bool quick, bool no_self_check) {
  repro::ReproOptions opt;
  opt.out_dir = !cli.out_root.empty() ? cli.out_root
                                      : env_or("RECKON_OUT", "runs") + std::string("/repro");
  opt.seed = cli.seed.value_or(0);
  opt.threads = cli.threads;
  opt.quick = quick;
  opt.self_check = !no_self_check;
  auto summary = repro::run_repro_suite(opt);
  repro::print_summary(summary);
  return summary.all_pass() ? kOk : kFailedCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bi-level fact-encoding experiments"};
  app.require_subcommand(1);

  Cli cli;
  try {
    cli.threads = env_threads();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  }

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", cli.config_path, "experiment JSON file");
    if (needs_config) c->required();
    sub->add_option("--seed", cli.seed, "override the run seed");
    sub->add_option("--out", cli.out_root, "output root (or RECKON_OUT)");
    sub->add_option("--threads", cli.threads, "worker threads (or RECKON_THREADS)")
        ->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen", "generate dataset splits and a manifest");
  add_common(gen, true);

  auto* train = app.add_subcommand("train", "train the configured system");
  add_common(train, true);

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_common(eval_cmd, true);
  std::string checkpoint, protocol = "accuracy";
  eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint file")->required();
  eval_cmd->add_option("--protocol", protocol, "accuracy | recall | innerloss");

  auto* chart_cmd = app.add_subcommand("chart", "render a CSV as an SVG chart");
  std::string csv, svg_out, title;
  bool bar = false;
  chart_cmd->add_option("--csv", csv, "input table")->required();
  chart_cmd->add_option("--out", svg_out, "output SVG path (default: alongside the CSV)");
  chart_cmd->add_option("--title", title, "chart title");
  chart_cmd->add_flag("--bar", bar, "bar chart instead of line");

  auto* repro_cmd = app.add_subcommand("repro", "run the full experiment suite and checks");
  add_common(repro_cmd, false);
  bool quick = false, no_self_check = false;
  repro_cmd->add_flag("--quick", quick, "smoke-test sizes");
  repro_cmd->add_flag("--no-self-check", no_self_check, "skip the determinism rerun");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(cli);
    if (train->parsed()) return cmd_train(cli);
    if (eval_cmd->parsed()) return cmd_eval(cli, checkpoint, protocol);
    if (chart_cmd->parsed()) return cmd_chart(csv, svg_out, title, bar);
    if (repro_cmd->parsed()) return cmd_repro(cli, quick, no_self_check);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  }
  return kOk;
}
