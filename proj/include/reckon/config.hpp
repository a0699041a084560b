#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "reckon/baselines.hpp"
#include "reckon/model.hpp"
#include "reckon/trainer.hpp"

namespace reckon::cfg {

// One experiment: what to generate, which system to train, how to train it.
// Parsed from a JSON document validated against configs/schema.json.
struct DataConfig {
  long train = 1000;
  long val = 200;
  long test = 200;
  long hops = 2;         // relation-chain length
  long depth = 2;        // rule applications for the queried literal
  long distractors = -1; // -1 = every generated distractor
  double conj_prob = 0.35;
};

struct ExperimentConfig {
  std::string task = "clutrr";       // proofwriter | clutrr | letterfreq
  std::string method = "reckoning";  // reckoning | ft-icr | no-facts | no-question | random-facts
  std::string objective = "st";      // st | mt
  ModelConfig model;                 // vocab_size and seed filled in per run
  train::TrainConfig train;
  baseline::BaselineConfig baseline;  // batch_size / lr / epochs for reader systems
  DataConfig data;
  std::vector<std::uint64_t> seeds = {0};
  std::string out = "runs";
};

nlohmann::json load_json_file(const std::string& path);

// Interprets the subset of JSON Schema the shipped schema uses: type,
// required, properties, additionalProperties:false, enum, minimum, maximum,
// items. Violations name the field path ("train.inner_steps: ...").
void validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                             const std::string& path = "");

// Parses a validated document; defaults apply to absent fields.
ExperimentConfig parse_config(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& c);

// FNV-1a over the canonical (sorted-key) serialization; keys every run
// directory and is embedded in all artifacts.
std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash_hex(const nlohmann::json& canonical_config);

}  // namespace reckon::cfg
