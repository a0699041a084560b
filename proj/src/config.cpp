#include "reckon/config.hpp"

#include <fstream>
#include <stdexcept>

namespace reckon::cfg {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return doc;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const char* type_name(const json& v) {
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number()) return "number";
  return "null";
}

void check_type(const json& v, const std::string& want, const std::string& path) {
  bool ok = false;
  if (want == "object") ok = v.is_object();
  else if (want == "array") ok = v.is_array();
  else if (want == "string") ok = v.is_string();
  else if (want == "boolean") ok = v.is_boolean();
  else if (want == "integer") ok = v.is_number_integer() || v.is_number_unsigned();
  else if (want == "number") ok = v.is_number();
  else throw std::runtime_error("schema names unsupported type " + want);
  if (!ok)
    throw std::runtime_error(path + ": expected " + want + ", got " + type_name(v));
}

}  // namespace

void validate_against_schema(const json& doc, const json& schema, const std::string& path) {
  const std::string where = path.empty() ? "config" : path;
  if (schema.contains("type")) check_type(doc, schema["type"].get<std::string>(), where);

  if (schema.contains("enum")) {
    bool hit = false;
    for (const auto& v : schema["enum"])
      if (v == doc) { hit = true; break; }
    if (!hit) {
      std::string allowed;
      for (const auto& v : schema["enum"]) {
        if (!allowed.empty()) allowed += ", ";
        allowed += v.dump();
      }
      throw std::runtime_error(where + ": " + doc.dump() + " is not one of " + allowed);
    }
  }

  if (doc.is_number()) {
    double x = doc.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      throw std::runtime_error(where + ": " + doc.dump() + " is below minimum " +
                               schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      throw std::runtime_error(where + ": " + doc.dump() + " is above maximum " +
                               schema["maximum"].dump());
  }

  if (doc.is_object()) {
    const json props = schema.value("properties", json::object());
    if (schema.contains("required"))
      for (const auto& k : schema["required"])
        if (!doc.contains(k.get<std::string>()))
          throw std::runtime_error(where + ": missing required field " + k.get<std::string>());
    for (const auto& [key, value] : doc.items()) {
      auto it = props.find(key);
      if (it == props.end()) {
        if (schema.value("additionalProperties", json(true)) == json(false))
          throw std::runtime_error(join(path, key) + ": unknown field");
        continue;
      }
      validate_against_schema(value, *it, join(path, key));
    }
  }

  if (doc.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < doc.size(); ++i)
      validate_against_schema(doc[i], schema["items"], where + "[" + std::to_string(i) + "]");
  }
}

namespace {

template <class T>
void take(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj[key].get<T>();
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  take(doc, "task", c.task);
  take(doc, "method", c.method);
  take(doc, "objective", c.objective);
  if (doc.contains("model")) {
    const json& m = doc["model"];
    take(m, "context_length", c.model.context_length);
    take(m, "layers", c.model.layers);
    take(m, "heads", c.model.heads);
    take(m, "embed_dim", c.model.embed_dim);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    take(t, "inner_steps", c.train.inner_steps);
    take(t, "outer_lr", c.train.outer_lr);
    take(t, "alpha_init", c.train.alpha_init);
    if (t.contains("order"))
      c.train.order = t["order"] == "first" ? train::TrainConfig::Order::first
                                            : train::TrainConfig::Order::second;
    take(t, "learn_alpha", c.train.learn_alpha);
    if (t.contains("inner_opt"))
      c.train.inner_opt = t["inner_opt"] == "adam" ? train::InnerOpt::adam : train::InnerOpt::gd;
    take(t, "meta_batch", c.train.meta_batch);
    take(t, "grad_accum", c.train.grad_accum);
    take(t, "epochs", c.train.epochs);
    take(t, "patience", c.train.patience);
    take(t, "stop_acc", c.train.stop_acc);
    take(t, "weight_decay", c.train.weight_decay);
    // Reader-system knobs live in the same block; the adapted path ignores them.
    take(t, "batch_size", c.baseline.batch_size);
    take(t, "lr", c.baseline.lr);
    take(t, "epochs", c.baseline.epochs);
    take(t, "patience", c.baseline.patience);
    take(t, "stop_acc", c.baseline.stop_acc);
    take(t, "weight_decay", c.baseline.weight_decay);
  }
  c.train.multi_task = c.objective == "mt";
  c.baseline.multi_task = c.train.multi_task;
  if (doc.contains("data")) {
    const json& d = doc["data"];
    take(d, "train", c.data.train);
    take(d, "val", c.data.val);
    take(d, "test", c.data.test);
    take(d, "hops", c.data.hops);
    take(d, "depth", c.data.depth);
    take(d, "distractors", c.data.distractors);
    take(d, "conj_prob", c.data.conj_prob);
  }
  take(doc, "seeds", c.seeds);
  take(doc, "out", c.out);
  if (c.seeds.empty()) throw std::runtime_error("seeds: must not be empty");
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json t = {
      {"inner_steps", c.train.inner_steps},
      {"outer_lr", c.train.outer_lr},
      {"alpha_init", c.train.alpha_init},
      {"order", c.train.order == train::TrainConfig::Order::first ? "first" : "second"},
      {"learn_alpha", c.train.learn_alpha},
      {"inner_opt", c.train.inner_opt == train::InnerOpt::adam ? "adam" : "gd"},
      {"meta_batch", c.train.meta_batch},
      {"grad_accum", c.train.grad_accum},
      {"epochs", c.train.epochs},
      {"patience", c.train.patience},
      {"stop_acc", c.train.stop_acc},
      {"weight_decay", c.train.weight_decay},
      {"batch_size", c.baseline.batch_size},
      {"lr", c.baseline.lr},
  };
  return json{
      {"task", c.task},
      {"method", c.method},
      {"objective", c.objective},
      {"model",
       {{"context_length", c.model.context_length},
        {"layers", c.model.layers},
        {"heads", c.model.heads},
        {"embed_dim", c.model.embed_dim}}},
      {"train", t},
      {"data",
       {{"train", c.data.train},
        {"val", c.data.val},
        {"test", c.data.test},
        {"hops", c.data.hops},
        {"depth", c.data.depth},
        {"distractors", c.data.distractors},
        {"conj_prob", c.data.conj_prob}}},
      {"seeds", c.seeds},
      {"out", c.out},
  };
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(const json& canonical_config) {
  // Plain json keeps object keys sorted, so dump() is canonical.
  std::uint64_t h = fnv1a64(canonical_config.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace reckon::cfg
