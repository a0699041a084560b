#include "reckon/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace reckon {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
  add("<sep>");
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

bool Vocabulary::has(const std::string& token) const { return ids_.count(token) > 0; }

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) {
    throw std::runtime_error("vocabulary: unknown token '" + token + "'");
  }
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) {
    throw std::runtime_error("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::set_answer_range(int first, int count) {
  if (first < 0 || count < 1 || first + count > static_cast<int>(tokens_.size())) {
    throw std::runtime_error("vocabulary: invalid answer range [" + std::to_string(first) + ", " +
                             std::to_string(first + count) + ")");
  }
  answer_first_ = first;
  answer_count_ = count;
}

std::vector<int> Vocabulary::answer_ids() const {
  if (answer_first_ < 0) throw std::runtime_error("vocabulary: answer range not set");
  std::vector<int> out(static_cast<size_t>(answer_count_));
  for (int i = 0; i < answer_count_; ++i) out[static_cast<size_t>(i)] = answer_first_ + i;
  return out;
}

std::vector<int> Vocabulary::encode_words(const std::string& text) const {
  std::vector<int> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json{{"tokens", tokens_},
                        {"answer_first", answer_first_},
                        {"answer_count", answer_count_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  const auto& toks = j.at("tokens");
  for (size_t i = 4; i < toks.size(); ++i) v.add(toks[i].get<std::string>());
  const int first = j.at("answer_first").get<int>();
  const int count = j.at("answer_count").get<int>();
  if (first >= 0) v.set_answer_range(first, count);
  return v;
}

}  // namespace reckon
