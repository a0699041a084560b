#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace reckon {

// Whitespace-token vocabulary. Ids 0..3 are reserved specials; answer tokens
// for a task occupy one contiguous range so candidate sets are dense.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  Vocabulary();

  // Returns the token's id, adding it if absent.
  int add(const std::string& token);
  bool has(const std::string& token) const;
  // Id of a known token; throws naming the token otherwise.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  long size() const { return static_cast<long>(tokens_.size()); }

  void set_answer_range(int first, int count);
  int answer_first() const { return answer_first_; }
  int answer_count() const { return answer_count_; }
  std::vector<int> answer_ids() const;

  // Splits on whitespace; every word must be known.
  std::vector<int> encode_words(const std::string& text) const;
  // Space-joined surface form.
  std::string decode(std::span<const int> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int answer_first_ = -1;
  int answer_count_ = 0;
};

}  // namespace reckon
