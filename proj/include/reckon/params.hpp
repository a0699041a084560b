#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "reckon/tensor.hpp"

namespace reckon {

struct NamedParam {
  std::string name;
  int layer = 0;  // step-size group; 0 = embeddings, 1..B = blocks, B+1 = head
  ad::Tensor tensor;
};

// Ordered parameter collection. Order is the canonical iteration order for
// gradient reduction and serialization, so it must stay deterministic.
class NamedParameterSet {
 public:
  void add(std::string name, int layer, ad::Tensor tensor);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const ad::Tensor& at(const std::string& name) const;
  // Replaces the tensor under an existing name (same shape required).
  void set(const std::string& name, ad::Tensor tensor);

  size_t size() const { return items_.size(); }
  const NamedParam& item(size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  int max_layer() const;
  long total_elements() const;
  std::vector<ad::Tensor> tensors() const;

  // Fresh buffers, no tape handles.
  NamedParameterSet deep_copy() const;

  // FNV-1a over the raw float64 bytes in canonical order.
  std::uint64_t content_hash() const;

 private:
  std::vector<NamedParam> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace reckon
