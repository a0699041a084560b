#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "reckon/params.hpp"
#include "reckon/tensor.hpp"

namespace reckon {

// Versioned binary container: magic, little-endian header length, JSON
// header, then all float64 payloads back to back in header order.
class Checkpoint {
 public:
  nlohmann::json meta;

  void add_blob(const std::string& name, ad::Tensor t);
  bool has_blob(const std::string& name) const;
  const ad::Tensor& blob(const std::string& name) const;

  // Stores every tensor of the set under "<prefix>.<name>" and records the
  // name/layer order in meta so extract_params can rebuild it.
  void add_params(const std::string& prefix, const NamedParameterSet& ps);
  NamedParameterSet extract_params(const std::string& prefix) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::pair<std::string, ad::Tensor>> blobs_;
};

}  // namespace reckon
