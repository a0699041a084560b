#include "reckon/params.hpp"

#include <stdexcept>

#include "reckon/hashutil.hpp"

namespace reckon {

using ad::Tensor;

void NamedParameterSet::add(std::string name, int layer, Tensor tensor) {
  if (index_.count(name)) {
    throw std::runtime_error("parameter set: duplicate name '" + name + "'");
  }
  if (layer < 0) throw std::runtime_error("parameter set: negative layer for '" + name + "'");
  index_.emplace(name, items_.size());
  items_.push_back(NamedParam{std::move(name), layer, std::move(tensor)});
}

const Tensor& NamedParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::runtime_error("parameter set: unknown name '" + name + "'");
  }
  return items_[it->second].tensor;
}

void NamedParameterSet::set(const std::string& name, Tensor tensor) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::runtime_error("parameter set: unknown name '" + name + "'");
  }
  NamedParam& item = items_[it->second];
  if (tensor.shape() != item.tensor.shape()) {
    throw std::runtime_error("parameter set: shape change for '" + name + "'");
  }
  item.tensor = std::move(tensor);
}

int NamedParameterSet::max_layer() const {
  int m = 0;
  for (const NamedParam& p : items_) m = std::max(m, p.layer);
  return m;
}

long NamedParameterSet::total_elements() const {
  long n = 0;
  for (const NamedParam& p : items_) n += p.tensor.numel();
  return n;
}

std::vector<Tensor> NamedParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const NamedParam& p : items_) out.push_back(p.tensor);
  return out;
}

NamedParameterSet NamedParameterSet::deep_copy() const {
  NamedParameterSet out;
  for (const NamedParam& p : items_) {
    out.add(p.name, p.layer,
            Tensor::from_data(p.tensor.shape(),
                              std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())));
  }
  return out;
}

std::uint64_t NamedParameterSet::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const NamedParam& p : items_) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.tensor.raw(), static_cast<size_t>(p.tensor.numel()) * sizeof(double), h);
  }
  return h;
}

}  // namespace reckon
