#include "reckon/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace reckon {

using ad::Shape;
using ad::Tensor;

namespace {
constexpr char kMagic[8] = {'R', 'C', 'K', 'P', 'T', '0', '0', '1'};
}

void Checkpoint::add_blob(const std::string& name, Tensor t) {
  if (has_blob(name)) throw std::runtime_error("checkpoint: duplicate blob '" + name + "'");
  blobs_.emplace_back(name, std::move(t));
}

bool Checkpoint::has_blob(const std::string& name) const {
  for (const auto& [n, t] : blobs_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs_) {
    if (n == name) return t;
  }
  throw std::runtime_error("checkpoint: missing blob '" + name + "'");
}

void Checkpoint::add_params(const std::string& prefix, const NamedParameterSet& ps) {
  nlohmann::json order = nlohmann::json::array();
  for (const NamedParam& p : ps) {
    add_blob(prefix + "." + p.name, p.tensor);
    order.push_back({{"name", p.name}, {"layer", p.layer}});
  }
  meta["param_sets"][prefix] = std::move(order);
}

NamedParameterSet Checkpoint::extract_params(const std::string& prefix) const {
  if (!meta.contains("param_sets") || !meta["param_sets"].contains(prefix)) {
    throw std::runtime_error("checkpoint: no parameter set '" + prefix + "'");
  }
  NamedParameterSet ps;
  for (const auto& entry : meta["param_sets"][prefix]) {
    const std::string name = entry.at("name").get<std::string>();
    ps.add(name, entry.at("layer").get<int>(), blob(prefix + "." + name));
  }
  return ps;
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  nlohmann::json blob_list = nlohmann::json::array();
  for (const auto& [name, t] : blobs_) {
    blob_list.push_back({{"name", name}, {"shape", t.shape()}});
  }
  header["blobs"] = std::move(blob_list);
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : blobs_) {
    out.write(reinterpret_cast<const char*>(t.raw()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");
  nlohmann::json header = nlohmann::json::parse(hs);

  Checkpoint ck;
  ck.meta = header.at("meta");
  for (const auto& entry : header.at("blobs")) {
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data(static_cast<size_t>(ad::shape_numel(shape)));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in '" + path + "'");
    ck.add_blob(entry.at("name").get<std::string>(), Tensor::from_data(shape, std::move(data)));
  }
  return ck;
}

}  // namespace reckon
