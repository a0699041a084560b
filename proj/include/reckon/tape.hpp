#pragma once

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "reckon/tensor.hpp"

namespace reckon::ad {

// Gradients of each input given the gradient of the output. Closures are
// written in terms of taped ops, so running them while recording is enabled
// yields a graph that can be differentiated again (gradients of gradients).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct TapeNode {
  const char* op = "leaf";
  std::vector<int> inputs;
  BackwardFn backward;  // empty for leaves; released once consumed
  bool consumed = false;
};

// Records one episode's computation graph. Single-writer: one episode owns
// one tape. Node ids are append-ordered, so every node's inputs precede it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int record(const char* op, std::vector<int> inputs, BackwardFn backward);
  // Registers an externally created tensor as a leaf of this tape without
  // mutating the tensor itself (it may be shared with other episodes).
  int leaf_id_for(const Tensor& t);
  // Node id of t on this tape, registering it as a leaf if foreign.
  int input_id(const Tensor& t);

  int size() const { return static_cast<int>(nodes_.size()); }
  const TapeNode& node(int id) const { return nodes_[id]; }

  // Reverse-mode sweep from a rank-0 output. Returns one gradient per wrt
  // tensor (zeros for tensors the graph never reached). With create_graph the
  // returned gradients are themselves recorded and differentiable; without it
  // the visited nodes' saved state is released and cannot be swept again.
  std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> wrt,
                                bool create_graph);

  static Tape* active();

 private:
  friend struct TapeScope;
  int node_id_of(const Tensor& t) const;

  // deque: backward closures append nodes mid-sweep, so references into the
  // container must survive growth.
  std::deque<TapeNode> nodes_;
  // Keyed by storage address, so every registered leaf is pinned alive for
  // the tape's lifetime; otherwise a freed address could be reused by a new
  // tensor and alias its node.
  std::unordered_map<const TensorData*, int> external_leaves_;
  std::vector<Tensor> pinned_leaves_;
};

// RAII activation of a tape for the current thread.
struct TapeScope {
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Disables recording within scope; ops execute as plain numerics.
struct NoGradScope {
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool prev_;
};

// Re-enables recording (used internally by the create_graph sweep).
struct RecordScope {
  explicit RecordScope(bool enabled);
  ~RecordScope();
  RecordScope(const RecordScope&) = delete;
  RecordScope& operator=(const RecordScope&) = delete;

 private:
  bool prev_;
};

bool recording_enabled();

// Convenience wrapper over Tape::gradients for the active tape.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                         bool create_graph = false);

}  // namespace reckon::ad
