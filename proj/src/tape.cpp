#include "reckon/tape.hpp"

#include <stdexcept>

#include "reckon/ops.hpp"

namespace reckon::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_recording = true;
}  // namespace

Tape* Tape::active() { return g_active_tape; }

bool recording_enabled() { return g_recording && g_active_tape != nullptr; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_recording) { g_recording = false; }
NoGradScope::~NoGradScope() { g_recording = prev_; }

RecordScope::RecordScope(bool enabled) : prev_(g_recording) { g_recording = enabled; }
RecordScope::~RecordScope() { g_recording = prev_; }

int Tape::record(const char* op, std::vector<int> inputs, BackwardFn backward) {
  TapeNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf_id_for(const Tensor& t) {
  auto it = external_leaves_.find(t.identity());
  if (it != external_leaves_.end()) return it->second;
  int id = record("leaf", {}, nullptr);
  external_leaves_.emplace(t.identity(), id);
  pinned_leaves_.push_back(t);
  return id;
}

int Tape::input_id(const Tensor& t) {
  if (t.owner() == this && t.node() >= 0) return t.node();
  return leaf_id_for(t);
}

int Tape::node_id_of(const Tensor& t) const {
  if (t.owner() == this && t.node() >= 0) return t.node();
  auto it = external_leaves_.find(t.identity());
  if (it != external_leaves_.end()) return it->second;
  return -1;
}

std::vector<Tensor> Tape::gradients(const Tensor& output, std::span<const Tensor> wrt,
                                    bool create_graph) {
  if (!output.defined() || output.ndim() != 0) {
    throw std::runtime_error("grad: output must be a rank-0 tensor");
  }
  int root = node_id_of(output);
  if (root < 0) {
    if (output.owner() != nullptr) {
      throw std::runtime_error("grad: output is not on this tape");
    }
    // A plain constant: nothing depends on the parameters.
    std::vector<Tensor> zeros;
    zeros.reserve(wrt.size());
    for (const Tensor& t : wrt) zeros.push_back(Tensor::zeros(t.shape()));
    return zeros;
  }

  // Mark ancestors of the root.
  std::vector<char> marked(static_cast<size_t>(root) + 1, 0);
  {
    std::vector<int> stack{root};
    marked[static_cast<size_t>(root)] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int in : nodes_[static_cast<size_t>(id)].inputs) {
        if (!marked[static_cast<size_t>(in)]) {
          marked[static_cast<size_t>(in)] = 1;
          stack.push_back(in);
        }
      }
    }
  }

  std::vector<Tensor> adjoint(static_cast<size_t>(root) + 1);
  adjoint[static_cast<size_t>(root)] = Tensor::scalar(1.0);

  // Adjoints requested by the caller must survive the sweep.
  std::vector<char> keep(static_cast<size_t>(root) + 1, 0);
  for (const Tensor& t : wrt) {
    int id = node_id_of(t);
    if (id >= 0 && id <= root) keep[static_cast<size_t>(id)] = 1;
  }

  {
    // Backward closures replay through the op layer; recording is on only
    // when the caller wants the gradients differentiable again.
    TapeScope scope(*this);
    RecordScope rec(create_graph);
    for (int id = root; id >= 0; --id) {
      if (!marked[static_cast<size_t>(id)]) continue;
      TapeNode& n = nodes_[static_cast<size_t>(id)];
      if (n.inputs.empty()) continue;  // leaf
      Tensor& gout = adjoint[static_cast<size_t>(id)];
      if (!gout.defined()) continue;  // no path to root contributed
      if (n.consumed) {
        throw std::runtime_error(
            std::string("grad: tape already consumed at op '") + n.op +
            "' (backward without create_graph releases saved state)");
      }
      std::vector<Tensor> gins = n.backward(gout);
      for (size_t k = 0; k < n.inputs.size(); ++k) {
        if (!gins[k].defined()) continue;
        Tensor& slot = adjoint[static_cast<size_t>(n.inputs[k])];
        slot = slot.defined() ? add(slot, gins[k]) : gins[k];
      }
      if (!create_graph) {
        n.backward = nullptr;
        n.consumed = true;
      }
      if (!keep[static_cast<size_t>(id)]) gout = Tensor();  // drop intermediate adjoints
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Tensor& t : wrt) {
    int id = node_id_of(t);
    if (id >= 0 && id <= root && adjoint[static_cast<size_t>(id)].defined()) {
      result.push_back(adjoint[static_cast<size_t>(id)]);
    } else {
      // Parameters the graph never reached get explicit zero gradients.
      result.push_back(Tensor::zeros(t.shape()));
    }
  }
  return result;
}

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, bool create_graph) {
  Tape* tape = Tape::active();
  if (!tape) throw std::runtime_error("grad: no active tape");
  return tape->gradients(output, wrt, create_graph);
}

}  // namespace reckon::ad
