#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "shortcutlab/tensor.hpp"

namespace scl {

enum class OpKind : unsigned char {
  leaf,
  affine,
  relu,
  stop_grad,
  slice_cols,
  factor_mix,
  softmax_rows,
  softmax_cols,
  cross_entropy,
  cross_entropy_uniform,
  entropy_cols,
  suppress_rows,
  mul,
  lincomb,
  sum_all,
};

class Graph;

/// Result of a backward pass: gradient tensors keyed by node id. Nodes never
/// reached by the sweep report a zero tensor of the node's shape.
class GradMap {
 public:
  const Tensor& at(int id) const;
  bool reached(int id) const { return id >= 0 && id < static_cast<int>(grads_.size()) &&
                                      !grads_[static_cast<std::size_t>(id)].empty(); }

 private:
  friend class Graph;
  const Graph* graph_ = nullptr;
  mutable std::vector<Tensor> grads_;
};

/// Append-only tape of operations. Inputs always precede outputs, so the tape
/// order is a topological order and one reverse sweep computes all gradients.
/// A graph is built per minibatch and discarded; tensors placed on it are
/// never mutated afterwards.
class Graph {
 public:
  int leaf(Tensor value, bool requires_grad = false);

  /// x (B x n_in) or (n_in) times W^T plus bias; W is (n_out x n_in).
  int affine(int x, int w, int b);
  int relu(int x);

  /// Forward identity; backward contributes nothing upstream through this edge.
  int stop_grad(int x);

  int slice_cols(int x, std::size_t start, std::size_t width);

  /// z (B x groups*dim) mixed by a (groups x c): out column block j is
  /// sum_k a[k][j] * z block k.
  int factor_mix(int z, int a, std::size_t groups, std::size_t dim);

  int softmax_rows(int x);
  int softmax_cols(int x);

  /// Mean over rows of -log softmax(row)[label]. A rank-1 input is one row.
  int cross_entropy(int logits, std::vector<int> labels);

  /// Mean over rows of -(1/N) * sum_j log softmax(row)[j].
  int cross_entropy_uniform(int logits);

  /// sum over entries of -a*ln(a), with 0*ln(0) taken as 0.
  int entropy_cols(int a);

  /// Row-wise suppression: rows whose max exceeds tau contribute
  /// (sum of the other entries) * (max - tau); the max entry is treated as a
  /// constant, so gradient lands only on the non-max entries. Ties pick the
  /// lowest index.
  int suppress_rows(int a, double tau);

  int mul(int a, int b);
  int lincomb(std::vector<int> xs, std::vector<double> coeffs);
  int add(int a, int b) { return lincomb({a, b}, {1.0, 1.0}); }
  int scale(int x, double c) { return lincomb({x}, {c}); }
  int sum_all(int x);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Throws std::invalid_argument when the
  /// loss is not a scalar.
  GradMap backward(int loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    bool requires_grad = false;
    std::array<int, 3> in{-1, -1, -1};
    std::vector<int> extra_in;
    Tensor value;
    Tensor saved;               // softmax probabilities etc.
    std::vector<int> idata;     // labels / row argmax
    std::vector<double> coeffs;
    double c0 = 0.0;
    std::size_t i0 = 0, i1 = 0;
  };

  int push(Node n);
  const Node& node(int id) const;
  bool any_grad(std::initializer_list<int> ids) const;

  std::vector<Node> nodes_;
};

}  // namespace scl
