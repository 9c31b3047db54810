#pragma once

#include <vector>

#include "tprf/mat.hpp"
#include "tprf/rng.hpp"

namespace tprf {

// Define-by-run reverse-mode tape over the fixed operation set the
// encoder and its loss need. Values are computed eagerly at node
// creation; backward() walks the recorded graph once in reverse and
// accumulates adjoints. Deliberately small and auditable rather than a
// general autodiff framework.
class Tape {
 public:
  // Leaf owning a copy of a constant tensor.
  int leaf(Mat value);
  // Leaf borrowing an external tensor (typically a parameter matrix);
  // the referenced Mat must outlive the tape. Avoids copying the full
  // weight set into every forward pass.
  int leaf_ref(const Mat& external);

  int matmul(int a, int b);     // A * B
  int matmul_nt(int a, int b);  // A * B^T
  int add(int a, int b);
  int add_row(int a, int row);  // broadcast a 1 x cols row over every row of a
  int relu(int a);
  int scale(int a, double s);
  int softmax_rows(int a);
  // Per-row layer norm with learnable gain/bias (1 x cols each).
  int layer_norm(int x, int gain, int bias);
  int slice_cols(int a, int col0, int ncols);
  int concat_cols(const std::vector<int>& parts);
  // Inverted dropout: zero with probability p, scale kept entries by 1/(1-p).
  int dropout(int a, double p, Rng& rng);
  int take_row(int a, int r);
  int mean_rows(int a);
  // Scalar cross-entropy: scores is 1 x m, the correct class is index 0.
  // Computes -log softmax(scores)[0] with max-subtraction stabilization.
  int softmax_xent0(int scores);

  const Mat& value(int node) const {
    const Node& n = nodes_[node];
    return n.ref ? *n.ref : n.val;
  }

  // Seeds the adjoint of `node` (which must be 1x1) with 1 and
  // propagates to every node it depends on.
  void backward(int node);

  // Adjoint of a node after backward(); zero matrix if the node does
  // not influence the differentiated output.
  const Mat& grad(int node);

  size_t node_count() const { return nodes_.size(); }

  static constexpr double kLayerNormEps = 1e-5;

 private:
  enum class Op {
    Leaf,
    MatMul,
    MatMulNT,
    Add,
    AddRow,
    Relu,
    Scale,
    SoftmaxRows,
    LayerNorm,
    SliceCols,
    ConcatCols,
    Dropout,
    TakeRow,
    MeanRows,
    SoftmaxXent0,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> list;
    double scalar = 0.0;
    int i0 = 0, i1 = 0;
    Mat val;
    const Mat* ref = nullptr;  // borrowed leaf value, overrides val
    Mat aux;                   // op-specific cache (mask, softmax, normalized rows)
    std::vector<double> auxv;  // op-specific cache (inverse std per row)
  };

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Mat& adjoint(int node);

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
};

}  // namespace tprf
