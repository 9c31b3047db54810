#include "tprf/tape.hpp"

#include <algorithm>
#include <cmath>

#include "tprf/errors.hpp"

namespace tprf {

int Tape::leaf(Mat value) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(value);
  return push(std::move(n));
}

int Tape::leaf_ref(const Mat& external) {
  Node n;
  n.op = Op::Leaf;
  n.ref = &external;
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  if (value(a).cols != value(b).rows) throw_validation("matmul shape mismatch");
  n.val = tprf::matmul(value(a), value(b));
  return push(std::move(n));
}

int Tape::matmul_nt(int a, int b) {
  Node n;
  n.op = Op::MatMulNT;
  n.a = a;
  n.b = b;
  if (value(a).cols != value(b).cols) throw_validation("matmul_nt shape mismatch");
  n.val = tprf::matmul_nt(value(a), value(b));
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  if (!value(a).same_shape(value(b))) throw_validation("add shape mismatch");
  n.val = value(a);
  add_inplace(n.val, value(b));
  return push(std::move(n));
}

int Tape::add_row(int a, int row) {
  Node n;
  n.op = Op::AddRow;
  n.a = a;
  n.b = row;
  const Mat& x = value(a);
  const Mat& r = value(row);
  if (r.rows != 1 || r.cols != x.cols) throw_validation("add_row shape mismatch");
  n.val = x;
  for (int i = 0; i < x.rows; ++i) {
    double* out = n.val.row(i);
    for (int j = 0; j < x.cols; ++j) out[j] += r.a[j];
  }
  return push(std::move(n));
}

int Tape::relu(int a) {
  Node n;
  n.op = Op::Relu;
  n.a = a;
  n.val = value(a);
  for (double& v : n.val.a) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

int Tape::scale(int a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.scalar = s;
  n.val = value(a);
  scale_inplace(n.val, s);
  return push(std::move(n));
}

int Tape::softmax_rows(int a) {
  Node n;
  n.op = Op::SoftmaxRows;
  n.a = a;
  const Mat& x = value(a);
  n.val = Mat(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* in = x.row(i);
    double* out = n.val.row(i);
    double mx = in[0];
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < x.cols; ++j) out[j] *= inv;
  }
  return push(std::move(n));
}

int Tape::layer_norm(int x, int gain, int bias) {
  Node n;
  n.op = Op::LayerNorm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  const Mat& in = value(x);
  const Mat& g = value(gain);
  const Mat& b = value(bias);
  if (g.rows != 1 || g.cols != in.cols || b.rows != 1 || b.cols != in.cols)
    throw_validation("layer_norm gain/bias shape mismatch");
  n.val = Mat(in.rows, in.cols);
  n.aux = Mat(in.rows, in.cols);  // normalized pre-gain activations
  n.auxv.resize(in.rows);         // 1 / sqrt(var + eps) per row
  const int d = in.cols;
  for (int i = 0; i < in.rows; ++i) {
    const double* row = in.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    n.auxv[i] = inv_std;
    double* hat = n.aux.row(i);
    double* out = n.val.row(i);
    for (int j = 0; j < d; ++j) {
      hat[j] = (row[j] - mean) * inv_std;
      out[j] = hat[j] * g.a[j] + b.a[j];
    }
  }
  return push(std::move(n));
}

int Tape::slice_cols(int a, int col0, int ncols) {
  Node n;
  n.op = Op::SliceCols;
  n.a = a;
  n.i0 = col0;
  n.i1 = ncols;
  const Mat& x = value(a);
  if (col0 < 0 || ncols <= 0 || col0 + ncols > x.cols) throw_validation("slice_cols out of range");
  n.val = Mat(x.rows, ncols);
  for (int i = 0; i < x.rows; ++i) {
    const double* in = x.row(i) + col0;
    std::copy(in, in + ncols, n.val.row(i));
  }
  return push(std::move(n));
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw_validation("concat_cols needs at least one input");
  Node n;
  n.op = Op::ConcatCols;
  n.list = parts;
  const int rows = value(parts[0]).rows;
  int cols = 0;
  for (int p : parts) {
    if (value(p).rows != rows) throw_validation("concat_cols row mismatch");
    cols += value(p).cols;
  }
  n.val = Mat(rows, cols);
  int off = 0;
  for (int p : parts) {
    const Mat& x = value(p);
    for (int i = 0; i < rows; ++i)
      std::copy(x.row(i), x.row(i) + x.cols, n.val.row(i) + off);
    off += x.cols;
  }
  return push(std::move(n));
}

int Tape::dropout(int a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw_validation("dropout probability must be in [0, 1)");
  Node n;
  n.op = Op::Dropout;
  n.a = a;
  const Mat& x = value(a);
  n.aux = Mat(x.rows, x.cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : n.aux.a) m = rng.uniform() < p ? 0.0 : keep_scale;
  n.val = x;
  for (size_t i = 0; i < n.val.a.size(); ++i) n.val.a[i] *= n.aux.a[i];
  return push(std::move(n));
}

int Tape::take_row(int a, int r) {
  Node n;
  n.op = Op::TakeRow;
  n.a = a;
  n.i0 = r;
  const Mat& x = value(a);
  if (r < 0 || r >= x.rows) throw_validation("take_row out of range");
  n.val = Mat(1, x.cols);
  std::copy(x.row(r), x.row(r) + x.cols, n.val.row(0));
  return push(std::move(n));
}

int Tape::mean_rows(int a) {
  Node n;
  n.op = Op::MeanRows;
  n.a = a;
  const Mat& x = value(a);
  n.val = Mat(1, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) n.val.a[j] += x.at(i, j);
  const double inv = 1.0 / x.rows;
  for (double& v : n.val.a) v *= inv;
  return push(std::move(n));
}

int Tape::softmax_xent0(int scores) {
  Node n;
  n.op = Op::SoftmaxXent0;
  n.a = scores;
  const Mat& s = value(scores);
  if (s.rows != 1 || s.cols < 2)
    throw_validation("softmax_xent0 expects a 1 x m score row with m >= 2");
  double mx = s.a[0];
  for (double v : s.a) mx = std::max(mx, v);
  double sum = 0.0;
  n.aux = Mat(1, s.cols);
  for (int j = 0; j < s.cols; ++j) {
    n.aux.a[j] = std::exp(s.a[j] - mx);
    sum += n.aux.a[j];
  }
  const double inv = 1.0 / sum;
  for (double& v : n.aux.a) v *= inv;  // cached softmax
  n.val = Mat(1, 1);
  n.val.a[0] = -(s.a[0] - mx - std::log(sum));
  return push(std::move(n));
}

Mat& Tape::adjoint(int node) {
  Mat& g = grads_[node];
  if (g.rows == 0) {
    const Mat& v = value(node);
    g = Mat(v.rows, v.cols);
  }
  return g;
}

void Tape::backward(int node) {
  const Mat& out = value(node);
  if (out.rows != 1 || out.cols != 1)
    throw_validation("backward seed must be a scalar node");
  grads_.assign(nodes_.size(), Mat());
  adjoint(node).a[0] = 1.0;

  for (int i = node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (grads_[i].rows == 0) continue;  // not on the path to the output
    const Mat& g = grads_[i];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        // dA += G * B^T ; dB += A^T * G
        add_inplace(adjoint(n.a), tprf::matmul_nt(g, value(n.b)));
        add_inplace(adjoint(n.b), tprf::matmul_tn(value(n.a), g));
        break;
      }
      case Op::MatMulNT: {
        // C = A * B^T : dA += G * B ; dB += G^T * A
        add_inplace(adjoint(n.a), tprf::matmul(g, value(n.b)));
        add_inplace(adjoint(n.b), tprf::matmul_tn(g, value(n.a)));
        break;
      }
      case Op::Add:
        add_inplace(adjoint(n.a), g);
        add_inplace(adjoint(n.b), g);
        break;
      case Op::AddRow: {
        add_inplace(adjoint(n.a), g);
        Mat& gb = adjoint(n.b);
        for (int r = 0; r < g.rows; ++r)
          for (int j = 0; j < g.cols; ++j) gb.a[j] += g.at(r, j);
        break;
      }
      case Op::Relu: {
        Mat& ga = adjoint(n.a);
        const Mat& x = value(n.a);
        for (size_t j = 0; j < x.a.size(); ++j)
          if (x.a[j] > 0.0) ga.a[j] += g.a[j];
        break;
      }
      case Op::Scale: {
        Mat& ga = adjoint(n.a);
        for (size_t j = 0; j < g.a.size(); ++j) ga.a[j] += n.scalar * g.a[j];
        break;
      }
      case Op::SoftmaxRows: {
        // dx = y .* (g - <g, y>) per row
        Mat& ga = adjoint(n.a);
        for (int r = 0; r < g.rows; ++r) {
          const double* y = n.val.row(r);
          const double* gr = g.row(r);
          double dot = 0.0;
          for (int j = 0; j < g.cols; ++j) dot += gr[j] * y[j];
          double* out_row = ga.row(r);
          for (int j = 0; j < g.cols; ++j) out_row[j] += y[j] * (gr[j] - dot);
        }
        break;
      }
      case Op::LayerNorm: {
        const Mat& gain = value(n.b);
        Mat& gx = adjoint(n.a);
        Mat& gg = adjoint(n.b);
        Mat& gb = adjoint(n.c);
        const int d = g.cols;
        for (int r = 0; r < g.rows; ++r) {
          const double* gr = g.row(r);
          const double* hat = n.aux.row(r);
          const double inv_std = n.auxv[r];
          double sum_u = 0.0, sum_uh = 0.0;
          for (int j = 0; j < d; ++j) {
            const double u = gr[j] * gain.a[j];
            sum_u += u;
            sum_uh += u * hat[j];
          }
          const double mean_u = sum_u / d;
          const double mean_uh = sum_uh / d;
          double* gxr = gx.row(r);
          for (int j = 0; j < d; ++j) {
            const double u = gr[j] * gain.a[j];
            gxr[j] += inv_std * (u - mean_u - hat[j] * mean_uh);
            gg.a[j] += gr[j] * hat[j];
            gb.a[j] += gr[j];
          }
        }
        break;
      }
      case Op::SliceCols: {
        Mat& ga = adjoint(n.a);
        for (int r = 0; r < g.rows; ++r) {
          double* dst = ga.row(r) + n.i0;
          const double* src = g.row(r);
          for (int j = 0; j < n.i1; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int p : n.list) {
          Mat& gp = adjoint(p);
          for (int r = 0; r < g.rows; ++r) {
            const double* src = g.row(r) + off;
            double* dst = gp.row(r);
            for (int j = 0; j < gp.cols; ++j) dst[j] += src[j];
          }
          off += gp.cols;
        }
        break;
      }
      case Op::Dropout: {
        Mat& ga = adjoint(n.a);
        for (size_t j = 0; j < g.a.size(); ++j) ga.a[j] += g.a[j] * n.aux.a[j];
        break;
      }
      case Op::TakeRow: {
        Mat& ga = adjoint(n.a);
        double* dst = ga.row(n.i0);
        for (int j = 0; j < g.cols; ++j) dst[j] += g.a[j];
        break;
      }
      case Op::MeanRows: {
        Mat& ga = adjoint(n.a);
        const double inv = 1.0 / ga.rows;
        for (int r = 0; r < ga.rows; ++r) {
          double* dst = ga.row(r);
          for (int j = 0; j < g.cols; ++j) dst[j] += g.a[j] * inv;
        }
        break;
      }
      case Op::SoftmaxXent0: {
        // dscores = softmax(scores) - onehot(0), scaled by the scalar adjoint.
        Mat& ga = adjoint(n.a);
        const double s = g.a[0];
        for (int j = 0; j < ga.cols; ++j) ga.a[j] += s * n.aux.a[j];
        ga.a[0] -= s;
        break;
      }
    }
  }
}

const Mat& Tape::grad(int node) {
  if (grads_.size() != nodes_.size())
    throw_validation("grad() called before backward()");
  return adjoint(node);
}

}  // namespace tprf
