#include "shortcutlab/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "shortcutlab/kernels.hpp"

namespace scl {

namespace {

struct Dims {
  std::size_t rows, cols;
  bool rank1;
};

Dims as_2d(const Tensor& t) {
  if (t.shape.size() == 1) return {1, t.shape[0], true};
  if (t.shape.size() == 2) return {t.shape[0], t.shape[1], false};
  throw std::invalid_argument("graph: expected rank 1 or 2 tensor, got " + shape_str(t.shape));
}

// log-sum-exp with max subtraction; also fills probs for the row.
double row_softmax(const double* x, std::size_t n, double* probs) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    probs[j] = std::exp(x[j] - mx);
    sum += probs[j];
  }
  double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) probs[j] *= inv;
  return mx + std::log(sum);
}

}  // namespace

const Tensor& GradMap::at(int id) const {
  if (id < 0 || id >= static_cast<int>(grads_.size())) {
    throw std::out_of_range("gradmap: node id " + std::to_string(id));
  }
  Tensor& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty() && graph_->value(id).numel() > 0) {
    g = Tensor::zeros(graph_->value(id).shape);
  }
  return g;
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Graph::Node& Graph::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("graph: node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

bool Graph::any_grad(std::initializer_list<int> ids) const {
  for (int id : ids) {
    if (id >= 0 && node(id).requires_grad) return true;
  }
  return false;
}

const Tensor& Graph::value(int id) const { return node(id).value; }
bool Graph::requires_grad(int id) const { return node(id).requires_grad; }

int Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::leaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

int Graph::affine(int x, int w, int b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  Dims xd = as_2d(xv);
  Dims wd = as_2d(wv);
  if (wd.cols != xd.cols) {
    throw std::invalid_argument("affine: weight " + shape_str(wv.shape) + " does not accept input " +
                                shape_str(xv.shape));
  }
  if (bv.numel() != wd.rows) {
    throw std::invalid_argument("affine: bias " + shape_str(bv.shape) + " does not match weight " +
                                shape_str(wv.shape));
  }
  std::size_t batch = xd.rows, n_in = xd.cols, n_out = wd.rows;

  Node n;
  n.kind = OpKind::affine;
  n.in = {x, w, b};
  n.requires_grad = any_grad({x, w, b});
  n.value = xd.rank1 ? Tensor::zeros({n_out}) : Tensor::zeros({batch, n_out});

  // Transposed weights make the forward product a saxpy loop; the copy is
  // cheap next to the product itself.
  std::vector<double> wt(n_in * n_out);
  kernels::transpose(wv.data.data(), wt.data(), n_out, n_in);
  kernels::matmul_nn(xv.data.data(), wt.data(), n.value.data.data(), batch, n_in, n_out);
  kernels::add_bias_rows(n.value.data.data(), bv.data.data(), n.value.data.data(), batch, n_out);
  return push(std::move(n));
}

int Graph::relu(int x) {
  const Tensor& xv = value(x);
  Node n;
  n.kind = OpKind::relu;
  n.in = {x, -1, -1};
  n.requires_grad = any_grad({x});
  n.value = Tensor::zeros(xv.shape);
  kernels::relu_forward(xv.data.data(), n.value.data.data(), xv.numel());
  return push(std::move(n));
}

int Graph::stop_grad(int x) {
  Node n;
  n.kind = OpKind::stop_grad;
  n.in = {x, -1, -1};
  n.requires_grad = false;
  n.value = value(x);  // bitwise copy of the forward value
  return push(std::move(n));
}

int Graph::slice_cols(int x, std::size_t start, std::size_t width) {
  const Tensor& xv = value(x);
  Dims xd = as_2d(xv);
  if (start + width > xd.cols) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " +
                                std::to_string(start + width) + ") exceeds " + shape_str(xv.shape));
  }
  Node n;
  n.kind = OpKind::slice_cols;
  n.in = {x, -1, -1};
  n.requires_grad = any_grad({x});
  n.i0 = start;
  n.i1 = width;
  n.value = xd.rank1 ? Tensor::zeros({width}) : Tensor::zeros({xd.rows, width});
  for (std::size_t i = 0; i < xd.rows; ++i) {
    const double* src = xv.data.data() + i * xd.cols + start;
    double* dst = n.value.data.data() + i * width;
    for (std::size_t j = 0; j < width; ++j) dst[j] = src[j];
  }
  return push(std::move(n));
}

int Graph::factor_mix(int z, int a, std::size_t groups, std::size_t dim) {
  const Tensor& zv = value(z);
  const Tensor& av = value(a);
  Dims zd = as_2d(zv);
  Dims ad = as_2d(av);
  if (zd.cols != groups * dim) {
    throw std::invalid_argument("factor_mix: input " + shape_str(zv.shape) + " is not " +
                                std::to_string(groups) + " blocks of " + std::to_string(dim));
  }
  if (ad.rows != groups) {
    throw std::invalid_argument("factor_mix: mixer rows " + shape_str(av.shape) +
                                " do not match block count " + std::to_string(groups));
  }
  std::size_t out_cols = ad.cols;
  Node n;
  n.kind = OpKind::factor_mix;
  n.in = {z, a, -1};
  n.requires_grad = any_grad({z, a});
  n.i0 = groups;
  n.i1 = dim;
  n.value = Tensor::zeros({zd.rows, out_cols * dim});
  for (std::size_t b = 0; b < zd.rows; ++b) {
    const double* zrow = zv.data.data() + b * zd.cols;
    double* yrow = n.value.data.data() + b * out_cols * dim;
    for (std::size_t c = 0; c < out_cols; ++c) {
      double* blk = yrow + c * dim;
      for (std::size_t k = 0; k < groups; ++k) {
        double w = av.at(k, c);
        const double* zblk = zrow + k * dim;
        for (std::size_t d = 0; d < dim; ++d) blk[d] += w * zblk[d];
      }
    }
  }
  return push(std::move(n));
}

int Graph::softmax_rows(int x) {
  const Tensor& xv = value(x);
  Dims xd = as_2d(xv);
  if (xd.cols == 0) throw std::invalid_argument("softmax: empty input");
  Node n;
  n.kind = OpKind::softmax_rows;
  n.in = {x, -1, -1};
  n.requires_grad = any_grad({x});
  n.value = Tensor::zeros(xv.shape);
  for (std::size_t i = 0; i < xd.rows; ++i) {
    row_softmax(xv.data.data() + i * xd.cols, xd.cols, n.value.data.data() + i * xd.cols);
  }
  return push(std::move(n));
}

int Graph::softmax_cols(int x) {
  const Tensor& xv = value(x);
  Dims xd = as_2d(xv);
  if (xd.rows == 0) throw std::invalid_argument("softmax_cols: empty input");
  Node n;
  n.kind = OpKind::softmax_cols;
  n.in = {x, -1, -1};
  n.requires_grad = any_grad({x});
  n.value = Tensor::zeros(xv.shape);
  std::vector<double> col(xd.rows), probs(xd.rows);
  for (std::size_t j = 0; j < xd.cols; ++j) {
    for (std::size_t i = 0; i < xd.rows; ++i) col[i] = xv.at(i, j);
    row_softmax(col.data(), xd.rows, probs.data());
    for (std::size_t i = 0; i < xd.rows; ++i) n.value.at(i, j) = probs[i];
  }
  return push(std::move(n));
}

int Graph::cross_entropy(int logits, std::vector<int> labels) {
  const Tensor& xv = value(logits);
  Dims xd = as_2d(xv);
  if (labels.size() != xd.rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(xd.rows) + " rows");
  }
  Node n;
  n.kind = OpKind::cross_entropy;
  n.in = {logits, -1, -1};
  n.requires_grad = any_grad({logits});
  n.saved = Tensor::zeros({xd.rows, xd.cols});
  double total = 0.0;
  for (std::size_t i = 0; i < xd.rows; ++i) {
    int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= xd.cols) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " out of range for " + std::to_string(xd.cols) + " classes");
    }
    const double* row = xv.data.data() + i * xd.cols;
    double lse = row_softmax(row, xd.cols, n.saved.data.data() + i * xd.cols);
    total += lse - row[static_cast<std::size_t>(label)];
  }
  n.value = Tensor::scalar(total / static_cast<double>(xd.rows));
  n.idata = std::move(labels);
  return push(std::move(n));
}

int Graph::cross_entropy_uniform(int logits) {
  const Tensor& xv = value(logits);
  Dims xd = as_2d(xv);
  if (xd.cols == 0) throw std::invalid_argument("cross_entropy_uniform: empty rows");
  Node n;
  n.kind = OpKind::cross_entropy_uniform;
  n.in = {logits, -1, -1};
  n.requires_grad = any_grad({logits});
  n.saved = Tensor::zeros({xd.rows, xd.cols});
  double total = 0.0;
  for (std::size_t i = 0; i < xd.rows; ++i) {
    const double* row = xv.data.data() + i * xd.cols;
    double lse = row_softmax(row, xd.cols, n.saved.data.data() + i * xd.cols);
    double mean_logit = 0.0;
    for (std::size_t j = 0; j < xd.cols; ++j) mean_logit += row[j];
    mean_logit /= static_cast<double>(xd.cols);
    total += lse - mean_logit;
  }
  n.value = Tensor::scalar(total / static_cast<double>(xd.rows));
  return push(std::move(n));
}

int Graph::entropy_cols(int a) {
  const Tensor& av = value(a);
  Node n;
  n.kind = OpKind::entropy_cols;
  n.in = {a, -1, -1};
  n.requires_grad = any_grad({a});
  double total = 0.0;
  for (double v : av.data) {
    if (v > 0.0) total -= v * std::log(v);
  }
  n.value = Tensor::scalar(total);
  return push(std::move(n));
}

int Graph::suppress_rows(int a, double tau) {
  const Tensor& av = value(a);
  Dims ad = as_2d(av);
  if (ad.cols < 2) {
    throw std::invalid_argument("suppress_rows: needs at least two columns, got " +
                                shape_str(av.shape));
  }
  Node n;
  n.kind = OpKind::suppress_rows;
  n.in = {a, -1, -1};
  n.requires_grad = any_grad({a});
  n.c0 = tau;
  n.idata.resize(ad.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < ad.rows; ++i) {
    const double* row = av.data.data() + i * ad.cols;
    std::size_t jmax = 0;
    for (std::size_t j = 1; j < ad.cols; ++j) {
      if (row[j] > row[jmax]) jmax = j;  // strict: ties keep the lowest index
    }
    if (row[jmax] > tau) {
      double rest = 0.0;
      for (std::size_t j = 0; j < ad.cols; ++j) {
        if (j != jmax) rest += row[j];
      }
      total += rest * (row[jmax] - tau);
      n.idata[i] = static_cast<int>(jmax);
    } else {
      n.idata[i] = -1;  // below threshold: no contribution
    }
  }
  n.value = Tensor::scalar(total);
  return push(std::move(n));
}

int Graph::mul(int a, int b) {
  const Tensor& avv = value(a);
  const Tensor& bvv = value(b);
  require_same_shape(avv, bvv, "mul");
  Node n;
  n.kind = OpKind::mul;
  n.in = {a, b, -1};
  n.requires_grad = any_grad({a, b});
  n.value = Tensor::zeros(avv.shape);
  for (std::size_t i = 0; i < avv.numel(); ++i) n.value.data[i] = avv.data[i] * bvv.data[i];
  return push(std::move(n));
}

int Graph::lincomb(std::vector<int> xs, std::vector<double> coeffs) {
  if (xs.empty() || xs.size() != coeffs.size()) {
    throw std::invalid_argument("lincomb: " + std::to_string(xs.size()) + " terms vs " +
                                std::to_string(coeffs.size()) + " coefficients");
  }
  const Tensor& first = value(xs[0]);
  for (std::size_t t = 1; t < xs.size(); ++t) {
    require_same_shape(first, value(xs[t]), "lincomb");
  }
  Node n;
  n.kind = OpKind::lincomb;
  n.requires_grad = false;
  for (int id : xs) n.requires_grad = n.requires_grad || node(id).requires_grad;
  n.value = Tensor::zeros(first.shape);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Tensor& xv = value(xs[t]);
    double c = coeffs[t];
    for (std::size_t i = 0; i < xv.numel(); ++i) n.value.data[i] += c * xv.data[i];
  }
  n.extra_in = std::move(xs);
  n.coeffs = std::move(coeffs);
  return push(std::move(n));
}

int Graph::sum_all(int x) {
  const Tensor& xv = value(x);
  Node n;
  n.kind = OpKind::sum_all;
  n.in = {x, -1, -1};
  n.requires_grad = any_grad({x});
  double total = 0.0;
  for (double v : xv.data) total += v;
  n.value = Tensor::scalar(total);
  return push(std::move(n));
}

GradMap Graph::backward(int loss) const {
  const Node& top = node(loss);
  if (!top.value.is_scalar()) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(top.value.shape));
  }
  GradMap out;
  out.graph_ = this;
  out.grads_.resize(nodes_.size());
  auto& g = out.grads_;

  auto accum = [&](int id) -> Tensor& {
    Tensor& t = g[static_cast<std::size_t>(id)];
    if (t.empty()) t = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape);
    return t;
  };

  accum(loss).data[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& gy = g[static_cast<std::size_t>(id)];
    if (!n.requires_grad || gy.empty()) continue;

    switch (n.kind) {
      case OpKind::leaf:
      case OpKind::stop_grad:
        break;

      case OpKind::affine: {
        const Tensor& xv = value(n.in[0]);
        const Tensor& wv = value(n.in[1]);
        Dims xd = as_2d(xv);
        std::size_t n_out = wv.shape[0], n_in = wv.shape[1];
        if (requires_grad(n.in[0])) {
          Tensor& gx = accum(n.in[0]);
          std::vector<double> tmp(xd.rows * n_in);
          kernels::matmul_nn(gy.data.data(), wv.data.data(), tmp.data(), xd.rows, n_out, n_in);
          kernels::add_accum(tmp.data(), gx.data.data(), tmp.size());
        }
        if (requires_grad(n.in[1])) {
          Tensor& gw = accum(n.in[1]);
          std::vector<double> tmp(n_out * n_in);
          kernels::matmul_tn(gy.data.data(), xv.data.data(), tmp.data(), xd.rows, n_out, n_in);
          kernels::add_accum(tmp.data(), gw.data.data(), tmp.size());
        }
        if (requires_grad(n.in[2])) {
          Tensor& gb = accum(n.in[2]);
          std::vector<double> tmp(n_out);
          kernels::colsum(gy.data.data(), tmp.data(), xd.rows, n_out);
          for (std::size_t j = 0; j < n_out; ++j) gb.data[j] += tmp[j];
        }
        break;
      }

      case OpKind::relu: {
        const Tensor& xv = value(n.in[0]);
        Tensor& gx = accum(n.in[0]);
        kernels::relu_backward_accum(xv.data.data(), gy.data.data(), gx.data.data(), xv.numel());
        break;
      }

      case OpKind::slice_cols: {
        const Tensor& xv = value(n.in[0]);
        Dims xd = as_2d(xv);
        Tensor& gx = accum(n.in[0]);
        for (std::size_t i = 0; i < xd.rows; ++i) {
          const double* src = gy.data.data() + i * n.i1;
          double* dst = gx.data.data() + i * xd.cols + n.i0;
          for (std::size_t j = 0; j < n.i1; ++j) dst[j] += src[j];
        }
        break;
      }

      case OpKind::factor_mix: {
        const Tensor& zv = value(n.in[0]);
        const Tensor& av = value(n.in[1]);
        std::size_t groups = n.i0, dim = n.i1;
        std::size_t out_cols = as_2d(av).cols;
        std::size_t rows = as_2d(zv).rows;
        bool need_z = requires_grad(n.in[0]);
        bool need_a = requires_grad(n.in[1]);
        Tensor* gz = need_z ? &accum(n.in[0]) : nullptr;
        Tensor* ga = need_a ? &accum(n.in[1]) : nullptr;
        for (std::size_t b = 0; b < rows; ++b) {
          const double* zrow = zv.data.data() + b * groups * dim;
          const double* grow = gy.data.data() + b * out_cols * dim;
          for (std::size_t c = 0; c < out_cols; ++c) {
            const double* gblk = grow + c * dim;
            for (std::size_t k = 0; k < groups; ++k) {
              if (need_z) {
                double w = av.at(k, c);
                double* zg = gz->data.data() + b * groups * dim + k * dim;
                for (std::size_t d = 0; d < dim; ++d) zg[d] += w * gblk[d];
              }
              if (need_a) {
                const double* zblk = zrow + k * dim;
                double s = 0.0;
                for (std::size_t d = 0; d < dim; ++d) s += zblk[d] * gblk[d];
                ga->data[k * out_cols + c] += s;
              }
            }
          }
        }
        break;
      }

      case OpKind::softmax_rows: {
        const Tensor& p = n.value;
        Dims pd = as_2d(p);
        Tensor& gx = accum(n.in[0]);
        for (std::size_t i = 0; i < pd.rows; ++i) {
          const double* pr = p.data.data() + i * pd.cols;
          const double* gr = gy.data.data() + i * pd.cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < pd.cols; ++j) dot += pr[j] * gr[j];
          double* xr = gx.data.data() + i * pd.cols;
          for (std::size_t j = 0; j < pd.cols; ++j) xr[j] += pr[j] * (gr[j] - dot);
        }
        break;
      }

      case OpKind::softmax_cols: {
        const Tensor& p = n.value;
        Dims pd = as_2d(p);
        Tensor& gx = accum(n.in[0]);
        for (std::size_t j = 0; j < pd.cols; ++j) {
          double dot = 0.0;
          for (std::size_t i = 0; i < pd.rows; ++i) dot += p.at(i, j) * gy.at(i, j);
          for (std::size_t i = 0; i < pd.rows; ++i) {
            gx.at(i, j) += p.at(i, j) * (gy.at(i, j) - dot);
          }
        }
        break;
      }

      case OpKind::cross_entropy: {
        const Tensor& p = n.saved;
        std::size_t rows = p.shape[0], cols = p.shape[1];
        double gscale = gy.data[0] / static_cast<double>(rows);
        Tensor& gx = accum(n.in[0]);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* pr = p.data.data() + i * cols;
          double* xr = gx.data.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) xr[j] += gscale * pr[j];
          xr[static_cast<std::size_t>(n.idata[i])] -= gscale;
        }
        break;
      }

      case OpKind::cross_entropy_uniform: {
        const Tensor& p = n.saved;
        std::size_t rows = p.shape[0], cols = p.shape[1];
        double gscale = gy.data[0] / static_cast<double>(rows);
        double unif = 1.0 / static_cast<double>(cols);
        Tensor& gx = accum(n.in[0]);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* pr = p.data.data() + i * cols;
          double* xr = gx.data.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) xr[j] += gscale * (pr[j] - unif);
        }
        break;
      }

      case OpKind::entropy_cols: {
        const Tensor& av = value(n.in[0]);
        Tensor& ga = accum(n.in[0]);
        double gs = gy.data[0];
        for (std::size_t i = 0; i < av.numel(); ++i) {
          if (av.data[i] > 0.0) ga.data[i] += gs * (-std::log(av.data[i]) - 1.0);
        }
        break;
      }

      case OpKind::suppress_rows: {
        const Tensor& av = value(n.in[0]);
        Dims ad = as_2d(av);
        Tensor& ga = accum(n.in[0]);
        double gs = gy.data[0];
        for (std::size_t i = 0; i < ad.rows; ++i) {
          int jmax = n.idata[i];
          if (jmax < 0) continue;
          double factor = av.at(i, static_cast<std::size_t>(jmax)) - n.c0;
          for (std::size_t j = 0; j < ad.cols; ++j) {
            if (j != static_cast<std::size_t>(jmax)) ga.at(i, j) += gs * factor;
          }
        }
        break;
      }

      case OpKind::mul: {
        const Tensor& avv = value(n.in[0]);
        const Tensor& bvv = value(n.in[1]);
        if (requires_grad(n.in[0])) {
          Tensor& ga = accum(n.in[0]);
          for (std::size_t i = 0; i < avv.numel(); ++i) ga.data[i] += gy.data[i] * bvv.data[i];
        }
        if (requires_grad(n.in[1])) {
          Tensor& gb = accum(n.in[1]);
          for (std::size_t i = 0; i < avv.numel(); ++i) gb.data[i] += gy.data[i] * avv.data[i];
        }
        break;
      }

      case OpKind::lincomb: {
        for (std::size_t t = 0; t < n.extra_in.size(); ++t) {
          int src = n.extra_in[t];
          if (!requires_grad(src)) continue;
          Tensor& gx = accum(src);
          double c = n.coeffs[t];
          for (std::size_t i = 0; i < gy.numel(); ++i) gx.data[i] += c * gy.data[i];
        }
        break;
      }

      case OpKind::sum_all: {
        Tensor& gx = accum(n.in[0]);
        double gs = gy.data[0];
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gs;
        break;
      }
    }
  }
  return out;
}

}  // namespace scl
