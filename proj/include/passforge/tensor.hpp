#pragma once

// Dense matrices with a reverse-mode tape.
//
// A Tape records every operation of one forward pass. Leaves are either
// constants or Parameters; backward() walks the tape in reverse and adds
// the gradients of leaf parameters into Parameter::grad.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "passforge/error.hpp"

namespace passforge::tensor {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Parameter() = default;
  Parameter(std::string n, Mat<T> v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }
  void zero_grad() { grad = Mat<T>::Zero(value.rows(), value.cols()); }
};

template <class T>
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Mat<T> v) { return push(std::move(v), nullptr); }

  Var param(Parameter<T>& p) {
    Var v = push(p.value, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  const Mat<T>& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into every reachable parameter. The loss
  // must be 1x1.
  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1) throw InputError("backward needs a scalar loss");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    grad(loss) = Mat<T>::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // -------------------------------------------------------------------------
  // Operations

  Var matmul(Var a, Var b) {
    const Mat<T>& A = value(a);
    const Mat<T>& B = value(b);
    if (A.cols() != B.rows()) throw InputError("matmul: inner dimensions differ");
    Mat<T> out = A * B;
    return push(std::move(out), [a, b](Tape& t, const Mat<T>& g) {
      t.grad(a).noalias() += g * t.value(b).transpose();
      t.grad(b).noalias() += t.value(a).transpose() * g;
    });
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Mat<T> out = value(a) + value(b);
    return push(std::move(out), [a, b](Tape& t, const Mat<T>& g) {
      t.grad(a) += g;
      t.grad(b) += g;
    });
  }

  // x (r x c) plus a 1 x c row added to every row.
  Var add_row(Var x, Var row) {
    const Mat<T>& X = value(x);
    const Mat<T>& R = value(row);
    if (R.rows() != 1 || R.cols() != X.cols()) throw InputError("add_row: bias shape mismatch");
    Mat<T> out = X.rowwise() + R.row(0);
    return push(std::move(out), [x, row](Tape& t, const Mat<T>& g) {
      t.grad(x) += g;
      t.grad(row) += g.colwise().sum();
    });
  }

  Var scale(Var x, T s) {
    Mat<T> out = value(x) * s;
    return push(std::move(out), [x, s](Tape& t, const Mat<T>& g) { t.grad(x) += g * s; });
  }

  Var sum(Var x) {
    Mat<T> out(1, 1);
    out(0, 0) = value(x).sum();
    return push(std::move(out), [x](Tape& t, const Mat<T>& g) { t.grad(x).array() += g(0, 0); });
  }

  Var relu(Var x) {
    Mat<T> out = value(x).cwiseMax(T(0));
    return push(std::move(out), [x](Tape& t, const Mat<T>& g) {
      t.grad(x).array() += g.array() * (t.value(x).array() > T(0)).template cast<T>();
    });
  }

  Var elu(Var x) {
    const Mat<T>& X = value(x);
    Mat<T> out = X.unaryExpr([](T v) { return v > T(0) ? v : std::expm1(v); });
    return push(std::move(out), [x](Tape& t, const Mat<T>& g) {
      const Mat<T>& X = t.value(x);
      t.grad(x).array() += g.array() * X.unaryExpr([](T v) { return v > T(0) ? T(1) : std::exp(v); }).array();
    });
  }

  // Elementwise x * y.
  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    Mat<T> out = value(a).cwiseProduct(value(b));
    return push(std::move(out), [a, b](Tape& t, const Mat<T>& g) {
      t.grad(a) += g.cwiseProduct(t.value(b));
      t.grad(b) += g.cwiseProduct(t.value(a));
    });
  }

  // Row r of x multiplied by w(r, 0).
  Var row_scale(Var x, Var w) {
    const Mat<T>& X = value(x);
    const Mat<T>& W = value(w);
    if (W.cols() != 1 || W.rows() != X.rows()) throw InputError("row_scale: weight shape mismatch");
    Mat<T> out = X.array().colwise() * W.col(0).array();
    return push(std::move(out), [x, w](Tape& t, const Mat<T>& g) {
      const Mat<T>& X = t.value(x);
      const Mat<T>& W = t.value(w);
      t.grad(x).array() += g.array().colwise() * W.col(0).array();
      t.grad(w).col(0) += g.cwiseProduct(X).rowwise().sum();
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat_cols: nothing to concatenate");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw InputError("concat_cols: row counts differ");
      cols += value(p).cols();
    }
    Mat<T> out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return push(std::move(out), [parts](Tape& t, const Mat<T>& g) {
      Eigen::Index c = 0;
      for (Var p : parts) {
        const Eigen::Index w = t.value(p).cols();
        t.grad(p) += g.middleCols(c, w);
        c += w;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat_rows: nothing to concatenate");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw InputError("concat_rows: column counts differ");
      rows += value(p).rows();
    }
    Mat<T> out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return push(std::move(out), [parts](Tape& t, const Mat<T>& g) {
      Eigen::Index r = 0;
      for (Var p : parts) {
        const Eigen::Index h = t.value(p).rows();
        t.grad(p) += g.middleRows(r, h);
        r += h;
      }
    });
  }

  Var slice_cols(Var x, Eigen::Index begin, Eigen::Index count) {
    const Mat<T>& X = value(x);
    if (begin < 0 || count < 0 || begin + count > X.cols()) throw InputError("slice_cols: out of range");
    Mat<T> out = X.middleCols(begin, count);
    return push(std::move(out), [x, begin, count](Tape& t, const Mat<T>& g) {
      t.grad(x).middleCols(begin, count) += g;
    });
  }

  Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
    const Mat<T>& X = value(x);
    if (begin < 0 || count < 0 || begin + count > X.rows()) throw InputError("slice_rows: out of range");
    Mat<T> out = X.middleRows(begin, count);
    return push(std::move(out), [x, begin, count](Tape& t, const Mat<T>& g) {
      t.grad(x).middleRows(begin, count) += g;
    });
  }

  // out[k] = x[idx[k]]; the gradient scatter-adds.
  Var gather_rows(Var x, const std::vector<int>& idx) {
    const Mat<T>& X = value(x);
    Mat<T> out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= X.rows()) throw InputError("gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
    }
    return push(std::move(out), [x, idx](Tape& t, const Mat<T>& g) {
      Mat<T>& gx = t.grad(x);
      for (std::size_t k = 0; k < idx.size(); ++k) gx.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    });
  }

  // out[s] = sum of rows k with seg[k] == s.
  Var segment_sum(Var x, const std::vector<int>& seg, std::size_t num_segments) {
    const Mat<T>& X = value(x);
    check_segments(seg, X.rows(), num_segments, "segment_sum");
    Mat<T> out = Mat<T>::Zero(static_cast<Eigen::Index>(num_segments), X.cols());
    for (std::size_t k = 0; k < seg.size(); ++k) out.row(seg[k]) += X.row(static_cast<Eigen::Index>(k));
    return push(std::move(out), [x, seg](Tape& t, const Mat<T>& g) {
      Mat<T>& gx = t.grad(x);
      for (std::size_t k = 0; k < seg.size(); ++k) gx.row(static_cast<Eigen::Index>(k)) += g.row(seg[k]);
    });
  }

  // Softmax of a column vector within each segment.
  Var segment_softmax(Var x, const std::vector<int>& seg, std::size_t num_segments) {
    const Mat<T>& X = value(x);
    if (X.cols() != 1) throw InputError("segment_softmax: expects a column vector");
    check_segments(seg, X.rows(), num_segments, "segment_softmax");
    std::vector<T> mx(num_segments, -std::numeric_limits<T>::infinity());
    for (std::size_t k = 0; k < seg.size(); ++k) mx[seg[k]] = std::max(mx[seg[k]], X(static_cast<Eigen::Index>(k), 0));
    Mat<T> out(X.rows(), 1);
    std::vector<T> total(num_segments, T(0));
    for (std::size_t k = 0; k < seg.size(); ++k) {
      const T e = std::exp(X(static_cast<Eigen::Index>(k), 0) - mx[seg[k]]);
      out(static_cast<Eigen::Index>(k), 0) = e;
      total[seg[k]] += e;
    }
    for (std::size_t k = 0; k < seg.size(); ++k) out(static_cast<Eigen::Index>(k), 0) /= total[seg[k]];
    const std::size_t self = nodes_.size();
    return push(std::move(out), [x, seg, num_segments, self](Tape& t, const Mat<T>& g) {
      const Mat<T>& y = t.nodes_[self].value;
      std::vector<T> dot(num_segments, T(0));
      for (std::size_t k = 0; k < seg.size(); ++k) {
        dot[seg[k]] += g(static_cast<Eigen::Index>(k), 0) * y(static_cast<Eigen::Index>(k), 0);
      }
      Mat<T>& gx = t.grad(x);
      for (std::size_t k = 0; k < seg.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        gx(r, 0) += y(r, 0) * (g(r, 0) - dot[seg[k]]);
      }
    });
  }

  Var mean_rows(Var x) {
    const Mat<T>& X = value(x);
    if (X.rows() == 0) throw InputError("mean_rows: no rows");
    Mat<T> out = X.colwise().mean();
    const T inv = T(1) / static_cast<T>(X.rows());
    return push(std::move(out), [x, inv](Tape& t, const Mat<T>& g) {
      t.grad(x).rowwise() += g.row(0) * inv;
    });
  }

  // Rows where keep[r] is true come from a, the rest from b.
  Var select_rows(const std::vector<bool>& keep, Var a, Var b) {
    same_shape(a, b, "select_rows");
    if (keep.size() != static_cast<std::size_t>(value(a).rows())) throw InputError("select_rows: mask size");
    Mat<T> out = value(b);
    for (std::size_t r = 0; r < keep.size(); ++r)
      if (keep[r]) out.row(static_cast<Eigen::Index>(r)) = value(a).row(static_cast<Eigen::Index>(r));
    return push(std::move(out), [keep, a, b](Tape& t, const Mat<T>& g) {
      Mat<T>& ga = t.grad(a);
      Mat<T>& gb = t.grad(b);
      for (std::size_t r = 0; r < keep.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        if (keep[r]) ga.row(i) += g.row(i);
        else gb.row(i) += g.row(i);
      }
    });
  }

  // Row-wise softmax.
  Var softmax(Var x) {
    Mat<T> out = softmax_rows(value(x));
    const std::size_t self = nodes_.size();
    return push(std::move(out), [x, self](Tape& t, const Mat<T>& g) {
      const Mat<T>& y = t.nodes_[self].value;
      const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
      t.grad(x).array() += y.array() * (g.colwise() - dot).array();
    });
  }

  // Mean over rows of -sum_k target(r,k) * log softmax(logits)(r,k).
  Var cross_entropy_soft(Var logits, const Mat<T>& target) {
    const Mat<T>& L = value(logits);
    if (target.rows() != L.rows() || target.cols() != L.cols()) throw InputError("cross_entropy_soft: shape");
    const Mat<T> logp = log_softmax_rows(L);
    Mat<T> out(1, 1);
    out(0, 0) = -(target.cwiseProduct(logp)).sum() / static_cast<T>(L.rows());
    return push(std::move(out), [logits, target, logp](Tape& t, const Mat<T>& g) {
      const Mat<T> p = logp.array().exp().matrix();
      const Eigen::Matrix<T, Eigen::Dynamic, 1> mass = target.rowwise().sum();
      const Mat<T> d = (p.array().colwise() * mass.array()).matrix() - target;
      t.grad(logits) += d * (g(0, 0) / static_cast<T>(target.rows()));
    });
  }

  // Mean squared error over all entries.
  Var mse(Var pred, const Mat<T>& target) {
    const Mat<T>& P = value(pred);
    if (target.rows() != P.rows() || target.cols() != P.cols()) throw InputError("mse: shape");
    Mat<T> out(1, 1);
    out(0, 0) = (P - target).squaredNorm() / static_cast<T>(P.size());
    return push(std::move(out), [pred, target](Tape& t, const Mat<T>& g) {
      t.grad(pred) += (t.value(pred) - target) * (T(2) * g(0, 0) / static_cast<T>(target.size()));
    });
  }

  static Mat<T> softmax_rows(const Mat<T>& x) {
    Mat<T> out = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
    const Eigen::Matrix<T, Eigen::Dynamic, 1> s = out.rowwise().sum();
    return out.array().colwise() / s.array();
  }

  static Mat<T> log_softmax_rows(const Mat<T>& x) {
    const Eigen::Matrix<T, Eigen::Dynamic, 1> mx = x.rowwise().maxCoeff();
    const Mat<T> shifted = x.colwise() - mx;
    const Eigen::Matrix<T, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log();
    return shifted.colwise() - lse;
  }

 private:
  using Backward = std::function<void(Tape&, const Mat<T>&)>;

  struct Node {
    Mat<T> value;
    Mat<T> grad;
    Backward back;
    Parameter<T>* param = nullptr;
  };

  Var push(Mat<T> v, Backward back) {
    nodes_.push_back(Node{std::move(v), {}, std::move(back), nullptr});
    return Var{nodes_.size() - 1};
  }

  Mat<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw InputError(std::string(op) + ": shape mismatch");
  }

  static void check_segments(const std::vector<int>& seg, Eigen::Index rows, std::size_t n, const char* op) {
    if (static_cast<Eigen::Index>(seg.size()) != rows) throw InputError(std::string(op) + ": one id per row");
    for (int s : seg)
      if (s < 0 || static_cast<std::size_t>(s) >= n) throw InputError(std::string(op) + ": segment out of range");
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Byte layout, all integers little-endian:
//   magic "PFCKPT\0\0" (8 bytes), u32 version (= 1), u32 entry count,
//   then per entry: u32 name length, name bytes, u32 rank, rank x u64 dims,
//   prod(dims) x f64 values (IEEE-754, little-endian), row-major.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
// Throws DataError on a bad magic, version, or truncated stream.
std::vector<NamedTensor> read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

template <class T>
NamedTensor to_named(const Parameter<T>& p) {
  NamedTensor t{p.name, {static_cast<std::uint64_t>(p.value.rows()), static_cast<std::uint64_t>(p.value.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(p.value.size()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) t.data.push_back(static_cast<double>(p.value.data()[i]));
  return t;
}

// Throws DataError when the stored shape differs from the parameter's.
template <class T>
void assign_named(Parameter<T>& p, const NamedTensor& t) {
  if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(p.value.rows()) ||
      t.shape[1] != static_cast<std::uint64_t>(p.value.cols())) {
    throw DataError("checkpoint shape mismatch for " + p.name);
  }
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(t.data[static_cast<std::size_t>(i)]);
}

}  // namespace passforge::tensor
