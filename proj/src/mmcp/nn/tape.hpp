#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmcp/core/errors.hpp"

namespace mmcp::nn {

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, which is already a topological order, so the backward sweep is a
// single reverse pass. Values are column-major; vectors are n-by-1.
//
// Templated on the scalar type: float is the training precision, double is
// used for finite-difference gradient verification.
template <typename T>
class Tape {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  struct Node {
    Mat value;
    Mat grad;  // allocated lazily on first contribution
    bool requires_grad = false;
    std::function<void(Tape&)> backward;  // empty for leaves/constants
  };

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

  int constant(Mat v) { return push(std::move(v), false, {}); }
  int leaf(Mat v) { return push(std::move(v), true, {}); }

  int scalar(T v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // ---- arithmetic ----------------------------------------------------------

  int add(int a, int b) {
    Mat v = nodes_[a].value + nodes_[b].value;
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  int sub(int a, int b) {
    Mat v = nodes_[a].value - nodes_[b].value;
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      t.accumulate(a, g);
      t.accumulate(b, -g);
    });
  }

  int scale(int a, T s) {
    Mat v = nodes_[a].value * s;
    return push(std::move(v), needs(a), [a, s](Tape& t) {
      t.accumulate(a, t.nodes_[t.cursor_].grad * s);
    });
  }

  int add_const(int a, T s) {
    Mat v = nodes_[a].value.array() + s;
    return push(std::move(v), needs(a), [a](Tape& t) {
      t.accumulate(a, t.nodes_[t.cursor_].grad);
    });
  }

  int hadamard(int a, int b) {
    Mat v = nodes_[a].value.cwiseProduct(nodes_[b].value);
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      t.accumulate(a, g.cwiseProduct(t.nodes_[b].value));
      t.accumulate(b, g.cwiseProduct(t.nodes_[a].value));
    });
  }

  int matmul(int a, int b) {
    Mat v = nodes_[a].value * nodes_[b].value;
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      if (t.needs(a)) t.accumulate(a, g * t.nodes_[b].value.transpose());
      if (t.needs(b)) t.accumulate(b, t.nodes_[a].value.transpose() * g);
    });
  }

  // M (r x c) plus column vector v (r x 1) broadcast over columns.
  int add_col_broadcast(int m, int v) {
    Mat out = nodes_[m].value.colwise() + Eigen::Matrix<T, Eigen::Dynamic, 1>(
                                              nodes_[v].value.col(0));
    return push(std::move(out), needs(m) || needs(v), [m, v](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      if (t.needs(m)) t.accumulate(m, g);
      if (t.needs(v)) t.accumulate(v, g.rowwise().sum());
    });
  }

  // ---- nonlinearities ------------------------------------------------------

  int tanh_(int a) {
    Mat v = nodes_[a].value.array().tanh();
    return push(std::move(v), needs(a), [a](Tape& t) {
      const int self = t.cursor_;
      const auto y = t.nodes_[self].value.array();
      t.accumulate(a, (t.nodes_[self].grad.array() * (T(1) - y * y)).matrix());
    });
  }

  int sigmoid_(int a) {
    Mat v = (T(1) / (T(1) + (-nodes_[a].value.array()).exp())).matrix();
    return push(std::move(v), needs(a), [a](Tape& t) {
      const int self = t.cursor_;
      const auto y = t.nodes_[self].value.array();
      t.accumulate(a, (t.nodes_[self].grad.array() * y * (T(1) - y)).matrix());
    });
  }

  // Subgradient at zero is taken as zero.
  int abs_(int a) {
    Mat v = nodes_[a].value.array().abs();
    return push(std::move(v), needs(a), [a](Tape& t) {
      const int self = t.cursor_;
      const auto x = t.nodes_[a].value.array();
      const auto sign = (x > T(0)).template cast<T>() - (x < T(0)).template cast<T>();
      t.accumulate(a, (t.nodes_[self].grad.array() * sign).matrix());
    });
  }

  // ---- shape ops -----------------------------------------------------------

  // Gather from the column-major flattening of x into a rows-by-cols matrix.
  // Index -1 reads an implicit zero (used for conv padding).
  int gather(int x, const std::vector<int>& idx, int rows, int cols) {
    Mat v(rows, cols);
    const T* src = nodes_[x].value.data();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      v.data()[k] = idx[k] >= 0 ? src[idx[k]] : T(0);
    }
    // The index vector is captured by value; callers typically reuse a cached
    // im2col table so this copy is small relative to the matmul that follows.
    return push(std::move(v), needs(x), [x, idx](Tape& t) {
      if (!t.needs(x)) return;
      const Mat& g = t.nodes_[t.cursor_].grad;
      Mat& gx = t.ensure_grad(x);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= 0) gx.data()[idx[k]] += g.data()[k];
      }
    });
  }

  // Copy into a new shape with the same column-major element order.
  int reshape(int a, int rows, int cols) {
    Mat v = Eigen::Map<const Mat>(nodes_[a].value.data(), rows, cols);
    return push(std::move(v), needs(a), [a, rows, cols](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      const auto& src = t.nodes_[a].value;
      t.accumulate(a, Eigen::Map<const Mat>(g.data(), src.rows(), src.cols()));
    });
  }

  int concat_rows(int a, int b) {
    const Mat& va = nodes_[a].value;
    const Mat& vb = nodes_[b].value;
    Mat v(va.rows() + vb.rows(), va.cols());
    v.topRows(va.rows()) = va;
    v.bottomRows(vb.rows()) = vb;
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      const auto ra = t.nodes_[a].value.rows();
      const auto rb = t.nodes_[b].value.rows();
      t.accumulate(a, g.topRows(ra));
      t.accumulate(b, g.bottomRows(rb));
    });
  }

  // Stack 1x1 nodes into an n-by-1 vector.
  int stack_scalars(const std::vector<int>& ids) {
    Mat v(static_cast<int>(ids.size()), 1);
    bool rg = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      v(static_cast<int>(i), 0) = nodes_[ids[i]].value(0, 0);
      rg = rg || needs(ids[i]);
    }
    return push(std::move(v), rg, [ids](Tape& t) {
      const Mat& g = t.nodes_[t.cursor_].grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        Mat gi(1, 1);
        gi(0, 0) = g(static_cast<int>(i), 0);
        t.accumulate(ids[i], gi);
      }
    });
  }

  // ---- reductions ----------------------------------------------------------

  int dot(int a, int b) {
    Mat v(1, 1);
    v(0, 0) = (nodes_[a].value.array() * nodes_[b].value.array()).sum();
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t) {
      const T g = t.nodes_[t.cursor_].grad(0, 0);
      t.accumulate(a, (t.nodes_[b].value * g).eval());
      t.accumulate(b, (t.nodes_[a].value * g).eval());
    });
  }

  int sum_all(int a) {
    Mat v(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    return push(std::move(v), needs(a), [a](Tape& t) {
      const T g = t.nodes_[t.cursor_].grad(0, 0);
      const auto& src = t.nodes_[a].value;
      t.accumulate(a, Mat::Constant(src.rows(), src.cols(), g));
    });
  }

  int mean_all(int a) {
    const T n = static_cast<T>(nodes_[a].value.size());
    Mat v(1, 1);
    v(0, 0) = nodes_[a].value.sum() / n;
    return push(std::move(v), needs(a), [a, n](Tape& t) {
      const T g = t.nodes_[t.cursor_].grad(0, 0) / n;
      const auto& src = t.nodes_[a].value;
      t.accumulate(a, Mat::Constant(src.rows(), src.cols(), g));
    });
  }

  // log(sum(exp(v))) over an n-by-1 vector, max-shifted.
  int logsumexp(int a) {
    const auto& x = nodes_[a].value;
    const T m = x.maxCoeff();
    const T s = (x.array() - m).exp().sum();
    Mat v(1, 1);
    v(0, 0) = m + std::log(s);
    return push(std::move(v), needs(a), [a](Tape& t) {
      const int self = t.cursor_;
      const T g = t.nodes_[self].grad(0, 0);
      const T lse = t.nodes_[self].value(0, 0);
      const auto& x = t.nodes_[a].value;
      t.accumulate(a, ((x.array() - lse).exp() * g).matrix());
    });
  }

  // x / sqrt(|x|^2 + eps^2). The softening keeps the zero vector finite; for
  // codes of non-negligible norm the output is unit to well under 1e-6.
  int l2_normalize(int a) {
    const T eps2 = std::is_same_v<T, double> ? T(1e-24) : T(1e-12);
    const auto& x = nodes_[a].value;
    const T q = x.squaredNorm() + eps2;
    const T inv = T(1) / std::sqrt(q);
    Mat v = x * inv;
    return push(std::move(v), needs(a), [a, inv](Tape& t) {
      const int self = t.cursor_;
      const Mat& g = t.nodes_[self].grad;
      const Mat& y = t.nodes_[self].value;  // = x * inv
      const T yg = (y.array() * g.array()).sum();
      t.accumulate(a, ((g - y * yg) * inv).eval());
    });
  }

  // ---- backward ------------------------------------------------------------

  void backward(int root) {
    if (nodes_[root].value.size() != 1) {
      throw std::invalid_argument("backward root must be scalar");
    }
    Mat seed(1, 1);
    seed(0, 0) = T(1);
    nodes_[root].grad = std::move(seed);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0 || !n.requires_grad) continue;
      cursor_ = i;
      n.backward(*this);
    }
  }

 private:
  bool needs(int id) const { return nodes_[id].requires_grad; }

  Mat& ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    if (!needs(id)) return;
    ensure_grad(id) += g;
  }

  int push(Mat v, bool requires_grad, std::function<void(Tape&)> bw) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  int cursor_ = 0;  // node currently being differentiated during backward()
};

template <typename T>
using Mat = typename Tape<T>::Mat;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

}  // namespace mmcp::nn
