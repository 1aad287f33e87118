#pragma once

// Reverse-mode automatic differentiation over row-major dense matrices.
// A Tape records every operation of one forward pass; backward() replays the
// recorded adjoints in reverse order.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qta/error.hpp"

namespace qta::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

struct Var {
  int id = -1;
  Tape *tape = nullptr;
};

class Tape {
public:
  Var constant(Mat v) { return push(std::move(v), false, {}); }
  Var variable(Mat v) { return push(std::move(v), true, {}); }

  const Mat &value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Gradient of the last backward() target; zero if never reached.
  Mat grad(Var v) const {
    const auto &n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.size() == 0)
      return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Accumulates into the adjoint of v (used by backward closures).
  Mat &adj(int id) {
    auto &n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0)
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const Mat &adj_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool wants(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  Var push(Mat v, bool needs_grad, std::function<void(Tape &, int)> back) {
    nodes_.push_back({std::move(v), Mat(), std::move(back), needs_grad});
    return {static_cast<int>(nodes_.size()) - 1, this};
  }

  void backward(Var out) {
    const auto &v = value(out);
    require(v.rows() == 1 && v.cols() == 1, "backward: target must be a scalar");
    for (auto &n : nodes_)
      n.grad.resize(0, 0);
    adj(out.id)(0, 0) = 1.0;
    for (int i = out.id; i >= 0; --i) {
      auto &n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.needs_grad && n.grad.size() != 0)
        n.back(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape &, int)> back;
    bool needs_grad;
  };
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape &tape_of(Var a) {
  require(a.tape != nullptr, "autodiff: variable without tape");
  return *a.tape;
}
inline void same_tape(Var a, Var b) { require(a.tape == b.tape, "autodiff: variables on different tapes"); }
} // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a), &B = t.value(b);
  if (A.cols() != B.rows())
    throw ValidationError("matmul: shape mismatch " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                          " * " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  const int ia = a.id, ib = b.id;
  return t.push(A * B, t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape &tp, int self) {
    const Mat G = tp.adj_of(self);
    if (tp.wants(ia))
      tp.adj(ia).noalias() += G * tp.value(Var{ib, &tp}).transpose();
    if (tp.wants(ib))
      tp.adj(ib).noalias() += tp.value(Var{ia, &tp}).transpose() * G;
  });
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a), &B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.push(A + B, t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape &tp, int self) {
    const Mat G = tp.adj_of(self);
    if (tp.wants(ia))
      tp.adj(ia) += G;
    if (tp.wants(ib))
      tp.adj(ib) += G;
  });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a), &B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "sub: shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.push(A - B, t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape &tp, int self) {
    const Mat G = tp.adj_of(self);
    if (tp.wants(ia))
      tp.adj(ia) += G;
    if (tp.wants(ib))
      tp.adj(ib) -= G;
  });
}

/// a (n x m) plus a broadcast row b (1 x m).
inline Var add_row(Var a, Var b) {
  detail::same_tape(a, b);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a), &B = t.value(b);
  require(B.rows() == 1 && B.cols() == A.cols(), "add_row: shape mismatch");
  const int ia = a.id, ib = b.id;
  Mat out = A.rowwise() + B.row(0);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape &tp, int self) {
    const Mat G = tp.adj_of(self);
    if (tp.wants(ia))
      tp.adj(ia) += G;
    if (tp.wants(ib))
      tp.adj(ib) += G.colwise().sum();
  });
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a), &B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "hadamard: shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.push(A.cwiseProduct(B), t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape &tp, int self) {
    const Mat G = tp.adj_of(self);
    if (tp.wants(ia))
      tp.adj(ia) += G.cwiseProduct(tp.value(Var{ib, &tp}));
    if (tp.wants(ib))
      tp.adj(ib) += G.cwiseProduct(tp.value(Var{ia, &tp}));
  });
}

inline Var scale(Var a, double s) {
  Tape &t = detail::tape_of(a);
  const int ia = a.id;
  return t.push(t.value(a) * s, t.needs_grad(a), [ia, s](Tape &tp, int self) { tp.adj(ia) += tp.adj_of(self) * s; });
}

inline Var silu(Var a) {
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a);
  const Mat sig = (1.0 + (-A.array()).exp()).inverse().matrix();
  const int ia = a.id;
  return t.push(A.cwiseProduct(sig), t.needs_grad(a), [ia, sig](Tape &tp, int self) {
    const auto x = tp.value(Var{ia, &tp}).array();
    tp.adj(ia).array() += tp.adj_of(self).array() * (sig.array() * (1.0 + x * (1.0 - sig.array())));
  });
}

inline Var tanh(Var a) {
  Tape &t = detail::tape_of(a);
  Mat y = t.value(a).array().tanh().matrix();
  const int ia = a.id;
  return t.push(y, t.needs_grad(a), [ia](Tape &tp, int self) {
    const auto yv = tp.value(Var{self, &tp}).array();
    tp.adj(ia).array() += tp.adj_of(self).array() * (1.0 - yv * yv);
  });
}

inline Var sigmoid(Var a) {
  Tape &t = detail::tape_of(a);
  Mat y = (1.0 + (-t.value(a).array()).exp()).inverse().matrix();
  const int ia = a.id;
  return t.push(y, t.needs_grad(a), [ia](Tape &tp, int self) {
    const auto yv = tp.value(Var{self, &tp}).array();
    tp.adj(ia).array() += tp.adj_of(self).array() * yv * (1.0 - yv);
  });
}

inline Var concat_cols(const std::vector<Var> &parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape &t = detail::tape_of(parts[0]);
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (auto p : parts) {
    detail::same_tape(parts[0], p);
    require(t.value(p).rows() == rows, "concat_cols: row mismatch");
    cols += t.value(p).cols();
    ng |= t.needs_grad(p);
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans; // (id, offset)
  Eigen::Index off = 0;
  for (auto p : parts) {
    const auto &v = t.value(p);
    out.middleCols(off, v.cols()) = v;
    spans.emplace_back(p.id, off);
    off += v.cols();
  }
  return t.push(std::move(out), ng, [spans](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    for (const auto &[id, o] : spans)
      if (tp.wants(id)) {
        auto &a = tp.adj(id);
        a += G.middleCols(o, a.cols());
      }
  });
}

/// out.row(k) = a.row(idx[k]).
inline Var gather_rows(Var a, std::vector<int> idx) {
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a);
  Mat out(static_cast<Eigen::Index>(idx.size()), A.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < A.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = A.row(idx[k]);
  }
  const int ia = a.id;
  return t.push(std::move(out), t.needs_grad(a), [ia, idx = std::move(idx)](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    auto &ga = tp.adj(ia);
    for (std::size_t k = 0; k < idx.size(); ++k)
      ga.row(idx[k]) += G.row(static_cast<Eigen::Index>(k));
  });
}

/// out (n x m) with out.row(idx[k]) += a.row(k).
inline Var scatter_add_rows(Var a, std::vector<int> idx, Eigen::Index n) {
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a);
  require(static_cast<Eigen::Index>(idx.size()) == A.rows(), "scatter_add_rows: index count mismatch");
  Mat out = Mat::Zero(n, A.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < n, "scatter_add_rows: index out of range");
    out.row(idx[k]) += A.row(static_cast<Eigen::Index>(k));
  }
  const int ia = a.id;
  return t.push(std::move(out), t.needs_grad(a), [ia, idx = std::move(idx)](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    auto &ga = tp.adj(ia);
    for (std::size_t k = 0; k < idx.size(); ++k)
      ga.row(static_cast<Eigen::Index>(k)) += G.row(idx[k]);
  });
}

/// Row-wise layer normalisation with affine gamma/beta (1 x m).
inline Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
  detail::same_tape(a, gamma);
  detail::same_tape(a, beta);
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a);
  const Eigen::Index m = A.cols();
  require(t.value(gamma).cols() == m && t.value(beta).cols() == m, "layer_norm: shape mismatch");
  const Eigen::VectorXd mean = A.rowwise().mean();
  Mat xhat = A.colwise() - mean;
  const Eigen::VectorXd inv = ((xhat.array().square().rowwise().sum() / static_cast<double>(m)) + eps).rsqrt();
  xhat = inv.asDiagonal() * xhat;
  Mat out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).matrix();
  out.rowwise() += t.value(beta).row(0);
  const int ia = a.id, ig = gamma.id, ib = beta.id;
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  return t.push(std::move(out), ng, [ia, ig, ib, xhat, inv, m](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    if (tp.wants(ig))
      tp.adj(ig) += G.cwiseProduct(xhat).colwise().sum();
    if (tp.wants(ib))
      tp.adj(ib) += G.colwise().sum();
    if (tp.wants(ia)) {
      const Mat dx = (G.array().rowwise() * tp.value(Var{ig, &tp}).row(0).array()).matrix();
      const Eigen::VectorXd mdx = dx.rowwise().mean();
      const Eigen::VectorXd mdxx = dx.cwiseProduct(xhat).rowwise().mean();
      Mat r = dx.colwise() - mdx;
      r -= mdxx.asDiagonal() * xhat;
      tp.adj(ia) += inv.asDiagonal() * r;
      (void)m;
    }
  });
}

/// Softmax of a single row.
inline Var softmax_row(Var a) {
  Tape &t = detail::tape_of(a);
  const Mat &A = t.value(a);
  require(A.rows() == 1, "softmax_row: expects one row");
  Mat y = (A.array() - A.maxCoeff()).exp().matrix();
  y /= y.sum();
  const int ia = a.id;
  return t.push(y, t.needs_grad(a), [ia](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    const Mat &Y = tp.value(Var{self, &tp});
    const double dot = G.cwiseProduct(Y).sum();
    tp.adj(ia) += (Y.array() * (G.array() - dot)).matrix();
  });
}

/// sum_l w(0, l) * ys[l], all ys of equal shape.
inline Var weighted_sum(Var w, const std::vector<Var> &ys) {
  Tape &t = detail::tape_of(w);
  const Mat &W = t.value(w);
  require(W.rows() == 1 && W.cols() == static_cast<Eigen::Index>(ys.size()) && !ys.empty(),
          "weighted_sum: weight count mismatch");
  Mat out = Mat::Zero(t.value(ys[0]).rows(), t.value(ys[0]).cols());
  bool ng = t.needs_grad(w);
  std::vector<int> ids;
  for (std::size_t l = 0; l < ys.size(); ++l) {
    detail::same_tape(w, ys[l]);
    require(t.value(ys[l]).rows() == out.rows() && t.value(ys[l]).cols() == out.cols(), "weighted_sum: shape mismatch");
    out += W(0, static_cast<Eigen::Index>(l)) * t.value(ys[l]);
    ng |= t.needs_grad(ys[l]);
    ids.push_back(ys[l].id);
  }
  const int iw = w.id;
  return t.push(std::move(out), ng, [iw, ids](Tape &tp, int self) {
    const Mat &G = tp.adj_of(self);
    const Mat &Wv = tp.value(Var{iw, &tp});
    for (std::size_t l = 0; l < ids.size(); ++l) {
      if (tp.wants(iw))
        tp.adj(iw)(0, static_cast<Eigen::Index>(l)) += G.cwiseProduct(tp.value(Var{ids[l], &tp})).sum();
      if (tp.wants(ids[l]))
        tp.adj(ids[l]) += Wv(0, static_cast<Eigen::Index>(l)) * G;
    }
  });
}

/// sum_ij w_ij (p_ij - y_ij)^2 as a 1 x 1 value; y and w are constants.
inline Var weighted_sq_error(Var p, const Mat &y, const Mat &w) {
  Tape &t = detail::tape_of(p);
  const Mat &P = t.value(p);
  require(P.rows() == y.rows() && P.cols() == y.cols() && w.rows() == y.rows() && w.cols() == y.cols(),
          "weighted_sq_error: shape mismatch");
  const Mat diff = P - y;
  Mat out(1, 1);
  out(0, 0) = diff.cwiseProduct(diff).cwiseProduct(w).sum();
  const int ip = p.id;
  return t.push(std::move(out), t.needs_grad(p), [ip, diff, w](Tape &tp, int self) {
    tp.adj(ip) += 2.0 * tp.adj_of(self)(0, 0) * diff.cwiseProduct(w);
  });
}

} // namespace qta::ad
