#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sltk/error.hpp"

namespace sltk::fusion {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named parameter block with its gradient accumulator.
template <class S>
struct Tensor {
    std::string name;
    Matrix<S> value;
    Matrix<S> grad;
};

struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape. Nodes live in a deque, so references stay valid while
/// the graph grows. Parameters are bound by reference: their values are read
/// in place and their gradients accumulate straight into Tensor::grad.
template <class S>
class Graph {
  public:
    using Mat = Matrix<S>;
    using Backward = std::function<void(Graph &)>;

    explicit Graph(bool track_grad = true) : track_(track_grad) {}

    Graph(const Graph &) = delete;
    Graph &operator=(const Graph &) = delete;

    bool tracking() const { return track_; }

    Var constant(Mat m) {
        Node &n = nodes_.emplace_back();
        n.value = std::move(m);
        return {nodes_.size() - 1};
    }

    Var parameter(Tensor<S> &t) {
        Node &n = nodes_.emplace_back();
        n.bound = &t.value;
        if (track_) {
            if (t.grad.rows() != t.value.rows() || t.grad.cols() != t.value.cols())
                t.grad = Mat::Zero(t.value.rows(), t.value.cols());
            n.bound_grad = &t.grad;
            n.needs_grad = true;
        }
        return {nodes_.size() - 1};
    }

    // Result of an op. `backward` runs only if some input needs a gradient.
    Var op(Mat value, std::initializer_list<Var> inputs, Backward backward) {
        return op(std::move(value), std::vector<Var>(inputs), std::move(backward));
    }

    Var op(Mat value, const std::vector<Var> &inputs, Backward backward) {
        bool needs = false;
        if (track_)
            for (Var v : inputs)
                needs = needs || nodes_[v.id].needs_grad;
        Node &n = nodes_.emplace_back();
        n.value = std::move(value);
        n.needs_grad = needs;
        if (needs)
            n.backward = std::move(backward);
        return {nodes_.size() - 1};
    }

    const Mat &value(Var v) const {
        const Node &n = nodes_[v.id];
        return n.bound ? *n.bound : n.value;
    }

    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    // Gradient accumulator, zero-initialized on first access.
    Mat &grad(Var v) {
        Node &n = nodes_[v.id];
        if (n.bound_grad)
            return *n.bound_grad;
        if (n.grad.size() == 0) {
            const Mat &val = value(v);
            n.grad = Mat::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    /// Back-propagates d(seed * loss) from a 1x1 node.
    void backward(Var loss, S seed = S(1)) {
        if (!track_)
            throw InvariantError("backward on a graph built without gradient tracking");
        if (value(loss).size() != 1)
            throw InvariantError("backward expects a scalar loss");
        if (!nodes_[loss.id].needs_grad)
            return;
        grad(loss)(0, 0) += seed;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node &n = nodes_[i];
            if (n.backward && n.grad.size() != 0)
                n.backward(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Mat value;
        const Mat *bound = nullptr;
        Mat grad;
        Mat *bound_grad = nullptr;
        bool needs_grad = false;
        Backward backward;
    };

    bool track_;
    std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. Each forward computes a value; the closure adds input gradients from
// the output gradient, skipping inputs that do not need one.

namespace ops {

template <class S>
Var matmul(Graph<S> &g, Var a, Var b) {
    const auto &A = g.value(a), &B = g.value(b);
    if (A.cols() != B.rows())
        throw InvariantError("matmul: inner dimensions differ");
    Matrix<S> C = A * B;
    Var out{g.size()};
    return g.op(std::move(C), {a, b}, [a, b, out](Graph<S> &g) {
        const auto &dC = g.grad(out);
        if (g.needs_grad(a))
            g.grad(a).noalias() += dC * g.value(b).transpose();
        if (g.needs_grad(b))
            g.grad(b).noalias() += g.value(a).transpose() * dC;
    });
}

// a * b^T
template <class S>
Var matmul_bt(Graph<S> &g, Var a, Var b) {
    const auto &A = g.value(a), &B = g.value(b);
    if (A.cols() != B.cols())
        throw InvariantError("matmul_bt: inner dimensions differ");
    Matrix<S> C = A * B.transpose();
    Var out{g.size()};
    return g.op(std::move(C), {a, b}, [a, b, out](Graph<S> &g) {
        const auto &dC = g.grad(out);
        if (g.needs_grad(a))
            g.grad(a).noalias() += dC * g.value(b);
        if (g.needs_grad(b))
            g.grad(b).noalias() += dC.transpose() * g.value(a);
    });
}

template <class S>
Var add(Graph<S> &g, Var a, Var b) {
    const auto &A = g.value(a), &B = g.value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw InvariantError("add: shape mismatch");
    Var out{g.size()};
    return g.op(A + B, {a, b}, [a, b, out](Graph<S> &g) {
        const auto &dC = g.grad(out);
        if (g.needs_grad(a))
            g.grad(a) += dC;
        if (g.needs_grad(b))
            g.grad(b) += dC;
    });
}

// x (r x c) + broadcast row vector b (1 x c)
template <class S>
Var add_row(Graph<S> &g, Var x, Var b) {
    const auto &X = g.value(x), &B = g.value(b);
    if (B.rows() != 1 || B.cols() != X.cols())
        throw InvariantError("add_row: bias shape mismatch");
    Matrix<S> Y = X.rowwise() + B.row(0);
    Var out{g.size()};
    return g.op(std::move(Y), {x, b}, [x, b, out](Graph<S> &g) {
        const auto &dY = g.grad(out);
        if (g.needs_grad(x))
            g.grad(x) += dY;
        if (g.needs_grad(b))
            g.grad(b) += dY.colwise().sum();
    });
}

template <class S>
Var scale(Graph<S> &g, Var x, S s) {
    Var out{g.size()};
    return g.op(g.value(x) * s, {x}, [x, s, out](Graph<S> &g) { g.grad(x) += g.grad(out) * s; });
}

// Elementwise product with a constant matrix (dropout masks).
template <class S>
Var mul_const(Graph<S> &g, Var x, Matrix<S> m) {
    Matrix<S> Y = g.value(x).cwiseProduct(m);
    Var out{g.size()};
    return g.op(std::move(Y), {x}, [x, m = std::move(m), out](Graph<S> &g) {
        g.grad(x) += g.grad(out).cwiseProduct(m);
    });
}

// tanh approximation of GELU
template <class S>
Var gelu(Graph<S> &g, Var x) {
    const S c = std::sqrt(S(2) / S(M_PI)), k = S(0.044715);
    const auto &X = g.value(x);
    Matrix<S> Y(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
        const S v = X.data()[i];
        Y.data()[i] = S(0.5) * v * (S(1) + std::tanh(c * (v + k * v * v * v)));
    }
    Var out{g.size()};
    return g.op(std::move(Y), {x}, [x, out, c, k](Graph<S> &g) {
        const auto &X = g.value(x);
        const auto &dY = g.grad(out);
        auto &dX = g.grad(x);
        for (Eigen::Index i = 0; i < X.size(); ++i) {
            const S v = X.data()[i];
            const S t = std::tanh(c * (v + k * v * v * v));
            const S dt = (S(1) - t * t) * c * (S(1) + S(3) * k * v * v);
            dX.data()[i] += dY.data()[i] * (S(0.5) * (S(1) + t) + S(0.5) * v * dt);
        }
    });
}

template <class S>
Var layer_norm(Graph<S> &g, Var x, Var gamma, Var beta, S eps = S(1e-5)) {
    const auto &X = g.value(x);
    const auto &G = g.value(gamma), &B = g.value(beta);
    const Eigen::Index rows = X.rows(), cols = X.cols();
    if (G.cols() != cols || B.cols() != cols)
        throw InvariantError("layer_norm: parameter width mismatch");
    Matrix<S> xhat(rows, cols);
    std::vector<S> inv_std(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mean = X.row(r).mean();
        const S var = (X.row(r).array() - mean).square().mean();
        const S is = S(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        xhat.row(r) = (X.row(r).array() - mean) * is;
    }
    Matrix<S> Y = (xhat.array().rowwise() * G.row(0).array()).rowwise() + B.row(0).array();
    Var out{g.size()};
    return g.op(std::move(Y), {x, gamma, beta},
                [x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<S> &g) {
                    const auto &dY = g.grad(out);
                    if (g.needs_grad(gamma))
                        g.grad(gamma) += dY.cwiseProduct(xhat).colwise().sum();
                    if (g.needs_grad(beta))
                        g.grad(beta) += dY.colwise().sum();
                    if (!g.needs_grad(x))
                        return;
                    const auto &G = g.value(gamma);
                    auto &dX = g.grad(x);
                    const S n = static_cast<S>(xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                        Eigen::Array<S, 1, Eigen::Dynamic> dxh = dY.row(r).array() * G.row(0).array();
                        const S m1 = dxh.sum() / n;
                        const S m2 = (dxh * xhat.row(r).array()).sum() / n;
                        dX.row(r).array() +=
                            inv_std[static_cast<std::size_t>(r)] * (dxh - m1 - xhat.row(r).array() * m2);
                    }
                });
}

template <class S>
Var columns(Graph<S> &g, Var x, Eigen::Index begin, Eigen::Index count) {
    const auto &X = g.value(x);
    if (begin < 0 || begin + count > X.cols())
        throw InvariantError("columns: slice out of range");
    Var out{g.size()};
    return g.op(X.middleCols(begin, count), {x}, [x, out, begin, count](Graph<S> &g) {
        g.grad(x).middleCols(begin, count) += g.grad(out);
    });
}

template <class S>
Var hcat(Graph<S> &g, const std::vector<Var> &parts) {
    if (parts.empty())
        throw InvariantError("hcat: nothing to concatenate");
    const Eigen::Index rows = g.value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
        if (g.value(p).rows() != rows)
            throw InvariantError("hcat: row counts differ");
        cols += g.value(p).cols();
    }
    Matrix<S> Y(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        Y.middleCols(at, g.value(p).cols()) = g.value(p);
        at += g.value(p).cols();
    }
    Var out{g.size()};
    return g.op(std::move(Y), parts, [parts, out](Graph<S> &g) {
        Eigen::Index at = 0;
        for (Var p : parts) {
            const Eigen::Index c = g.value(p).cols();
            if (g.needs_grad(p))
                g.grad(p) += g.grad(out).middleCols(at, c);
            at += c;
        }
    });
}

/// Row-wise softmax restricted to allowed entries (key_valid[j], and j <= i
/// when causal). Disallowed entries get weight exactly 0. A row with no
/// allowed entry is a degenerate source.
template <class S>
Var masked_softmax(Graph<S> &g, Var scores, const std::vector<char> &key_valid, bool causal) {
    const auto &X = g.value(scores);
    const Eigen::Index rows = X.rows(), cols = X.cols();
    if (static_cast<Eigen::Index>(key_valid.size()) != cols)
        throw InvariantError("masked_softmax: mask width mismatch");
    Matrix<S> Y = Matrix<S>::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        S mx = -std::numeric_limits<S>::infinity();
        bool any = false;
        for (Eigen::Index c = 0; c < cols; ++c)
            if (key_valid[static_cast<std::size_t>(c)] && (!causal || c <= r)) {
                mx = std::max(mx, X(r, c));
                any = true;
            }
        if (!any)
            throw InputError("attention row has every position masked");
        S sum = 0;
        for (Eigen::Index c = 0; c < cols; ++c)
            if (key_valid[static_cast<std::size_t>(c)] && (!causal || c <= r)) {
                Y(r, c) = std::exp(X(r, c) - mx);
                sum += Y(r, c);
            }
        Y.row(r) /= sum;
    }
    Var out{g.size()};
    return g.op(std::move(Y), {scores}, [scores, out](Graph<S> &g) {
        const auto &Y = g.value(out);
        const auto &dY = g.grad(out);
        auto &dX = g.grad(scores);
        for (Eigen::Index r = 0; r < Y.rows(); ++r) {
            const S dot = Y.row(r).dot(dY.row(r));
            dX.row(r).array() += Y.row(r).array() * (dY.row(r).array() - dot);
        }
    });
}

template <class S>
Var embedding(Graph<S> &g, Var table, const std::vector<int> &ids) {
    const auto &T = g.value(table);
    Matrix<S> Y(static_cast<Eigen::Index>(ids.size()), T.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= T.rows())
            throw InputError("token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                             std::to_string(T.rows()));
        Y.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
    }
    Var out{g.size()};
    return g.op(std::move(Y), {table}, [table, ids, out](Graph<S> &g) {
        auto &dT = g.grad(table);
        const auto &dY = g.grad(out);
        for (std::size_t i = 0; i < ids.size(); ++i)
            dT.row(ids[i]) += dY.row(static_cast<Eigen::Index>(i));
    });
}

/// Summed token cross-entropy of row-wise softmax(logits) against labels;
/// rows labelled `ignore` contribute nothing. Returns a 1x1 node.
template <class S>
Var cross_entropy_sum(Graph<S> &g, Var logits, const std::vector<int> &labels, int ignore) {
    const auto &L = g.value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != L.rows())
        throw InvariantError("cross_entropy: label count mismatch");
    Matrix<S> probs(L.rows(), L.cols());
    S total = 0;
    for (Eigen::Index r = 0; r < L.rows(); ++r) {
        const S mx = L.row(r).maxCoeff();
        probs.row(r) = (L.row(r).array() - mx).exp();
        const S z = probs.row(r).sum();
        probs.row(r) /= z;
        const int y = labels[static_cast<std::size_t>(r)];
        if (y == ignore)
            continue;
        if (y < 0 || y >= L.cols())
            throw InputError("target id " + std::to_string(y) + " outside vocabulary");
        total += -(L(r, y) - mx - std::log(z));
    }
    Matrix<S> v(1, 1);
    v(0, 0) = total;
    Var out{g.size()};
    return g.op(std::move(v), {logits},
                [logits, labels, ignore, out, probs = std::move(probs)](Graph<S> &g) mutable {
                    const S d = g.grad(out)(0, 0);
                    auto &dL = g.grad(logits);
                    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                        const int y = labels[static_cast<std::size_t>(r)];
                        if (y == ignore)
                            continue;
                        dL.row(r) += d * probs.row(r);
                        dL(r, y) -= d;
                    }
                });
}

} // namespace ops
} // namespace sltk::fusion
