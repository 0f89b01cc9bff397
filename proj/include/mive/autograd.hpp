#pragma once

// Minimal reverse-mode differentiation over row-major Eigen matrices.
//
// A Tape records the forward computation as a list of nodes; `backward`
// walks them in reverse creation order. Parameters are leaves whose
// gradients accumulate into Parameter::grad. A tape constructed with
// `recording = false` computes values only.

#include "mive/core.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace mive {

template <class S>
struct Parameter {
    Matrix<S> value;
    Matrix<S> grad;

    Parameter() = default;
    Parameter(int rows, int cols) : value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <class S>
class Tape;

template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    int id = -1;

    const Matrix<S>& value() const { return tape->node(id).value; }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

template <class S>
class Tape {
public:
    struct Node {
        Matrix<S> value;
        Matrix<S> grad;
        std::function<void(Tape&, Node&)> back;
        bool needs_grad = false;
    };

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    Var<S> constant(Matrix<S> value) {
        nodes_.push_back(Node{std::move(value), {}, {}, false});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    Var<S> param(Parameter<S>& p) {
        Node n{p.value, {}, {}, recording_};
        if (recording_) {
            Parameter<S>* target = &p;
            n.back = [target](Tape&, Node& self) { target->grad += self.grad; };
        }
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    /// Appends a computed node. `back` receives the tape and the node itself;
    /// it is dropped when no input requires a gradient.
    Var<S> push(Matrix<S> value, bool needs_grad, std::function<void(Tape&, Node&)> back) {
        Node n{std::move(value), {}, {}, recording_ && needs_grad};
        if (n.needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    bool needs(const Var<S>& v) const { return node(v.id).needs_grad; }

    template <class Expr>
    void accumulate(int id, const Expr& g) {
        Node& n = node(id);
        if (!n.needs_grad) return;
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    void backward(const Var<S>& root) {
        if (!recording_) throw Error(ErrorKind::numeric, "backward on a non-recording tape");
        Node& r = node(root.id);
        if (r.value.size() != 1) throw ShapeError("backward root must be scalar");
        r.grad = Matrix<S>::Ones(1, 1);
        for (int i = root.id; i >= 0; --i) {
            Node& n = node(i);
            if (n.back && n.grad.size() != 0) n.back(*this, n);
        }
    }

private:
    std::deque<Node> nodes_;
    bool recording_;
};

namespace ops {

namespace detail {
template <class S>
void require_same(const Var<S>& a, const Var<S>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}
}  // namespace detail

/// a * b
template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul inner dims");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value() * b.value();
    int ia = a.id, ib = b.id;
    return t.push(std::move(out), t.needs(a) || t.needs(b), [ia, ib](Tape<S>& tp, typename Tape<S>::Node& n) {
        if (tp.node(ia).needs_grad) tp.accumulate(ia, n.grad * tp.node(ib).value.transpose());
        if (tp.node(ib).needs_grad) tp.accumulate(ib, tp.node(ia).value.transpose() * n.grad);
    });
}

/// a * b^T
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt inner dims");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value() * b.value().transpose();
    int ia = a.id, ib = b.id;
    return t.push(std::move(out), t.needs(a) || t.needs(b), [ia, ib](Tape<S>& tp, typename Tape<S>::Node& n) {
        if (tp.node(ia).needs_grad) tp.accumulate(ia, n.grad * tp.node(ib).value);
        if (tp.node(ib).needs_grad) tp.accumulate(ib, n.grad.transpose() * tp.node(ia).value);
    });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
    detail::require_same(a, b, "add");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value() + b.value();
    int ia = a.id, ib = b.id;
    return t.push(std::move(out), t.needs(a) || t.needs(b), [ia, ib](Tape<S>& tp, typename Tape<S>::Node& n) {
        tp.accumulate(ia, n.grad);
        tp.accumulate(ib, n.grad);
    });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
    detail::require_same(a, b, "sub");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value() - b.value();
    int ia = a.id, ib = b.id;
    return t.push(std::move(out), t.needs(a) || t.needs(b), [ia, ib](Tape<S>& tp, typename Tape<S>::Node& n) {
        tp.accumulate(ia, n.grad);
        if (tp.node(ib).needs_grad) tp.accumulate(ib, -n.grad);
    });
}

/// a + row, with a 1 x cols row broadcast over every row of a.
template <class S>
Var<S> add_row(Var<S> a, Var<S> row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row broadcast");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value().rowwise() + row.value().row(0);
    int ia = a.id, ir = row.id;
    return t.push(std::move(out), t.needs(a) || t.needs(row), [ia, ir](Tape<S>& tp, typename Tape<S>::Node& n) {
        tp.accumulate(ia, n.grad);
        if (tp.node(ir).needs_grad) tp.accumulate(ir, n.grad.colwise().sum());
    });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
    detail::require_same(a, b, "mul");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value().cwiseProduct(b.value());
    int ia = a.id, ib = b.id;
    return t.push(std::move(out), t.needs(a) || t.needs(b), [ia, ib](Tape<S>& tp, typename Tape<S>::Node& n) {
        if (tp.node(ia).needs_grad) tp.accumulate(ia, n.grad.cwiseProduct(tp.node(ib).value));
        if (tp.node(ib).needs_grad) tp.accumulate(ib, n.grad.cwiseProduct(tp.node(ia).value));
    });
}

template <class S>
Var<S> scale(Var<S> a, S s) {
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value() * s;
    int ia = a.id;
    return t.push(std::move(out), t.needs(a),
                  [ia, s](Tape<S>& tp, typename Tape<S>::Node& n) { tp.accumulate(ia, n.grad * s); });
}

template <class S>
Var<S> silu(Var<S> a) {
    Tape<S>& t = *a.tape;
    const Matrix<S>& x = a.value();
    Matrix<S> sig = (S(1) + (-x.array()).exp()).inverse().matrix();
    Matrix<S> out = x.cwiseProduct(sig);
    int ia = a.id;
    return t.push(std::move(out), t.needs(a), [ia, sig = std::move(sig)](Tape<S>& tp, typename Tape<S>::Node& n) {
        const auto& xv = tp.node(ia).value.array();
        auto d = sig.array() * (S(1) + xv * (S(1) - sig.array()));
        tp.accumulate(ia, (n.grad.array() * d).matrix());
    });
}

/// GELU, tanh approximation.
template <class S>
Var<S> gelu(Var<S> a) {
    Tape<S>& t = *a.tape;
    const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    const S k = static_cast<S>(0.044715);
    const auto x = a.value().array();
    Matrix<S> th = (c * (x + k * x.cube())).tanh().matrix();
    Matrix<S> out = (S(0.5) * x * (S(1) + th.array())).matrix();
    int ia = a.id;
    return t.push(std::move(out), t.needs(a), [ia, th = std::move(th), c, k](Tape<S>& tp, typename Tape<S>::Node& n) {
        const auto xv = tp.node(ia).value.array();
        auto tv = th.array();
        auto d = S(0.5) * (S(1) + tv) + S(0.5) * xv * (S(1) - tv.square()) * c * (S(1) + S(3) * k * xv.square());
        tp.accumulate(ia, (n.grad.array() * d).matrix());
    });
}

/// Row-wise RMS normalization without gain: x / sqrt(mean(x^2) + eps).
template <class S>
Var<S> rms_norm(Var<S> a, S eps) {
    Tape<S>& t = *a.tape;
    const Matrix<S>& x = a.value();
    const auto n_cols = static_cast<S>(x.cols());
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv = ((x.array().square().rowwise().sum() / n_cols) + eps).rsqrt();
    Matrix<S> y = x.array().colwise() * inv.array();
    int ia = a.id;
    Matrix<S> y_keep = y;
    return t.push(std::move(y), t.needs(a),
                  [ia, inv = std::move(inv), y = std::move(y_keep), n_cols](Tape<S>& tp, typename Tape<S>::Node& n) {
                      Eigen::Matrix<S, Eigen::Dynamic, 1> gy = n.grad.cwiseProduct(y).rowwise().sum() / n_cols;
                      Matrix<S> dx = (n.grad - (y.array().colwise() * gy.array()).matrix());
                      dx = dx.array().colwise() * inv.array();
                      tp.accumulate(ia, dx);
                  });
}

/// Row-wise layer normalization without affine parameters.
template <class S>
Var<S> layer_norm(Var<S> a, S eps) {
    Tape<S>& t = *a.tape;
    const Matrix<S>& x = a.value();
    const auto n_cols = static_cast<S>(x.cols());
    Eigen::Matrix<S, Eigen::Dynamic, 1> mean = x.rowwise().sum() / n_cols;
    Matrix<S> centered = x.colwise() - mean;
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv = ((centered.array().square().rowwise().sum() / n_cols) + eps).rsqrt();
    Matrix<S> y = centered.array().colwise() * inv.array();
    int ia = a.id;
    Matrix<S> y_keep = y;
    return t.push(std::move(y), t.needs(a),
                  [ia, inv = std::move(inv), y = std::move(y_keep), n_cols](Tape<S>& tp, typename Tape<S>::Node& n) {
                      Eigen::Matrix<S, Eigen::Dynamic, 1> gm = n.grad.rowwise().sum() / n_cols;
                      Eigen::Matrix<S, Eigen::Dynamic, 1> gy = n.grad.cwiseProduct(y).rowwise().sum() / n_cols;
                      Matrix<S> dx = n.grad.colwise() - gm;
                      dx -= (y.array().colwise() * gy.array()).matrix();
                      dx = dx.array().colwise() * inv.array();
                      tp.accumulate(ia, dx);
                  });
}

/// x * (1 + scale) + shift, all operands the same shape.
template <class S>
Var<S> modulate(Var<S> x, Var<S> shift, Var<S> scale_) {
    detail::require_same(x, shift, "modulate");
    detail::require_same(x, scale_, "modulate");
    Tape<S>& t = *x.tape;
    Matrix<S> out = (x.value().array() * (S(1) + scale_.value().array()) + shift.value().array()).matrix();
    int ix = x.id, ish = shift.id, isc = scale_.id;
    return t.push(std::move(out), t.needs(x) || t.needs(shift) || t.needs(scale_),
                  [ix, ish, isc](Tape<S>& tp, typename Tape<S>::Node& n) {
                      if (tp.node(ix).needs_grad)
                          tp.accumulate(ix, (n.grad.array() * (S(1) + tp.node(isc).value.array())).matrix());
                      tp.accumulate(ish, n.grad);
                      if (tp.node(isc).needs_grad) tp.accumulate(isc, n.grad.cwiseProduct(tp.node(ix).value));
                  });
}

template <class S>
Var<S> slice_rows(Var<S> a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > a.rows()) throw ShapeError("slice_rows range");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value().middleRows(begin, count);
    int ia = a.id;
    Eigen::Index rows = a.rows(), cols = a.cols();
    return t.push(std::move(out), t.needs(a), [ia, begin, count, rows, cols](Tape<S>& tp, typename Tape<S>::Node& n) {
        auto& dst = tp.node(ia);
        if (dst.grad.size() == 0) dst.grad = Matrix<S>::Zero(rows, cols);
        dst.grad.middleRows(begin, count) += n.grad;
    });
}

template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > a.cols()) throw ShapeError("slice_cols range");
    Tape<S>& t = *a.tape;
    Matrix<S> out = a.value().middleCols(begin, count);
    int ia = a.id;
    Eigen::Index rows = a.rows(), cols = a.cols();
    return t.push(std::move(out), t.needs(a), [ia, begin, count, rows, cols](Tape<S>& tp, typename Tape<S>::Node& n) {
        auto& dst = tp.node(ia);
        if (dst.grad.size() == 0) dst.grad = Matrix<S>::Zero(rows, cols);
        dst.grad.middleCols(begin, count) += n.grad;
    });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    Tape<S>& t = *parts.front().tape;
    Eigen::Index rows = 0, cols = parts.front().cols();
    bool needs = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows column mismatch");
        rows += p.rows();
        needs = needs || t.needs(p);
    }
    Matrix<S> out(rows, cols);
    std::vector<std::pair<int, Eigen::Index>> spans;
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        spans.emplace_back(p.id, r);
        r += p.rows();
    }
    return t.push(std::move(out), needs, [spans](Tape<S>& tp, typename Tape<S>::Node& n) {
        for (auto [id, offset] : spans) {
            auto rows_i = tp.node(id).value.rows();
            tp.accumulate(id, n.grad.middleRows(offset, rows_i));
        }
    });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    Tape<S>& t = *parts.front().tape;
    Eigen::Index rows = parts.front().rows(), cols = 0;
    bool needs = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
        cols += p.cols();
        needs = needs || t.needs(p);
    }
    Matrix<S> out(rows, cols);
    std::vector<std::pair<int, Eigen::Index>> spans;
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        spans.emplace_back(p.id, c);
        c += p.cols();
    }
    return t.push(std::move(out), needs, [spans](Tape<S>& tp, typename Tape<S>::Node& n) {
        for (auto [id, offset] : spans) {
            auto cols_i = tp.node(id).value.cols();
            tp.accumulate(id, n.grad.middleCols(offset, cols_i));
        }
    });
}

/// out[i] = a[index[i]]
template <class S>
Var<S> gather_rows(Var<S> a, std::vector<int> index) {
    Tape<S>& t = *a.tape;
    Matrix<S> out(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) throw ShapeError("gather_rows index");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
    }
    int ia = a.id;
    Eigen::Index rows = a.rows(), cols = a.cols();
    return t.push(std::move(out), t.needs(a),
                  [ia, index = std::move(index), rows, cols](Tape<S>& tp, typename Tape<S>::Node& n) {
                      Matrix<S> g = Matrix<S>::Zero(rows, cols);
                      for (std::size_t i = 0; i < index.size(); ++i)
                          g.row(index[i]) += n.grad.row(static_cast<Eigen::Index>(i));
                      tp.accumulate(ia, g);
                  });
}

/// Linear layer y = x W (+ b). W is in x out; b is 1 x out.
template <class S>
Var<S> linear(Tape<S>& t, Var<S> x, Parameter<S>& w) {
    return matmul(x, t.param(w));
}
template <class S>
Var<S> linear(Tape<S>& t, Var<S> x, Parameter<S>& w, Parameter<S>& b) {
    return add_row(matmul(x, t.param(w)), t.param(b));
}

/// Row-wise softmax with the usual max shift.
template <class S>
Matrix<S> softmax_rows(const Matrix<S>& x) {
    Matrix<S> p = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv = p.rowwise().sum().cwiseInverse();
    return p.array().colwise() * inv.array();
}

/// Multi-head scaled dot-product attention. q: Nq x D, k/v: Nk x D with
/// heads splitting D into contiguous column blocks. When `probs_out` is
/// non-null it receives each head's Nq x Nk softmax matrix.
template <class S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v, int heads, std::vector<Matrix<S>>* probs_out = nullptr) {
    if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows())
        throw ShapeError("attention operand shapes");
    if (heads <= 0 || q.cols() % heads != 0) throw ShapeError("attention heads must divide width");
    Tape<S>& t = *q.tape;
    const Eigen::Index dh = q.cols() / heads;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
    std::vector<Matrix<S>> probs(static_cast<std::size_t>(heads));
    Matrix<S> out(q.rows(), q.cols());
    for (int h = 0; h < heads; ++h) {
        auto qh = q.value().middleCols(h * dh, dh);
        auto kh = k.value().middleCols(h * dh, dh);
        Matrix<S> scores = (qh * kh.transpose()) * inv_sqrt;
        probs[h] = softmax_rows<S>(scores);
        out.middleCols(h * dh, dh).noalias() = probs[h] * v.value().middleCols(h * dh, dh);
    }
    if (probs_out) *probs_out = probs;
    int iq = q.id, ik = k.id, iv = v.id;
    bool needs = t.needs(q) || t.needs(k) || t.needs(v);
    return t.push(std::move(out), needs,
                  [iq, ik, iv, heads, dh, inv_sqrt, probs = std::move(probs)](Tape<S>& tp, typename Tape<S>::Node& n) {
                      const auto& qv = tp.node(iq).value;
                      const auto& kv = tp.node(ik).value;
                      const auto& vv = tp.node(iv).value;
                      Matrix<S> dq = Matrix<S>::Zero(qv.rows(), qv.cols());
                      Matrix<S> dk = Matrix<S>::Zero(kv.rows(), kv.cols());
                      Matrix<S> dv = Matrix<S>::Zero(vv.rows(), vv.cols());
                      for (int h = 0; h < heads; ++h) {
                          const Matrix<S>& p = probs[static_cast<std::size_t>(h)];
                          auto go = n.grad.middleCols(h * dh, dh);
                          dv.middleCols(h * dh, dh).noalias() = p.transpose() * go;
                          Matrix<S> dp = go * vv.middleCols(h * dh, dh).transpose();
                          Eigen::Matrix<S, Eigen::Dynamic, 1> rs = dp.cwiseProduct(p).rowwise().sum();
                          Matrix<S> ds = (p.array() * (dp.colwise() - rs).array()).matrix() * inv_sqrt;
                          dq.middleCols(h * dh, dh).noalias() = ds * kv.middleCols(h * dh, dh);
                          dk.middleCols(h * dh, dh).noalias() = ds.transpose() * qv.middleCols(h * dh, dh);
                      }
                      tp.accumulate(iq, dq);
                      tp.accumulate(ik, dk);
                      tp.accumulate(iv, dv);
                  });
}

/// sum(weights .* (a - target)^2) / sum(weights); target and weights are constants.
template <class S>
Var<S> weighted_mse(Var<S> a, const Matrix<S>& target, const Matrix<S>& weights) {
    if (a.rows() != target.rows() || a.cols() != target.cols() || weights.rows() != a.rows() ||
        weights.cols() != a.cols())
        throw ShapeError("weighted_mse operand shapes");
    const S denom = weights.sum();
    if (!(denom > S(0))) throw DataError("weighted_mse: empty mask");
    Tape<S>& t = *a.tape;
    Matrix<S> diff = a.value() - target;
    Matrix<S> out(1, 1);
    out(0, 0) = diff.cwiseProduct(diff).cwiseProduct(weights).sum() / denom;
    int ia = a.id;
    return t.push(std::move(out), t.needs(a),
                  [ia, diff = std::move(diff), weights, denom](Tape<S>& tp, typename Tape<S>::Node& n) {
                      tp.accumulate(ia, (diff.cwiseProduct(weights) * (S(2) * n.grad(0, 0) / denom)).eval());
                  });
}

}  // namespace ops
}  // namespace mive
