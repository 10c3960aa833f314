#ifndef SILAB_AUTODIFF_HPP
#define SILAB_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "silab/error.hpp"
#include "silab/tensor.hpp"

namespace silab::ad {

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation order, so
// every node's inputs have smaller ids and a single reverse sweep visits each node
// after all of its consumers.

enum class Op {
    leaf,          // parameter or constant input
    matmul_nt,     // x (B x in) times w^T (w: out x in)
    batch_norm,    // per-column standardization with batch statistics, no affine
    relu,
    concat_rows,   // stack row vectors / matrices with equal column count
    add,
    scale,
    softmax_xent,  // mean cross-entropy of logits against integer labels
    sum_squares,
    weighted_sum,  // sum(x .* c) for a constant c
};

inline const char* op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul_nt: return "matmul_nt";
    case Op::batch_norm: return "batch_norm";
    case Op::relu: return "relu";
    case Op::concat_rows: return "concat_rows";
    case Op::add: return "add";
    case Op::scale: return "scale";
    case Op::softmax_xent: return "softmax_xent";
    case Op::sum_squares: return "sum_squares";
    case Op::weighted_sum: return "weighted_sum";
    }
    return "?";
}

struct Var {
    int id = -1;
};

struct Node {
    Op op = Op::leaf;
    std::vector<int> inputs;
    Tensor value;
    std::vector<double> saved;  // op-specific values kept for the reverse sweep
    std::vector<int> labels;    // softmax_xent only
    double arg = 0.0;           // scale factor or normalization epsilon
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(const Tensor& t) {
    return ConstMatrixMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                          static_cast<Eigen::Index>(t.cols()));
}
inline MatrixMap as_matrix(Tensor& t) {
    return MatrixMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

class Tape {
public:
    Var leaf(Tensor value) {
        Node n;
        n.value = std::move(value);
        return push(std::move(n));
    }

    Var matmul_nt(Var x, Var w) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(w);
        if (xv.cols() != wv.cols()) {
            throw ConfigError("matmul_nt: inner dimensions differ: " + shape_string(xv.shape) +
                              " vs " + shape_string(wv.shape));
        }
        Tensor out({xv.rows(), wv.rows()});
        as_matrix(out).noalias() = as_matrix(xv) * as_matrix(wv).transpose();
        return push_op(Op::matmul_nt, {x.id, w.id}, std::move(out));
    }

    Var batch_norm(Var z, double eps) {
        const Tensor& zv = value(z);
        const std::size_t batch = zv.rows(), width = zv.cols();
        if (batch < 2) throw ConfigError("batch_norm: batch size must be at least 2");
        Tensor out({batch, width});
        std::vector<double> inv_std(width);
        for (std::size_t j = 0; j < width; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < batch; ++i) mean += zv(i, j);
            mean /= static_cast<double>(batch);
            double var = 0.0;
            for (std::size_t i = 0; i < batch; ++i) {
                const double d = zv(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<double>(batch);
            inv_std[j] = 1.0 / std::sqrt(var + eps);
            for (std::size_t i = 0; i < batch; ++i) out(i, j) = (zv(i, j) - mean) * inv_std[j];
        }
        Var v = push_op(Op::batch_norm, {z.id}, std::move(out));
        nodes_.back().saved = std::move(inv_std);
        nodes_.back().arg = eps;
        return v;
    }

    Var relu(Var x) {
        Tensor out = value(x);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push_op(Op::relu, {x.id}, std::move(out));
    }

    Var concat_rows(std::span<const Var> parts) {
        if (parts.empty()) throw ConfigError("concat_rows: no inputs");
        const std::size_t width = value(parts.front()).cols();
        std::size_t total = 0;
        std::vector<int> ids;
        for (Var p : parts) {
            const Tensor& t = value(p);
            if (t.cols() != width) throw ConfigError("concat_rows: column counts differ");
            total += t.rows();
            ids.push_back(p.id);
        }
        Tensor out({total, width});
        std::size_t offset = 0;
        for (Var p : parts) {
            const Tensor& t = value(p);
            std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<long>(offset));
            offset += t.size();
        }
        return push_op(Op::concat_rows, std::move(ids), std::move(out));
    }

    Var add(Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.shape != bv.shape) throw ConfigError("add: shape mismatch");
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
        return push_op(Op::add, {a.id, b.id}, std::move(out));
    }

    Var scale(Var a, double factor) {
        Tensor out = value(a);
        for (double& v : out.data) v *= factor;
        Var v = push_op(Op::scale, {a.id}, std::move(out));
        nodes_.back().arg = factor;
        return v;
    }

    /// Mean over rows of -log softmax(logits)[label].
    Var softmax_xent(Var logits, std::span<const int> labels) {
        const Tensor& lv = value(logits);
        const std::size_t batch = lv.rows(), classes = lv.cols();
        if (labels.size() != batch) throw ConfigError("softmax_xent: label count != batch size");
        std::vector<double> probs(batch * classes);
        double total = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
            const int y = labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= classes) {
                throw ConfigError("softmax_xent: label out of range");
            }
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, lv(i, c));
            double sum = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                const double e = std::exp(lv(i, c) - mx);
                probs[i * classes + c] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] /= sum;
            total += (mx + std::log(sum)) - lv(i, static_cast<std::size_t>(y));
        }
        Var v = push_op(Op::softmax_xent, {logits.id},
                        Tensor::scalar(total / static_cast<double>(batch)));
        nodes_.back().saved = std::move(probs);
        nodes_.back().labels.assign(labels.begin(), labels.end());
        return v;
    }

    Var sum_squares(Var x) {
        return push_op(Op::sum_squares, {x.id}, Tensor::scalar(value(x).squared_norm()));
    }

    Var weighted_sum(Var x, const Tensor& weights) {
        const Tensor& xv = value(x);
        if (xv.size() != weights.size()) throw ConfigError("weighted_sum: size mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) s += xv.data[i] * weights.data[i];
        Var v = push_op(Op::weighted_sum, {x.id}, Tensor::scalar(s));
        nodes_.back().saved = weights.data;
        return v;
    }

    const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
    std::size_t size() const { return nodes_.size(); }

    void set_output(Var v) {
        if (value(v).size() != 1) throw ConfigError("tape output must be a scalar");
        output_ = v.id;
    }
    Var output() const { return Var{output_}; }
    double output_value() const { return value(output()).data[0]; }

    /// Reverse sweep from the scalar output. Returns one adjoint per node, indexed by
    /// node id. The tape itself is not modified, so repeated calls agree bit-for-bit.
    std::vector<Tensor> backward() const {
        if (output_ < 0) throw ConfigError("backward: tape has no output");
        std::vector<Tensor> adj(nodes_.size());
        adj[static_cast<std::size_t>(output_)] = Tensor::scalar(1.0);
        for (int id = output_; id >= 0; --id) {
            Tensor& g = adj[static_cast<std::size_t>(id)];
            if (g.data.empty()) continue;
            propagate(nodes_[static_cast<std::size_t>(id)], g, adj);
        }
        return adj;
    }

private:
    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var push_op(Op op, std::vector<int> inputs, Tensor out) {
        Node n;
        n.op = op;
        n.inputs = std::move(inputs);
        n.value = std::move(out);
        return push(std::move(n));
    }

    Tensor& slot(std::vector<Tensor>& adj, int id) const {
        Tensor& t = adj[static_cast<std::size_t>(id)];
        if (t.data.empty()) t = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape, 0.0);
        return t;
    }

    void propagate(const Node& n, const Tensor& g, std::vector<Tensor>& adj) const {
        switch (n.op) {
        case Op::leaf:
            return;
        case Op::matmul_nt: {
            const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
            const Tensor& w = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
            as_matrix(slot(adj, n.inputs[0])).noalias() += as_matrix(g) * as_matrix(w);
            as_matrix(slot(adj, n.inputs[1])).noalias() += as_matrix(g).transpose() * as_matrix(x);
            return;
        }
        case Op::batch_norm: {
            // dz = inv_std * (g - mean(g) - xhat * mean(g .* xhat)), column-wise.
            const Tensor& xhat = n.value;
            Tensor& dz = slot(adj, n.inputs[0]);
            const std::size_t batch = xhat.rows(), width = xhat.cols();
            const double inv_b = 1.0 / static_cast<double>(batch);
            for (std::size_t j = 0; j < width; ++j) {
                double mg = 0.0, mgx = 0.0;
                for (std::size_t i = 0; i < batch; ++i) {
                    mg += g(i, j);
                    mgx += g(i, j) * xhat(i, j);
                }
                mg *= inv_b;
                mgx *= inv_b;
                for (std::size_t i = 0; i < batch; ++i) {
                    dz(i, j) += n.saved[j] * (g(i, j) - mg - xhat(i, j) * mgx);
                }
            }
            return;
        }
        case Op::relu: {
            Tensor& dx = slot(adj, n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (n.value.data[i] > 0.0) dx.data[i] += g.data[i];
            return;
        }
        case Op::concat_rows: {
            std::size_t offset = 0;
            for (int in : n.inputs) {
                Tensor& d = slot(adj, in);
                for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += g.data[offset + i];
                offset += d.size();
            }
            return;
        }
        case Op::add: {
            for (int in : n.inputs) {
                Tensor& d = slot(adj, in);
                for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += g.data[i];
            }
            return;
        }
        case Op::scale: {
            Tensor& d = slot(adj, n.inputs[0]);
            for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += n.arg * g.data[i];
            return;
        }
        case Op::softmax_xent: {
            Tensor& d = slot(adj, n.inputs[0]);
            const std::size_t batch = d.rows(), classes = d.cols();
            const double s = g.data[0] / static_cast<double>(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t c = 0; c < classes; ++c) {
                    double p = n.saved[i * classes + c];
                    if (static_cast<int>(c) == n.labels[i]) p -= 1.0;
                    d(i, c) += s * p;
                }
            }
            return;
        }
        case Op::sum_squares: {
            const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
            Tensor& d = slot(adj, n.inputs[0]);
            for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += 2.0 * x.data[i] * g.data[0];
            return;
        }
        case Op::weighted_sum: {
            Tensor& d = slot(adj, n.inputs[0]);
            for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += n.saved[i] * g.data[0];
            return;
        }
        }
    }

    std::vector<Node> nodes_;
    int output_ = -1;
};

/// Central-difference gradient of a scalar function of a flat vector:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> x, double eps) {
    if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: epsilon must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = f(probe);
        probe[i] = orig - eps;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

} // namespace silab::ad

#endif
