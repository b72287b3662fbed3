#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/tensor.hpp"

namespace relgraph {

// Minimal graph topology consumed by the GCN propagation op. Directed edge
// list with both directions present; inv_sqrt_deghat[u] = 1/sqrt(deg(u)+1),
// the +1 being the self-loop of the symmetric normalization. A sampled
// subgraph keeps its parent-graph degrees here, which is what makes
// full-fanout sampling loss-equivalent to running on the whole graph.
struct PropGraph {
    std::size_t n = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // (dst, src): dst += norm * h[src]
    std::vector<double> inv_sqrt_deghat;
};

// A learnable parameter: value plus gradient and Adam moment buffers, all
// shape-locked together.
struct Param {
    Mat value, grad, m, v;

    void init(std::size_t rows, std::size_t cols) {
        value = Mat(rows, cols);
        grad = Mat(rows, cols);
        m = Mat(rows, cols);
        v = Mat(rows, cols);
    }
};

// Eager reverse-mode tape. Each op computes its value on creation; backward()
// walks the nodes in reverse and accumulates into input gradients. Parameter
// leaves copy the value in and accumulate their gradient straight into the
// owning Param's grad buffer, so one tape per sample composes with batch
// gradient accumulation for free.
class Tape {
    enum class Op {
        Constant,
        ParamLeaf,
        Gather,
        Add,
        AddBias,
        Scale,
        Matmul,
        MatmulNT,
        SoftmaxRows,
        Relu,
        MeanRows,
        RepeatRow,
        EdgeProp,
        CrossEntropy,
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        Mat val;
        Mat grad;
        Mat* sink = nullptr;                  // ParamLeaf: grad destination
        std::vector<std::size_t> idx;         // Gather rows / CrossEntropy targets
        double scalar = 1.0;                  // Scale factor
        const PropGraph* pg = nullptr;        // EdgeProp topology
    };

  public:
    int constant(Mat m) {
        Node n;
        n.op = Op::Constant;
        n.val = std::move(m);
        return push(std::move(n));
    }

    int param(Param& p) {
        Node n;
        n.op = Op::ParamLeaf;
        n.val = p.value;
        n.sink = &p.grad;
        return push(std::move(n));
    }

    int gather_rows(int a, std::vector<std::size_t> rows) {
        const Mat& A = val(a);
        Node n;
        n.op = Op::Gather;
        n.a = a;
        n.idx = std::move(rows);
        n.val = Mat(n.idx.size(), A.cols);
        for (std::size_t i = 0; i < n.idx.size(); ++i) {
            if (n.idx[i] >= A.rows)
                throw DimensionMismatch("gather row " + std::to_string(n.idx[i]) + " out of " +
                                        std::to_string(A.rows));
            for (std::size_t c = 0; c < A.cols; ++c) n.val.at(i, c) = A.at(n.idx[i], c);
        }
        return push(std::move(n));
    }

    int add(int a, int b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        require_same_shape(A, B, "add");
        Node n;
        n.op = Op::Add;
        n.a = a;
        n.b = b;
        n.val = A;
        for (std::size_t i = 0; i < B.size(); ++i) n.val.v[i] += B.v[i];
        return push(std::move(n));
    }

    // A (m×k) plus bias (1×k) broadcast over rows.
    int add_bias(int a, int bias) {
        const Mat& A = val(a);
        const Mat& B = val(bias);
        if (B.rows != 1 || B.cols != A.cols)
            throw DimensionMismatch("add_bias: bias must be 1x" + std::to_string(A.cols));
        Node n;
        n.op = Op::AddBias;
        n.a = a;
        n.b = bias;
        n.val = A;
        for (std::size_t r = 0; r < A.rows; ++r)
            for (std::size_t c = 0; c < A.cols; ++c) n.val.at(r, c) += B.at(0, c);
        return push(std::move(n));
    }

    int scale(int a, double c) {
        Node n;
        n.op = Op::Scale;
        n.a = a;
        n.scalar = c;
        n.val = val(a);
        for (double& x : n.val.v) x *= c;
        return push(std::move(n));
    }

    int matmul(int a, int b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (A.cols != B.rows)
            throw DimensionMismatch("matmul: " + std::to_string(A.cols) + " vs " +
                                    std::to_string(B.rows));
        Node n;
        n.op = Op::Matmul;
        n.a = a;
        n.b = b;
        n.val = Mat(A.rows, B.cols);
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t k = 0; k < A.cols; ++k) {
                double aik = A.at(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < B.cols; ++j) n.val.at(i, j) += aik * B.at(k, j);
            }
        return push(std::move(n));
    }

    // A (m×k) times B-transpose (n×k) -> (m×n).
    int matmul_nt(int a, int b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (A.cols != B.cols)
            throw DimensionMismatch("matmul_nt: " + std::to_string(A.cols) + " vs " +
                                    std::to_string(B.cols));
        Node n;
        n.op = Op::MatmulNT;
        n.a = a;
        n.b = b;
        n.val = Mat(A.rows, B.rows);
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < B.rows; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
                n.val.at(i, j) = s;
            }
        return push(std::move(n));
    }

    int softmax_rows(int a) {
        Node n;
        n.op = Op::SoftmaxRows;
        n.a = a;
        n.val = val(a);
        for (std::size_t r = 0; r < n.val.rows; ++r) {
            double mx = n.val.at(r, 0);
            for (std::size_t c = 1; c < n.val.cols; ++c) mx = std::max(mx, n.val.at(r, c));
            double sum = 0.0;
            for (std::size_t c = 0; c < n.val.cols; ++c) {
                double e = std::exp(n.val.at(r, c) - mx);
                n.val.at(r, c) = e;
                sum += e;
            }
            for (std::size_t c = 0; c < n.val.cols; ++c) n.val.at(r, c) /= sum;
        }
        return push(std::move(n));
    }

    int relu(int a) {
        Node n;
        n.op = Op::Relu;
        n.a = a;
        n.val = val(a);
        for (double& x : n.val.v) x = std::max(0.0, x);
        return push(std::move(n));
    }

    int mean_rows(int a) {
        const Mat& A = val(a);
        if (A.rows == 0) throw DimensionMismatch("mean_rows of empty matrix");
        Node n;
        n.op = Op::MeanRows;
        n.a = a;
        n.val = Mat(1, A.cols);
        for (std::size_t r = 0; r < A.rows; ++r)
            for (std::size_t c = 0; c < A.cols; ++c) n.val.at(0, c) += A.at(r, c);
        for (double& x : n.val.v) x /= static_cast<double>(A.rows);
        return push(std::move(n));
    }

    int repeat_row(int a, std::size_t m) {
        const Mat& A = val(a);
        if (A.rows != 1) throw DimensionMismatch("repeat_row input must be a single row");
        Node n;
        n.op = Op::RepeatRow;
        n.a = a;
        n.val = Mat(m, A.cols);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < A.cols; ++c) n.val.at(r, c) = A.at(0, c);
        return push(std::move(n));
    }

    // Symmetric-normalized propagation with self-loops:
    //   out[u] = sum over edges (u,v) of h[v]/sqrt(d̂u·d̂v)  +  h[u]/d̂u.
    // The coefficient matrix is symmetric, so backward reuses the same
    // accumulation on the incoming gradient.
    int edge_propagate(int a, const PropGraph& pg) {
        const Mat& A = val(a);
        if (A.rows != pg.n)
            throw DimensionMismatch("edge_propagate: " + std::to_string(A.rows) + " rows for " +
                                    std::to_string(pg.n) + "-node graph");
        Node n;
        n.op = Op::EdgeProp;
        n.a = a;
        n.pg = &pg;
        n.val = Mat(A.rows, A.cols);
        propagate(pg, A, n.val);
        return push(std::move(n));
    }

    // Mean over steps of -ln p(target). Input must hold probabilities
    // (rows summing to 1); pairs with softmax_rows.
    int cross_entropy(int probs, std::vector<std::size_t> targets) {
        const Mat& P = val(probs);
        if (targets.size() != P.rows)
            throw LengthMismatch("cross_entropy: " + std::to_string(targets.size()) +
                                 " targets for " + std::to_string(P.rows) + " steps");
        Node n;
        n.op = Op::CrossEntropy;
        n.a = probs;
        n.idx = std::move(targets);
        n.val = Mat(1, 1);
        for (std::size_t r = 0; r < P.rows; ++r) {
            if (n.idx[r] >= P.cols)
                throw TokenOutOfRange("target id " + std::to_string(n.idx[r]) + " out of " +
                                      std::to_string(P.cols));
            n.val.at(0, 0) -= std::log(std::max(P.at(r, n.idx[r]), 1e-300));
        }
        n.val.at(0, 0) /= static_cast<double>(P.rows);
        return push(std::move(n));
    }

    const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    // Seeds d(loss)/d(loss)=1 at a scalar node and accumulates gradients into
    // every reachable ParamLeaf's sink.
    void backward(int loss_id) {
        auto& loss = nodes_[static_cast<std::size_t>(loss_id)];
        if (loss.val.rows != 1 || loss.val.cols != 1)
            throw DimensionMismatch("backward requires a scalar loss node");
        for (Node& n : nodes_) n.grad = Mat(n.val.rows, n.val.cols);
        loss.grad.at(0, 0) = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) backward_node(nodes_[i]);
    }

  private:
    std::vector<Node> nodes_;

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size() - 1);
    }

    static void propagate(const PropGraph& pg, const Mat& in, Mat& out) {
        for (std::size_t u = 0; u < pg.n; ++u) {
            double w = pg.inv_sqrt_deghat[u] * pg.inv_sqrt_deghat[u];
            for (std::size_t c = 0; c < in.cols; ++c) out.at(u, c) += w * in.at(u, c);
        }
        for (const auto& [dst, src] : pg.edges) {
            double w = pg.inv_sqrt_deghat[dst] * pg.inv_sqrt_deghat[src];
            for (std::size_t c = 0; c < in.cols; ++c) out.at(dst, c) += w * in.at(src, c);
        }
    }

    Mat& grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Mat& val_of(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    void backward_node(Node& n) {
        const Mat& g = n.grad;
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::ParamLeaf:
                for (std::size_t i = 0; i < g.size(); ++i) n.sink->v[i] += g.v[i];
                break;
            case Op::Gather: {
                Mat& ga = grad_of(n.a);
                for (std::size_t i = 0; i < n.idx.size(); ++i)
                    for (std::size_t c = 0; c < g.cols; ++c) ga.at(n.idx[i], c) += g.at(i, c);
                break;
            }
            case Op::Add: {
                Mat& ga = grad_of(n.a);
                Mat& gb = grad_of(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga.v[i] += g.v[i];
                    gb.v[i] += g.v[i];
                }
                break;
            }
            case Op::AddBias: {
                Mat& ga = grad_of(n.a);
                Mat& gb = grad_of(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) gb.at(0, c) += g.at(r, c);
                break;
            }
            case Op::Scale: {
                Mat& ga = grad_of(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += n.scalar * g.v[i];
                break;
            }
            case Op::Matmul: {
                const Mat& A = val_of(n.a);
                const Mat& B = val_of(n.b);
                Mat& ga = grad_of(n.a);
                Mat& gb = grad_of(n.b);
                // dA += g · Bᵀ ; dB += Aᵀ · g
                for (std::size_t i = 0; i < A.rows; ++i)
                    for (std::size_t j = 0; j < B.cols; ++j) {
                        double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (std::size_t k = 0; k < A.cols; ++k) {
                            ga.at(i, k) += gij * B.at(k, j);
                            gb.at(k, j) += A.at(i, k) * gij;
                        }
                    }
                break;
            }
            case Op::MatmulNT: {
                const Mat& A = val_of(n.a);
                const Mat& B = val_of(n.b);
                Mat& ga = grad_of(n.a);
                Mat& gb = grad_of(n.b);
                // C = A·Bᵀ: dA += g·B ; dB += gᵀ·A
                for (std::size_t i = 0; i < A.rows; ++i)
                    for (std::size_t j = 0; j < B.rows; ++j) {
                        double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (std::size_t k = 0; k < A.cols; ++k) {
                            ga.at(i, k) += gij * B.at(j, k);
                            gb.at(j, k) += gij * A.at(i, k);
                        }
                    }
                break;
            }
            case Op::SoftmaxRows: {
                Mat& ga = grad_of(n.a);
                const Mat& y = n.val;
                for (std::size_t r = 0; r < y.rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                    for (std::size_t c = 0; c < y.cols; ++c)
                        ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
                }
                break;
            }
            case Op::Relu: {
                Mat& ga = grad_of(n.a);
                const Mat& A = val_of(n.a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (A.v[i] > 0.0) ga.v[i] += g.v[i];
                break;
            }
            case Op::MeanRows: {
                Mat& ga = grad_of(n.a);
                double inv = 1.0 / static_cast<double>(ga.rows);
                for (std::size_t r = 0; r < ga.rows; ++r)
                    for (std::size_t c = 0; c < ga.cols; ++c) ga.at(r, c) += inv * g.at(0, c);
                break;
            }
            case Op::RepeatRow: {
                Mat& ga = grad_of(n.a);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) ga.at(0, c) += g.at(r, c);
                break;
            }
            case Op::EdgeProp: {
                Mat& ga = grad_of(n.a);
                propagate(*n.pg, g, ga);
                break;
            }
            case Op::CrossEntropy: {
                Mat& ga = grad_of(n.a);
                const Mat& P = val_of(n.a);
                double gl = g.at(0, 0) / static_cast<double>(n.idx.size());
                for (std::size_t r = 0; r < n.idx.size(); ++r)
                    ga.at(r, n.idx[r]) -= gl / std::max(P.at(r, n.idx[r]), 1e-300);
                break;
            }
        }
    }
};

}  // namespace relgraph
