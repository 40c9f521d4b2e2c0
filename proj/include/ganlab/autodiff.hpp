#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ganlab/errors.hpp"

namespace ganlab::ad {

// Vector-valued tape primitives. Every backward rule below is expressed in
// terms of these same primitives, so gradients recorded on the tape can be
// differentiated again (double backprop by graph extension).
enum class Op : std::uint8_t {
    leaf,
    add,
    sub,
    scale,     // aux = constant factor
    cmul,      // componentwise product
    matvec,    // a: matrix (rows x cols, row-major), b: vector(cols) -> vector(rows)
    matvec_t,  // a: matrix (rows x cols), b: vector(rows) -> vector(cols)
    outer,     // a: vector(rows), b: vector(cols) -> matrix(rows x cols)
    tanh_fn,
    lrelu,      // aux = negative-branch slope; value at 0 follows the positive branch
    lrelu_mask, // derivative mask of lrelu; its own derivative is 0 by convention
    sigmoid_fn,
    log_sigmoid, // f(t) = -log(1 + exp(-t))
    sqrt_fn,
    recip,
    sum,       // vector -> scalar
    broadcast, // scalar -> vector(len)
    // batched (row-major matrix) primitives
    matmat_nt,     // a: m x k, b: n x k -> m x n (a b^T)
    matmat_nn,     // a: m x k, b: k x n -> m x n (a b)
    matmat_tn,     // a: m x k, b: m x n -> k x n (a^T b)
    row_broadcast, // a: vector(n) -> m x n (repeated rows)
    col_sum,       // a: m x n -> vector(n)
    col_broadcast, // a: vector(m) -> m x n (repeated columns)
    row_sum,       // a: m x n -> vector(m)
};

struct Node {
    Op op = Op::leaf;
    std::int32_t a = -1, b = -1;
    std::int32_t rows = 0, cols = 0; // matvec / matvec_t / outer shapes
    double aux = 0.0;
    std::size_t off = 0;
    std::int32_t len = 0;
};

/// Append-only computation graph with eagerly cached values. Replaying the
/// records reproduces all cached values bitwise.
class Tape {
public:
    int size() const { return static_cast<int>(nodes_.size()); }

    void clear() {
        nodes_.clear();
        vals_.clear();
    }

    std::span<const double> value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return {vals_.data() + n.off, static_cast<std::size_t>(n.len)};
    }

    double scalar(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.len != 1) throw invalid_input_error("tape: node is not a scalar");
        return vals_[n.off];
    }

    int len(int id) const { return nodes_[static_cast<std::size_t>(id)].len; }

    // -- construction ------------------------------------------------------

    int leaf(std::span<const double> v) {
        int id = push(Op::leaf, -1, -1, static_cast<int>(v.size()));
        std::copy(v.begin(), v.end(), out(id));
        return id;
    }

    int leaf(double v) { return leaf(std::span<const double>(&v, 1)); }

    int ones(int n) {
        int id = push(Op::leaf, -1, -1, n);
        std::fill(out(id), out(id) + n, 1.0);
        return id;
    }

    int add(int a, int b) {
        require_same_len(a, b, "add");
        int id = push(Op::add, a, b, len(a));
        eval(id);
        return id;
    }

    int sub(int a, int b) {
        require_same_len(a, b, "sub");
        int id = push(Op::sub, a, b, len(a));
        eval(id);
        return id;
    }

    int scale(int a, double c) {
        int id = push(Op::scale, a, -1, len(a));
        nodes_.back().aux = c;
        eval(id);
        return id;
    }

    int cmul(int a, int b) {
        require_same_len(a, b, "cmul");
        int id = push(Op::cmul, a, b, len(a));
        eval(id);
        return id;
    }

    int matvec(int w, int rows, int cols, int x) {
        if (len(w) != rows * cols) throw invalid_input_error("matvec: matrix shape mismatch");
        if (len(x) != cols) throw invalid_input_error("matvec: vector length mismatch");
        int id = push(Op::matvec, w, x, rows);
        nodes_.back().rows = rows;
        nodes_.back().cols = cols;
        eval(id);
        return id;
    }

    int matvec_t(int w, int rows, int cols, int v) {
        if (len(w) != rows * cols) throw invalid_input_error("matvec_t: matrix shape mismatch");
        if (len(v) != rows) throw invalid_input_error("matvec_t: vector length mismatch");
        int id = push(Op::matvec_t, w, v, cols);
        nodes_.back().rows = rows;
        nodes_.back().cols = cols;
        eval(id);
        return id;
    }

    int outer(int u, int v) {
        int rows = len(u), cols = len(v);
        int id = push(Op::outer, u, v, rows * cols);
        nodes_.back().rows = rows;
        nodes_.back().cols = cols;
        eval(id);
        return id;
    }

    int tanh(int a) { return unary(Op::tanh_fn, a); }

    int leaky_relu(int a, double slope = 0.2) {
        int id = push(Op::lrelu, a, -1, len(a));
        nodes_.back().aux = slope;
        eval(id);
        return id;
    }

    int lrelu_mask(int a, double slope = 0.2) {
        int id = push(Op::lrelu_mask, a, -1, len(a));
        nodes_.back().aux = slope;
        eval(id);
        return id;
    }

    int sigmoid(int a) { return unary(Op::sigmoid_fn, a); }
    int log_sigmoid(int a) { return unary(Op::log_sigmoid, a); }
    int sqrt(int a) { return unary(Op::sqrt_fn, a); }
    int recip(int a) { return unary(Op::recip, a); }

    int sum(int a) {
        int id = push(Op::sum, a, -1, 1);
        eval(id);
        return id;
    }

    int broadcast(int a, int n) {
        if (len(a) != 1) throw invalid_input_error("broadcast: source must be a scalar");
        int id = push(Op::broadcast, a, -1, n);
        eval(id);
        return id;
    }

    int dot(int a, int b) { return sum(cmul(a, b)); }

    // -- batched (row-major matrix) operations ------------------------------

    int matmat_nt(int a, int m, int k, int b, int n) {
        if (len(a) != m * k || len(b) != n * k)
            throw invalid_input_error("matmat_nt: shape mismatch");
        return matnode(Op::matmat_nt, a, b, m, n, m * n, k);
    }

    int matmat_nn(int a, int m, int k, int b, int n) {
        if (len(a) != m * k || len(b) != k * n)
            throw invalid_input_error("matmat_nn: shape mismatch");
        return matnode(Op::matmat_nn, a, b, m, n, m * n, k);
    }

    int matmat_tn(int a, int m, int k, int b, int n) {
        if (len(a) != m * k || len(b) != m * n)
            throw invalid_input_error("matmat_tn: shape mismatch");
        return matnode(Op::matmat_tn, a, b, k, n, k * n, m);
    }

    int row_broadcast(int a, int m) {
        int n = len(a);
        return matnode(Op::row_broadcast, a, -1, m, n, m * n);
    }

    int col_sum(int a, int m, int n) {
        if (len(a) != m * n) throw invalid_input_error("col_sum: shape mismatch");
        return matnode(Op::col_sum, a, -1, m, n, n);
    }

    int col_broadcast(int a, int n) {
        int m = len(a);
        return matnode(Op::col_broadcast, a, -1, m, n, m * n);
    }

    int row_sum(int a, int m, int n) {
        if (len(a) != m * n) throw invalid_input_error("row_sum: shape mismatch");
        return matnode(Op::row_sum, a, -1, m, n, m);
    }

    // -- reverse pass ------------------------------------------------------

    /// Reverse accumulation from a scalar root. Adjoints are appended to the
    /// tape as ordinary nodes; the returned vector maps each pre-existing
    /// node id to its adjoint node id (-1 where no gradient flows).
    std::vector<int> backward(int root) {
        if (len(root) != 1) throw invalid_input_error("backward: root must be a scalar");
        const int n0 = size();
        std::vector<int> adj(static_cast<std::size_t>(n0), -1);
        adj[static_cast<std::size_t>(root)] = ones(1);
        auto acc = [&](int p, int g) {
            int& slot = adj[static_cast<std::size_t>(p)];
            slot = slot < 0 ? g : add(slot, g);
        };
        for (int i = n0 - 1; i >= 0; --i) {
            int g = adj[static_cast<std::size_t>(i)];
            if (g < 0) continue;
            const Node n = nodes_[static_cast<std::size_t>(i)];
            switch (n.op) {
            case Op::leaf:
                break;
            case Op::add:
                acc(n.a, g);
                acc(n.b, g);
                break;
            case Op::sub:
                acc(n.a, g);
                acc(n.b, scale(g, -1.0));
                break;
            case Op::scale:
                acc(n.a, scale(g, n.aux));
                break;
            case Op::cmul:
                acc(n.a, cmul(g, n.b));
                acc(n.b, cmul(g, n.a));
                break;
            case Op::matvec:
                acc(n.a, outer(g, n.b));
                acc(n.b, matvec_t(n.a, n.rows, n.cols, g));
                break;
            case Op::matvec_t:
                acc(n.a, outer(n.b, g));
                acc(n.b, matvec(n.a, n.rows, n.cols, g));
                break;
            case Op::outer:
                acc(n.a, matvec(g, n.rows, n.cols, n.b));
                acc(n.b, matvec_t(g, n.rows, n.cols, n.a));
                break;
            case Op::tanh_fn:
                acc(n.a, cmul(g, sub(ones(n.len), cmul(i, i))));
                break;
            case Op::lrelu:
                acc(n.a, cmul(g, lrelu_mask(n.a, n.aux)));
                break;
            case Op::lrelu_mask:
                break; // second derivative treated as 0 everywhere
            case Op::sigmoid_fn:
                acc(n.a, cmul(g, cmul(i, sub(ones(n.len), i))));
                break;
            case Op::log_sigmoid:
                acc(n.a, cmul(g, sigmoid(scale(n.a, -1.0))));
                break;
            case Op::sqrt_fn:
                acc(n.a, cmul(g, scale(recip(i), 0.5)));
                break;
            case Op::recip:
                acc(n.a, cmul(g, scale(cmul(i, i), -1.0)));
                break;
            case Op::sum:
                acc(n.a, broadcast(g, nodes_[static_cast<std::size_t>(n.a)].len));
                break;
            case Op::broadcast:
                acc(n.a, sum(g));
                break;
            case Op::matmat_nt: {
                const int m = n.rows, nn = n.cols, k = static_cast<int>(n.aux);
                acc(n.a, matmat_nn(g, m, nn, n.b, k));
                acc(n.b, matmat_tn(g, m, nn, n.a, k));
                break;
            }
            case Op::matmat_nn: {
                const int m = n.rows, nn = n.cols, k = static_cast<int>(n.aux);
                acc(n.a, matmat_nt(g, m, nn, n.b, k));
                acc(n.b, matmat_tn(n.a, m, k, g, nn));
                break;
            }
            case Op::matmat_tn: {
                const int k = n.rows, nn = n.cols, m = static_cast<int>(n.aux);
                acc(n.a, matmat_nt(n.b, m, nn, g, k));
                acc(n.b, matmat_nn(n.a, m, k, g, nn));
                break;
            }
            case Op::row_broadcast:
                acc(n.a, col_sum(g, n.rows, n.cols));
                break;
            case Op::col_sum:
                acc(n.a, row_broadcast(g, n.rows));
                break;
            case Op::col_broadcast:
                acc(n.a, row_sum(g, n.rows, n.cols));
                break;
            case Op::row_sum:
                acc(n.a, col_broadcast(g, n.cols));
                break;
            }
        }
        return adj;
    }

    /// Recomputes every cached value from the records, in place.
    void replay() {
        for (int i = 0; i < size(); ++i)
            if (nodes_[static_cast<std::size_t>(i)].op != Op::leaf) eval(i);
    }

    std::vector<double> snapshot_values() const { return vals_; }

private:
    std::vector<Node> nodes_;
    std::vector<double> vals_;

    double* out(int id) { return vals_.data() + nodes_[static_cast<std::size_t>(id)].off; }
    const double* in(int id) const { return vals_.data() + nodes_[static_cast<std::size_t>(id)].off; }

    int push(Op op, int a, int b, int len) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.len = len;
        n.off = vals_.size();
        nodes_.push_back(n);
        vals_.resize(vals_.size() + static_cast<std::size_t>(len));
        return size() - 1;
    }

    int unary(Op op, int a) {
        int id = push(op, a, -1, len(a));
        eval(id);
        return id;
    }

    // rows/cols describe the result; aux carries the contraction length
    int matnode(Op op, int a, int b, int rows, int cols, int out_len, int inner = 0) {
        int id = push(op, a, b, out_len);
        Node& n = nodes_.back();
        n.rows = rows;
        n.cols = cols;
        n.aux = static_cast<double>(inner);
        eval(id);
        return id;
    }

    void require_same_len(int a, int b, const char* what) {
        if (len(a) != len(b))
            throw invalid_input_error(std::string("tape: length mismatch in ") + what);
    }

    void eval(int id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        double* y = out(id);
        const double* a = n.a >= 0 ? in(n.a) : nullptr;
        const double* b = n.b >= 0 ? in(n.b) : nullptr;
        switch (n.op) {
        case Op::leaf:
            break;
        case Op::add:
            for (int k = 0; k < n.len; ++k) y[k] = a[k] + b[k];
            break;
        case Op::sub:
            for (int k = 0; k < n.len; ++k) y[k] = a[k] - b[k];
            break;
        case Op::scale:
            for (int k = 0; k < n.len; ++k) y[k] = n.aux * a[k];
            break;
        case Op::cmul:
            for (int k = 0; k < n.len; ++k) y[k] = a[k] * b[k];
            break;
        case Op::matvec:
            for (int r = 0; r < n.rows; ++r) {
                double acc = 0.0;
                const double* row = a + static_cast<std::size_t>(r) * n.cols;
                for (int c = 0; c < n.cols; ++c) acc += row[c] * b[c];
                y[r] = acc;
            }
            break;
        case Op::matvec_t:
            for (int c = 0; c < n.cols; ++c) y[c] = 0.0;
            for (int r = 0; r < n.rows; ++r) {
                const double* row = a + static_cast<std::size_t>(r) * n.cols;
                for (int c = 0; c < n.cols; ++c) y[c] += row[c] * b[r];
            }
            break;
        case Op::outer:
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c)
                    y[static_cast<std::size_t>(r) * n.cols + c] = a[r] * b[c];
            break;
        case Op::tanh_fn:
            for (int k = 0; k < n.len; ++k) y[k] = std::tanh(a[k]);
            break;
        case Op::lrelu:
            for (int k = 0; k < n.len; ++k) y[k] = a[k] >= 0.0 ? a[k] : n.aux * a[k];
            break;
        case Op::lrelu_mask:
            for (int k = 0; k < n.len; ++k) y[k] = a[k] >= 0.0 ? 1.0 : n.aux;
            break;
        case Op::sigmoid_fn:
            for (int k = 0; k < n.len; ++k) {
                double t = a[k];
                if (t >= 0.0) {
                    y[k] = 1.0 / (1.0 + std::exp(-t));
                } else {
                    double e = std::exp(t);
                    y[k] = e / (1.0 + e);
                }
            }
            break;
        case Op::log_sigmoid:
            for (int k = 0; k < n.len; ++k) {
                double t = a[k];
                y[k] = t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
            }
            break;
        case Op::sqrt_fn:
            for (int k = 0; k < n.len; ++k) y[k] = std::sqrt(a[k]);
            break;
        case Op::recip:
            for (int k = 0; k < n.len; ++k) y[k] = 1.0 / a[k];
            break;
        case Op::sum: {
            double acc = 0.0;
            int alen = nodes_[static_cast<std::size_t>(n.a)].len;
            for (int k = 0; k < alen; ++k) acc += a[k];
            y[0] = acc;
            break;
        }
        case Op::broadcast:
            for (int k = 0; k < n.len; ++k) y[k] = a[0];
            break;
        case Op::matmat_nt: {
            const int m = n.rows, nn = n.cols, k = static_cast<int>(n.aux);
            for (int i = 0; i < m; ++i) {
                const double* arow = a + static_cast<std::size_t>(i) * k;
                for (int j = 0; j < nn; ++j) {
                    const double* brow = b + static_cast<std::size_t>(j) * k;
                    double acc = 0.0;
                    for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
                    y[static_cast<std::size_t>(i) * nn + j] = acc;
                }
            }
            break;
        }
        case Op::matmat_nn: {
            const int m = n.rows, nn = n.cols, k = static_cast<int>(n.aux);
            std::fill(y, y + n.len, 0.0);
            for (int i = 0; i < m; ++i) {
                double* yrow = y + static_cast<std::size_t>(i) * nn;
                const double* arow = a + static_cast<std::size_t>(i) * k;
                for (int l = 0; l < k; ++l) {
                    double av = arow[l];
                    const double* brow = b + static_cast<std::size_t>(l) * nn;
                    for (int j = 0; j < nn; ++j) yrow[j] += av * brow[j];
                }
            }
            break;
        }
        case Op::matmat_tn: {
            const int k = n.rows, nn = n.cols, m = static_cast<int>(n.aux);
            std::fill(y, y + n.len, 0.0);
            for (int i = 0; i < m; ++i) {
                const double* arow = a + static_cast<std::size_t>(i) * k;
                const double* brow = b + static_cast<std::size_t>(i) * nn;
                for (int l = 0; l < k; ++l) {
                    double av = arow[l];
                    double* yrow = y + static_cast<std::size_t>(l) * nn;
                    for (int j = 0; j < nn; ++j) yrow[j] += av * brow[j];
                }
            }
            break;
        }
        case Op::row_broadcast: {
            const int m = n.rows, nn = n.cols;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[static_cast<std::size_t>(i) * nn + j] = a[j];
            break;
        }
        case Op::col_sum: {
            const int m = n.rows, nn = n.cols;
            std::fill(y, y + nn, 0.0);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[j] += a[static_cast<std::size_t>(i) * nn + j];
            break;
        }
        case Op::col_broadcast: {
            const int m = n.rows, nn = n.cols;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) y[static_cast<std::size_t>(i) * nn + j] = a[i];
            break;
        }
        case Op::row_sum: {
            const int m = n.rows, nn = n.cols;
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                const double* arow = a + static_cast<std::size_t>(i) * nn;
                for (int j = 0; j < nn; ++j) acc += arow[j];
                y[i] = acc;
            }
            break;
        }
        }
    }
};

} // namespace ganlab::ad
