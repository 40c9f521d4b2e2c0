#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ganlab/autodiff.hpp"
#include "ganlab/errors.hpp"
#include "ganlab/rng.hpp"

namespace ganlab {

enum class Activation { leaky_relu, tanh };

constexpr double kLeakySlope = 0.2;

struct Layer {
    int in = 0, out = 0;
    std::vector<double> W; // row-major, out x in
    std::vector<double> b;
};

/// Parameters of a small fully connected network. The activation is applied
/// after every layer except the last.
struct MlpParams {
    std::vector<Layer> layers;
    Activation activation = Activation::leaky_relu;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.W.size() + l.b.size();
        return n;
    }

    void validate() const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const Layer& l = layers[i];
            if (l.W.size() != static_cast<std::size_t>(l.in) * l.out ||
                l.b.size() != static_cast<std::size_t>(l.out))
                throw invalid_input_error("mlp: layer shape mismatch");
            if (i > 0 && layers[i - 1].out != l.in)
                throw invalid_input_error("mlp: inconsistent layer chain");
        }
    }

    // Flattening order: layer-major, weights before biases, row-major weights.
    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(param_count());
        for (const auto& l : layers) {
            v.insert(v.end(), l.W.begin(), l.W.end());
            v.insert(v.end(), l.b.begin(), l.b.end());
        }
        return v;
    }

    void set_flat(std::span<const double> v) {
        if (v.size() != param_count()) throw invalid_input_error("mlp: flat size mismatch");
        std::size_t k = 0;
        for (auto& l : layers) {
            std::copy(v.begin() + k, v.begin() + k + l.W.size(), l.W.begin());
            k += l.W.size();
            std::copy(v.begin() + k, v.begin() + k + l.b.size(), l.b.begin());
            k += l.b.size();
        }
    }

    /// dims = {input, hidden..., output}; weights uniform in
    /// [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
    static MlpParams create(const std::vector<int>& dims, Activation act, Rng& rng) {
        if (dims.size() < 2) throw invalid_input_error("mlp: need at least input and output dims");
        MlpParams p;
        p.activation = act;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            Layer l;
            l.in = dims[i];
            l.out = dims[i + 1];
            double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
            l.W.resize(static_cast<std::size_t>(l.in) * l.out);
            for (auto& w : l.W) w = rng.uniform(-bound, bound);
            l.b.assign(static_cast<std::size_t>(l.out), 0.0);
            p.layers.push_back(std::move(l));
        }
        return p;
    }
};

/// Plain (untaped) forward pass.
inline std::vector<double> forward(const MlpParams& p, std::span<const double> x) {
    if (p.layers.empty()) return {x.begin(), x.end()};
    if (static_cast<int>(x.size()) != p.input_dim())
        throw invalid_input_error("mlp forward: input dimension mismatch");
    std::vector<double> cur(x.begin(), x.end()), next;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        const Layer& l = p.layers[li];
        next.assign(static_cast<std::size_t>(l.out), 0.0);
        for (int r = 0; r < l.out; ++r) {
            double acc = l.b[static_cast<std::size_t>(r)];
            const double* row = l.W.data() + static_cast<std::size_t>(r) * l.in;
            for (int c = 0; c < l.in; ++c) acc += row[c] * cur[static_cast<std::size_t>(c)];
            next[static_cast<std::size_t>(r)] = acc;
        }
        if (li + 1 < p.layers.size()) {
            for (auto& v : next)
                v = p.activation == Activation::tanh ? std::tanh(v)
                                                     : (v >= 0.0 ? v : kLeakySlope * v);
        }
        cur.swap(next);
    }
    return cur;
}

/// Parameter leaves of one network pushed onto a tape.
struct MlpOnTape {
    std::vector<int> w_ids, b_ids;
};

inline MlpOnTape push_params(ad::Tape& tape, const MlpParams& p) {
    MlpOnTape m;
    for (const auto& l : p.layers) {
        m.w_ids.push_back(tape.leaf(std::span<const double>(l.W)));
        m.b_ids.push_back(tape.leaf(std::span<const double>(l.b)));
    }
    return m;
}

/// Recorded forward pass; returns the output node.
inline int mlp_forward(ad::Tape& tape, const MlpParams& p, const MlpOnTape& m, int x_node) {
    if (p.layers.empty()) return x_node;
    if (tape.len(x_node) != p.input_dim())
        throw invalid_input_error("mlp forward: input dimension mismatch");
    int cur = x_node;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        const Layer& l = p.layers[li];
        cur = tape.add(tape.matvec(m.w_ids[li], l.out, l.in, cur), m.b_ids[li]);
        if (li + 1 < p.layers.size())
            cur = p.activation == Activation::tanh ? tape.tanh(cur)
                                                   : tape.leaky_relu(cur, kLeakySlope);
    }
    return cur;
}

/// Recorded forward pass over a whole batch: x_node holds batch x input_dim
/// row-major samples; the result holds batch x output_dim rows.
inline int mlp_forward_batch(ad::Tape& tape, const MlpParams& p, const MlpOnTape& m, int x_node,
                             int batch) {
    if (p.layers.empty()) return x_node;
    if (tape.len(x_node) != batch * p.input_dim())
        throw invalid_input_error("mlp forward: batch shape mismatch");
    int cur = x_node;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        const Layer& l = p.layers[li];
        int lin = tape.matmat_nt(cur, batch, l.in, m.w_ids[li], l.out);
        cur = tape.add(lin, tape.row_broadcast(m.b_ids[li], batch));
        if (li + 1 < p.layers.size())
            cur = p.activation == Activation::tanh ? tape.tanh(cur)
                                                   : tape.leaky_relu(cur, kLeakySlope);
    }
    return cur;
}

/// Flattened parameter gradient assembled from an adjoint map; missing
/// adjoints contribute zeros.
inline std::vector<double> read_param_gradient(const ad::Tape& tape, const std::vector<int>& adj,
                                               const MlpParams& p, const MlpOnTape& m) {
    std::vector<double> g;
    g.reserve(p.param_count());
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        auto append = [&](int node, std::size_t n) {
            int a = node < static_cast<int>(adj.size()) ? adj[static_cast<std::size_t>(node)] : -1;
            if (a < 0) {
                g.insert(g.end(), n, 0.0);
            } else {
                auto v = tape.value(a);
                g.insert(g.end(), v.begin(), v.end());
            }
        };
        append(m.w_ids[li], p.layers[li].W.size());
        append(m.b_ids[li], p.layers[li].b.size());
    }
    return g;
}

/// Gradient of a scalar objective node with respect to the network parameters
/// (reverse accumulation; flattened layout matches MlpParams::flatten).
inline std::vector<double> grad_params(ad::Tape& tape, int objective, const MlpParams& p,
                                       const MlpOnTape& m) {
    std::vector<int> adj = tape.backward(objective);
    return read_param_gradient(tape, adj, p, m);
}

/// Gradient of the (scalar) network output with respect to the input point.
inline std::vector<double> grad_input(const MlpParams& p, std::span<const double> x) {
    if (p.output_dim() != 1 && !p.layers.empty())
        throw invalid_input_error("grad_input: network output must be scalar");
    ad::Tape tape;
    MlpOnTape m = push_params(tape, p);
    int xn = tape.leaf(x);
    int y = mlp_forward(tape, p, m, xn);
    if (tape.len(y) != 1) throw invalid_input_error("grad_input: output is not scalar");
    std::vector<int> adj = tape.backward(y);
    int gx = adj[static_cast<std::size_t>(xn)];
    if (gx < 0) return std::vector<double>(x.size(), 0.0);
    auto v = tape.value(gx);
    return {v.begin(), v.end()};
}

/// Gradient of ||grad_x D(x)||^2 with respect to the parameters, by extending
/// the tape with the input-gradient computation and differentiating again.
inline std::vector<double> grad_gradnorm_params(const MlpParams& p, std::span<const double> x) {
    ad::Tape tape;
    MlpOnTape m = push_params(tape, p);
    int xn = tape.leaf(x);
    int y = mlp_forward(tape, p, m, xn);
    if (tape.len(y) != 1) throw invalid_input_error("grad_gradnorm_params: output is not scalar");
    std::vector<int> adj = tape.backward(y);
    int gx = adj[static_cast<std::size_t>(xn)];
    if (gx < 0) return std::vector<double>(p.param_count(), 0.0);
    int norm2 = tape.dot(gx, gx);
    return grad_params(tape, norm2, p, m);
}

/// Max over coordinates of |AD - FD| / max(1, |FD|), central differences with
/// per-coordinate step eps * max(1, |point_i|).
inline double gradcheck(const std::function<double(const std::vector<double>&)>& fn,
                        const std::function<std::vector<double>(const std::vector<double>&)>& grad,
                        const std::vector<double>& point, double eps) {
    std::vector<double> g = grad(point);
    if (g.size() != point.size()) throw invalid_input_error("gradcheck: gradient size mismatch");
    double worst = 0.0;
    std::vector<double> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        double step = eps * std::max(1.0, std::abs(point[i]));
        probe[i] = point[i] + step;
        double hi = fn(probe);
        probe[i] = point[i] - step;
        double lo = fn(probe);
        probe[i] = point[i];
        double fd = (hi - lo) / (2.0 * step);
        worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

} // namespace ganlab
