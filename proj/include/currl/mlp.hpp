#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "currl/rng.hpp"

namespace currl {

/// Dense row-major matrix of doubles.  Just enough linear algebra for the
/// Q-network; no external BLAS dependency, which keeps results bit-stable
/// across machines.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
};

/// Inner product with a fixed four-accumulator association.  The grouping is
/// part of the reproducibility contract: it never varies with optimization
/// level, so training runs replay exactly.
inline double dot(const double* w, const double* x, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += w[i] * x[i];
        s1 += w[i + 1] * x[i + 1];
        s2 += w[i + 2] * x[i + 2];
        s3 += w[i + 3] * x[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += w[i] * x[i];
    return s;
}

/// Fully connected network with tanh hidden activations and an identity
/// output layer.  dims = {input, hidden..., output}; w[l] maps activations of
/// layer l (dims[l]) to pre-activations of layer l+1 (dims[l+1]).  The same
/// struct doubles as a gradient container, since gradients share the shapes.
struct Mlp {
    std::vector<int> dims;
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    int layer_count() const { return static_cast<int>(w.size()); }
};

inline void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("network needs at least input and output dims");
    for (int d : dims)
        if (d <= 0) throw std::invalid_argument("network dims must be positive");
}

/// Network with all parameters zero, shaped like `dims`.
inline Mlp make_zero_mlp(std::vector<int> dims) {
    check_dims(dims);
    Mlp net;
    net.dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
        net.w.emplace_back(net.dims[l + 1], net.dims[l]);
        net.b.emplace_back(net.dims[l + 1], 0.0);
    }
    return net;
}

/// Zero-parameter network with the same shape as `like` (gradient buffer).
inline Mlp zero_clone(const Mlp& like) { return make_zero_mlp(like.dims); }

inline void fill_zero(Mlp& net) {
    for (Matrix& m : net.w) std::fill(m.a.begin(), m.a.end(), 0.0);
    for (auto& v : net.b) std::fill(v.begin(), v.end(), 0.0);
}

/// Initializes weights and biases uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
/// Draw order is frozen: layers first to last, weight matrix row-major, then
/// that layer's bias vector.  One uniform01 per parameter.
inline Mlp make_mlp(std::vector<int> dims, Rng& rng) {
    Mlp net = make_zero_mlp(std::move(dims));
    for (int l = 0; l < net.layer_count(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(net.dims[l]));
        for (double& p : net.w[l].a) p = (2.0 * rng.uniform01() - 1.0) * bound;
        for (double& p : net.b[l]) p = (2.0 * rng.uniform01() - 1.0) * bound;
    }
    return net;
}

/// Activations recorded by a forward pass, for use by backward().  act[0] is
/// the input; act[l] for hidden layers is the post-tanh activation; the last
/// entry is the identity output.
struct ForwardCache {
    std::vector<std::vector<double>> act;
};

/// Forward pass.  Hidden layers apply tanh; the output layer is linear.
inline std::vector<double> forward(const Mlp& net, std::span<const double> x,
                                   ForwardCache* cache = nullptr) {
    if (static_cast<int>(x.size()) != net.input_dim())
        throw std::invalid_argument("forward: input has dim " + std::to_string(x.size()) +
                                    ", network expects " + std::to_string(net.input_dim()));
    std::vector<double> cur(x.begin(), x.end());
    if (cache) {
        cache->act.clear();
        cache->act.push_back(cur);
    }
    for (int l = 0; l < net.layer_count(); ++l) {
        const Matrix& W = net.w[l];
        std::vector<double> next(W.rows);
        for (int r = 0; r < W.rows; ++r) next[r] = net.b[l][r] + dot(W.row(r), cur.data(), W.cols);
        if (l + 1 < net.layer_count())
            for (double& v : next) v = std::tanh(v);
        if (cache) cache->act.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

/// Backpropagates `out_grad` (dLoss/dOutput) through the pass recorded in
/// `cache`, adding parameter gradients into `grads`.  Accumulating in place
/// lets a minibatch reuse one gradient buffer instead of allocating per
/// sample.  tanh' is recovered from the cached post-activation as 1 - a^2.
inline void backward_accumulate(const Mlp& net, const ForwardCache& cache,
                                std::span<const double> out_grad, Mlp& grads) {
    int layers = net.layer_count();
    if (static_cast<int>(cache.act.size()) != layers + 1)
        throw std::invalid_argument("backward: cache does not match network depth");
    if (static_cast<int>(out_grad.size()) != net.output_dim())
        throw std::invalid_argument("backward: out_grad has wrong dimension");
    if (grads.dims != net.dims) throw std::invalid_argument("backward: gradient buffer shape mismatch");

    std::vector<double> delta(out_grad.begin(), out_grad.end());
    for (int l = layers - 1; l >= 0; --l) {
        const std::vector<double>& a_in = cache.act[l];
        const Matrix& W = net.w[l];
        Matrix& gw = grads.w[l];
        for (int r = 0; r < W.rows; ++r) {
            double d = delta[r];
            if (d == 0.0) continue;  // common case: loss touches one output unit
            double* grow = gw.row(r);
            for (int c = 0; c < W.cols; ++c) grow[c] += d * a_in[c];
            grads.b[l][r] += d;
        }
        if (l > 0) {
            std::vector<double> gx(W.cols, 0.0);
            for (int r = 0; r < W.rows; ++r) {
                double d = delta[r];
                if (d == 0.0) continue;
                const double* wrow = W.row(r);
                for (int c = 0; c < W.cols; ++c) gx[c] += d * wrow[c];
            }
            for (int c = 0; c < W.cols; ++c) gx[c] *= 1.0 - a_in[c] * a_in[c];
            delta = std::move(gx);
        }
    }
}

/// Convenience wrapper returning a fresh gradient container.
inline Mlp backward(const Mlp& net, const ForwardCache& cache, std::span<const double> out_grad) {
    Mlp grads = zero_clone(net);
    backward_accumulate(net, cache, out_grad, grads);
    return grads;
}

/// Huber loss of a residual: quadratic inside [-delta, delta], linear with
/// matched value and slope outside.
inline double huber(double err, double delta) {
    double ae = std::abs(err);
    if (ae <= delta) return 0.5 * err * err;
    return delta * (ae - 0.5 * delta);
}

/// d huber / d err: the residual clipped to [-delta, delta].
inline double huber_grad(double err, double delta) { return std::clamp(err, -delta, delta); }

/// Per-parameter squared-gradient accumulators for RMSProp.
struct RmsPropState {
    double rho = 0.99;
    double stabilizer = 1e-8;
    std::vector<Matrix> vw;
    std::vector<std::vector<double>> vb;
};

inline RmsPropState make_rmsprop_state(const Mlp& like, double rho = 0.99,
                                       double stabilizer = 1e-8) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rmsprop rho must be in [0, 1)");
    if (!(stabilizer > 0.0)) throw std::invalid_argument("rmsprop stabilizer must be positive");
    RmsPropState s;
    s.rho = rho;
    s.stabilizer = stabilizer;
    for (const Matrix& m : like.w) s.vw.emplace_back(m.rows, m.cols);
    for (const auto& v : like.b) s.vb.emplace_back(v.size(), 0.0);
    return s;
}

/// One RMSProp update: v <- rho*v + (1-rho)*g^2, p <- p - lr*g/sqrt(v + eps).
/// The stabilizer sits inside the square root.
inline void rmsprop_step(Mlp& params, const Mlp& grads, RmsPropState& state, double lr) {
    if (params.dims != grads.dims) throw std::invalid_argument("rmsprop: shape mismatch");
    auto update = [&](double& p, double g, double& v) {
        v = state.rho * v + (1.0 - state.rho) * g * g;
        p -= lr * g / std::sqrt(v + state.stabilizer);
    };
    for (int l = 0; l < params.layer_count(); ++l) {
        for (std::size_t i = 0; i < params.w[l].a.size(); ++i)
            update(params.w[l].a[i], grads.w[l].a[i], state.vw[l].a[i]);
        for (std::size_t i = 0; i < params.b[l].size(); ++i)
            update(params.b[l][i], grads.b[l][i], state.vb[l][i]);
    }
}

inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < net.layer_count(); ++l)
        layers.push_back({{"w", net.w[l].a}, {"b", net.b[l]}});
    return {{"dims", net.dims}, {"layers", std::move(layers)}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net = make_zero_mlp(j.at("dims").get<std::vector<int>>());
    const nlohmann::json& layers = j.at("layers");
    if (static_cast<int>(layers.size()) != net.layer_count())
        throw std::invalid_argument("network json: layer count does not match dims");
    for (int l = 0; l < net.layer_count(); ++l) {
        auto w = layers[l].at("w").get<std::vector<double>>();
        auto b = layers[l].at("b").get<std::vector<double>>();
        if (w.size() != net.w[l].a.size() || b.size() != net.b[l].size())
            throw std::invalid_argument("network json: layer " + std::to_string(l) + " has wrong size");
        net.w[l].a = std::move(w);
        net.b[l] = std::move(b);
    }
    return net;
}

inline nlohmann::json rmsprop_to_json(const RmsPropState& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < s.vw.size(); ++l)
        layers.push_back({{"vw", s.vw[l].a}, {"vb", s.vb[l]}});
    return {{"rho", s.rho}, {"stabilizer", s.stabilizer}, {"layers", std::move(layers)}};
}

inline RmsPropState rmsprop_from_json(const nlohmann::json& j, const Mlp& like) {
    RmsPropState s = make_rmsprop_state(like, j.at("rho").get<double>(),
                                        j.at("stabilizer").get<double>());
    const nlohmann::json& layers = j.at("layers");
    if (layers.size() != s.vw.size())
        throw std::invalid_argument("optimizer json: layer count mismatch");
    for (std::size_t l = 0; l < s.vw.size(); ++l) {
        auto vw = layers[l].at("vw").get<std::vector<double>>();
        auto vb = layers[l].at("vb").get<std::vector<double>>();
        if (vw.size() != s.vw[l].a.size() || vb.size() != s.vb[l].size())
            throw std::invalid_argument("optimizer json: layer " + std::to_string(l) + " has wrong size");
        s.vw[l].a = std::move(vw);
        s.vb[l] = std::move(vb);
    }
    return s;
}

}  // namespace currl
