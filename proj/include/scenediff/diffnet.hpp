#pragma once

// Minimal dense-network substrate: forward with activation tape, exact
// reverse-mode gradients, and Adam/AdamW parameter updates. All math
// is 64-bit; identical seeds give bit-identical results.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

#include "scenediff/geometry.hpp"

namespace scenediff {

enum class Nonlinearity { kIdentity, kSmoothGated, kTanh };

inline double activate(Nonlinearity nl, double x) {
    switch (nl) {
        case Nonlinearity::kIdentity: return x;
        case Nonlinearity::kSmoothGated: return x * sigmoid(x);
        case Nonlinearity::kTanh: return std::tanh(x);
    }
    return x;
}

inline double activate_grad(Nonlinearity nl, double x) {
    switch (nl) {
        case Nonlinearity::kIdentity: return 1.0;
        case Nonlinearity::kSmoothGated: {
            double s = sigmoid(x);
            return s + x * s * (1.0 - s);
        }
        case Nonlinearity::kTanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

struct NetSpec {
    // sizes[0] is the input width; each later entry is a layer output.
    std::vector<int> sizes;
    // One activation per layer (sizes.size() - 1 entries).
    std::vector<Nonlinearity> acts;

    static NetSpec dense(std::vector<int> sizes, Nonlinearity hidden) {
        NetSpec s;
        s.sizes = std::move(sizes);
        if (s.sizes.size() < 2) throw std::invalid_argument("NetSpec: need at least one layer");
        s.acts.assign(s.sizes.size() - 1, hidden);
        s.acts.back() = Nonlinearity::kIdentity;
        return s;
    }

    int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
    int input_size() const { return sizes.front(); }
    int output_size() const { return sizes.back(); }

    size_t param_count() const {
        size_t n = 0;
        for (int l = 0; l < layer_count(); ++l)
            n += static_cast<size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
        return n;
    }

    // Offset of layer l's weight block in the flat parameter vector;
    // biases follow the weights within each block.
    size_t layer_offset(int l) const {
        size_t n = 0;
        for (int i = 0; i < l; ++i)
            n += static_cast<size_t>(sizes[i + 1]) * sizes[i] + sizes[i + 1];
        return n;
    }

    void validate() const {
        if (sizes.size() < 2) throw std::invalid_argument("NetSpec: need at least one layer");
        if (acts.size() != sizes.size() - 1)
            throw std::invalid_argument("NetSpec: one activation per layer required");
        for (int s : sizes)
            if (s <= 0) throw std::invalid_argument("NetSpec: layer sizes must be positive");
    }
};

struct Tape {
    // post[0] is the input; pre[l]/post[l+1] are layer l's pre- and
    // post-activation vectors.
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
};

inline std::vector<double> init_params(const NetSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    std::vector<double> params(spec.param_count(), 0.0);
    for (int l = 0; l < spec.layer_count(); ++l) {
        int in = spec.sizes[l], out = spec.sizes[l + 1];
        double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> d(-bound, bound);
        double* w = params.data() + spec.layer_offset(l);
        for (int i = 0; i < out * in; ++i) w[i] = d(rng);
        // biases stay zero
    }
    return params;
}

inline Tape net_forward(const NetSpec& spec, const std::vector<double>& params,
                         const std::vector<double>& input) {
    if (static_cast<int>(input.size()) != spec.input_size())
        throw std::invalid_argument("net_forward: input size mismatch");
    if (params.size() != spec.param_count())
        throw std::invalid_argument("net_forward: parameter size mismatch");
    Tape tape;
    tape.post.reserve(spec.layer_count() + 1);
    tape.pre.reserve(spec.layer_count());
    tape.post.push_back(input);
    for (int l = 0; l < spec.layer_count(); ++l) {
        int in = spec.sizes[l], out = spec.sizes[l + 1];
        const double* w = params.data() + spec.layer_offset(l);
        const double* b = w + static_cast<size_t>(out) * in;
        const std::vector<double>& x = tape.post.back();
        std::vector<double> pre(out);
        for (int i = 0; i < out; ++i) {
            const double* row = w + static_cast<size_t>(i) * in;
            double acc = b[i];
            for (int j = 0; j < in; ++j) acc += row[j] * x[j];
            pre[i] = acc;
        }
        std::vector<double> post(out);
        for (int i = 0; i < out; ++i) post[i] = activate(spec.acts[l], pre[i]);
        tape.pre.push_back(std::move(pre));
        tape.post.push_back(std::move(post));
    }
    return tape;
}

inline const std::vector<double>& net_output(const Tape& tape) {
    return tape.post.back();
}

// Gradients of <upstream, output> w.r.t. params (accumulated into
// param_grads) and the input (returned).
inline std::vector<double> net_gradient(const NetSpec& spec,
                                        const std::vector<double>& params,
                                        const Tape& tape,
                                        const std::vector<double>& upstream,
                                        std::vector<double>& param_grads) {
    if (tape.pre.size() != static_cast<size_t>(spec.layer_count()) ||
        static_cast<int>(tape.post.front().size()) != spec.input_size())
        throw std::invalid_argument("net_gradient: tape does not match spec");
    if (static_cast<int>(upstream.size()) != spec.output_size())
        throw std::invalid_argument("net_gradient: upstream size mismatch");
    if (param_grads.size() != spec.param_count())
        param_grads.assign(spec.param_count(), 0.0);

    std::vector<double> delta = upstream;
    for (int l = spec.layer_count() - 1; l >= 0; --l) {
        int in = spec.sizes[l], out = spec.sizes[l + 1];
        const std::vector<double>& pre = tape.pre[l];
        const std::vector<double>& x = tape.post[l];
        for (int i = 0; i < out; ++i) delta[i] *= activate_grad(spec.acts[l], pre[i]);

        const double* w = params.data() + spec.layer_offset(l);
        double* gw = param_grads.data() + spec.layer_offset(l);
        double* gb = gw + static_cast<size_t>(out) * in;
        std::vector<double> next(in, 0.0);
        for (int i = 0; i < out; ++i) {
            double di = delta[i];
            gb[i] += di;
            const double* row = w + static_cast<size_t>(i) * in;
            double* grow = gw + static_cast<size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                grow[j] += di * x[j];
                next[j] += di * row[j];
            }
        }
        delta = std::move(next);
    }
    return delta;
}

struct OptimState {
    double lr = 1e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool decoupled = false;  // false: Adam (L2 in gradient); true: AdamW
    int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    static OptimState adam(size_t n, double lr, double weight_decay) {
        OptimState s;
        s.lr = lr;
        s.weight_decay = weight_decay;
        s.decoupled = false;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        return s;
    }

    static OptimState adamw(size_t n, double lr, double weight_decay) {
        OptimState s = adam(n, lr, weight_decay);
        s.decoupled = true;
        return s;
    }
};

inline void opt_step(OptimState& state, std::vector<double>& params,
                     const std::vector<double>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("opt_step: shape mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        if (!state.decoupled) g += state.weight_decay * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        if (state.decoupled) params[i] -= state.lr * state.weight_decay * params[i];
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace scenediff
