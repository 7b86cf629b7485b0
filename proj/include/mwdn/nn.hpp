#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mwdn/rng.hpp"
#include "mwdn/tensor.hpp"

namespace mwdn {

enum class Activation { kSigmoid, kRelu, kIdentity };

inline double sigmoid_scalar(double v) {
    if (v >= 0.0) {
        const double e = std::exp(-v);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

inline Tensor1 sigmoid(const Tensor1& v) {
    Tensor1 out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid_scalar(v[i]);
    return out;
}

inline double apply_activation(Activation act, double z) {
    switch (act) {
        case Activation::kSigmoid: return sigmoid_scalar(z);
        case Activation::kRelu: return z > 0.0 ? z : 0.0;
        case Activation::kIdentity: return z;
    }
    return z;
}

// d f(z) / d z, given both z and a = f(z).
inline double activation_derivative(Activation act, double z, double a) {
    switch (act) {
        case Activation::kSigmoid: return a * (1.0 - a);
        case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::kIdentity: return 1.0;
    }
    return 1.0;
}

// Max-shifted softmax; invariant to adding a constant to all inputs.
inline Tensor1 softmax(const Tensor1& v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    Tensor1 out(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
}

// Jacobian-vector product of softmax at its output y: dz = y (*) (g - <g, y>).
inline Tensor1 softmax_backward(const Tensor1& softmax_out, const Tensor1& upstream) {
    require(softmax_out.size() == upstream.size(), "softmax_backward: length mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < upstream.size(); ++i) dot += upstream[i] * softmax_out[i];
    Tensor1 out(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i)
        out[i] = softmax_out[i] * (upstream[i] - dot);
    return out;
}

// ---------------------------------------------------------------------------
// Fully connected layer
// ---------------------------------------------------------------------------

struct FcCache {
    Tensor1 input;
    Tensor1 pre;  // W x + b
    Tensor1 out;  // f(pre)
    Activation act = Activation::kIdentity;
};

inline Tensor1 fc_forward(const Tensor1& x, const Tensor2& weight, const Tensor1& bias,
                          Activation act, FcCache* cache = nullptr) {
    require(weight.cols() == x.size(), "fc_forward: input length does not match weight cols");
    require(weight.rows() == bias.size(), "fc_forward: bias length does not match weight rows");
    Tensor1 pre = weight.matvec(x);
    axpy(pre, bias, 1.0);
    Tensor1 out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = apply_activation(act, pre[i]);
    if (cache) {
        cache->input = x;
        cache->pre = pre;
        cache->out = out;
        cache->act = act;
    }
    return out;
}

struct FcGradients {
    Tensor2 weight;
    Tensor1 bias;
    Tensor1 input;
};

inline FcGradients fc_backward(const Tensor2& weight, const FcCache& cache,
                               const Tensor1& upstream) {
    require(upstream.size() == cache.pre.size(), "fc_backward: upstream length mismatch");
    require(weight.cols() == cache.input.size() && weight.rows() == cache.pre.size(),
            "fc_backward: cache does not match weight shape");
    Tensor1 dz(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i)
        dz[i] = upstream[i] * activation_derivative(cache.act, cache.pre[i], cache.out[i]);
    FcGradients g;
    g.weight = Tensor2(weight.rows(), weight.cols());
    g.weight.add_outer(dz, cache.input);
    g.bias = dz;
    g.input = weight.matvec_transposed(dz);
    return g;
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid cross-correlation, single kernel)
// ---------------------------------------------------------------------------

struct Conv1dCache {
    Tensor1 input;
    Tensor1 kernel;
};

inline Tensor1 conv1d_forward(const Tensor1& x, const Tensor1& kernel,
                              Conv1dCache* cache = nullptr) {
    require(!kernel.empty(), "conv1d: empty kernel");
    if (kernel.size() > x.size()) throw std::invalid_argument("conv1d: kernel longer than input");
    const std::size_t out_len = x.size() - kernel.size() + 1;
    Tensor1 out(out_len, 0.0);
    for (std::size_t i = 0; i < out_len; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kernel.size(); ++k) acc += x[i + k] * kernel[k];
        out[i] = acc;
    }
    if (cache) {
        cache->input = x;
        cache->kernel = kernel;
    }
    return out;
}

struct Conv1dGradients {
    Tensor1 kernel;
    Tensor1 input;
};

inline Conv1dGradients conv1d_backward(const Conv1dCache& cache, const Tensor1& upstream) {
    const std::size_t out_len = cache.input.size() - cache.kernel.size() + 1;
    require(upstream.size() == out_len, "conv1d_backward: upstream length mismatch");
    Conv1dGradients g;
    g.kernel.assign(cache.kernel.size(), 0.0);
    g.input.assign(cache.input.size(), 0.0);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double u = upstream[i];
        for (std::size_t k = 0; k < cache.kernel.size(); ++k) {
            g.kernel[k] += u * cache.input[i + k];
            g.input[i + k] += u * cache.kernel[k];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// LSTM cell (standard gated cell, backward through time)
// ---------------------------------------------------------------------------

struct LstmState {
    Tensor1 hidden;
    Tensor1 cell;
};

inline LstmState zero_lstm_state(std::size_t hidden_size) {
    return LstmState{Tensor1(hidden_size, 0.0), Tensor1(hidden_size, 0.0)};
}

// Gate blocks are stacked along the row dimension in the order
// input, forget, candidate, output.
struct LstmParams {
    Tensor2 w_input;   // (4H x I)
    Tensor2 w_hidden;  // (4H x H)
    Tensor1 bias;      // 4H

    std::size_t hidden_size() const { return w_hidden.cols(); }
    std::size_t input_size() const { return w_input.cols(); }
};

inline LstmParams make_lstm_params(std::size_t input_size, std::size_t hidden_size) {
    LstmParams p;
    p.w_input = Tensor2(4 * hidden_size, input_size);
    p.w_hidden = Tensor2(4 * hidden_size, hidden_size);
    p.bias = Tensor1(4 * hidden_size, 0.0);
    return p;
}

inline void init_lstm_params(LstmParams& p, RandomStream& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(p.hidden_size(), 1)));
    for (double& w : p.w_input.raw()) w = rng.uniform(-s, s);
    for (double& w : p.w_hidden.raw()) w = rng.uniform(-s, s);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
    // forget-gate bias starts at 1 so early gradients survive long sequences
    const std::size_t h = p.hidden_size();
    for (std::size_t i = 0; i < h; ++i) p.bias[h + i] = 1.0;
}

struct LstmStepCache {
    Tensor1 input;
    Tensor1 h_prev, c_prev;
    Tensor1 gate_i, gate_f, gate_g, gate_o;  // post-nonlinearity
    Tensor1 cell, tanh_cell;
};

struct LstmCache {
    std::vector<LstmStepCache> steps;
    LstmState init;
};

struct LstmForwardResult {
    std::vector<Tensor1> hidden_seq;
    LstmState final_state;
};

inline LstmForwardResult lstm_forward(const std::vector<Tensor1>& xs, const LstmParams& params,
                                      const LstmState& init, LstmCache* cache = nullptr) {
    const std::size_t h = params.hidden_size();
    require(init.hidden.size() == h && init.cell.size() == h,
            "lstm_forward: initial state does not match hidden size");
    for (const Tensor1& x : xs)
        require(x.size() == params.input_size(), "lstm_forward: inconsistent step input size");
    if (cache) {
        cache->steps.clear();
        cache->init = init;
    }
    LstmForwardResult res;
    res.hidden_seq.reserve(xs.size());
    Tensor1 h_prev = init.hidden;
    Tensor1 c_prev = init.cell;
    for (const Tensor1& x : xs) {
        Tensor1 pre = params.w_input.matvec(x);
        Tensor1 rec = params.w_hidden.matvec(h_prev);
        axpy(pre, rec, 1.0);
        axpy(pre, params.bias, 1.0);
        LstmStepCache step;
        step.gate_i.resize(h);
        step.gate_f.resize(h);
        step.gate_g.resize(h);
        step.gate_o.resize(h);
        step.cell.resize(h);
        step.tanh_cell.resize(h);
        Tensor1 h_t(h);
        for (std::size_t j = 0; j < h; ++j) {
            const double i_g = sigmoid_scalar(pre[j]);
            const double f_g = sigmoid_scalar(pre[h + j]);
            const double g_g = std::tanh(pre[2 * h + j]);
            const double o_g = sigmoid_scalar(pre[3 * h + j]);
            const double c_t = f_g * c_prev[j] + i_g * g_g;
            const double tc = std::tanh(c_t);
            step.gate_i[j] = i_g;
            step.gate_f[j] = f_g;
            step.gate_g[j] = g_g;
            step.gate_o[j] = o_g;
            step.cell[j] = c_t;
            step.tanh_cell[j] = tc;
            h_t[j] = o_g * tc;
        }
        if (cache) {
            step.input = x;
            step.h_prev = h_prev;
            step.c_prev = c_prev;
            cache->steps.push_back(step);
        }
        c_prev = step.cell;
        h_prev = h_t;
        res.hidden_seq.push_back(std::move(h_t));
    }
    res.final_state = LstmState{h_prev, c_prev};
    return res;
}

struct LstmGradients {
    Tensor2 w_input;
    Tensor2 w_hidden;
    Tensor1 bias;
    std::vector<Tensor1> inputs;
    LstmState init_state;
};

// upstream_hidden holds dJ/dh_t per step (zeros where a step's output is
// unused, e.g. when only the last hidden state feeds a head).
inline LstmGradients lstm_backward(const LstmParams& params, const LstmCache& cache,
                                   const std::vector<Tensor1>& upstream_hidden) {
    require(upstream_hidden.size() == cache.steps.size(),
            "lstm_backward: need one upstream gradient per step");
    const std::size_t h = params.hidden_size();
    const std::size_t steps = cache.steps.size();
    LstmGradients g;
    g.w_input = Tensor2(4 * h, params.input_size());
    g.w_hidden = Tensor2(4 * h, h);
    g.bias = Tensor1(4 * h, 0.0);
    g.inputs.assign(steps, Tensor1(params.input_size(), 0.0));
    Tensor1 dh_next(h, 0.0);
    Tensor1 dc_next(h, 0.0);
    Tensor1 dpre(4 * h, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
        const LstmStepCache& s = cache.steps[t];
        require(upstream_hidden[t].size() == h, "lstm_backward: upstream size mismatch");
        for (std::size_t j = 0; j < h; ++j) {
            const double dh = upstream_hidden[t][j] + dh_next[j];
            const double tc = s.tanh_cell[j];
            double dc = dh * s.gate_o[j] * (1.0 - tc * tc) + dc_next[j];
            const double di = dc * s.gate_g[j];
            const double df = dc * s.c_prev[j];
            const double dg = dc * s.gate_i[j];
            const double do_ = dh * tc;
            // back through the gate nonlinearities
            dpre[j] = di * s.gate_i[j] * (1.0 - s.gate_i[j]);
            dpre[h + j] = df * s.gate_f[j] * (1.0 - s.gate_f[j]);
            dpre[2 * h + j] = dg * (1.0 - s.gate_g[j] * s.gate_g[j]);
            dpre[3 * h + j] = do_ * s.gate_o[j] * (1.0 - s.gate_o[j]);
            dc_next[j] = dc * s.gate_f[j];
        }
        g.w_input.add_outer(dpre, s.input);
        g.w_hidden.add_outer(dpre, s.h_prev);
        axpy(g.bias, dpre, 1.0);
        g.inputs[t] = params.w_input.matvec_transposed(dpre);
        dh_next = params.w_hidden.matvec_transposed(dpre);
    }
    g.init_state = LstmState{dh_next, dc_next};
    return g;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

// Two-sided cross-entropy: -(c . ln p + (1 - c) . ln(1 - p)).
inline double cross_entropy(const Tensor1& onehot, const Tensor1& probs) {
    require(onehot.size() == probs.size(), "cross_entropy: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        loss -= onehot[i] * std::log(p) + (1.0 - onehot[i]) * std::log(1.0 - p);
    }
    return loss;
}

inline Tensor1 cross_entropy_grad(const Tensor1& onehot, const Tensor1& probs) {
    require(onehot.size() == probs.size(), "cross_entropy_grad: length mismatch");
    Tensor1 g(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        g[i] = -onehot[i] / p + (1.0 - onehot[i]) / (1.0 - p);
    }
    return g;
}

inline double mse(const Tensor1& y_hat, const Tensor1& y) {
    require(y_hat.size() == y.size(), "mse: length mismatch");
    require(!y.empty(), "mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y_hat[i] - y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

inline Tensor1 mse_grad(const Tensor1& y_hat, const Tensor1& y) {
    require(y_hat.size() == y.size(), "mse_grad: length mismatch");
    Tensor1 g(y.size());
    const double scale = 2.0 / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = scale * (y_hat[i] - y[i]);
    return g;
}

inline Tensor1 one_hot(std::size_t index, std::size_t classes) {
    require(index < classes, "one_hot: index out of range");
    Tensor1 v(classes, 0.0);
    v[index] = 1.0;
    return v;
}

}  // namespace mwdn
