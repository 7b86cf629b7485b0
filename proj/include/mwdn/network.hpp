#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "mwdn/nn.hpp"
#include "mwdn/rng.hpp"
#include "mwdn/tensor.hpp"
#include "mwdn/wavelet.hpp"

namespace mwdn {

// Banded P x P matrix: row r carries coeffs[k] at column r+k (bottom rows
// truncated), zeros elsewhere.
inline Tensor2 prior_weight_matrix(std::size_t p, const Tensor1& coeffs) {
    require(p >= 1, "prior_weight_matrix: P must be >= 1");
    Tensor2 m(p, p, 0.0);
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t k = 0; k < coeffs.size() && r + k < p; ++k) m(r, r + k) = coeffs[k];
    return m;
}

// Same band as the prior; every off-band entry drawn from
// U(-eps_scale, +eps_scale).
inline Tensor2 init_weight_matrix(std::size_t p, const Tensor1& coeffs, double eps_scale,
                                  RandomStream& rng) {
    require(p >= 1, "init_weight_matrix: P must be >= 1");
    if (eps_scale < 0.0) throw std::invalid_argument("init_weight_matrix: negative eps_scale");
    Tensor2 m(p, p);
    for (double& v : m.raw()) v = eps_scale == 0.0 ? 0.0 : rng.uniform(-eps_scale, eps_scale);
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t k = 0; k < coeffs.size() && r + k < p; ++k) m(r, r + k) = coeffs[k];
    return m;
}

inline Tensor2 init_weight_matrix(std::size_t p, const Tensor1& coeffs, double eps_scale,
                                  std::uint64_t rng_seed) {
    RandomStream rng(rng_seed, "init_weight_matrix");
    return init_weight_matrix(p, coeffs, eps_scale, rng);
}

struct MwdnLevel {
    Tensor2 w_low, w_high;
    Tensor1 b_low, b_high;
    Tensor2 prior_low, prior_high;  // frozen eps = 0 matrices
    std::size_t input_len = 0;      // P
};

struct MwdnStack {
    std::vector<MwdnLevel> levels;
    WaveletFilterPair filter;

    std::size_t n_levels() const { return levels.size(); }
    std::size_t input_len() const { return levels.empty() ? 0 : levels.front().input_len; }
};

// Per-level output length under even-padding: ceil(P / 2).
inline std::size_t halved_len(std::size_t p) { return (p + 1) / 2; }

inline constexpr double kDefaultEpsScale = 1e-4;
inline constexpr double kBiasInitScale = 1e-3;

// eps_scale = 0 yields the exact prior (zero biases included), so the stack
// reproduces the fixed-filter decomposition bit-for-bit before training.
inline MwdnStack make_mwdn_stack(std::size_t input_len, std::size_t n_levels,
                                 const WaveletFilterPair& filters,
                                 double eps_scale = kDefaultEpsScale, std::uint64_t seed = 0) {
    require(n_levels >= 1, "make_mwdn_stack: n_levels must be >= 1");
    validate_filters(filters);
    if (eps_scale < 0.0) throw std::invalid_argument("make_mwdn_stack: negative eps_scale");
    if (input_len < (std::size_t{1} << n_levels))
        throw std::invalid_argument("insufficient length: input of length " +
                                    std::to_string(input_len) + " cannot support " +
                                    std::to_string(n_levels) + " levels");
    MwdnStack stack;
    stack.filter = filters;
    std::size_t p = input_len;
    for (std::size_t i = 0; i < n_levels; ++i) {
        if (p < filters.taps())
            std::cerr << "mwdn: level " << (i + 1) << " length " << p << " is below the filter"
                      << " width " << filters.taps() << "; truncated rows dominate\n";
        const std::string tag = "mwdn.level" + std::to_string(i);
        RandomStream rng_low(seed, tag + ".w_low");
        RandomStream rng_high(seed, tag + ".w_high");
        RandomStream rng_bias(seed, tag + ".bias");
        MwdnLevel level;
        level.input_len = p;
        level.w_low = init_weight_matrix(p, filters.low, eps_scale, rng_low);
        level.w_high = init_weight_matrix(p, filters.high, eps_scale, rng_high);
        level.prior_low = prior_weight_matrix(p, filters.low);
        level.prior_high = prior_weight_matrix(p, filters.high);
        const double bias_scale = eps_scale == 0.0 ? 0.0 : kBiasInitScale;
        level.b_low.resize(p);
        level.b_high.resize(p);
        for (double& b : level.b_low) b = bias_scale == 0.0 ? 0.0 : rng_bias.uniform(-bias_scale, bias_scale);
        for (double& b : level.b_high) b = bias_scale == 0.0 ? 0.0 : rng_bias.uniform(-bias_scale, bias_scale);
        stack.levels.push_back(std::move(level));
        p = halved_len(p);
    }
    return stack;
}

struct MwdnLevelCache {
    Tensor1 input;
    Tensor1 pre_low, pre_high;  // W x + b
    Tensor1 act_low, act_high;  // sigma(pre)
    Tensor1 out_low, out_high;  // pooled
};

struct MwdnForwardCache {
    std::vector<MwdnLevelCache> levels;
};

// sigma(Wx + b) on both branches, even-pad, pairwise-average pool; the low
// branch feeds the next level.
inline SubSeriesSet mwdn_forward(const Tensor1& x, const MwdnStack& stack,
                                 MwdnForwardCache* cache = nullptr) {
    require(!stack.levels.empty(), "mwdn_forward: empty stack");
    require(x.size() == stack.input_len(),
            "mwdn_forward: input length " + std::to_string(x.size()) +
                " does not match stack input length " + std::to_string(stack.input_len()));
    if (cache) cache->levels.clear();
    SubSeriesSet out;
    Tensor1 low = x;
    for (const MwdnLevel& level : stack.levels) {
        MwdnLevelCache lc;
        lc.input = low;
        lc.pre_low = level.w_low.matvec(low);
        axpy(lc.pre_low, level.b_low, 1.0);
        lc.pre_high = level.w_high.matvec(low);
        axpy(lc.pre_high, level.b_high, 1.0);
        lc.act_low = sigmoid(lc.pre_low);
        lc.act_high = sigmoid(lc.pre_high);
        lc.out_low = avg_downsample(even_pad(lc.act_low));
        lc.out_high = avg_downsample(even_pad(lc.act_high));
        out.high.push_back(lc.out_high);
        low = lc.out_low;
        if (cache) cache->levels.push_back(std::move(lc));
    }
    out.low_final = std::move(low);
    return out;
}

// The stack's linear part: the same matrices, padding and pooling but no
// activation. With eps_scale = 0 and zero biases this chain reproduces
// mdwd_decompose exactly; `pre_low`/`pre_high` receive the per-level affine
// responses.
inline SubSeriesSet mwdn_linear_forward(const Tensor1& x, const MwdnStack& stack,
                                        std::vector<Tensor1>* pre_low = nullptr,
                                        std::vector<Tensor1>* pre_high = nullptr) {
    require(!stack.levels.empty(), "mwdn_linear_forward: empty stack");
    require(x.size() == stack.input_len(), "mwdn_linear_forward: input length mismatch");
    if (pre_low) pre_low->clear();
    if (pre_high) pre_high->clear();
    SubSeriesSet out;
    Tensor1 low = x;
    for (const MwdnLevel& level : stack.levels) {
        Tensor1 z_low = level.w_low.matvec(low);
        axpy(z_low, level.b_low, 1.0);
        Tensor1 z_high = level.w_high.matvec(low);
        axpy(z_high, level.b_high, 1.0);
        if (pre_low) pre_low->push_back(z_low);
        if (pre_high) pre_high->push_back(z_high);
        out.high.push_back(avg_downsample(even_pad(z_high)));
        low = avg_downsample(even_pad(z_low));
    }
    out.low_final = std::move(low);
    return out;
}

// alpha * sum_i ||W_l(i) - prior_l(i)||_F^2 + beta * sum_i ||W_h(i) - prior_h(i)||_F^2
inline double regularization_penalty(const MwdnStack& stack, double alpha, double beta) {
    require(alpha >= 0.0 && beta >= 0.0, "regularization_penalty: alpha, beta must be >= 0");
    double acc = 0.0;
    for (const MwdnLevel& level : stack.levels) {
        if (alpha > 0.0) acc += alpha * level.w_low.frobenius_sq_distance(level.prior_low);
        if (beta > 0.0) acc += beta * level.w_high.frobenius_sq_distance(level.prior_high);
    }
    return acc;
}

// One gradient slot per emitted sub-series; an empty slot means zeros.
struct MwdnUpstream {
    std::vector<Tensor1> d_high;  // sub-series x^h(1..N)
    std::vector<Tensor1> d_low;   // sub-series x^l(1..N); intermediates may be consumed too
};

inline MwdnUpstream zero_mwdn_upstream(const MwdnStack& stack) {
    MwdnUpstream u;
    u.d_high.resize(stack.n_levels());
    u.d_low.resize(stack.n_levels());
    return u;
}

struct MwdnLevelGradients {
    Tensor2 w_low, w_high;
    Tensor1 b_low, b_high;
};

struct MwdnGradients {
    std::vector<MwdnLevelGradients> levels;
    Tensor1 input;                           // dJ/dx
    std::vector<Tensor1> at_low, at_high;    // total gradient arriving at each pooled sub-series
};

namespace detail {

// Pooling backward: each pooled gradient splits x0.5 onto its two sources;
// a padded slot folds back onto the final real element.
inline Tensor1 unpool_unpad(const Tensor1& d_pooled, std::size_t unpadded_len) {
    const std::size_t padded_len = unpadded_len + (unpadded_len % 2);
    require(d_pooled.size() * 2 == padded_len, "unpool: pooled length mismatch");
    Tensor1 d(unpadded_len, 0.0);
    for (std::size_t j = 0; j < d_pooled.size(); ++j) {
        const double half = 0.5 * d_pooled[j];
        const std::size_t a = 2 * j, b = 2 * j + 1;
        d[a] += half;
        d[std::min(b, unpadded_len - 1)] += half;
    }
    return d;
}

}  // namespace detail

// Backpropagates through pooling, sigmoid and the affine maps; adds the prior
// penalty gradient 2*alpha*(W_l - prior_l), 2*beta*(W_h - prior_h).
inline MwdnGradients mwdn_backward(const MwdnStack& stack, const MwdnForwardCache& cache,
                                   const MwdnUpstream& upstream, double alpha = 0.0,
                                   double beta = 0.0) {
    const std::size_t n = stack.n_levels();
    require(cache.levels.size() == n, "mwdn_backward: cache does not match stack");
    if (upstream.d_high.size() != n || upstream.d_low.size() != n)
        throw std::invalid_argument("mwdn_backward: missing upstream (need one slot per sub-series)");
    MwdnGradients g;
    g.levels.resize(n);
    g.at_low.resize(n);
    g.at_high.resize(n);
    Tensor1 carry;  // gradient w.r.t. the current level's pooled low output
    for (std::size_t i = n; i-- > 0;) {
        const MwdnLevel& level = stack.levels[i];
        const MwdnLevelCache& lc = cache.levels[i];
        Tensor1 g_low(lc.out_low.size(), 0.0);
        if (!carry.empty()) {
            require(carry.size() == g_low.size(), "mwdn_backward: chain gradient length mismatch");
            g_low = carry;
        }
        if (!upstream.d_low[i].empty()) {
            require(upstream.d_low[i].size() == g_low.size(),
                    "mwdn_backward: d_low[" + std::to_string(i) + "] length mismatch");
            axpy(g_low, upstream.d_low[i], 1.0);
        }
        Tensor1 g_high(lc.out_high.size(), 0.0);
        if (!upstream.d_high[i].empty()) {
            require(upstream.d_high[i].size() == g_high.size(),
                    "mwdn_backward: d_high[" + std::to_string(i) + "] length mismatch");
            g_high = upstream.d_high[i];
        }
        g.at_low[i] = g_low;
        g.at_high[i] = g_high;

        Tensor1 d_act_low = detail::unpool_unpad(g_low, level.input_len);
        Tensor1 d_act_high = detail::unpool_unpad(g_high, level.input_len);
        Tensor1 d_pre_low(level.input_len), d_pre_high(level.input_len);
        for (std::size_t j = 0; j < level.input_len; ++j) {
            d_pre_low[j] = d_act_low[j] * lc.act_low[j] * (1.0 - lc.act_low[j]);
            d_pre_high[j] = d_act_high[j] * lc.act_high[j] * (1.0 - lc.act_high[j]);
        }

        MwdnLevelGradients& lg = g.levels[i];
        lg.w_low = Tensor2(level.input_len, level.input_len);
        lg.w_high = Tensor2(level.input_len, level.input_len);
        lg.w_low.add_outer(d_pre_low, lc.input);
        lg.w_high.add_outer(d_pre_high, lc.input);
        lg.b_low = d_pre_low;
        lg.b_high = d_pre_high;

        carry = level.w_low.matvec_transposed(d_pre_low);
        axpy(carry, level.w_high.matvec_transposed(d_pre_high), 1.0);
    }
    // prior-anchoring gradient, independent of the data path
    for (std::size_t i = 0; i < n; ++i) {
        const MwdnLevel& level = stack.levels[i];
        if (alpha != 0.0) {
            g.levels[i].w_low.add_scaled(level.w_low, 2.0 * alpha);
            g.levels[i].w_low.add_scaled(level.prior_low, -2.0 * alpha);
        }
        if (beta != 0.0) {
            g.levels[i].w_high.add_scaled(level.w_high, 2.0 * beta);
            g.levels[i].w_high.add_scaled(level.prior_high, -2.0 * beta);
        }
    }
    g.input = carry;
    return g;
}

inline MwdnGradients zero_mwdn_gradients(const MwdnStack& stack) {
    MwdnGradients g;
    g.levels.resize(stack.n_levels());
    for (std::size_t i = 0; i < stack.n_levels(); ++i) {
        const std::size_t p = stack.levels[i].input_len;
        g.levels[i].w_low = Tensor2(p, p);
        g.levels[i].w_high = Tensor2(p, p);
        g.levels[i].b_low.assign(p, 0.0);
        g.levels[i].b_high.assign(p, 0.0);
    }
    g.input.assign(stack.input_len(), 0.0);
    return g;
}

inline void accumulate(MwdnGradients& acc, const MwdnGradients& g, double scale = 1.0) {
    require(acc.levels.size() == g.levels.size(), "accumulate: level count mismatch");
    for (std::size_t i = 0; i < g.levels.size(); ++i) {
        acc.levels[i].w_low.add_scaled(g.levels[i].w_low, scale);
        acc.levels[i].w_high.add_scaled(g.levels[i].w_high, scale);
        axpy(acc.levels[i].b_low, g.levels[i].b_low, scale);
        axpy(acc.levels[i].b_high, g.levels[i].b_high, scale);
    }
}

inline void apply_gradients(MwdnStack& stack, const MwdnGradients& g, double learning_rate) {
    require(g.levels.size() == stack.n_levels(), "apply_gradients: level count mismatch");
    for (std::size_t i = 0; i < stack.n_levels(); ++i) {
        stack.levels[i].w_low.add_scaled(g.levels[i].w_low, -learning_rate);
        stack.levels[i].w_high.add_scaled(g.levels[i].w_high, -learning_rate);
        axpy(stack.levels[i].b_low, g.levels[i].b_low, -learning_rate);
        axpy(stack.levels[i].b_high, g.levels[i].b_high, -learning_rate);
    }
}

}  // namespace mwdn
