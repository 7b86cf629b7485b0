#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mwdn/config.hpp"
#include "mwdn/data.hpp"
#include "mwdn/network.hpp"
#include "mwdn/nn.hpp"

namespace mwdn {

// One LSTM sub-network per member of X(N) = {x_h(1..N), x_l(N)}; each reads
// its sub-series one value per step and emits a scalar through a linear head;
// a fully-connected layer fuses the N+1 scalars into the forecast.
struct MlstmModel {
    MwdnStack mwdn;
    std::vector<LstmParams> subnets;  // N+1, input size 1
    std::vector<Tensor1> head_w;      // per subnet, length = hidden
    Tensor1 head_b;                   // per subnet scalar
    Tensor1 fusion_w;                 // length N+1
    double fusion_b = 0.0;
    std::size_t hidden = 0;
    std::size_t window = 0;

    std::size_t subnet_count() const { return subnets.size(); }
};

inline MlstmModel make_mlstm_model(std::size_t window, std::size_t n_levels, std::size_t hidden,
                                   const WaveletFilterPair& filters,
                                   double eps_scale = kDefaultEpsScale, std::uint64_t seed = 0) {
    require(hidden >= 1, "mlstm: hidden size must be >= 1");
    require(window % (std::size_t{1} << n_levels) == 0,
            "mlstm: window must be a multiple of 2^n_levels");
    MlstmModel m;
    m.mwdn = make_mwdn_stack(window, n_levels, filters, eps_scale, seed);
    m.hidden = hidden;
    m.window = window;
    const std::size_t subnets = n_levels + 1;
    const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t k = 0; k < subnets; ++k) {
        const std::string tag = "mlstm.subnet" + std::to_string(k);
        RandomStream rng(seed, tag);
        LstmParams p = make_lstm_params(1, hidden);
        init_lstm_params(p, rng);
        m.subnets.push_back(std::move(p));
        RandomStream rng_head(seed, tag + ".head");
        Tensor1 hw(hidden);
        for (double& w : hw) w = rng_head.uniform(-sh, sh);
        m.head_w.push_back(std::move(hw));
    }
    m.head_b.assign(subnets, 0.0);
    RandomStream rng_fuse(seed, "mlstm.fusion");
    const double sf = 1.0 / std::sqrt(static_cast<double>(subnets));
    m.fusion_w.resize(subnets);
    for (double& w : m.fusion_w) w = rng_fuse.uniform(-sf, sf);
    m.fusion_b = 0.0;
    return m;
}

namespace detail {

inline std::vector<Tensor1> as_steps(const Tensor1& series) {
    std::vector<Tensor1> steps(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) steps[i] = Tensor1{series[i]};
    return steps;
}

}  // namespace detail

struct MlstmForwardCache {
    MwdnForwardCache mwdn;
    std::vector<Tensor1> sub_series;  // x_h(1..N), x_l(N)
    std::vector<LstmCache> lstm;
    std::vector<Tensor1> last_hidden;
    Tensor1 per_subnet;
};

struct MlstmForwardResult {
    double y_hat = 0.0;
    Tensor1 per_subnet;
};

inline MlstmForwardResult mlstm_forward(const MlstmModel& model, const Tensor1& window,
                                        MlstmForwardCache* cache = nullptr) {
    require(window.size() == model.window,
            "mlstm_forward: window length " + std::to_string(window.size()) +
                " does not match model window " + std::to_string(model.window));
    MlstmForwardCache local;
    MlstmForwardCache* c = cache ? cache : &local;
    SubSeriesSet sub = mwdn_forward(window, model.mwdn, &c->mwdn);
    c->sub_series = sub.high;
    c->sub_series.push_back(sub.low_final);
    const std::size_t subnets = model.subnet_count();
    require(c->sub_series.size() == subnets, "mlstm_forward: subnet count mismatch");
    c->lstm.assign(subnets, LstmCache{});
    c->last_hidden.assign(subnets, Tensor1{});
    Tensor1 per(subnets, 0.0);
    for (std::size_t k = 0; k < subnets; ++k) {
        LstmForwardResult r = lstm_forward(detail::as_steps(c->sub_series[k]), model.subnets[k],
                                           zero_lstm_state(model.hidden), &c->lstm[k]);
        const Tensor1& h_last = r.final_state.hidden;
        c->last_hidden[k] = h_last;
        double s = model.head_b[k];
        for (std::size_t j = 0; j < model.hidden; ++j) s += model.head_w[k][j] * h_last[j];
        per[k] = s;
    }
    c->per_subnet = per;
    MlstmForwardResult res;
    res.per_subnet = per;
    res.y_hat = model.fusion_b;
    for (std::size_t k = 0; k < subnets; ++k) res.y_hat += model.fusion_w[k] * per[k];
    return res;
}

inline double mlstm_predict(const MlstmModel& model, const Tensor1& window) {
    return mlstm_forward(model, window).y_hat;
}

// Oracle-decomposes the future window; the target for subnet k is the final
// (most recent) element of its sub-series.
inline Tensor1 pretrain_targets(const Tensor1& target_window, std::size_t n_levels,
                                const WaveletFilterPair& filters) {
    SubSeriesSet sub = mdwd_decompose(target_window, n_levels, filters);
    Tensor1 targets;
    targets.reserve(n_levels + 1);
    for (const Tensor1& h : sub.high) targets.push_back(h.back());
    targets.push_back(sub.low_final.back());
    return targets;
}

struct MlstmGradients {
    MwdnGradients mwdn;
    std::vector<Tensor2> w_input, w_hidden;  // per subnet
    std::vector<Tensor1> lstm_bias;
    std::vector<Tensor1> head_w;
    Tensor1 head_b;
    Tensor1 fusion_w;
    double fusion_b = 0.0;
};

// Backward from gradients on the per-subnet scalars (and optionally on the
// fused output, which adds fusion parameter gradients and routes d_y through
// the fusion weights).
inline MlstmGradients mlstm_backward(const MlstmModel& model, const MlstmForwardCache& cache,
                                     const Tensor1& d_per_subnet, double d_y, double alpha,
                                     double beta) {
    const std::size_t subnets = model.subnet_count();
    require(d_per_subnet.empty() || d_per_subnet.size() == subnets,
            "mlstm_backward: per-subnet gradient length mismatch");
    MlstmGradients g;
    g.fusion_w.assign(subnets, 0.0);
    g.head_b.assign(subnets, 0.0);
    Tensor1 d_scalar(subnets, 0.0);
    if (!d_per_subnet.empty()) d_scalar = d_per_subnet;
    if (d_y != 0.0) {
        g.fusion_b = d_y;
        for (std::size_t k = 0; k < subnets; ++k) {
            g.fusion_w[k] = d_y * cache.per_subnet[k];
            d_scalar[k] += d_y * model.fusion_w[k];
        }
    }
    MwdnUpstream upstream = zero_mwdn_upstream(model.mwdn);
    const std::size_t n_levels = model.mwdn.n_levels();
    for (std::size_t k = 0; k < subnets; ++k) {
        const Tensor1& h_last = cache.last_hidden[k];
        Tensor1 hw(model.hidden);
        for (std::size_t j = 0; j < model.hidden; ++j) hw[j] = d_scalar[k] * h_last[j];
        g.head_w.push_back(std::move(hw));
        g.head_b[k] = d_scalar[k];
        const std::size_t steps = cache.lstm[k].steps.size();
        std::vector<Tensor1> upstream_hidden(steps, Tensor1(model.hidden, 0.0));
        if (steps > 0)
            for (std::size_t j = 0; j < model.hidden; ++j)
                upstream_hidden[steps - 1][j] = d_scalar[k] * model.head_w[k][j];
        LstmGradients lg = lstm_backward(model.subnets[k], cache.lstm[k], upstream_hidden);
        g.w_input.push_back(std::move(lg.w_input));
        g.w_hidden.push_back(std::move(lg.w_hidden));
        g.lstm_bias.push_back(std::move(lg.bias));
        Tensor1 d_sub(steps, 0.0);
        for (std::size_t t = 0; t < steps; ++t) d_sub[t] = lg.inputs[t][0];
        if (k < n_levels)
            upstream.d_high[k] = std::move(d_sub);
        else
            upstream.d_low[n_levels - 1] = std::move(d_sub);
    }
    g.mwdn = mwdn_backward(model.mwdn, cache.mwdn, upstream, alpha, beta);
    return g;
}

namespace detail {

struct MlstmGradAccum {
    MwdnGradients mwdn;
    std::vector<Tensor2> w_input, w_hidden;
    std::vector<Tensor1> lstm_bias;
    std::vector<Tensor1> head_w;
    Tensor1 head_b;
    Tensor1 fusion_w;
    double fusion_b = 0.0;

    explicit MlstmGradAccum(const MlstmModel& m) {
        mwdn = zero_mwdn_gradients(m.mwdn);
        const std::size_t subnets = m.subnet_count();
        for (std::size_t k = 0; k < subnets; ++k) {
            w_input.emplace_back(4 * m.hidden, 1);
            w_hidden.emplace_back(4 * m.hidden, m.hidden);
            lstm_bias.emplace_back(4 * m.hidden, 0.0);
            head_w.emplace_back(m.hidden, 0.0);
        }
        head_b.assign(subnets, 0.0);
        fusion_w.assign(subnets, 0.0);
    }

    void add(const MlstmGradients& g, double scale) {
        accumulate(mwdn, g.mwdn, scale);
        for (std::size_t k = 0; k < w_input.size(); ++k) {
            w_input[k].add_scaled(g.w_input[k], scale);
            w_hidden[k].add_scaled(g.w_hidden[k], scale);
            axpy(lstm_bias[k], g.lstm_bias[k], scale);
            axpy(head_w[k], g.head_w[k], scale);
        }
        axpy(head_b, g.head_b, scale);
        axpy(fusion_w, g.fusion_w, scale);
        fusion_b += scale * g.fusion_b;
    }

    // update_fusion = false during pre-training: the fusion layer stays put.
    void apply(MlstmModel& m, double lr, bool freeze_mwdn, bool update_fusion) const {
        if (!freeze_mwdn) apply_gradients(m.mwdn, mwdn, lr);
        for (std::size_t k = 0; k < w_input.size(); ++k) {
            m.subnets[k].w_input.add_scaled(w_input[k], -lr);
            m.subnets[k].w_hidden.add_scaled(w_hidden[k], -lr);
            axpy(m.subnets[k].bias, lstm_bias[k], -lr);
            axpy(m.head_w[k], head_w[k], -lr);
        }
        axpy(m.head_b, head_b, -lr);
        if (update_fusion) {
            axpy(m.fusion_w, fusion_w, -lr);
            m.fusion_b -= lr * fusion_b;
        }
    }
};

}  // namespace detail

enum class MlstmPhase { kPretrain, kFinetune };

struct MlstmEpochStats {
    std::size_t epoch = 0;
    MlstmPhase phase = MlstmPhase::kPretrain;
    double loss = 0.0;
    double val_mape = std::numeric_limits<double>::quiet_NaN();
    double val_rmse = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void mlstm_val_metrics(const MlstmModel& model, const std::vector<ForecastSample>& val,
                              MlstmEpochStats& stats) {
    if (val.empty()) return;
    double sq = 0.0, ape = 0.0;
    bool mape_ok = true;
    for (const ForecastSample& s : val) {
        const double y_hat = mlstm_predict(model, s.window);
        const double d = y_hat - s.target;
        sq += d * d;
        if (s.target == 0.0)
            mape_ok = false;
        else
            ape += std::fabs(d) / s.target;
    }
    const double n = static_cast<double>(val.size());
    stats.val_rmse = std::sqrt(sq / n);
    stats.val_mape = mape_ok ? 100.0 * ape / n : std::numeric_limits<double>::quiet_NaN();
}

// Shared epoch loop for both phases; they differ only in the per-sample loss
// gradient and in whether the fusion layer moves.
template <typename StepFn>
inline void mlstm_train_loop(MlstmModel& model, const std::vector<ForecastSample>& samples,
                             const std::vector<ForecastSample>& val, const TrainConfig& config,
                             std::size_t epochs, MlstmPhase phase, const char* stream_name,
                             bool update_fusion, StepFn per_sample,
                             std::vector<MlstmEpochStats>* history) {
    RandomStream shuffle_rng(config.seed, stream_name);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            MlstmGradAccum acc(model);
            for (std::size_t s = start; s < stop; ++s)
                epoch_loss += per_sample(samples[order[s]], acc, inv);
            acc.apply(model, config.learning_rate, config.freeze_mwdn, update_fusion);
        }
        epoch_loss = epoch_loss / static_cast<double>(order.size()) +
                     regularization_penalty(model.mwdn, config.alpha, config.beta);
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("mlstm: non-finite loss at epoch " + std::to_string(epoch) +
                                     "; lower the learning rate");
        if (history) {
            MlstmEpochStats stats;
            stats.epoch = epoch;
            stats.phase = phase;
            stats.loss = epoch_loss;
            mlstm_val_metrics(model, val, stats);
            history->push_back(stats);
        }
    }
}

}  // namespace detail

// Pre-training: each subnet regresses onto the oracle decomposition of the
// future window (final element per sub-series); the fusion layer is left
// untouched.
inline void pretrain(MlstmModel& model, const std::vector<ForecastSample>& samples,
                     const TrainConfig& config,
                     const std::vector<ForecastSample>& val = {},
                     std::vector<MlstmEpochStats>* history = nullptr) {
    config.validate();
    require(!samples.empty(), "pretrain: empty dataset");
    const std::size_t n_levels = model.mwdn.n_levels();
    for (const ForecastSample& s : samples)
        require(s.target_window.size() == model.window, "pretrain: target window length mismatch");
    detail::mlstm_train_loop(
        model, samples, val, config, config.pretrain_epochs, MlstmPhase::kPretrain,
        "mlstm.pretrain.shuffle", /*update_fusion=*/false,
        [&](const ForecastSample& s, detail::MlstmGradAccum& acc, double inv) {
            MlstmForwardCache cache;
            MlstmForwardResult r = mlstm_forward(model, s.window, &cache);
            const Tensor1 targets = pretrain_targets(s.target_window, n_levels, model.mwdn.filter);
            Tensor1 d_per(r.per_subnet.size());
            double loss = 0.0;
            for (std::size_t k = 0; k < r.per_subnet.size(); ++k) {
                const double d = r.per_subnet[k] - targets[k];
                loss += d * d;
                d_per[k] = 2.0 * d;
            }
            acc.add(mlstm_backward(model, cache, d_per, 0.0, config.alpha, config.beta), inv);
            return loss;
        },
        history);
}

// Fine-tuning: squared error of the fused forecast against the scalar target,
// end-to-end through fusion, subnets and the decomposition stack.
inline void finetune(MlstmModel& model, const std::vector<ForecastSample>& samples,
                     const TrainConfig& config,
                     const std::vector<ForecastSample>& val = {},
                     std::vector<MlstmEpochStats>* history = nullptr) {
    config.validate();
    require(!samples.empty(), "finetune: empty dataset");
    detail::mlstm_train_loop(
        model, samples, val, config, config.finetune_epochs, MlstmPhase::kFinetune,
        "mlstm.finetune.shuffle", /*update_fusion=*/true,
        [&](const ForecastSample& s, detail::MlstmGradAccum& acc, double inv) {
            MlstmForwardCache cache;
            MlstmForwardResult r = mlstm_forward(model, s.window, &cache);
            const double d = r.y_hat - s.target;
            acc.add(mlstm_backward(model, cache, Tensor1{}, 2.0 * d, config.alpha, config.beta),
                    inv);
            return d * d;
        },
        history);
}

}  // namespace mwdn
