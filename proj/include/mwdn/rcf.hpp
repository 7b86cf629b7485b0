#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mwdn/config.hpp"
#include "mwdn/data.hpp"
#include "mwdn/gradcheck.hpp"
#include "mwdn/network.hpp"
#include "mwdn/nn.hpp"

namespace mwdn {

inline constexpr std::size_t kConvPsiKernels = 8;
inline constexpr std::size_t kConvPsiWidth = 7;

// Per-level classifier over the (x_h(i), x_l(i)) pair, emitting C logits.
struct ClassifierStage {
    PsiKind kind = PsiKind::kMlp;
    std::size_t class_count = 0;

    // mlp: concat -> hidden sigmoid layer -> linear logits
    Tensor2 mlp_w_hidden;
    Tensor1 mlp_b_hidden;
    Tensor2 mlp_w_out;
    Tensor1 mlp_b_out;

    // conv: per branch, kConvPsiKernels valid 1-D kernels + bias, relu,
    // global average, then a linear map from the 2*kConvPsiKernels features
    std::vector<Tensor1> conv_kernels_high, conv_kernels_low;
    Tensor1 conv_bias_high, conv_bias_low;
    Tensor2 conv_w_out;
    Tensor1 conv_b_out;
};

struct RcfModel {
    MwdnStack mwdn;
    std::vector<ClassifierStage> stages;
    std::size_t class_count = 0;
    std::size_t hidden_width = 0;
    PsiKind psi_kind = PsiKind::kMlp;
};

inline ClassifierStage make_stage(PsiKind kind, std::size_t sub_len, std::size_t class_count,
                                  std::size_t hidden_width, std::uint64_t seed,
                                  const std::string& tag) {
    ClassifierStage s;
    s.kind = kind;
    s.class_count = class_count;
    if (kind == PsiKind::kMlp) {
        const std::size_t in = 2 * sub_len;
        RandomStream rng(seed, tag + ".mlp");
        const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
        s.mlp_w_hidden = Tensor2(hidden_width, in);
        for (double& w : s.mlp_w_hidden.raw()) w = rng.uniform(-s1, s1);
        s.mlp_b_hidden.assign(hidden_width, 0.0);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_width));
        s.mlp_w_out = Tensor2(class_count, hidden_width);
        for (double& w : s.mlp_w_out.raw()) w = rng.uniform(-s2, s2);
        s.mlp_b_out.assign(class_count, 0.0);
    } else {
        require(sub_len >= kConvPsiWidth,
                "conv psi: sub-series length " + std::to_string(sub_len) +
                    " is shorter than the kernel width " + std::to_string(kConvPsiWidth));
        RandomStream rng(seed, tag + ".conv");
        const double sk = 1.0 / std::sqrt(static_cast<double>(kConvPsiWidth));
        auto make_bank = [&](std::vector<Tensor1>& kernels, Tensor1& bias) {
            kernels.assign(kConvPsiKernels, Tensor1(kConvPsiWidth, 0.0));
            bias.assign(kConvPsiKernels, 0.0);
            for (Tensor1& k : kernels)
                for (double& w : k) w = rng.uniform(-sk, sk);
        };
        make_bank(s.conv_kernels_high, s.conv_bias_high);
        make_bank(s.conv_kernels_low, s.conv_bias_low);
        const std::size_t feats = 2 * kConvPsiKernels;
        const double so = 1.0 / std::sqrt(static_cast<double>(feats));
        s.conv_w_out = Tensor2(class_count, feats);
        for (double& w : s.conv_w_out.raw()) w = rng.uniform(-so, so);
        s.conv_b_out.assign(class_count, 0.0);
    }
    return s;
}

inline RcfModel make_rcf_model(std::size_t input_len, std::size_t n_levels,
                               std::size_t class_count, PsiKind psi_kind,
                               std::size_t hidden_width, const WaveletFilterPair& filters,
                               double eps_scale = kDefaultEpsScale, std::uint64_t seed = 0) {
    require(class_count >= 2, "rcf: need at least 2 classes");
    RcfModel m;
    m.mwdn = make_mwdn_stack(input_len, n_levels, filters, eps_scale, seed);
    m.class_count = class_count;
    m.hidden_width = hidden_width;
    m.psi_kind = psi_kind;
    std::size_t p = input_len;
    for (std::size_t i = 0; i < n_levels; ++i) {
        p = halved_len(p);
        m.stages.push_back(make_stage(psi_kind, p, class_count, hidden_width, seed,
                                      "rcf.stage" + std::to_string(i)));
    }
    return m;
}

// ---------------------------------------------------------------------------
// psi forward / backward
// ---------------------------------------------------------------------------

struct PsiCache {
    Tensor1 x_high, x_low;
    // mlp
    FcCache fc_hidden, fc_out;
    // conv
    std::vector<Tensor1> conv_out_high, conv_out_low;  // pre-relu
    Tensor1 features;
    FcCache conv_fc_out;
};

inline Tensor1 psi_forward(const ClassifierStage& stage, const Tensor1& x_high,
                           const Tensor1& x_low, PsiCache* cache = nullptr) {
    require(x_high.size() == x_low.size(), "psi_forward: sub-series pair length mismatch");
    if (cache) {
        cache->x_high = x_high;
        cache->x_low = x_low;
    }
    if (stage.kind == PsiKind::kMlp) {
        Tensor1 concat;
        concat.reserve(x_high.size() + x_low.size());
        concat.insert(concat.end(), x_high.begin(), x_high.end());
        concat.insert(concat.end(), x_low.begin(), x_low.end());
        PsiCache local;
        PsiCache* c = cache ? cache : &local;
        Tensor1 hidden = fc_forward(concat, stage.mlp_w_hidden, stage.mlp_b_hidden,
                                    Activation::kSigmoid, &c->fc_hidden);
        return fc_forward(hidden, stage.mlp_w_out, stage.mlp_b_out, Activation::kIdentity,
                          &c->fc_out);
    }
    PsiCache local;
    PsiCache* c = cache ? cache : &local;
    c->conv_out_high.clear();
    c->conv_out_low.clear();
    Tensor1 features;
    features.reserve(2 * kConvPsiKernels);
    auto run_bank = [&](const Tensor1& x, const std::vector<Tensor1>& kernels,
                        const Tensor1& bias, std::vector<Tensor1>& outs) {
        for (std::size_t k = 0; k < kernels.size(); ++k) {
            Tensor1 conv = conv1d_forward(x, kernels[k]);
            for (double& v : conv) v += bias[k];
            double mean = 0.0;
            for (double v : conv) mean += v > 0.0 ? v : 0.0;
            mean /= static_cast<double>(conv.size());
            features.push_back(mean);
            outs.push_back(std::move(conv));
        }
    };
    run_bank(x_high, stage.conv_kernels_high, stage.conv_bias_high, c->conv_out_high);
    run_bank(x_low, stage.conv_kernels_low, stage.conv_bias_low, c->conv_out_low);
    c->features = features;
    return fc_forward(features, stage.conv_w_out, stage.conv_b_out, Activation::kIdentity,
                      &c->conv_fc_out);
}

struct PsiGradients {
    // mlp
    Tensor2 mlp_w_hidden;
    Tensor1 mlp_b_hidden;
    Tensor2 mlp_w_out;
    Tensor1 mlp_b_out;
    // conv
    std::vector<Tensor1> conv_kernels_high, conv_kernels_low;
    Tensor1 conv_bias_high, conv_bias_low;
    Tensor2 conv_w_out;
    Tensor1 conv_b_out;

    Tensor1 x_high, x_low;
};

inline PsiGradients psi_backward(const ClassifierStage& stage, const PsiCache& cache,
                                 const Tensor1& upstream) {
    PsiGradients g;
    if (stage.kind == PsiKind::kMlp) {
        FcGradients go = fc_backward(stage.mlp_w_out, cache.fc_out, upstream);
        FcGradients gh = fc_backward(stage.mlp_w_hidden, cache.fc_hidden, go.input);
        g.mlp_w_hidden = std::move(gh.weight);
        g.mlp_b_hidden = std::move(gh.bias);
        g.mlp_w_out = std::move(go.weight);
        g.mlp_b_out = std::move(go.bias);
        const std::size_t half = cache.x_high.size();
        g.x_high.assign(gh.input.begin(), gh.input.begin() + half);
        g.x_low.assign(gh.input.begin() + half, gh.input.end());
        return g;
    }
    FcGradients go = fc_backward(stage.conv_w_out, cache.conv_fc_out, upstream);
    g.conv_w_out = std::move(go.weight);
    g.conv_b_out = std::move(go.bias);
    g.x_high.assign(cache.x_high.size(), 0.0);
    g.x_low.assign(cache.x_low.size(), 0.0);
    g.conv_kernels_high.assign(kConvPsiKernels, Tensor1(kConvPsiWidth, 0.0));
    g.conv_kernels_low.assign(kConvPsiKernels, Tensor1(kConvPsiWidth, 0.0));
    g.conv_bias_high.assign(kConvPsiKernels, 0.0);
    g.conv_bias_low.assign(kConvPsiKernels, 0.0);
    auto back_bank = [&](const Tensor1& x, const std::vector<Tensor1>& kernels,
                         const std::vector<Tensor1>& outs, std::size_t feat_offset,
                         std::vector<Tensor1>& g_kernels, Tensor1& g_bias, Tensor1& g_x) {
        for (std::size_t k = 0; k < kernels.size(); ++k) {
            const Tensor1& conv = outs[k];
            const double d_mean = go.input[feat_offset + k] / static_cast<double>(conv.size());
            Tensor1 d_conv(conv.size());
            for (std::size_t i = 0; i < conv.size(); ++i)
                d_conv[i] = conv[i] > 0.0 ? d_mean : 0.0;
            Conv1dCache cc{x, kernels[k]};
            Conv1dGradients cg = conv1d_backward(cc, d_conv);
            axpy(g_kernels[k], cg.kernel, 1.0);
            axpy(g_x, cg.input, 1.0);
            for (double v : d_conv) g_bias[k] += v;
        }
    };
    back_bank(cache.x_high, stage.conv_kernels_high, cache.conv_out_high, 0,
              g.conv_kernels_high, g.conv_bias_high, g.x_high);
    back_bank(cache.x_low, stage.conv_kernels_low, cache.conv_out_low, kConvPsiKernels,
              g.conv_kernels_low, g.conv_bias_low, g.x_low);
    return g;
}

// ---------------------------------------------------------------------------
// Residual flow
// ---------------------------------------------------------------------------

struct RcfForwardCache {
    MwdnForwardCache mwdn;
    std::vector<PsiCache> psis;
    std::vector<Tensor1> logits_accum;  // c_hat(i-1) + u(i), pre-softmax
    std::vector<Tensor1> c_hats;
};

// c_hat(0) = 0; c_hat(i) = softmax(c_hat(i-1) + u(i)).
inline std::vector<Tensor1> rcf_forward(const RcfModel& model, const Tensor1& x,
                                        RcfForwardCache* cache = nullptr) {
    RcfForwardCache local;
    RcfForwardCache* c = cache ? cache : &local;
    c->psis.assign(model.stages.size(), PsiCache{});
    c->logits_accum.clear();
    c->c_hats.clear();
    mwdn_forward(x, model.mwdn, &c->mwdn);
    Tensor1 prev(model.class_count, 0.0);
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        const MwdnLevelCache& lc = c->mwdn.levels[i];
        Tensor1 u = psi_forward(model.stages[i], lc.out_high, lc.out_low, &c->psis[i]);
        Tensor1 s = prev;
        axpy(s, u, 1.0);
        Tensor1 c_hat = softmax(s);
        c->logits_accum.push_back(std::move(s));
        c->c_hats.push_back(c_hat);
        prev = std::move(c_hat);
    }
    return c->c_hats;
}

// sum_i (i/N) * CE(c, c_hat(i))
inline double deep_supervision_loss(const std::vector<Tensor1>& c_hats, const Tensor1& onehot) {
    require(!c_hats.empty(), "deep_supervision_loss: need at least one stage output");
    const double n = static_cast<double>(c_hats.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < c_hats.size(); ++i)
        loss += (static_cast<double>(i + 1) / n) * cross_entropy(onehot, c_hats[i]);
    return loss;
}

inline std::size_t rcf_predict_from_chat(const Tensor1& c_hat) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c_hat.size(); ++i)
        if (c_hat[i] > c_hat[best]) best = i;  // ties keep the lowest index
    return best;
}

inline std::size_t rcf_predict(const RcfModel& model, const Tensor1& x) {
    std::vector<Tensor1> c_hats = rcf_forward(model, x);
    return rcf_predict_from_chat(c_hats.back());
}

struct RcfGradients {
    MwdnGradients mwdn;
    std::vector<PsiGradients> stages;
};

// Backward pass given an arbitrary upstream gradient on each stage's softmax
// output. The residual recursion routes every ds(i) back into c_hat(i-1).
inline RcfGradients rcf_backward_from_chat_grads(const RcfModel& model,
                                                 const RcfForwardCache& cache,
                                                 const std::vector<Tensor1>& d_chat,
                                                 double alpha, double beta) {
    const std::size_t n = model.stages.size();
    require(d_chat.size() == n, "rcf_backward: need one upstream slot per stage");
    RcfGradients g;
    g.stages.resize(n);
    MwdnUpstream upstream = zero_mwdn_upstream(model.mwdn);
    Tensor1 carry(model.class_count, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        Tensor1 gc = carry;
        if (!d_chat[i].empty()) {
            require(d_chat[i].size() == model.class_count, "rcf_backward: upstream length mismatch");
            axpy(gc, d_chat[i], 1.0);
        }
        Tensor1 ds = softmax_backward(cache.c_hats[i], gc);
        g.stages[i] = psi_backward(model.stages[i], cache.psis[i], ds);
        upstream.d_high[i] = g.stages[i].x_high;
        upstream.d_low[i] = g.stages[i].x_low;
        carry = std::move(ds);  // flows into c_hat(i-1); discarded at i = 0
    }
    g.mwdn = mwdn_backward(model.mwdn, cache.mwdn, upstream, alpha, beta);
    return g;
}

// Gradient of the deep-supervision objective (without the prior penalty when
// alpha = beta = 0).
inline RcfGradients rcf_backward(const RcfModel& model, const RcfForwardCache& cache,
                                 const Tensor1& onehot, double alpha, double beta) {
    const std::size_t n = model.stages.size();
    std::vector<Tensor1> d_chat(n);
    for (std::size_t i = 0; i < n; ++i) {
        d_chat[i] = cross_entropy_grad(onehot, cache.c_hats[i]);
        const double w = static_cast<double>(i + 1) / static_cast<double>(n);
        for (double& v : d_chat[i]) v *= w;
    }
    return rcf_backward_from_chat_grads(model, cache, d_chat, alpha, beta);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

inline void accumulate_psi(PsiGradients& acc, const PsiGradients& g, PsiKind kind, double scale) {
    if (kind == PsiKind::kMlp) {
        if (acc.mlp_b_hidden.empty()) {
            acc.mlp_w_hidden = Tensor2(g.mlp_w_hidden.rows(), g.mlp_w_hidden.cols());
            acc.mlp_b_hidden.assign(g.mlp_b_hidden.size(), 0.0);
            acc.mlp_w_out = Tensor2(g.mlp_w_out.rows(), g.mlp_w_out.cols());
            acc.mlp_b_out.assign(g.mlp_b_out.size(), 0.0);
        }
        acc.mlp_w_hidden.add_scaled(g.mlp_w_hidden, scale);
        axpy(acc.mlp_b_hidden, g.mlp_b_hidden, scale);
        acc.mlp_w_out.add_scaled(g.mlp_w_out, scale);
        axpy(acc.mlp_b_out, g.mlp_b_out, scale);
    } else {
        if (acc.conv_bias_high.empty()) {
            acc.conv_kernels_high.assign(kConvPsiKernels, Tensor1(kConvPsiWidth, 0.0));
            acc.conv_kernels_low.assign(kConvPsiKernels, Tensor1(kConvPsiWidth, 0.0));
            acc.conv_bias_high.assign(kConvPsiKernels, 0.0);
            acc.conv_bias_low.assign(kConvPsiKernels, 0.0);
            acc.conv_w_out = Tensor2(g.conv_w_out.rows(), g.conv_w_out.cols());
            acc.conv_b_out.assign(g.conv_b_out.size(), 0.0);
        }
        for (std::size_t k = 0; k < kConvPsiKernels; ++k) {
            axpy(acc.conv_kernels_high[k], g.conv_kernels_high[k], scale);
            axpy(acc.conv_kernels_low[k], g.conv_kernels_low[k], scale);
        }
        axpy(acc.conv_bias_high, g.conv_bias_high, scale);
        axpy(acc.conv_bias_low, g.conv_bias_low, scale);
        acc.conv_w_out.add_scaled(g.conv_w_out, scale);
        axpy(acc.conv_b_out, g.conv_b_out, scale);
    }
}

inline void apply_psi(ClassifierStage& stage, const PsiGradients& g, double lr) {
    if (stage.kind == PsiKind::kMlp) {
        stage.mlp_w_hidden.add_scaled(g.mlp_w_hidden, -lr);
        axpy(stage.mlp_b_hidden, g.mlp_b_hidden, -lr);
        stage.mlp_w_out.add_scaled(g.mlp_w_out, -lr);
        axpy(stage.mlp_b_out, g.mlp_b_out, -lr);
    } else {
        for (std::size_t k = 0; k < kConvPsiKernels; ++k) {
            axpy(stage.conv_kernels_high[k], g.conv_kernels_high[k], -lr);
            axpy(stage.conv_kernels_low[k], g.conv_kernels_low[k], -lr);
        }
        axpy(stage.conv_bias_high, g.conv_bias_high, -lr);
        axpy(stage.conv_bias_low, g.conv_bias_low, -lr);
        stage.conv_w_out.add_scaled(g.conv_w_out, -lr);
        axpy(stage.conv_b_out, g.conv_b_out, -lr);
    }
}

}  // namespace detail

struct RcfEpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_err = 0.0;
    double test_err = 0.0;
};

struct RcfTrainResult {
    RcfModel model;
    std::vector<RcfEpochStats> history;
};

inline double rcf_error_rate(const RcfModel& model, const std::vector<TimeSeries>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t wrong = 0;
    for (const TimeSeries& ts : samples)
        if (rcf_predict(model, ts.values) != static_cast<std::size_t>(*ts.label)) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(samples.size());
}

inline RcfTrainResult train_rcf(const LabeledDataset& dataset, const TrainConfig& config) {
    config.validate();
    require(dataset.class_count >= 2, "train_rcf: need at least 2 classes");
    require(!dataset.train.empty(), "train_rcf: empty training set");
    const std::size_t len = dataset.series_length;
    for (const TimeSeries& ts : dataset.train)
        require(ts.values.size() == len, "train_rcf: series lengths differ (pad first)");
    for (const TimeSeries& ts : dataset.test)
        require(ts.values.size() == len, "train_rcf: test series length differs (pad first)");

    const std::size_t n_levels = config.n_levels ? config.n_levels : auto_levels(len);
    RcfTrainResult res;
    res.model = make_rcf_model(len, n_levels, dataset.class_count, config.psi_kind,
                               config.hidden_width, db4_filters(), config.eps_scale, config.seed);
    RcfModel& model = res.model;

    RandomStream shuffle_rng(config.seed, "rcf.train.shuffle");
    std::vector<std::size_t> order(dataset.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stagnant = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            MwdnGradients mwdn_acc = zero_mwdn_gradients(model.mwdn);
            std::vector<PsiGradients> psi_acc(model.stages.size());
            for (std::size_t s = start; s < stop; ++s) {
                const TimeSeries& ts = dataset.train[order[s]];
                RcfForwardCache cache;
                rcf_forward(model, ts.values, &cache);
                const Tensor1 target = one_hot(static_cast<std::size_t>(*ts.label),
                                               model.class_count);
                epoch_loss += deep_supervision_loss(cache.c_hats, target);
                // per-sample alpha/beta scaled by inv so the batch adds the
                // penalty gradient exactly once
                RcfGradients g = rcf_backward(model, cache, target, config.alpha, config.beta);
                accumulate(mwdn_acc, g.mwdn, inv);
                for (std::size_t i = 0; i < model.stages.size(); ++i)
                    detail::accumulate_psi(psi_acc[i], g.stages[i], model.psi_kind, inv);
            }
            if (!config.freeze_mwdn) apply_gradients(model.mwdn, mwdn_acc, config.learning_rate);
            for (std::size_t i = 0; i < model.stages.size(); ++i)
                detail::apply_psi(model.stages[i], psi_acc[i], config.learning_rate);
        }
        epoch_loss = epoch_loss / static_cast<double>(order.size()) +
                     regularization_penalty(model.mwdn, config.alpha, config.beta);
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train_rcf: non-finite loss at epoch " +
                                     std::to_string(epoch) + "; lower the learning rate");
        RcfEpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss;
        stats.train_err = rcf_error_rate(model, dataset.train);
        stats.test_err = dataset.test.empty()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : rcf_error_rate(model, dataset.test);
        res.history.push_back(stats);
        if (epoch_loss < best_loss - 1e-12) {
            best_loss = epoch_loss;
            stagnant = 0;
        } else if (++stagnant >= config.early_stop_patience) {
            break;
        }
    }
    return res;
}

}  // namespace mwdn
