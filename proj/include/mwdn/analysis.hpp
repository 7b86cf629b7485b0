#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mwdn/data.hpp"
#include "mwdn/mlstm.hpp"
#include "mwdn/rcf.hpp"

namespace mwdn {

enum class Branch { kLow, kHigh };

// Per-position mean absolute derivative of the model's scalar output with
// respect to an input element or a decomposition-layer activation.
struct ImportanceSpectrum {
    Tensor1 values;
    std::string axis_label;
    bool is_input = true;
    std::size_t level = 0;  // 1-based when is_input == false
    Branch branch = Branch::kLow;
};

struct ImportanceSet {
    ImportanceSpectrum input;
    std::vector<ImportanceSpectrum> layers;  // level 1 high, level 1 low, ...
};

namespace detail {

inline void init_importance_set(ImportanceSet& set, const MwdnStack& stack) {
    set.input.values.assign(stack.input_len(), 0.0);
    set.input.axis_label = "timestamp";
    set.input.is_input = true;
    set.layers.clear();
    std::size_t p = stack.input_len();
    for (std::size_t i = 0; i < stack.n_levels(); ++i) {
        p = halved_len(p);
        for (Branch b : {Branch::kHigh, Branch::kLow}) {
            ImportanceSpectrum s;
            s.values.assign(p, 0.0);
            s.axis_label = "layer position";
            s.is_input = false;
            s.level = i + 1;
            s.branch = b;
            set.layers.push_back(std::move(s));
        }
    }
}

inline void add_abs(Tensor1& acc, const Tensor1& g) {
    require(acc.size() == g.size(), "importance: gradient length mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += std::fabs(g[i]);
}

inline void accumulate_sensitivities(ImportanceSet& set, const MwdnGradients& g) {
    add_abs(set.input.values, g.input);
    for (std::size_t i = 0; i < g.at_high.size(); ++i) {
        add_abs(set.layers[2 * i].values, g.at_high[i]);
        add_abs(set.layers[2 * i + 1].values, g.at_low[i]);
    }
}

inline void finish_importance_set(ImportanceSet& set, std::size_t samples) {
    const double inv = 1.0 / static_cast<double>(samples);
    for (double& v : set.input.values) v *= inv;
    for (ImportanceSpectrum& s : set.layers)
        for (double& v : s.values) v *= inv;
}

}  // namespace detail

// Classification sensitivity: the scalar output is the softmax probability of
// the sample's true class at the final stage.
inline ImportanceSet full_importance(const RcfModel& model, const std::vector<TimeSeries>& data) {
    require(!data.empty(), "importance: empty dataset");
    ImportanceSet set;
    detail::init_importance_set(set, model.mwdn);
    for (const TimeSeries& ts : data) {
        require(ts.label.has_value(), "importance: classification samples need labels");
        RcfForwardCache cache;
        rcf_forward(model, ts.values, &cache);
        std::vector<Tensor1> d_chat(model.stages.size());
        d_chat.back() = one_hot(static_cast<std::size_t>(*ts.label), model.class_count);
        RcfGradients g = rcf_backward_from_chat_grads(model, cache, d_chat, 0.0, 0.0);
        detail::accumulate_sensitivities(set, g.mwdn);
    }
    detail::finish_importance_set(set, data.size());
    return set;
}

// Forecasting sensitivity: the scalar output is the forecast itself.
inline ImportanceSet full_importance(const MlstmModel& model, const std::vector<Tensor1>& windows) {
    require(!windows.empty(), "importance: empty dataset");
    ImportanceSet set;
    detail::init_importance_set(set, model.mwdn);
    for (const Tensor1& w : windows) {
        MlstmForwardCache cache;
        mlstm_forward(model, w, &cache);
        MlstmGradients g = mlstm_backward(model, cache, Tensor1{}, 1.0, 0.0, 0.0);
        detail::accumulate_sensitivities(set, g.mwdn);
    }
    detail::finish_importance_set(set, windows.size());
    return set;
}

template <typename Model, typename Data>
inline ImportanceSpectrum input_importance(const Model& model, const Data& data) {
    return full_importance(model, data).input;
}

template <typename Model, typename Data>
inline ImportanceSpectrum layer_importance(const Model& model, const Data& data,
                                           std::size_t level, Branch branch) {
    require(level >= 1 && level <= model.mwdn.n_levels(), "layer_importance: invalid level");
    ImportanceSet set = full_importance(model, data);
    const std::size_t idx = 2 * (level - 1) + (branch == Branch::kHigh ? 0 : 1);
    return set.layers[idx];
}

// Nearest-neighbor stretch: out[j] = s[floor(j * len / target_len)].
inline ImportanceSpectrum resize_spectrum(const ImportanceSpectrum& s, std::size_t target_len) {
    require(target_len >= 1, "resize_spectrum: target length must be >= 1");
    if (s.values.empty()) throw std::invalid_argument("resize_spectrum: empty input");
    ImportanceSpectrum out = s;
    out.values.assign(target_len, 0.0);
    for (std::size_t j = 0; j < target_len; ++j)
        out.values[j] = s.values[(j * s.values.size()) / target_len];
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double error_rate(const std::vector<std::size_t>& predictions,
                         const std::vector<int>& labels) {
    require(predictions.size() == labels.size(), "error_rate: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("error_rate: empty input");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] != static_cast<std::size_t>(labels[i])) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

// (1/K) sum_k e_k / C_k over (error rate, class count) pairs.
inline double mpce(const std::vector<std::pair<double, std::size_t>>& per_dataset) {
    if (per_dataset.empty()) throw std::invalid_argument("mpce: empty input");
    double acc = 0.0;
    for (const auto& [err, classes] : per_dataset) {
        require(classes >= 2, "mpce: class count must be >= 2");
        acc += err / static_cast<double>(classes);
    }
    return acc / static_cast<double>(per_dataset.size());
}

// (1/T) sum |y_hat - y| / y * 100. Requires every actual value nonzero.
inline double mape(const Tensor1& y_hat, const Tensor1& y) {
    require(y_hat.size() == y.size(), "mape: length mismatch");
    require(!y.empty(), "mape: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) throw std::invalid_argument("mape: zero actual value at index " +
                                                     std::to_string(i));
        acc += std::fabs(y_hat[i] - y[i]) / y[i];
    }
    return 100.0 * acc / static_cast<double>(y.size());
}

inline double rmse(const Tensor1& y_hat, const Tensor1& y) {
    require(y_hat.size() == y.size(), "rmse: length mismatch");
    require(!y.empty(), "rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y_hat[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

struct EvalReport {
    std::optional<double> error_rate;
    std::optional<double> mpce;
    std::optional<double> mape_percent;
    std::optional<double> rmse;
};

// header: position,importance,importance_normalized
inline void write_spectrum_csv(const std::string& path, const ImportanceSpectrum& s) {
    double lo = s.values.empty() ? 0.0 : s.values.front();
    double hi = lo;
    for (double v : s.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::string body = "position,importance,importance_normalized\n";
    char buf[96];
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const double norm = span > 0.0 ? (s.values[i] - lo) / span : 0.0;
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, s.values[i], norm);
        body += buf;
    }
    atomic_write_file(path, body);
}

}  // namespace mwdn
