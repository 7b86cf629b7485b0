#pragma once

#include <cstdint>
#include <stdexcept>

#include "mwdn/tensor.hpp"

namespace mwdn {

enum class PsiKind { kMlp, kConv };

struct TrainConfig {
    std::size_t n_levels = 0;  // 0 = derive from series length
    double learning_rate = 0.01;
    double alpha = 0.01;
    double beta = 0.01;
    std::size_t epochs = 500;
    std::size_t batch_size = 16;
    std::size_t early_stop_patience = 50;
    std::uint64_t seed = 0;
    bool freeze_mwdn = false;
    double eps_scale = 1e-4;

    // classification
    PsiKind psi_kind = PsiKind::kMlp;
    std::size_t hidden_width = 64;

    // forecasting
    std::size_t window = 32;
    std::size_t horizon = 1;
    std::size_t stride = 1;
    std::size_t lstm_hidden = 32;
    std::size_t pretrain_epochs = 100;
    std::size_t finetune_epochs = 200;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning rate must be > 0");
        if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("config: alpha, beta must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("config: batch size must be >= 1");
        if (eps_scale < 0.0) throw std::invalid_argument("config: eps scale must be >= 0");
        if (window < 2) throw std::invalid_argument("config: window must be >= 2");
        if (horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
        if (stride < 1) throw std::invalid_argument("config: stride must be >= 1");
    }
};

// Default decomposition depth: min(3, floor(log2(len)) - 1), at least 1.
inline std::size_t auto_levels(std::size_t series_len) {
    require(series_len >= 4, "auto_levels: series too short");
    std::size_t log2_floor = 0;
    while ((std::size_t{2} << log2_floor) <= series_len) ++log2_floor;
    const std::size_t depth = log2_floor >= 2 ? log2_floor - 1 : 1;
    return depth < 3 ? depth : 3;
}

}  // namespace mwdn
