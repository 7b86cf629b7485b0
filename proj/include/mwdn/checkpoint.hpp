#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "mwdn/config.hpp"
#include "mwdn/data.hpp"
#include "mwdn/mlstm.hpp"
#include "mwdn/rcf.hpp"

namespace mwdn {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

using json = nlohmann::json;

inline json to_json(const Tensor1& v) { return json{{"data", v}}; }

inline json to_json(const Tensor2& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.raw()}};
}

inline Tensor1 tensor1_from_json(const json& j, std::size_t expect, const std::string& name) {
    Tensor1 v = j.at("data").get<Tensor1>();
    if (v.size() != expect)
        throw std::runtime_error("checkpoint: tensor '" + name + "' has length " +
                                 std::to_string(v.size()) + ", expected " +
                                 std::to_string(expect));
    return v;
}

inline Tensor2 tensor2_from_json(const json& j, std::size_t rows, std::size_t cols,
                                 const std::string& name) {
    const std::size_t r = j.at("rows").get<std::size_t>();
    const std::size_t c = j.at("cols").get<std::size_t>();
    if (r != rows || c != cols)
        throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                                 std::to_string(r) + "x" + std::to_string(c) + ", expected " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    Tensor2 m(rows, cols);
    m.raw() = j.at("data").get<std::vector<double>>();
    if (m.raw().size() != rows * cols)
        throw std::runtime_error("checkpoint: tensor '" + name + "' data size mismatch");
    return m;
}

inline json config_to_json(const TrainConfig& c) {
    return json{{"n_levels", c.n_levels},
                {"learning_rate", c.learning_rate},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"early_stop_patience", c.early_stop_patience},
                {"seed", c.seed},
                {"freeze_mwdn", c.freeze_mwdn},
                {"eps_scale", c.eps_scale},
                {"psi_kind", c.psi_kind == PsiKind::kMlp ? "mlp" : "conv"},
                {"hidden_width", c.hidden_width},
                {"window", c.window},
                {"horizon", c.horizon},
                {"stride", c.stride},
                {"lstm_hidden", c.lstm_hidden},
                {"pretrain_epochs", c.pretrain_epochs},
                {"finetune_epochs", c.finetune_epochs}};
}

inline TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.n_levels = j.at("n_levels").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.freeze_mwdn = j.at("freeze_mwdn").get<bool>();
    c.eps_scale = j.at("eps_scale").get<double>();
    c.psi_kind = j.at("psi_kind").get<std::string>() == "conv" ? PsiKind::kConv : PsiKind::kMlp;
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.pretrain_epochs = j.at("pretrain_epochs").get<std::size_t>();
    c.finetune_epochs = j.at("finetune_epochs").get<std::size_t>();
    return c;
}

inline void stack_to_json(const MwdnStack& stack, json& params, json& priors) {
    for (std::size_t i = 0; i < stack.n_levels(); ++i) {
        const std::string tag = "mwdn.level" + std::to_string(i);
        const MwdnLevel& level = stack.levels[i];
        params[tag + ".w_low"] = to_json(level.w_low);
        params[tag + ".w_high"] = to_json(level.w_high);
        params[tag + ".b_low"] = to_json(level.b_low);
        params[tag + ".b_high"] = to_json(level.b_high);
        priors[tag + ".w_low"] = to_json(level.prior_low);
        priors[tag + ".w_high"] = to_json(level.prior_high);
    }
}

inline void stack_from_json(MwdnStack& stack, const json& params, const json& priors) {
    for (std::size_t i = 0; i < stack.n_levels(); ++i) {
        const std::string tag = "mwdn.level" + std::to_string(i);
        MwdnLevel& level = stack.levels[i];
        const std::size_t p = level.input_len;
        level.w_low = tensor2_from_json(params.at(tag + ".w_low"), p, p, tag + ".w_low");
        level.w_high = tensor2_from_json(params.at(tag + ".w_high"), p, p, tag + ".w_high");
        level.b_low = tensor1_from_json(params.at(tag + ".b_low"), p, tag + ".b_low");
        level.b_high = tensor1_from_json(params.at(tag + ".b_high"), p, tag + ".b_high");
        level.prior_low = tensor2_from_json(priors.at(tag + ".w_low"), p, p, "prior " + tag);
        level.prior_high = tensor2_from_json(priors.at(tag + ".w_high"), p, p, "prior " + tag);
    }
}

inline json load_checkpoint_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("checkpoint '" + path + "': " + e.what());
    }
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint '" + path + "': format version " +
                                 std::to_string(version) + " not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    return j;
}

}  // namespace detail

inline std::string checkpoint_kind(const std::string& path) {
    return detail::load_checkpoint_json(path).at("model_kind").get<std::string>();
}

// ---------------------------------------------------------------------------
// RCF
// ---------------------------------------------------------------------------

inline void save_checkpoint(const RcfModel& model, const TrainConfig& config, bool znormalize,
                            const std::string& path) {
    detail::json j;
    j["format_version"] = kCheckpointVersion;
    j["model_kind"] = "rcf";
    detail::json hyper = detail::config_to_json(config);
    hyper["input_len"] = model.mwdn.input_len();
    hyper["model_levels"] = model.mwdn.n_levels();
    hyper["class_count"] = model.class_count;
    hyper["znormalize"] = znormalize;
    hyper["filter_low"] = model.mwdn.filter.low;
    hyper["filter_high"] = model.mwdn.filter.high;
    j["hyperparameters"] = hyper;
    detail::json params = detail::json::object();
    detail::json priors = detail::json::object();
    detail::stack_to_json(model.mwdn, params, priors);
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        const std::string tag = "stage" + std::to_string(i);
        const ClassifierStage& s = model.stages[i];
        if (s.kind == PsiKind::kMlp) {
            params[tag + ".w_hidden"] = detail::to_json(s.mlp_w_hidden);
            params[tag + ".b_hidden"] = detail::to_json(s.mlp_b_hidden);
            params[tag + ".w_out"] = detail::to_json(s.mlp_w_out);
            params[tag + ".b_out"] = detail::to_json(s.mlp_b_out);
        } else {
            for (std::size_t k = 0; k < s.conv_kernels_high.size(); ++k) {
                params[tag + ".kernel_high" + std::to_string(k)] =
                    detail::to_json(s.conv_kernels_high[k]);
                params[tag + ".kernel_low" + std::to_string(k)] =
                    detail::to_json(s.conv_kernels_low[k]);
            }
            params[tag + ".kbias_high"] = detail::to_json(s.conv_bias_high);
            params[tag + ".kbias_low"] = detail::to_json(s.conv_bias_low);
            params[tag + ".w_out"] = detail::to_json(s.conv_w_out);
            params[tag + ".b_out"] = detail::to_json(s.conv_b_out);
        }
    }
    j["parameters"] = params;
    j["priors"] = priors;
    atomic_write_file(path, j.dump(1));
}

struct RcfCheckpoint {
    RcfModel model;
    TrainConfig config;
    bool znormalize = true;
};

inline RcfCheckpoint load_rcf_checkpoint(const std::string& path) {
    const detail::json j = detail::load_checkpoint_json(path);
    const std::string kind = j.at("model_kind").get<std::string>();
    if (kind != "rcf")
        throw std::runtime_error("checkpoint '" + path + "' holds a '" + kind +
                                 "' model, expected 'rcf'");
    const detail::json& hyper = j.at("hyperparameters");
    RcfCheckpoint out;
    out.config = detail::config_from_json(hyper);
    out.znormalize = hyper.at("znormalize").get<bool>();
    WaveletFilterPair filters;
    filters.low = hyper.at("filter_low").get<Tensor1>();
    filters.high = hyper.at("filter_high").get<Tensor1>();
    const std::size_t input_len = hyper.at("input_len").get<std::size_t>();
    const std::size_t n_levels = hyper.at("model_levels").get<std::size_t>();
    const std::size_t class_count = hyper.at("class_count").get<std::size_t>();
    out.model = make_rcf_model(input_len, n_levels, class_count, out.config.psi_kind,
                               out.config.hidden_width, filters, 0.0, 0);
    const detail::json& params = j.at("parameters");
    detail::stack_from_json(out.model.mwdn, params, j.at("priors"));
    for (std::size_t i = 0; i < out.model.stages.size(); ++i) {
        const std::string tag = "stage" + std::to_string(i);
        ClassifierStage& s = out.model.stages[i];
        if (s.kind == PsiKind::kMlp) {
            s.mlp_w_hidden = detail::tensor2_from_json(params.at(tag + ".w_hidden"),
                                                       s.mlp_w_hidden.rows(),
                                                       s.mlp_w_hidden.cols(), tag + ".w_hidden");
            s.mlp_b_hidden = detail::tensor1_from_json(params.at(tag + ".b_hidden"),
                                                       s.mlp_b_hidden.size(), tag + ".b_hidden");
            s.mlp_w_out = detail::tensor2_from_json(params.at(tag + ".w_out"), s.mlp_w_out.rows(),
                                                    s.mlp_w_out.cols(), tag + ".w_out");
            s.mlp_b_out = detail::tensor1_from_json(params.at(tag + ".b_out"),
                                                    s.mlp_b_out.size(), tag + ".b_out");
        } else {
            for (std::size_t k = 0; k < s.conv_kernels_high.size(); ++k) {
                s.conv_kernels_high[k] = detail::tensor1_from_json(
                    params.at(tag + ".kernel_high" + std::to_string(k)), kConvPsiWidth,
                    tag + ".kernel_high");
                s.conv_kernels_low[k] = detail::tensor1_from_json(
                    params.at(tag + ".kernel_low" + std::to_string(k)), kConvPsiWidth,
                    tag + ".kernel_low");
            }
            s.conv_bias_high = detail::tensor1_from_json(params.at(tag + ".kbias_high"),
                                                         kConvPsiKernels, tag + ".kbias_high");
            s.conv_bias_low = detail::tensor1_from_json(params.at(tag + ".kbias_low"),
                                                        kConvPsiKernels, tag + ".kbias_low");
            s.conv_w_out = detail::tensor2_from_json(params.at(tag + ".w_out"),
                                                     s.conv_w_out.rows(), s.conv_w_out.cols(),
                                                     tag + ".w_out");
            s.conv_b_out = detail::tensor1_from_json(params.at(tag + ".b_out"),
                                                     s.conv_b_out.size(), tag + ".b_out");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// mLSTM
// ---------------------------------------------------------------------------

inline void save_checkpoint(const MlstmModel& model, const TrainConfig& config,
                            const std::string& path) {
    detail::json j;
    j["format_version"] = kCheckpointVersion;
    j["model_kind"] = "mlstm";
    detail::json hyper = detail::config_to_json(config);
    hyper["input_len"] = model.window;
    hyper["model_levels"] = model.mwdn.n_levels();
    hyper["hidden"] = model.hidden;
    hyper["filter_low"] = model.mwdn.filter.low;
    hyper["filter_high"] = model.mwdn.filter.high;
    j["hyperparameters"] = hyper;
    detail::json params = detail::json::object();
    detail::json priors = detail::json::object();
    detail::stack_to_json(model.mwdn, params, priors);
    for (std::size_t k = 0; k < model.subnet_count(); ++k) {
        const std::string tag = "subnet" + std::to_string(k);
        params[tag + ".w_input"] = detail::to_json(model.subnets[k].w_input);
        params[tag + ".w_hidden"] = detail::to_json(model.subnets[k].w_hidden);
        params[tag + ".bias"] = detail::to_json(model.subnets[k].bias);
        params[tag + ".head_w"] = detail::to_json(model.head_w[k]);
    }
    params["head_b"] = detail::to_json(model.head_b);
    params["fusion.w"] = detail::to_json(model.fusion_w);
    params["fusion.b"] = model.fusion_b;
    j["parameters"] = params;
    j["priors"] = priors;
    atomic_write_file(path, j.dump(1));
}

struct MlstmCheckpoint {
    MlstmModel model;
    TrainConfig config;
};

inline MlstmCheckpoint load_mlstm_checkpoint(const std::string& path) {
    const detail::json j = detail::load_checkpoint_json(path);
    const std::string kind = j.at("model_kind").get<std::string>();
    if (kind != "mlstm")
        throw std::runtime_error("checkpoint '" + path + "' holds a '" + kind +
                                 "' model, expected 'mlstm'");
    const detail::json& hyper = j.at("hyperparameters");
    MlstmCheckpoint out;
    out.config = detail::config_from_json(hyper);
    WaveletFilterPair filters;
    filters.low = hyper.at("filter_low").get<Tensor1>();
    filters.high = hyper.at("filter_high").get<Tensor1>();
    const std::size_t window = hyper.at("input_len").get<std::size_t>();
    const std::size_t n_levels = hyper.at("model_levels").get<std::size_t>();
    const std::size_t hidden = hyper.at("hidden").get<std::size_t>();
    out.model = make_mlstm_model(window, n_levels, hidden, filters, 0.0, 0);
    const detail::json& params = j.at("parameters");
    detail::stack_from_json(out.model.mwdn, params, j.at("priors"));
    for (std::size_t k = 0; k < out.model.subnet_count(); ++k) {
        const std::string tag = "subnet" + std::to_string(k);
        out.model.subnets[k].w_input = detail::tensor2_from_json(
            params.at(tag + ".w_input"), 4 * hidden, 1, tag + ".w_input");
        out.model.subnets[k].w_hidden = detail::tensor2_from_json(
            params.at(tag + ".w_hidden"), 4 * hidden, hidden, tag + ".w_hidden");
        out.model.subnets[k].bias =
            detail::tensor1_from_json(params.at(tag + ".bias"), 4 * hidden, tag + ".bias");
        out.model.head_w[k] =
            detail::tensor1_from_json(params.at(tag + ".head_w"), hidden, tag + ".head_w");
    }
    out.model.head_b = detail::tensor1_from_json(params.at("head_b"),
                                                 out.model.subnet_count(), "head_b");
    out.model.fusion_w = detail::tensor1_from_json(params.at("fusion.w"),
                                                   out.model.subnet_count(), "fusion.w");
    out.model.fusion_b = params.at("fusion.b").get<double>();
    return out;
}

}  // namespace mwdn
