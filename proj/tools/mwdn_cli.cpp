// Batch front end: decompose | train-rcf | train-mlstm | evaluate | importance.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mwdn/mwdn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
    mwdn::TrainConfig cfg;
    bool znorm_rcf = true;
    bool znorm_series = false;
    int repeats = 1;
    std::string mode = "oracle";
    std::string target = "input";
    std::string input_path, train_path, test_path, series_path;
    std::string model_path, data_path;
    std::string out_dir, out_model, out_metrics;
    std::string config_path;
};

void apply_config_file(const std::string& path, Options& o) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw CLI::ValidationError("--config", std::string("parse error: ") + e.what());
    }
    auto num = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    num("seed", o.cfg.seed);
    num("levels", o.cfg.n_levels);
    num("alpha", o.cfg.alpha);
    num("beta", o.cfg.beta);
    num("lr", o.cfg.learning_rate);
    num("epochs", o.cfg.epochs);
    num("batch", o.cfg.batch_size);
    num("hidden", o.cfg.hidden_width);
    num("eps", o.cfg.eps_scale);
    num("early-stop", o.cfg.early_stop_patience);
    num("window", o.cfg.window);
    num("horizon", o.cfg.horizon);
    num("stride", o.cfg.stride);
    num("lstm-hidden", o.cfg.lstm_hidden);
    num("pretrain-epochs", o.cfg.pretrain_epochs);
    if (j.contains("repeats")) o.repeats = j.at("repeats").get<int>();
    if (j.contains("psi"))
        o.cfg.psi_kind = j.at("psi").get<std::string>() == "conv" ? mwdn::PsiKind::kConv
                                                                  : mwdn::PsiKind::kMlp;
    if (j.contains("freeze-mwdn")) o.cfg.freeze_mwdn = j.at("freeze-mwdn").get<bool>();
    if (j.contains("znorm")) {
        o.znorm_rcf = j.at("znorm").get<bool>();
        o.znorm_series = o.znorm_rcf;
    }
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw CLI::ValidationError("input", "no such file: '" + path + "'");
}

std::string csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

int run_decompose(const Options& o) {
    require_file(o.input_path);
    const mwdn::Tensor1 series = mwdn::load_series_csv(o.input_path);
    const std::size_t levels = o.cfg.n_levels ? o.cfg.n_levels : mwdn::auto_levels(series.size());
    const mwdn::WaveletFilterPair filters = mwdn::db4_filters();
    fs::create_directories(o.out_dir);
    const fs::path out(o.out_dir);
    std::size_t files = 0;
    auto write_set = [&](const mwdn::SubSeriesSet& sub, const std::string& prefix) {
        for (std::size_t i = 0; i < sub.high.size(); ++i) {
            mwdn::write_series_csv((out / (prefix + "xh" + std::to_string(i + 1) + ".csv")).string(),
                                   sub.high[i]);
            ++files;
        }
        mwdn::write_series_csv((out / (prefix + "xl" + std::to_string(levels) + ".csv")).string(),
                               sub.low_final);
        ++files;
    };
    if (o.mode == "oracle") {
        write_set(mwdn::mdwd_decompose(series, levels, filters), "");
    } else {
        const mwdn::MwdnStack stack =
            mwdn::make_mwdn_stack(series.size(), levels, filters, o.cfg.eps_scale, o.cfg.seed);
        write_set(mwdn::mwdn_forward(series, stack), "");
        // the linear part of the stack, comparable to the oracle output
        write_set(mwdn::mwdn_linear_forward(series, stack), "preact_");
    }
    std::cout << "decompose: wrote " << files << " files to " << o.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train-rcf
// ---------------------------------------------------------------------------

mwdn::LabeledDataset prepare_classification(const std::string& train_path,
                                            const std::string& test_path, bool znorm,
                                            std::size_t n_levels) {
    auto [train, test] = mwdn::load_ucr_pair(train_path, test_path);
    mwdn::LabeledDataset d;
    int max_label = 0;
    auto prep = [&](std::vector<mwdn::TimeSeries>& src, std::vector<mwdn::TimeSeries>& dst) {
        for (mwdn::TimeSeries& ts : src) {
            mwdn::TimeSeries prepped = znorm ? mwdn::znormalize(ts) : ts;
            prepped = mwdn::pad_to_pow2_blocks(prepped, n_levels);
            max_label = std::max(max_label, *prepped.label);
            dst.push_back(std::move(prepped));
        }
    };
    prep(train, d.train);
    prep(test, d.test);
    d.class_count = static_cast<std::size_t>(max_label) + 1;
    d.series_length = d.train.empty() ? 0 : d.train.front().values.size();
    return d;
}

int run_train_rcf(Options& o) {
    require_file(o.train_path);
    require_file(o.test_path);
    const std::size_t raw_len = mwdn::load_ucr(o.train_path).front().values.size();
    const std::size_t levels = o.cfg.n_levels ? o.cfg.n_levels : mwdn::auto_levels(raw_len);
    o.cfg.n_levels = levels;
    const mwdn::LabeledDataset d =
        prepare_classification(o.train_path, o.test_path, o.znorm_rcf, levels);
    if (o.repeats < 1) throw CLI::ValidationError("--repeats", "must be >= 1");

    std::vector<double> errors;
    mwdn::RcfTrainResult last;
    for (int r = 0; r < o.repeats; ++r) {
        mwdn::TrainConfig cfg = o.cfg;
        cfg.seed = o.cfg.seed + static_cast<std::uint64_t>(r);
        last = mwdn::train_rcf(d, cfg);
        const double err = mwdn::rcf_error_rate(last.model, d.test);
        errors.push_back(err);
        std::cout << "run " << r << " seed " << cfg.seed << " test_err " << err << "\n";
    }
    double mean_err = 0.0;
    for (double e : errors) mean_err += e;
    mean_err /= static_cast<double>(errors.size());

    if (!o.out_metrics.empty()) {
        std::string body = "epoch,train_loss,train_err,test_err\n";
        for (const mwdn::RcfEpochStats& e : last.history)
            body += std::to_string(e.epoch) + "," + csv_double(e.train_loss) + "," +
                    csv_double(e.train_err) + "," + csv_double(e.test_err) + "\n";
        mwdn::atomic_write_file(o.out_metrics, body);
    }
    if (!o.out_model.empty()) {
        mwdn::TrainConfig cfg = o.cfg;
        cfg.seed = o.cfg.seed + static_cast<std::uint64_t>(o.repeats - 1);
        mwdn::save_checkpoint(last.model, cfg, o.znorm_rcf, o.out_model);
    }
    json summary{{"command", "train-rcf"},
                 {"repeats", o.repeats},
                 {"seed", o.cfg.seed},
                 {"levels", levels},
                 {"errors", errors},
                 {"mean_error", mean_err}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train-mlstm
// ---------------------------------------------------------------------------

struct ForecastSplit {
    std::vector<mwdn::ForecastSample> train, test;
};

// Chronological split: test windows start only after the last train window
// has ended, so no time index is shared across the boundary.
ForecastSplit chronological_split(const std::vector<mwdn::ForecastSample>& samples,
                                  std::size_t window, std::size_t stride, double train_frac) {
    ForecastSplit out;
    const std::size_t train_count =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     train_frac * static_cast<double>(samples.size())));
    const std::size_t last_train_start = (train_count - 1) * stride;
    const std::size_t first_test_start = last_train_start + window;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const std::size_t start = k * stride;
        if (k < train_count)
            out.train.push_back(samples[k]);
        else if (start >= first_test_start)
            out.test.push_back(samples[k]);
    }
    return out;
}

struct ForecastMetrics {
    double mape = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
};

ForecastMetrics forecast_metrics(const mwdn::MlstmModel& model,
                                 const std::vector<mwdn::ForecastSample>& samples) {
    ForecastMetrics m;
    if (samples.empty()) return m;
    mwdn::Tensor1 y_hat, y;
    for (const mwdn::ForecastSample& s : samples) {
        y_hat.push_back(mwdn::mlstm_predict(model, s.window));
        y.push_back(s.target);
    }
    m.rmse = mwdn::rmse(y_hat, y);
    bool has_zero = false;
    for (double v : y) has_zero |= v == 0.0;
    if (has_zero)
        std::cerr << "warning: zero actual value; MAPE undefined for this data\n";
    else
        m.mape = mwdn::mape(y_hat, y);
    return m;
}

int run_train_mlstm(Options& o) {
    require_file(o.series_path);
    mwdn::Tensor1 series = mwdn::load_series_csv(o.series_path);
    if (o.znorm_series) {
        mwdn::TimeSeries ts;
        ts.values = series;
        series = mwdn::znormalize(ts).values;
    }
    const std::size_t levels =
        o.cfg.n_levels ? o.cfg.n_levels : mwdn::auto_levels(o.cfg.window);
    o.cfg.n_levels = levels;
    const mwdn::ForecastDataset windows =
        mwdn::sliding_windows(series, o.cfg.window, o.cfg.horizon, o.cfg.stride);
    const ForecastSplit split =
        chronological_split(windows.samples, o.cfg.window, o.cfg.stride, 0.8);
    if (split.test.empty())
        throw std::runtime_error("series too short for a chronological 80/20 split");

    mwdn::MlstmModel model = mwdn::make_mlstm_model(o.cfg.window, levels, o.cfg.lstm_hidden,
                                                    mwdn::db4_filters(), o.cfg.eps_scale,
                                                    o.cfg.seed);
    std::vector<mwdn::MlstmEpochStats> history;
    mwdn::pretrain(model, split.train, o.cfg, split.test, &history);
    mwdn::finetune(model, split.train, o.cfg, split.test, &history);

    if (!o.out_metrics.empty()) {
        std::string body = "epoch,phase,loss,val_mape,val_rmse\n";
        for (const mwdn::MlstmEpochStats& e : history)
            body += std::to_string(e.epoch) + "," +
                    (e.phase == mwdn::MlstmPhase::kPretrain ? "pretrain" : "finetune") + "," +
                    csv_double(e.loss) + "," + csv_double(e.val_mape) + "," +
                    csv_double(e.val_rmse) + "\n";
        mwdn::atomic_write_file(o.out_metrics, body);
    }
    if (!o.out_model.empty()) mwdn::save_checkpoint(model, o.cfg, o.out_model);

    const ForecastMetrics m = forecast_metrics(model, split.test);
    json summary{{"command", "train-mlstm"},
                 {"seed", o.cfg.seed},
                 {"levels", levels},
                 {"window", o.cfg.window},
                 {"train_windows", split.train.size()},
                 {"test_windows", split.test.size()},
                 {"test_mape", m.mape},
                 {"test_rmse", m.rmse}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate / importance
// ---------------------------------------------------------------------------

std::vector<mwdn::TimeSeries> prepare_eval_series(const std::string& data_path,
                                                  const mwdn::RcfCheckpoint& ck) {
    std::vector<mwdn::TimeSeries> data = mwdn::load_ucr(data_path);
    const std::size_t levels = ck.model.mwdn.n_levels();
    for (mwdn::TimeSeries& ts : data) {
        if (ck.znormalize) ts = mwdn::znormalize(ts);
        ts = mwdn::pad_to_pow2_blocks(ts, levels);
        if (ts.values.size() != ck.model.mwdn.input_len())
            throw std::runtime_error(
                "model/data mismatch: padded series length " + std::to_string(ts.values.size()) +
                " vs model input length " + std::to_string(ck.model.mwdn.input_len()));
        if (*ts.label >= static_cast<int>(ck.model.class_count))
            throw std::runtime_error("model/data mismatch: label " + std::to_string(*ts.label) +
                                     " outside the model's " +
                                     std::to_string(ck.model.class_count) + " classes");
    }
    return data;
}

int run_evaluate(const Options& o) {
    require_file(o.model_path);
    require_file(o.data_path);
    const std::string kind = mwdn::checkpoint_kind(o.model_path);
    if (kind == "rcf") {
        const mwdn::RcfCheckpoint ck = mwdn::load_rcf_checkpoint(o.model_path);
        const std::vector<mwdn::TimeSeries> data = prepare_eval_series(o.data_path, ck);
        const double err = mwdn::rcf_error_rate(ck.model, data);
        std::cout << "error_rate " << err << " over " << data.size() << " series\n";
        json report{{"model_kind", "rcf"}, {"samples", data.size()}, {"error_rate", err}};
        std::cout << report.dump() << "\n";
        return kExitOk;
    }
    const mwdn::MlstmCheckpoint ck = mwdn::load_mlstm_checkpoint(o.model_path);
    const mwdn::Tensor1 series = mwdn::load_series_csv(o.data_path);
    const mwdn::ForecastDataset windows =
        mwdn::sliding_windows(series, ck.model.window, ck.config.horizon, ck.config.stride);
    const ForecastMetrics m = forecast_metrics(ck.model, windows.samples);
    std::cout << "mape_percent " << m.mape << " rmse " << m.rmse << " over "
              << windows.samples.size() << " windows\n";
    json report{{"model_kind", "mlstm"},
                {"windows", windows.samples.size()},
                {"mape_percent", m.mape},
                {"rmse", m.rmse}};
    std::cout << report.dump() << "\n";
    return kExitOk;
}

int run_importance(const Options& o) {
    require_file(o.model_path);
    require_file(o.data_path);
    fs::create_directories(o.out_dir);
    const fs::path out(o.out_dir);
    const std::string kind = mwdn::checkpoint_kind(o.model_path);
    mwdn::ImportanceSet set;
    std::size_t input_len = 0;
    if (kind == "rcf") {
        const mwdn::RcfCheckpoint ck = mwdn::load_rcf_checkpoint(o.model_path);
        set = mwdn::full_importance(ck.model, prepare_eval_series(o.data_path, ck));
        input_len = ck.model.mwdn.input_len();
    } else {
        const mwdn::MlstmCheckpoint ck = mwdn::load_mlstm_checkpoint(o.model_path);
        const mwdn::Tensor1 series = mwdn::load_series_csv(o.data_path);
        const mwdn::ForecastDataset windows =
            mwdn::sliding_windows(series, ck.model.window, ck.config.horizon, ck.config.stride);
        std::vector<mwdn::Tensor1> inputs;
        for (const mwdn::ForecastSample& s : windows.samples) inputs.push_back(s.window);
        set = mwdn::full_importance(ck.model, inputs);
        input_len = ck.model.window;
    }
    std::size_t files = 0;
    mwdn::write_spectrum_csv((out / "importance_input.csv").string(), set.input);
    ++files;
    if (o.target == "layers") {
        for (const mwdn::ImportanceSpectrum& s : set.layers) {
            const std::string name = "importance_level" + std::to_string(s.level) +
                                     (s.branch == mwdn::Branch::kHigh ? "_high" : "_low") +
                                     ".csv";
            mwdn::write_spectrum_csv((out / name).string(),
                                     mwdn::resize_spectrum(s, input_len));
            ++files;
        }
    }
    std::cout << "importance: wrote " << files << " files to " << o.out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"multilevel wavelet decomposition network toolkit"};
    app.require_subcommand(1);

    // the optional JSON config seeds the defaults; explicit flags win
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(argv[i + 1], o);
            } catch (const CLI::Error& e) {
                std::cerr << e.what() << "\n";
                return kExitUsage;
            }
        }

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", o.cfg.seed, "random seed");
        cmd->add_option("--levels", o.cfg.n_levels, "decomposition depth (0 = auto)");
        cmd->add_option("--alpha", o.cfg.alpha, "low-branch prior penalty");
        cmd->add_option("--beta", o.cfg.beta, "high-branch prior penalty");
        cmd->add_option("--lr", o.cfg.learning_rate, "learning rate");
        cmd->add_option("--epochs", o.cfg.epochs, "training epochs");
        cmd->add_option("--batch", o.cfg.batch_size, "mini-batch size");
        cmd->add_option("--eps", o.cfg.eps_scale, "off-band init scale");
        cmd->add_option("--early-stop", o.cfg.early_stop_patience, "stagnant epochs before stop");
        cmd->add_option("--config", o.config_path, "JSON config file (flags take precedence)");
    };

    CLI::App* dec = app.add_subcommand("decompose", "decompose a series into sub-series CSVs");
    dec->add_option("input", o.input_path, "single-column series CSV")->required();
    dec->add_option("--mode", o.mode, "oracle | mwdn-init")
        ->check(CLI::IsMember({"oracle", "mwdn-init"}));
    dec->add_option("--out", o.out_dir, "output directory")->required();
    add_common(dec);

    CLI::App* trc = app.add_subcommand("train-rcf", "train a residual classification flow");
    trc->add_option("train", o.train_path, "training split, one series per line")->required();
    trc->add_option("test", o.test_path, "test split")->required();
    trc->add_option("--out-model", o.out_model, "checkpoint path");
    trc->add_option("--out-metrics", o.out_metrics, "per-epoch metrics CSV path");
    trc->add_option("--repeats", o.repeats, "seeded repetitions to average");
    trc->add_option("--hidden", o.cfg.hidden_width, "psi hidden width");
    std::string psi = "mlp";
    trc->add_option("--psi", psi, "psi block kind: mlp | conv")
        ->check(CLI::IsMember({"mlp", "conv"}));
    trc->add_flag("--freeze-mwdn", o.cfg.freeze_mwdn, "keep decomposition weights fixed");
    trc->add_flag("--znorm,!--no-znorm", o.znorm_rcf, "z-normalize each series (default on)");
    add_common(trc);

    CLI::App* trm = app.add_subcommand("train-mlstm", "pre-train and fine-tune a forecaster");
    trm->add_option("series", o.series_path, "single-column series CSV")->required();
    trm->add_option("--out-model", o.out_model, "checkpoint path");
    trm->add_option("--out-metrics", o.out_metrics, "per-epoch metrics CSV path");
    trm->add_option("--window", o.cfg.window, "slide window length T");
    trm->add_option("--horizon", o.cfg.horizon, "forecast horizon");
    trm->add_option("--stride", o.cfg.stride, "window stride");
    trm->add_option("--lstm-hidden", o.cfg.lstm_hidden, "hidden units per sub-network");
    trm->add_option("--pretrain-epochs", o.cfg.pretrain_epochs, "pre-training epochs");
    trm->add_flag("--freeze-mwdn", o.cfg.freeze_mwdn, "keep decomposition weights fixed");
    trm->add_flag("--znorm", o.znorm_series, "z-normalize the series (default off)");
    add_common(trm);

    CLI::App* ev = app.add_subcommand("evaluate", "report metrics for a checkpoint");
    ev->add_option("model", o.model_path, "checkpoint JSON")->required();
    ev->add_option("data", o.data_path, "dataset file")->required();

    CLI::App* imp = app.add_subcommand("importance", "emit importance spectra CSVs");
    imp->add_option("model", o.model_path, "checkpoint JSON")->required();
    imp->add_option("data", o.data_path, "dataset file")->required();
    imp->add_option("--target", o.target, "input | layers")
        ->check(CLI::IsMember({"input", "layers"}));
    imp->add_option("--out", o.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (dec->parsed()) return run_decompose(o);
        if (trc->parsed()) {
            o.cfg.psi_kind = psi == "conv" ? mwdn::PsiKind::kConv : mwdn::PsiKind::kMlp;
            return run_train_rcf(o);
        }
        if (trm->parsed()) {
            // mlstm epochs flag drives fine-tuning; pre-training has its own
            o.cfg.finetune_epochs = trm->get_option("--epochs")->count()
                                        ? o.cfg.epochs
                                        : o.cfg.finetune_epochs;
            return run_train_mlstm(o);
        }
        if (ev->parsed()) return run_evaluate(o);
        if (imp->parsed()) return run_importance(o);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
