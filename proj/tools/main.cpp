// ocad - one-class anomaly detection for credit card fraud, with local
// surrogate explanations. Subcommands: split, train, eval, explain, baseline,
// ablate. Every stochastic command takes a --seed and is bit-reproducible.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocad/baselines.hpp"
#include "ocad/data.hpp"
#include "ocad/detector.hpp"
#include "ocad/errors.hpp"
#include "ocad/explain.hpp"
#include "ocad/metrics.hpp"

namespace fs = std::filesystem;
using namespace ocad;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("failed while writing " + path);
}

data::Dataset load_data_checked(const std::string& path) {
    auto dataset = data::load_csv(path);
    std::fprintf(stderr, "loaded %zu rows: %zu genuine, %zu fraud\n", dataset.schema.row_count,
                 dataset.schema.genuine_count, dataset.schema.fraud_count);
    return dataset;
}

// The split manifest pins the data it was computed from; everything
// downstream refuses to run on a different file.
data::DataSplit load_manifest_checked(const std::string& path, const data::Dataset& dataset) {
    auto split = data::load_manifest(path);
    const auto fp = data::fingerprint(dataset);
    if (split.data_fingerprint != fp) {
        throw FingerprintError("manifest " + path + " was computed from different data (" +
                               split.data_fingerprint + " != " + fp + ")");
    }
    return split;
}

void check_model_fingerprint(const std::string& model_fp, const data::DataSplit& split) {
    if (model_fp != split.data_fingerprint) {
        throw FingerprintError("model was trained on different data than this manifest (" +
                               model_fp + " != " + split.data_fingerprint + ")");
    }
}

struct EvalArtifacts {
    metrics::MetricReport report;
    metrics::ConfusionMatrix cm;
    metrics::RocCurve roc;
};

EvalArtifacts evaluate_split(const detector::DetectorModel& model, const data::Dataset& dataset,
                             const data::DataSplit& split, double threshold,
                             detector::ScoreMode mode) {
    Matrix instances(split.test_indices.size(), data::kFeatureCount);
    std::vector<int> labels;
    labels.reserve(split.test_indices.size());
    for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
        const auto& rec = dataset.records[split.test_indices[i]];
        std::copy(rec.features.begin(), rec.features.end(),
                  instances.data.begin() + i * data::kFeatureCount);
        labels.push_back(rec.label);
    }
    const auto scores = detector::score_batch(model, instances, mode);
    std::vector<int> predictions(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        predictions[i] = detector::detect(scores[i], threshold, mode).label;

    EvalArtifacts artifacts;
    artifacts.cm = metrics::confusion(predictions, labels);
    artifacts.report = metrics::metric_report(artifacts.cm);
    artifacts.roc = metrics::roc_auc(scores, labels);
    return artifacts;
}

std::string metrics_json(const EvalArtifacts& artifacts, double threshold,
                         detector::ScoreMode mode) {
    nlohmann::json j;
    j["accuracy"] = artifacts.report.accuracy;
    j["precision"] = artifacts.report.precision;
    j["recall"] = artifacts.report.recall;
    j["f1"] = artifacts.report.f1;
    j["mcc"] = artifacts.report.mcc;
    j["auc"] = artifacts.roc.auc;
    j["threshold"] = threshold;
    j["score_mode"] = detector::score_mode_name(mode);
    j["confusion"] = {{"tp", artifacts.cm.tp},
                      {"fp", artifacts.cm.fp},
                      {"tn", artifacts.cm.tn},
                      {"fn", artifacts.cm.fn}};
    return j.dump(2) + "\n";
}

std::string roc_csv(const metrics::RocCurve& roc) {
    std::string out = "fpr,tpr\n";
    char line[80];
    for (const auto& [fpr, tpr] : roc.points) {
        std::snprintf(line, sizeof(line), "%.10f,%.10f\n", fpr, tpr);
        out += line;
    }
    return out;
}

std::string train_log_csv(const std::vector<detector::TrainStepReport>& reports) {
    std::string out = "epoch,batch,loss_recon,loss_r_gan,loss_c_gan,mean_c_real,mean_c_recon\n";
    char line[200];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch,
                      r.batch, r.loss_recon, r.loss_r_gan, r.loss_c_gan, r.mean_c_real,
                      r.mean_c_recon);
        out += line;
    }
    return out;
}

int cmd_split(const std::string& data_path, std::uint64_t seed, const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = data::split_benchmark(dataset, seed);
    fs::create_directories(out_dir);
    data::save_manifest(split, dataset, (fs::path(out_dir) / "split_manifest.json").string());
    std::size_t test_frauds = 0;
    for (std::size_t i : split.test_indices) test_frauds += dataset.records[i].label;
    std::printf("split: %zu training rows (genuine), %zu test rows (%zu fraud / %zu genuine), "
                "%zu fraud rows discarded\n",
                split.train_indices.size(), split.test_indices.size(), test_frauds,
                split.test_indices.size() - test_frauds, split.discarded_indices.size());
    std::printf("manifest: %s\n", (fs::path(out_dir) / "split_manifest.json").string().c_str());
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& manifest_path,
              const detector::TrainConfig& config, const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = load_manifest_checked(manifest_path, dataset);
    const auto records = data::gather(dataset, split.train_indices);

    const auto [model, reports] = detector::train(records, config, split.data_fingerprint);

    fs::create_directories(out_dir);
    const auto model_path = (fs::path(out_dir) / "model.json").string();
    detector::save_model(model, model_path);
    write_file((fs::path(out_dir) / "train_log.csv").string(), train_log_csv(reports));
    if (!reports.empty()) {
        const auto& last = reports.back();
        std::printf("trained %zu steps; final batch: recon %.6f, c_gan %.6f, "
                    "mean C(X) %.4f, mean C(R(X)) %.4f\n",
                    reports.size(), last.loss_recon, last.loss_c_gan, last.mean_c_real,
                    last.mean_c_recon);
    }
    std::printf("model: %s\n", model_path.c_str());
    return 0;
}

int cmd_eval(const std::string& data_path, const std::string& manifest_path,
             const std::string& model_path, std::optional<double> threshold,
             std::optional<std::string> mode_name, bool sweep, const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = load_manifest_checked(manifest_path, dataset);
    const auto model = detector::load_model(model_path);
    check_model_fingerprint(model.data_fingerprint, split);

    const double t = threshold.value_or(model.config.threshold);
    const auto mode =
        mode_name ? detector::score_mode_from_name(*mode_name) : model.config.score_mode;

    fs::create_directories(out_dir);
    const auto artifacts = evaluate_split(model, dataset, split, t, mode);
    write_file((fs::path(out_dir) / "metrics.json").string(), metrics_json(artifacts, t, mode));
    write_file((fs::path(out_dir) / "metrics.csv").string(),
               metrics::report_csv_header() + "\n" + metrics::report_csv_row(artifacts.report) +
                   "\n");
    write_file((fs::path(out_dir) / "roc.csv").string(), roc_csv(artifacts.roc));

    if (sweep) {
        std::string out = "threshold," + metrics::report_csv_header() + "\n";
        for (int i = 1; i < 20; ++i) {
            const double ti = 0.05 * i;
            const auto a = evaluate_split(model, dataset, split, ti, mode);
            char prefix[32];
            std::snprintf(prefix, sizeof(prefix), "%.2f,", ti);
            out += prefix + metrics::report_csv_row(a.report) + "\n";
        }
        write_file((fs::path(out_dir) / "threshold_sweep.csv").string(), out);
    }

    std::printf("accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f  mcc %.4f\n",
                artifacts.report.accuracy, artifacts.report.precision, artifacts.report.recall,
                artifacts.report.f1, artifacts.report.mcc);
    std::printf("auc %.4f (score_mode %s, threshold %.2f)\n", artifacts.roc.auc,
                detector::score_mode_name(mode).c_str(), t);
    return 0;
}

int cmd_explain(const std::string& data_path, const std::string& manifest_path,
                const std::string& model_path, std::size_t instance_index,
                const std::string& kind_name, const explain::ExplainConfig& base_config,
                const std::string& sampler, std::size_t topk, bool svg,
                const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = load_manifest_checked(manifest_path, dataset);
    const auto model = detector::load_model(model_path);
    check_model_fingerprint(model.data_fingerprint, split);

    if (instance_index >= split.test_indices.size()) {
        throw ConfigError("--instance must be below the test-set size of " +
                          std::to_string(split.test_indices.size()));
    }
    const auto& rec = dataset.records[split.test_indices[instance_index]];
    std::vector<double> raw(rec.features.begin(), rec.features.end());

    // Reference distribution: the class-balanced test set.
    const auto test_records = data::gather(dataset, split.test_indices);
    const auto ref_stats = data::feature_stats(test_records);

    explain::ExplainConfig config = base_config;
    Matrix reference_rows;
    if (sampler == "bootstrap") {
        config.sampling = explain::SamplingScheme::Bootstrap;
        reference_rows = Matrix(test_records.size(), data::kFeatureCount);
        for (std::size_t i = 0; i < test_records.size(); ++i)
            std::copy(test_records[i].features.begin(), test_records[i].features.end(),
                      reference_rows.data.begin() + i * data::kFeatureCount);
        config.bootstrap_reference = &reference_rows;
    } else if (sampler != "gaussian") {
        throw ConfigError("unknown sampler: " + sampler);
    }
    config.score_mode = model.config.score_mode;

    const auto kind = explain::explainer_kind_from_name(kind_name);
    // The classifier explainer interprets the reconstructed feature vector.
    const std::vector<double> instance =
        kind == explain::ExplainerKind::Classifier ? detector::reconstruct(model, raw) : raw;

    const auto full = explain::explain(kind, model, instance, ref_stats, config);
    const auto truncated = explain::top_k(full, topk);

    fs::create_directories(out_dir);
    const std::string stem = "explanation_" + kind_name + "_" + std::to_string(instance_index);
    write_file((fs::path(out_dir) / (stem + ".json")).string(), explain::to_json(truncated));
    write_file((fs::path(out_dir) / (stem + ".txt")).string(),
               explain::to_text_table(truncated));
    if (svg) write_file((fs::path(out_dir) / (stem + ".svg")).string(), explain::to_svg(truncated));

    std::printf("%s explainer on test instance %zu (label %d): predicted %.6f, "
                "model output %.6f, fidelity %.4f\n",
                kind_name.c_str(), instance_index, rec.label, full.predicted_value,
                full.black_box_value, full.fidelity);
    for (const auto& e : truncated.entries)
        std::printf("  %-4s % .6f (value % .4f)\n", e.feature.c_str(), e.contribution,
                    e.raw_value);
    return 0;
}

int cmd_baseline(const std::string& data_path, const std::string& manifest_path,
                 const std::string& method, std::size_t k, std::size_t train_size,
                 std::size_t epochs, std::uint64_t seed, const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = load_manifest_checked(manifest_path, dataset);

    // Baseline training rows come from the genuine pool outside the test set;
    // the 25+25 tuning set is drawn inside the balanced test set.
    Rng train_rng(derive_seed(seed, "baseline/train"));
    const auto train_rows =
        data::sample_subset(dataset, 0, train_size, train_rng, split.test_indices);
    const auto train_records = data::gather(dataset, train_rows);

    Rng eval_rng(derive_seed(seed, "baseline/eval"));
    std::vector<std::size_t> test_fraud, test_genuine;
    for (std::size_t i : split.test_indices)
        (dataset.records[i].label == 1 ? test_fraud : test_genuine).push_back(i);
    auto pick = [&eval_rng](const std::vector<std::size_t>& pool, std::size_t count) {
        auto positions = eval_rng.sample_indices(pool.size(), count);
        std::vector<std::size_t> rows;
        for (std::size_t p : positions) rows.push_back(pool[p]);
        return rows;
    };
    auto eval_rows = pick(test_fraud, 25);
    const auto eval_genuine = pick(test_genuine, 25);
    eval_rows.insert(eval_rows.end(), eval_genuine.begin(), eval_genuine.end());
    const auto eval_records = data::gather(dataset, eval_rows);

    const auto test_records = data::gather(dataset, split.test_indices);
    std::vector<int> labels;
    for (const auto& rec : test_records) labels.push_back(rec.label);

    std::vector<double> scores;
    double threshold = 0.0;
    fs::create_directories(out_dir);
    if (method == "ocnn") {
        auto model = baselines::ocnn_fit(train_records, k, split.data_fingerprint);
        threshold = baselines::ocnn_calibrate(model, eval_records);
        for (const auto& rec : test_records)
            scores.push_back(baselines::ocnn_score(model, rec.features));
        baselines::save_ocnn(model, (fs::path(out_dir) / "baseline_ocnn_model.json").string());
    } else if (method == "ae") {
        baselines::AeBaselineConfig cfg;
        cfg.seed = seed;
        cfg.epochs = epochs;
        auto model = baselines::ae_baseline_train(train_records, cfg, split.data_fingerprint);
        threshold = baselines::ae_baseline_calibrate(model, eval_records);
        for (const auto& rec : test_records)
            scores.push_back(baselines::ae_baseline_score(model, rec.features));
        baselines::save_ae_baseline(model,
                                    (fs::path(out_dir) / "baseline_ae_model.json").string());
    } else {
        throw ConfigError("unknown baseline method: " + method);
    }

    std::vector<int> predictions(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) predictions[i] = scores[i] > threshold ? 1 : 0;
    const auto cm = metrics::confusion(predictions, labels);
    const auto report = metrics::metric_report(cm);
    const auto roc = metrics::roc_auc(scores, labels);

    nlohmann::json j;
    j["method"] = method;
    j["train_size"] = train_size;
    if (method == "ocnn") j["k"] = k;
    j["threshold"] = threshold;
    j["accuracy"] = report.accuracy;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["mcc"] = report.mcc;
    j["auc"] = roc.auc;
    write_file((fs::path(out_dir) / ("baseline_" + method + "_metrics.json")).string(),
               j.dump(2) + "\n");
    write_file((fs::path(out_dir) / ("baseline_" + method + "_metrics.csv")).string(),
               metrics::report_csv_header() + "\n" + metrics::report_csv_row(report) + "\n");

    std::printf("%s: accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f  mcc %.4f  auc %.4f "
                "(threshold %.6f)\n",
                method.c_str(), report.accuracy, report.precision, report.recall, report.f1,
                report.mcc, roc.auc, threshold);
    return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& manifest_path,
               detector::TrainConfig config, const std::string& out_dir) {
    const auto dataset = load_data_checked(data_path);
    const auto split = load_manifest_checked(manifest_path, dataset);
    const auto records = data::gather(dataset, split.train_indices);

    std::string csv = "loss,mcc,accuracy,f1,auc\n";
    std::printf("loss      mcc     accuracy  f1      auc\n");
    fs::create_directories(out_dir);
    for (auto kind : {nn::LossKind::L1, nn::LossKind::SmoothL1, nn::LossKind::L2}) {
        config.loss_kind = kind;
        const auto [model, reports] = detector::train(records, config, split.data_fingerprint);
        const auto artifacts =
            evaluate_split(model, dataset, split, config.threshold, config.score_mode);
        char line[160];
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f\n",
                      nn::loss_kind_name(kind).c_str(), artifacts.report.mcc,
                      artifacts.report.accuracy, artifacts.report.f1, artifacts.roc.auc);
        csv += line;
        std::printf("%-8s  %.4f  %.4f    %.4f  %.4f\n", nn::loss_kind_name(kind).c_str(),
                    artifacts.report.mcc, artifacts.report.accuracy, artifacts.report.f1,
                    artifacts.roc.auc);
    }
    write_file((fs::path(out_dir) / "loss_ablation.csv").string(), csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-class fraud detection with local surrogate explanations"};
    app.require_subcommand(1);

    std::string data_path, manifest_path, model_path, out_dir = "out";
    std::uint64_t seed = 0;

    auto add_data_option = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_path, "benchmark CSV path")
            ->envname("OCAD_DATA")
            ->required();
    };

    // --- split ---
    auto* split = app.add_subcommand("split", "draw the 490+490 test split");
    add_data_option(split);
    split->add_option("--seed", seed, "RNG seed")->required();
    split->add_option("--out", out_dir, "output directory");

    // --- train ---
    detector::TrainConfig train_cfg;
    std::string loss_name = "l2", mode_name = "classify_reconstructed";
    auto* train = app.add_subcommand("train", "adversarial training on the genuine split");
    add_data_option(train);
    train->add_option("--manifest", manifest_path, "split manifest JSON")->required();
    train->add_option("--seed", seed, "RNG seed")->required();
    train->add_option("--epochs", train_cfg.epochs, "training epochs");
    train->add_option("--batch", train_cfg.batch_size, "batch size");
    train->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train->add_option("--loss", loss_name, "reconstruction loss: l1|smoothl1|l2");
    train->add_option("--threshold", train_cfg.threshold, "decision threshold");
    train->add_option("--score-mode", mode_name,
                      "classify_reconstructed|classify_raw|distance_from_half");
    train->add_option("--encoder-dims", train_cfg.encoder_dims, "encoder hidden widths");
    train->add_option("--classifier-dims", train_cfg.classifier_dims, "classifier hidden widths");
    train->add_option("--out", out_dir, "output directory");

    // --- eval ---
    std::optional<double> eval_threshold;
    std::optional<std::string> eval_mode;
    bool sweep = false;
    auto* eval = app.add_subcommand("eval", "metrics and ROC on the test split");
    add_data_option(eval);
    eval->add_option("--manifest", manifest_path, "split manifest JSON")->required();
    eval->add_option("--model", model_path, "model JSON")->required();
    eval->add_option("--threshold", eval_threshold, "decision threshold override");
    eval->add_option("--score-mode", eval_mode, "score mode override");
    eval->add_flag("--threshold-sweep", sweep, "emit metrics across thresholds");
    eval->add_option("--out", out_dir, "output directory");

    // --- explain ---
    explain::ExplainConfig explain_cfg;
    std::size_t instance_index = 0, topk = 6;
    std::string kind_name = "general", sampler = "gaussian";
    bool svg = false;
    auto* expl = app.add_subcommand("explain", "local surrogate explanation of a test instance");
    add_data_option(expl);
    expl->add_option("--manifest", manifest_path, "split manifest JSON")->required();
    expl->add_option("--model", model_path, "model JSON")->required();
    expl->add_option("--instance", instance_index, "index into the test set")->required();
    expl->add_option("--kind", kind_name, "ae|c|general")->required();
    expl->add_option("--samples", explain_cfg.n_samples, "perturbation count");
    expl->add_option("--topk", topk, "features to report");
    expl->add_option("--lambda", explain_cfg.lambda, "ridge strength");
    expl->add_option("--kernel-width", explain_cfg.kernel_width, "kernel width (0 = default)");
    expl->add_option("--sampler", sampler, "gaussian|bootstrap");
    expl->add_option("--seed", explain_cfg.seed, "RNG seed")->required();
    expl->add_flag("--svg", svg, "also emit an SVG bar chart");
    expl->add_option("--out", out_dir, "output directory");

    // --- baseline ---
    std::string method = "ocnn";
    std::size_t k = 5, train_size = 700, baseline_epochs = 200;
    auto* baseline = app.add_subcommand("baseline", "OCNN / plain autoencoder comparators");
    add_data_option(baseline);
    baseline->add_option("--manifest", manifest_path, "split manifest JSON")->required();
    baseline->add_option("--method", method, "ocnn|ae")->required();
    baseline->add_option("--k", k, "neighbor count for ocnn");
    baseline->add_option("--train-size", train_size, "genuine training rows");
    baseline->add_option("--epochs", baseline_epochs, "autoencoder baseline epochs");
    baseline->add_option("--seed", seed, "RNG seed")->required();
    baseline->add_option("--out", out_dir, "output directory");

    // --- ablate ---
    detector::TrainConfig ablate_cfg;
    auto* ablate = app.add_subcommand("ablate", "train and score all reconstruction losses");
    add_data_option(ablate);
    ablate->add_option("--manifest", manifest_path, "split manifest JSON")->required();
    ablate->add_option("--seed", seed, "RNG seed")->required();
    ablate->add_option("--epochs", ablate_cfg.epochs, "training epochs");
    ablate->add_option("--batch", ablate_cfg.batch_size, "batch size");
    ablate->add_option("--lr", ablate_cfg.learning_rate, "Adam learning rate");
    ablate->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (split->parsed()) return cmd_split(data_path, seed, out_dir);
        if (train->parsed()) {
            train_cfg.loss_kind = nn::loss_kind_from_name(loss_name);
            train_cfg.score_mode = detector::score_mode_from_name(mode_name);
            train_cfg.seed = seed;
            train_cfg.validate();
            return cmd_train(data_path, manifest_path, train_cfg, out_dir);
        }
        if (eval->parsed())
            return cmd_eval(data_path, manifest_path, model_path, eval_threshold, eval_mode,
                            sweep, out_dir);
        if (expl->parsed())
            return cmd_explain(data_path, manifest_path, model_path, instance_index, kind_name,
                               explain_cfg, sampler, topk, svg, out_dir);
        if (baseline->parsed())
            return cmd_baseline(data_path, manifest_path, method, k, train_size, baseline_epochs,
                                seed, out_dir);
        if (ablate->parsed()) {
            ablate_cfg.seed = seed;
            return cmd_ablate(data_path, manifest_path, ablate_cfg, out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
