#include "ocad/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ocad/detector.hpp"
#include "ocad/errors.hpp"
#include "ocad/metrics.hpp"
#include "ocad/serialize.hpp"

namespace ocad::baselines {

OcnnModel ocnn_fit(std::span<const data::TransactionRecord> genuine, std::size_t k,
                   const std::string& data_fingerprint) {
    if (genuine.empty()) throw ConfigError("ocnn_fit: no training points");
    if (k < 1 || k > genuine.size())
        throw ConfigError("ocnn_fit: k must be in [1, " + std::to_string(genuine.size()) + "]");
    OcnnModel model;
    model.k = k;
    model.data_fingerprint = data_fingerprint;
    model.train_points = Matrix(genuine.size(), data::kFeatureCount);
    for (std::size_t i = 0; i < genuine.size(); ++i) {
        if (genuine[i].label != 0) throw ConfigError("ocnn_fit: training points must be genuine");
        std::copy(genuine[i].features.begin(), genuine[i].features.end(),
                  model.train_points.data.begin() + i * data::kFeatureCount);
    }
    return model;
}

double ocnn_score(const OcnnModel& model, std::span<const double> x) {
    if (model.train_points.rows == 0) throw ConfigError("ocnn_score: model is not fitted");
    if (x.size() != model.train_points.cols)
        throw DimensionError("ocnn_score: query dimension mismatch");

    const std::size_t n = model.train_points.rows;
    // (squared distance, train index); selection and final ordering are both
    // lexicographic so the k-th tie breaks by index.
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = model.train_points.data.data() + i * model.train_points.cols;
        double sum = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = row[j] - x[j];
            sum += d * d;
        }
        dist[i] = {sum, i};
    }
    const std::size_t k = model.k;
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += std::sqrt(dist[i].first);
    return total / static_cast<double>(k);
}

double calibrate_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DimensionError("calibrate_threshold: score/label lengths differ");
    bool has_pos = false, has_neg = false;
    for (int y : labels) (y == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw ConfigError("calibrate_threshold: evaluation set needs both classes");

    std::vector<double> candidates(scores);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    // A threshold below every score predicts all-fraud; include it when it
    // stays positive so the sweep covers the degenerate end.
    if (candidates.front() > 0.0) candidates.insert(candidates.begin(), candidates.front() / 2.0);

    double best_threshold = 0.0;
    double best_mcc = -2.0;
    for (double t : candidates) {
        if (!(t > 0.0)) continue;
        std::vector<int> preds(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] > t ? 1 : 0;
        const double mcc = metrics::metric_report(metrics::confusion(preds, labels)).mcc;
        if (mcc > best_mcc) {  // strict: first (smallest) threshold wins ties
            best_mcc = mcc;
            best_threshold = t;
        }
    }
    if (!(best_threshold > 0.0))
        throw ConfigError("calibrate_threshold: no positive threshold candidate");
    return best_threshold;
}

double ocnn_calibrate(OcnnModel& model, std::span<const data::TransactionRecord> eval_set) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(eval_set.size());
    for (const auto& rec : eval_set) {
        scores.push_back(ocnn_score(model, rec.features));
        labels.push_back(rec.label);
    }
    model.threshold = calibrate_threshold(scores, labels);
    return model.threshold;
}

AeBaseline ae_baseline_train(std::span<const data::TransactionRecord> genuine,
                             const AeBaselineConfig& config,
                             const std::string& data_fingerprint) {
    if (genuine.empty()) throw ConfigError("ae_baseline_train: dataset is empty");
    for (const auto& rec : genuine) {
        if (rec.label != 0)
            throw ConfigError("ae_baseline_train: training data must be genuine only");
    }
    if (config.batch_size < 2) throw ConfigError("ae_baseline_train: batch_size must be >= 2");

    detector::TrainConfig shape;
    shape.encoder_dims = config.encoder_dims;
    AeBaseline model;
    model.config = config;
    model.data_fingerprint = data_fingerprint;
    model.autoencoder =
        nn::init_network(detector::reconstructor_specs(shape), derive_seed(config.seed, "init/ae"));

    nn::AdamConfig adam_cfg;
    adam_cfg.learning_rate = config.learning_rate;
    adam_cfg.beta1 = 0.9;  // plain reconstruction training, no adversary
    auto state = nn::AdamState::for_network(model.autoencoder, adam_cfg);

    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    std::vector<std::size_t> order(genuine.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < genuine.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, genuine.size());
            if (end - begin < 2) break;
            Matrix batch(end - begin, data::kFeatureCount);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& f = genuine[order[i]].features;
                std::copy(f.begin(), f.end(),
                          batch.data.begin() + (i - begin) * data::kFeatureCount);
            }
            nn::ForwardCache cache;
            const Matrix recon = model.autoencoder.forward(batch, nn::Mode::Train, &cache);
            const auto loss = nn::reconstruction_loss(config.loss_kind, recon, batch);
            const auto grads = model.autoencoder.backward(cache, loss.grad);
            nn::adam_step(state, model.autoencoder, grads);
        }
    }
    return model;
}

double ae_baseline_score(const AeBaseline& model, std::span<const double> x) {
    if (x.size() != data::kFeatureCount)
        throw DimensionError("ae_baseline_score: instance must have 28 features");
    const Matrix recon = model.autoencoder.forward_eval(Matrix::from_row(x));
    double sum = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = recon.data[j] - x[j];
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

double ae_baseline_calibrate(AeBaseline& model,
                             std::span<const data::TransactionRecord> eval_set) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(eval_set.size());
    for (const auto& rec : eval_set) {
        scores.push_back(ae_baseline_score(model, rec.features));
        labels.push_back(rec.label);
    }
    model.threshold = calibrate_threshold(scores, labels);
    return model.threshold;
}

// ---------------------------------------------------------------------------
// Serialization: same envelope as the detector model files.
// ---------------------------------------------------------------------------

namespace {

nlohmann::json parse_envelope(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(path + ": not valid JSON (" + e.what() + ")");
    }
    if (!j.contains("version")) throw CorruptFileError(path + ": missing version");
    if (j.at("version").get<int>() != detector::kModelFormatVersion)
        throw VersionError(path + ": unsupported model format version");
    if (j.value("kind", "") != expected_kind)
        throw CorruptFileError(path + ": expected a '" + expected_kind + "' model file");
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed while writing " + path);
}

}  // namespace

void save_ocnn(const OcnnModel& model, const std::string& path) {
    nlohmann::json j;
    j["version"] = detector::kModelFormatVersion;
    j["kind"] = "ocnn";
    j["k"] = model.k;
    j["threshold"] = model.threshold;
    j["data_fingerprint"] = model.data_fingerprint;
    j["train_points"] = model.train_points.data;
    j["train_rows"] = model.train_points.rows;
    write_text(path, j.dump() + "\n");
}

OcnnModel load_ocnn(const std::string& path) {
    const auto j = parse_envelope(path, "ocnn");
    try {
        OcnnModel model;
        model.k = j.at("k").get<std::size_t>();
        model.threshold = j.at("threshold").get<double>();
        model.data_fingerprint = j.at("data_fingerprint").get<std::string>();
        const auto rows = j.at("train_rows").get<std::size_t>();
        model.train_points = Matrix(rows, data::kFeatureCount);
        const auto values = j.at("train_points").get<std::vector<double>>();
        if (values.size() != rows * data::kFeatureCount)
            throw CorruptFileError(path + ": train_points has wrong size");
        model.train_points.data = values;
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(path + ": " + e.what());
    }
}

void save_ae_baseline(const AeBaseline& model, const std::string& path) {
    nlohmann::json j;
    j["version"] = detector::kModelFormatVersion;
    j["kind"] = "ae_baseline";
    j["seed"] = model.config.seed;
    j["threshold"] = model.threshold;
    j["data_fingerprint"] = model.data_fingerprint;
    j["train_config"]["epochs"] = model.config.epochs;
    j["train_config"]["batch_size"] = model.config.batch_size;
    j["train_config"]["learning_rate"] = model.config.learning_rate;
    j["train_config"]["loss"] = nn::loss_kind_name(model.config.loss_kind);
    j["train_config"]["encoder_dims"] = model.config.encoder_dims;
    j["arch"] = serialize::network_arch(model.autoencoder);
    j["weights"] = serialize::network_weights(model.autoencoder);
    write_text(path, j.dump(2) + "\n");
}

AeBaseline load_ae_baseline(const std::string& path) {
    const auto j = parse_envelope(path, "ae_baseline");
    try {
        AeBaseline model;
        model.threshold = j.at("threshold").get<double>();
        model.data_fingerprint = j.at("data_fingerprint").get<std::string>();
        model.config.epochs = j.at("train_config").at("epochs").get<std::size_t>();
        model.config.batch_size = j.at("train_config").at("batch_size").get<std::size_t>();
        model.config.learning_rate = j.at("train_config").at("learning_rate").get<double>();
        model.config.loss_kind =
            nn::loss_kind_from_name(j.at("train_config").at("loss").get<std::string>());
        model.config.encoder_dims =
            j.at("train_config").at("encoder_dims").get<std::vector<std::size_t>>();
        model.config.seed = j.at("seed").get<std::uint64_t>();
        model.autoencoder = serialize::network_from_json(j.at("arch"), j.at("weights"));
        if (model.autoencoder.input_dim() != data::kFeatureCount ||
            model.autoencoder.output_dim() != data::kFeatureCount)
            throw CorruptFileError(path + ": autoencoder must map 28 -> 28");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(path + ": " + e.what());
    }
}

}  // namespace ocad::baselines
