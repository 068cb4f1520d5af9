#include "ocad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ocad/errors.hpp"
#include "ocad/serialize.hpp"

namespace ocad::detector {

using nn::LayerKind;
using nn::LayerSpec;

std::string score_mode_name(ScoreMode mode) {
    switch (mode) {
        case ScoreMode::ClassifyReconstructed: return "classify_reconstructed";
        case ScoreMode::ClassifyRaw: return "classify_raw";
        case ScoreMode::DistanceFromHalf: return "distance_from_half";
    }
    return "unknown";
}

ScoreMode score_mode_from_name(const std::string& name) {
    if (name == "classify_reconstructed") return ScoreMode::ClassifyReconstructed;
    if (name == "classify_raw") return ScoreMode::ClassifyRaw;
    if (name == "distance_from_half") return ScoreMode::DistanceFromHalf;
    throw ConfigError("unknown score mode: " + name);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (encoder_dims.empty() || classifier_dims.empty())
        throw ConfigError("hidden layer widths must be nonempty");
}

std::vector<LayerSpec> reconstructor_specs(const TrainConfig& config) {
    std::vector<LayerSpec> specs;
    std::size_t dim = data::kFeatureCount;
    // Encoder: Linear + BN + ReLU down to the bottleneck.
    for (std::size_t width : config.encoder_dims) {
        specs.push_back(LayerSpec::linear(dim, width));
        specs.push_back(LayerSpec::batch_norm(width));
        specs.push_back(LayerSpec::relu());
        dim = width;
    }
    // Decoder mirrors the encoder; the output layer stays linear.
    for (std::size_t i = config.encoder_dims.size(); i-- > 1;) {
        const std::size_t width = config.encoder_dims[i - 1];
        specs.push_back(LayerSpec::linear(dim, width));
        specs.push_back(LayerSpec::batch_norm(width));
        specs.push_back(LayerSpec::relu());
        dim = width;
    }
    specs.push_back(LayerSpec::linear(dim, data::kFeatureCount));
    return specs;
}

std::vector<LayerSpec> classifier_specs(const TrainConfig& config) {
    std::vector<LayerSpec> specs;
    std::size_t dim = data::kFeatureCount;
    for (std::size_t width : config.classifier_dims) {
        specs.push_back(LayerSpec::linear(dim, width));
        specs.push_back(LayerSpec::batch_norm(width));
        specs.push_back(LayerSpec::relu());
        dim = width;
    }
    specs.push_back(LayerSpec::linear(dim, 1));
    specs.push_back(LayerSpec::sigmoid());
    return specs;
}

std::size_t batches_per_epoch(std::size_t rows, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    std::size_t count = (rows + batch_size - 1) / batch_size;
    if (count > 0 && rows % batch_size == 1) --count;  // lone trailing row is dropped
    return count;
}

namespace {

Matrix gather_batch(const std::vector<data::TransactionRecord>& records,
                    std::span<const std::size_t> order, std::size_t begin, std::size_t end) {
    Matrix batch(end - begin, data::kFeatureCount);
    for (std::size_t i = begin; i < end; ++i) {
        const auto& f = records[order[i]].features;
        std::copy(f.begin(), f.end(), batch.data.begin() + (i - begin) * data::kFeatureCount);
    }
    return batch;
}

double mean(std::span<const double> values) {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const std::string& data_fingerprint) {
    config.validate();
    model_.config = config;
    model_.data_fingerprint = data_fingerprint;
    model_.reconstructor = nn::init_network(reconstructor_specs(config),
                                            derive_seed(config.seed, "init/reconstructor"));
    model_.classifier =
        nn::init_network(classifier_specs(config), derive_seed(config.seed, "init/classifier"));
    nn::AdamConfig adam_cfg;
    adam_cfg.learning_rate = config.learning_rate;
    state_r_ = nn::AdamState::for_network(model_.reconstructor, adam_cfg);
    state_c_ = nn::AdamState::for_network(model_.classifier, adam_cfg);
}

Trainer::ClassifierStepStats Trainer::classifier_step(const Matrix& batch) {
    const double m = static_cast<double>(batch.rows);
    // R(X) as a constant input: batch-statistics forward without advancing the
    // reconstructor's running stats (that happens in its own step).
    const Matrix x_recon =
        model_.reconstructor.forward(batch, nn::Mode::Train, nullptr, /*update_stats=*/false);

    nn::ForwardCache cache_real, cache_fake;
    const Matrix p_real = model_.classifier.forward(batch, nn::Mode::Train, &cache_real);
    const Matrix p_fake = model_.classifier.forward(x_recon, nn::Mode::Train, &cache_fake);

    ClassifierStepStats stats;
    Matrix grad_real(p_real.rows, 1), grad_fake(p_fake.rows, 1);
    for (std::size_t i = 0; i < p_real.rows; ++i) {
        const auto real = nn::bce(p_real.data[i], 1.0);
        const auto fake = nn::bce(p_fake.data[i], 0.0);
        stats.loss_c_gan += (real.value + fake.value) / m;
        grad_real.data[i] = real.dvalue_dp / m;
        grad_fake.data[i] = fake.dvalue_dp / m;
    }
    auto grads = model_.classifier.backward(cache_real, grad_real);
    const auto grads_fake = model_.classifier.backward(cache_fake, grad_fake);
    for (std::size_t li = 0; li < grads.layers.size(); ++li) {
        auto& a = grads.layers[li];
        const auto& b = grads_fake.layers[li];
        for (std::size_t i = 0; i < a.weight.data.size(); ++i) a.weight.data[i] += b.weight.data[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
        for (std::size_t i = 0; i < a.gamma.size(); ++i) a.gamma[i] += b.gamma[i];
        for (std::size_t i = 0; i < a.beta.size(); ++i) a.beta[i] += b.beta[i];
    }
    nn::adam_step(state_c_, model_.classifier, grads);

    stats.mean_c_real = mean(p_real.data);
    stats.mean_c_recon = mean(p_fake.data);
    return stats;
}

Trainer::ReconstructorStepStats Trainer::reconstructor_step(const Matrix& batch) {
    const double m = static_cast<double>(batch.rows);
    nn::ForwardCache cache_r;
    const Matrix x_recon = model_.reconstructor.forward(batch, nn::Mode::Train, &cache_r);

    const auto recon = nn::reconstruction_loss(model_.config.loss_kind, x_recon, batch);

    // Probe the frozen classifier with batch statistics; no running-stat
    // update so a reconstructor step leaves the classifier bit-identical.
    nn::ForwardCache cache_gan;
    const Matrix p_gan = model_.classifier.forward(x_recon, nn::Mode::Train, &cache_gan,
                                                   /*update_stats=*/false);
    ReconstructorStepStats stats;
    stats.loss_recon = recon.value;
    Matrix grad_gan(p_gan.rows, 1);
    for (std::size_t i = 0; i < p_gan.rows; ++i) {
        const auto term = nn::bce(p_gan.data[i], 1.0);  // -log C(R(X))
        stats.loss_r_gan += term.value / m;
        grad_gan.data[i] = term.dvalue_dp / m;
    }
    const auto grads_through_c = model_.classifier.backward(cache_gan, grad_gan);
    Matrix grad_x_recon = recon.grad;
    for (std::size_t i = 0; i < grad_x_recon.data.size(); ++i)
        grad_x_recon.data[i] += grads_through_c.input.data[i];
    const auto grads_r = model_.reconstructor.backward(cache_r, grad_x_recon);
    nn::adam_step(state_r_, model_.reconstructor, grads_r);
    return stats;
}

TrainStepReport Trainer::step(const Matrix& batch, std::size_t epoch, std::size_t batch_index) {
    TrainStepReport report;
    report.epoch = epoch;
    report.batch = batch_index;
    const auto c_stats = classifier_step(batch);
    const auto r_stats = reconstructor_step(batch);
    report.loss_recon = r_stats.loss_recon;
    report.loss_r_gan = r_stats.loss_r_gan;
    report.loss_c_gan = c_stats.loss_c_gan;
    report.mean_c_real = c_stats.mean_c_real;
    report.mean_c_recon = c_stats.mean_c_recon;
    return report;
}

std::pair<DetectorModel, std::vector<TrainStepReport>> train(
    const std::vector<data::TransactionRecord>& records, const TrainConfig& config,
    const std::string& data_fingerprint) {
    config.validate();
    if (records.empty()) throw ConfigError("train: dataset is empty");
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].label != 0)
            throw ConfigError("train: record " + std::to_string(i) +
                              " is labeled fraudulent; training data must be genuine only");
    }

    Trainer trainer(config, data_fingerprint);

    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<TrainStepReport> reports;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < records.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, records.size());
            if (end - begin < 2) break;  // single-row remainder: batch stats undefined
            const Matrix x = gather_batch(records, order, begin, end);
            reports.push_back(trainer.step(x, epoch, batch_index++));
        }
    }
    return {trainer.take_model(), std::move(reports)};
}

namespace {

void check_instance(std::span<const double> x) {
    if (x.size() != data::kFeatureCount)
        throw DimensionError("instance must have " + std::to_string(data::kFeatureCount) +
                             " features, got " + std::to_string(x.size()));
    for (double v : x)
        if (!std::isfinite(v)) throw ConfigError("instance contains non-finite values");
}

}  // namespace

std::vector<double> reconstruct(const DetectorModel& model, std::span<const double> x) {
    check_instance(x);
    const Matrix out = model.reconstructor.forward_eval(Matrix::from_row(x));
    return out.data;
}

double classify(const DetectorModel& model, std::span<const double> x) {
    check_instance(x);
    const Matrix out = model.classifier.forward_eval(Matrix::from_row(x));
    return out.data[0];
}

double score(const DetectorModel& model, std::span<const double> x, ScoreMode mode) {
    switch (mode) {
        case ScoreMode::ClassifyRaw:
            return classify(model, x);
        case ScoreMode::ClassifyReconstructed: {
            const auto recon = reconstruct(model, x);
            return classify(model, recon);
        }
        case ScoreMode::DistanceFromHalf: {
            const auto recon = reconstruct(model, x);
            return std::abs(classify(model, recon) - 0.5) * 2.0;
        }
    }
    throw ConfigError("unknown score mode");
}

std::vector<double> score_batch(const DetectorModel& model, const Matrix& instances,
                                ScoreMode mode) {
    Matrix probs;
    if (mode == ScoreMode::ClassifyRaw) {
        probs = model.classifier.forward_eval(instances);
    } else {
        const Matrix recon = model.reconstructor.forward_eval(instances);
        probs = model.classifier.forward_eval(recon);
    }
    std::vector<double> out(probs.data.begin(), probs.data.end());
    if (mode == ScoreMode::DistanceFromHalf) {
        for (double& v : out) v = std::abs(v - 0.5) * 2.0;
    }
    return out;
}

DetectionResult detect(double score_value, double threshold, ScoreMode mode) {
    if (!std::isfinite(score_value)) throw ConfigError("detect: score must be finite");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("detect: threshold must be in (0,1)");
    DetectionResult r;
    r.score = score_value;
    r.threshold = threshold;
    r.mode = mode;
    r.label = score_value > threshold ? 1 : 0;  // strict inequality
    return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const TrainConfig& config) {
    nlohmann::json j;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["learning_rate"] = config.learning_rate;
    j["loss"] = nn::loss_kind_name(config.loss_kind);
    j["threshold"] = config.threshold;
    j["score_mode"] = score_mode_name(config.score_mode);
    j["encoder_dims"] = config.encoder_dims;
    j["classifier_dims"] = config.classifier_dims;
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig config;
    config.epochs = j.at("epochs").get<std::size_t>();
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.learning_rate = j.at("learning_rate").get<double>();
    config.loss_kind = nn::loss_kind_from_name(j.at("loss").get<std::string>());
    config.threshold = j.at("threshold").get<double>();
    config.score_mode = score_mode_from_name(j.at("score_mode").get<std::string>());
    config.encoder_dims = j.at("encoder_dims").get<std::vector<std::size_t>>();
    config.classifier_dims = j.at("classifier_dims").get<std::vector<std::size_t>>();
    return config;
}

}  // namespace

std::string model_to_json(const DetectorModel& model) {
    nlohmann::json j;
    j["version"] = kModelFormatVersion;
    j["kind"] = "detector";
    j["seed"] = model.config.seed;
    j["data_fingerprint"] = model.data_fingerprint;
    j["train_config"] = config_to_json(model.config);
    j["arch"]["reconstructor"] = serialize::network_arch(model.reconstructor);
    j["arch"]["classifier"] = serialize::network_arch(model.classifier);
    j["weights"]["reconstructor"] = serialize::network_weights(model.reconstructor);
    j["weights"]["classifier"] = serialize::network_weights(model.classifier);
    return j.dump(2) + "\n";
}

DetectorModel model_from_json(const std::string& text, const std::string& source_name) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(source_name + ": not valid JSON (" + e.what() + ")");
    }
    try {
        if (!j.contains("version")) throw CorruptFileError(source_name + ": missing version");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw VersionError(source_name + ": unsupported model format version " +
                               std::to_string(version));
        if (j.value("kind", "detector") != "detector")
            throw CorruptFileError(source_name + ": not a detector model file");
        DetectorModel model;
        model.config = config_from_json(j.at("train_config"));
        model.config.seed = j.at("seed").get<std::uint64_t>();
        model.data_fingerprint = j.at("data_fingerprint").get<std::string>();
        model.reconstructor = serialize::network_from_json(j.at("arch").at("reconstructor"),
                                                           j.at("weights").at("reconstructor"));
        model.classifier = serialize::network_from_json(j.at("arch").at("classifier"),
                                                        j.at("weights").at("classifier"));
        if (model.reconstructor.input_dim() != data::kFeatureCount ||
            model.reconstructor.output_dim() != data::kFeatureCount)
            throw CorruptFileError(source_name + ": reconstructor must map 28 -> 28");
        if (model.classifier.output_dim() != 1)
            throw CorruptFileError(source_name + ": classifier must output one value");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(source_name + ": " + e.what());
    }
}

void save_model(const DetectorModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << model_to_json(model);
    if (!out) throw IoError("failed while writing " + path);
}

DetectorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str(), path);
}

}  // namespace ocad::detector
