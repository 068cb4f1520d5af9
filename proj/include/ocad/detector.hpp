#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ocad/data.hpp"
#include "ocad/nn.hpp"

namespace ocad::detector {

enum class ScoreMode { ClassifyReconstructed, ClassifyRaw, DistanceFromHalf };

std::string score_mode_name(ScoreMode mode);
ScoreMode score_mode_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 2;
    std::size_t batch_size = 4096;
    double learning_rate = 2e-4;
    nn::LossKind loss_kind = nn::LossKind::L2;
    double threshold = 0.7;
    ScoreMode score_mode = ScoreMode::ClassifyReconstructed;
    std::uint64_t seed = 0;
    // Hidden widths; the defaults give the bottlenecked 28-16-8-16-28
    // reconstructor and the 28-32-16-1 classifier.
    std::vector<std::size_t> encoder_dims{16, 8};
    std::vector<std::size_t> classifier_dims{32, 16};

    void validate() const;
};

struct DetectorModel {
    nn::Network reconstructor;  // 28 -> ... -> 28, linear output
    nn::Network classifier;     // 28 -> ... -> 1, sigmoid output
    TrainConfig config;
    std::string data_fingerprint;
};

struct TrainStepReport {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double loss_recon = 0.0;    // reconstruction loss on the batch
    double loss_r_gan = 0.0;    // -log C(R(X)) term driving the reconstructor
    double loss_c_gan = 0.0;    // classifier BCE on real vs reconstructed
    double mean_c_real = 0.0;   // mean C(X)
    double mean_c_recon = 0.0;  // mean C(R(X))
};

struct DetectionResult {
    double score = 0.0;
    int label = 0;  // 1 = fraud
    double threshold = 0.0;
    ScoreMode mode = ScoreMode::ClassifyReconstructed;
};

std::vector<nn::LayerSpec> reconstructor_specs(const TrainConfig& config);
std::vector<nn::LayerSpec> classifier_specs(const TrainConfig& config);

// Number of trainable batches for one epoch: ceil(rows / batch_size), with a
// single-row remainder dropped (batch statistics need two rows).
std::size_t batches_per_epoch(std::size_t rows, std::size_t batch_size);

// Drives the alternating adversarial schedule. The two half-steps are
// independently callable and each one touches only its own network, so step
// isolation can be checked by serializing the sub-networks around a call.
class Trainer {
public:
    explicit Trainer(const TrainConfig& config, const std::string& data_fingerprint = "");

    struct ClassifierStepStats {
        double loss_c_gan = 0.0;
        double mean_c_real = 0.0;
        double mean_c_recon = 0.0;
    };
    // Minimizes -log C(X) - log(1 - C(R(X))) over the classifier parameters;
    // the reconstruction R(X) is treated as a constant input.
    ClassifierStepStats classifier_step(const Matrix& batch);

    struct ReconstructorStepStats {
        double loss_recon = 0.0;
        double loss_r_gan = 0.0;
    };
    // Minimizes reconstruction_loss + (-log C(R(X))) over the reconstructor
    // parameters with the classifier frozen.
    ReconstructorStepStats reconstructor_step(const Matrix& batch);

    // One classifier step followed by one reconstructor step.
    TrainStepReport step(const Matrix& batch, std::size_t epoch, std::size_t batch_index);

    const DetectorModel& model() const { return model_; }
    DetectorModel take_model() { return std::move(model_); }

private:
    DetectorModel model_;
    nn::AdamState state_r_;
    nn::AdamState state_c_;
};

// Adversarial training on genuine-only records: per batch one classifier step
// (real -> 1, reconstructed-detached -> 0) then one reconstructor step
// (reconstruction loss plus -log C(R(X)) with the classifier frozen).
std::pair<DetectorModel, std::vector<TrainStepReport>> train(
    const std::vector<data::TransactionRecord>& records, const TrainConfig& config,
    const std::string& data_fingerprint = "");

std::vector<double> reconstruct(const DetectorModel& model, std::span<const double> x);
double classify(const DetectorModel& model, std::span<const double> x);
double score(const DetectorModel& model, std::span<const double> x, ScoreMode mode);
DetectionResult detect(double score_value, double threshold, ScoreMode mode);

// Batched eval-mode scores for a matrix of instances (one row per instance);
// bit-identical to calling score() per row.
std::vector<double> score_batch(const DetectorModel& model, const Matrix& instances,
                                ScoreMode mode);

inline constexpr int kModelFormatVersion = 1;

void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

// JSON (de)serialization shared with the baseline model files.
std::string model_to_json(const DetectorModel& model);
DetectorModel model_from_json(const std::string& text, const std::string& source_name);

}  // namespace ocad::detector
