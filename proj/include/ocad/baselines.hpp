#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ocad/data.hpp"
#include "ocad/matrix.hpp"
#include "ocad/nn.hpp"

namespace ocad::baselines {

// One-class k-nearest-neighbors: the outlier score of a query is its mean
// Euclidean distance to the k nearest stored genuine points.
struct OcnnModel {
    Matrix train_points;  // rows are genuine feature vectors
    std::size_t k = 5;
    double threshold = 0.0;  // set by calibration
    std::string data_fingerprint;
};

OcnnModel ocnn_fit(std::span<const data::TransactionRecord> genuine, std::size_t k,
                   const std::string& data_fingerprint = "");

// Ties in the k-th distance break by training row index.
double ocnn_score(const OcnnModel& model, std::span<const double> x);

// Threshold maximizing MCC over the evaluation scores under the rule
// "fraud iff score > threshold"; ties resolve to the smaller threshold.
double calibrate_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

double ocnn_calibrate(OcnnModel& model, std::span<const data::TransactionRecord> eval_set);

struct AeBaselineConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    nn::LossKind loss_kind = nn::LossKind::L2;
    std::uint64_t seed = 0;
    std::vector<std::size_t> encoder_dims{16, 8};  // reuses the detector shape
};

// Plain reconstruction-error autoencoder trained on genuine rows only.
struct AeBaseline {
    nn::Network autoencoder;
    AeBaselineConfig config;
    double threshold = 0.0;
    std::string data_fingerprint;
};

AeBaseline ae_baseline_train(std::span<const data::TransactionRecord> genuine,
                             const AeBaselineConfig& config,
                             const std::string& data_fingerprint = "");

// Mean squared reconstruction difference over the 28 features.
double ae_baseline_score(const AeBaseline& model, std::span<const double> x);

double ae_baseline_calibrate(AeBaseline& model,
                             std::span<const data::TransactionRecord> eval_set);

// Model files share the detector's versioned JSON envelope with a "kind"
// discriminator of "ocnn" / "ae_baseline".
void save_ocnn(const OcnnModel& model, const std::string& path);
OcnnModel load_ocnn(const std::string& path);
void save_ae_baseline(const AeBaseline& model, const std::string& path);
AeBaseline load_ae_baseline(const std::string& path);

}  // namespace ocad::baselines
