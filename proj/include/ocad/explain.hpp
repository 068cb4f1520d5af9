#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ocad/data.hpp"
#include "ocad/detector.hpp"
#include "ocad/matrix.hpp"

namespace ocad::explain {

enum class ExplainerKind { Ae, Classifier, General };

std::string explainer_kind_name(ExplainerKind kind);
ExplainerKind explainer_kind_from_name(const std::string& name);

enum class SamplingScheme { Gaussian, Bootstrap };

inline constexpr double kStdFloor = 1e-12;

// LIME's default kernel width, 0.75 * sqrt(number of features).
inline double default_kernel_width() {
    return 0.75 * std::sqrt(static_cast<double>(data::kFeatureCount));
}

struct KernelConfig {
    double width = default_kernel_width();
    data::FeatureStats ref_stats;
};

struct PerturbationSet {
    std::vector<double> instance;
    Matrix samples;               // n x 28; row 0 is the instance itself
    std::vector<double> labels;   // black-box outputs, filled by the caller
    std::vector<double> weights;  // kernel weights in (0, 1]; row 0 has weight 1
    std::uint64_t seed = 0;
};

// Draws feature j of every sample independently from Normal(mean_j, std_j) of
// the reference statistics; sample 0 is the instance itself.
PerturbationSet sample_perturbations(std::span<const double> instance,
                                     const data::FeatureStats& ref_stats, std::size_t n,
                                     std::uint64_t seed);

// Alternative sampler: per-feature bootstrap resampling of reference rows.
PerturbationSet sample_perturbations_bootstrap(std::span<const double> instance,
                                               const Matrix& reference_rows, std::size_t n,
                                               std::uint64_t seed);

// exp(-d^2 / width^2)
double kernel_weight(double distance, double width);

// Euclidean distance between z-score-standardized vectors.
double standardized_distance(std::span<const double> a, std::span<const double> b,
                             const data::FeatureStats& stats);

// Fills PerturbationSet::weights from distances to the instance.
void assign_kernel_weights(PerturbationSet& set, const KernelConfig& kernel);

struct LinearSurrogate {
    double intercept = 0.0;
    std::vector<double> coefficients;
    double lambda = 0.0;
    double fidelity = 0.0;  // weighted R^2 on the fit set

    double predict(std::span<const double> z) const;
};

// Weighted ridge regression by the normal equations; the intercept is not
// penalized. Features are used as given (the caller standardizes).
LinearSurrogate fit_weighted_ridge(const Matrix& features, std::span<const double> labels,
                                   std::span<const double> weights, double lambda);

// Mean over the 28 features of the squared reconstruction difference.
double ae_label(const detector::DetectorModel& model, std::span<const double> x);

struct ExplanationEntry {
    std::string feature;
    double contribution = 0.0;  // coefficient * standardized feature value
    double raw_value = 0.0;
    double coefficient = 0.0;
    double standardized_value = 0.0;
};

struct Explanation {
    ExplainerKind kind = ExplainerKind::Ae;
    double predicted_value = 0.0;  // surrogate prediction at the instance
    double black_box_value = 0.0;  // actual model output at the instance
    double intercept = 0.0;
    std::vector<ExplanationEntry> entries;  // sorted by |contribution| desc
    double fidelity = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    double lambda = 0.0;
    double kernel_width = 0.0;
};

struct ExplainConfig {
    std::size_t n_samples = 5000;
    double lambda = 1.0;
    double kernel_width = 0.0;  // 0 -> LIME default
    std::uint64_t seed = 0;
    SamplingScheme sampling = SamplingScheme::Gaussian;
    // Required when sampling == Bootstrap (rows of the reference set).
    const Matrix* bootstrap_reference = nullptr;
    detector::ScoreMode score_mode = detector::ScoreMode::ClassifyReconstructed;
};

// Local surrogate around `instance`:
//   Ae         - regression on the reconstruction error of raw perturbations
//   Classifier - classifier probability over perturbations of a reconstructed
//                vector (the caller passes the reconstructed instance)
//   General    - end-to-end score over perturbations of the raw instance
Explanation explain(ExplainerKind kind, const detector::DetectorModel& model,
                    std::span<const double> instance, const data::FeatureStats& ref_stats,
                    const ExplainConfig& config);

// Surrogate explanation of an arbitrary scalar function; explain() delegates
// here and tests use it with known black boxes.
Explanation explain_function(ExplainerKind kind,
                             const std::function<std::vector<double>(const Matrix&)>& black_box,
                             std::span<const double> instance,
                             const data::FeatureStats& ref_stats, const ExplainConfig& config);

// First k entries by |contribution|, ties broken by feature index ascending.
Explanation top_k(const Explanation& explanation, std::size_t k);

std::string to_json(const Explanation& explanation);
std::string to_text_table(const Explanation& explanation);
std::string to_svg(const Explanation& explanation);

}  // namespace ocad::explain
