#include "ocad/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "ocad/errors.hpp"

namespace ocad::explain {

std::string explainer_kind_name(ExplainerKind kind) {
    switch (kind) {
        case ExplainerKind::Ae: return "ae";
        case ExplainerKind::Classifier: return "c";
        case ExplainerKind::General: return "general";
    }
    return "unknown";
}

ExplainerKind explainer_kind_from_name(const std::string& name) {
    if (name == "ae") return ExplainerKind::Ae;
    if (name == "c") return ExplainerKind::Classifier;
    if (name == "general") return ExplainerKind::General;
    throw ConfigError("unknown explainer kind: " + name);
}

PerturbationSet sample_perturbations(std::span<const double> instance,
                                     const data::FeatureStats& ref_stats, std::size_t n,
                                     std::uint64_t seed) {
    if (n < 2) throw ConfigError("sample_perturbations: need at least 2 samples");
    if (instance.size() != data::kFeatureCount)
        throw DimensionError("sample_perturbations: instance must have 28 features");

    PerturbationSet set;
    set.seed = seed;
    set.instance.assign(instance.begin(), instance.end());
    set.samples = Matrix(n, data::kFeatureCount);
    for (std::size_t j = 0; j < data::kFeatureCount; ++j) set.samples(0, j) = instance[j];

    Rng rng(derive_seed(seed, "perturb"));
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < data::kFeatureCount; ++j) {
            const double sd = std::max(ref_stats.stddev[j], kStdFloor);
            set.samples(i, j) = rng.normal(ref_stats.mean[j], sd);
        }
    }
    return set;
}

PerturbationSet sample_perturbations_bootstrap(std::span<const double> instance,
                                               const Matrix& reference_rows, std::size_t n,
                                               std::uint64_t seed) {
    if (n < 2) throw ConfigError("sample_perturbations: need at least 2 samples");
    if (reference_rows.rows == 0 || reference_rows.cols != data::kFeatureCount)
        throw DimensionError("bootstrap sampler needs reference rows with 28 features");

    PerturbationSet set;
    set.seed = seed;
    set.instance.assign(instance.begin(), instance.end());
    set.samples = Matrix(n, data::kFeatureCount);
    for (std::size_t j = 0; j < data::kFeatureCount; ++j) set.samples(0, j) = instance[j];

    Rng rng(derive_seed(seed, "perturb"));
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < data::kFeatureCount; ++j) {
            const std::size_t pick = static_cast<std::size_t>(rng.below(reference_rows.rows));
            set.samples(i, j) = reference_rows(pick, j);
        }
    }
    return set;
}

double kernel_weight(double distance, double width) {
    if (!(width > 0.0)) throw ConfigError("kernel width must be positive");
    if (distance < 0.0) throw ConfigError("distance must be non-negative");
    // Far samples underflow to zero; keep weights strictly positive.
    return std::max(std::exp(-(distance * distance) / (width * width)), 1e-300);
}

double standardized_distance(std::span<const double> a, std::span<const double> b,
                             const data::FeatureStats& stats) {
    if (a.size() != b.size()) throw DimensionError("distance: length mismatch");
    double sum = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double sd = std::max(stats.stddev[j], kStdFloor);
        const double d = (a[j] - b[j]) / sd;
        sum += d * d;
    }
    return std::sqrt(sum);
}

void assign_kernel_weights(PerturbationSet& set, const KernelConfig& kernel) {
    set.weights.assign(set.samples.rows, 0.0);
    for (std::size_t i = 0; i < set.samples.rows; ++i) {
        const double d = standardized_distance(set.samples.row(i), set.instance, kernel.ref_stats);
        set.weights[i] = kernel_weight(d, kernel.width);
    }
}

double LinearSurrogate::predict(std::span<const double> z) const {
    double y = intercept;
    for (std::size_t j = 0; j < coefficients.size(); ++j) y += coefficients[j] * z[j];
    return y;
}

namespace {

// Cholesky solve of the symmetric positive definite system a * x = b.
// Returns false when a pivot collapses (singular or indefinite system).
bool cholesky_solve(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (!(sum > 0.0) || !std::isfinite(sum)) return false;
                a[i * n + i] = std::sqrt(sum);
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {  // forward: L y = b
        double sum = b[i];
        for (std::size_t k = 0; k < i; ++k) sum -= a[i * n + k] * b[k];
        b[i] = sum / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {  // backward: L^T x = y
        double sum = b[i];
        for (std::size_t k = i + 1; k < n; ++k) sum -= a[k * n + i] * b[k];
        b[i] = sum / a[i * n + i];
    }
    return true;
}

}  // namespace

LinearSurrogate fit_weighted_ridge(const Matrix& features, std::span<const double> labels,
                                   std::span<const double> weights, double lambda) {
    const std::size_t n = features.rows;
    const std::size_t p = features.cols;
    if (labels.size() != n || weights.size() != n)
        throw DimensionError("fit_weighted_ridge: labels/weights must match sample count");
    if (n < 30) throw ConfigError("fit_weighted_ridge: need at least 30 samples");
    if (lambda < 0.0) throw ConfigError("fit_weighted_ridge: lambda must be >= 0");
    for (double w : weights)
        if (!(w > 0.0)) throw ConfigError("fit_weighted_ridge: weights must be positive");

    // Augmented normal equations over [1, z]; the intercept column carries no
    // ridge penalty.
    const std::size_t dim = p + 1;
    std::vector<double> a(dim * dim, 0.0), rhs(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights[i];
        const double* z = features.data.data() + i * p;
        a[0] += w;
        rhs[0] += w * labels[i];
        for (std::size_t j = 0; j < p; ++j) {
            a[(j + 1) * dim] += w * z[j];
            rhs[j + 1] += w * z[j] * labels[i];
            for (std::size_t k = 0; k <= j; ++k) a[(j + 1) * dim + (k + 1)] += w * z[j] * z[k];
        }
    }
    for (std::size_t j = 1; j < dim; ++j) a[j * dim + j] += lambda;
    // Mirror the lower triangle.
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) a[i * dim + j] = a[j * dim + i];

    std::vector<double> solution(rhs);
    std::vector<double> factor(a);
    if (!cholesky_solve(factor, solution, dim)) {
        if (lambda == 0.0)
            throw SingularSystemError(
                "normal equations are singular at lambda = 0; use a ridge penalty lambda > 0");
        throw SingularSystemError("normal equations are not positive definite");
    }

    LinearSurrogate surrogate;
    surrogate.intercept = solution[0];
    surrogate.coefficients.assign(solution.begin() + 1, solution.end());
    surrogate.lambda = lambda;

    // Weighted R^2 against the weighted mean.
    const double wsum = a[0];
    double ymean = 0.0;
    for (std::size_t i = 0; i < n; ++i) ymean += weights[i] * labels[i];
    ymean /= wsum;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pred = surrogate.predict(features.row(i));
        ss_res += weights[i] * (labels[i] - pred) * (labels[i] - pred);
        ss_tot += weights[i] * (labels[i] - ymean) * (labels[i] - ymean);
    }
    surrogate.fidelity = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res <= 1e-24 ? 1.0 : 0.0);
    return surrogate;
}

double ae_label(const detector::DetectorModel& model, std::span<const double> x) {
    const auto recon = detector::reconstruct(model, x);
    double sum = 0.0;
    for (std::size_t j = 0; j < recon.size(); ++j) {
        const double d = recon[j] - x[j];
        sum += d * d;
    }
    return sum / static_cast<double>(recon.size());
}

Explanation explain_function(ExplainerKind kind,
                             const std::function<std::vector<double>(const Matrix&)>& black_box,
                             std::span<const double> instance,
                             const data::FeatureStats& ref_stats, const ExplainConfig& config) {
    PerturbationSet set;
    if (config.sampling == SamplingScheme::Bootstrap) {
        if (!config.bootstrap_reference)
            throw ConfigError("bootstrap sampling needs reference rows");
        set = sample_perturbations_bootstrap(instance, *config.bootstrap_reference,
                                             config.n_samples, config.seed);
    } else {
        set = sample_perturbations(instance, ref_stats, config.n_samples, config.seed);
    }

    KernelConfig kernel;
    kernel.ref_stats = ref_stats;
    if (config.kernel_width > 0.0) kernel.width = config.kernel_width;
    assign_kernel_weights(set, kernel);

    set.labels = black_box(set.samples);
    if (set.labels.size() != set.samples.rows)
        throw DimensionError("black box returned wrong number of labels");

    // Standardize features for the surrogate fit.
    Matrix z(set.samples.rows, data::kFeatureCount);
    for (std::size_t i = 0; i < set.samples.rows; ++i) {
        for (std::size_t j = 0; j < data::kFeatureCount; ++j) {
            const double sd = std::max(ref_stats.stddev[j], kStdFloor);
            z(i, j) = (set.samples(i, j) - ref_stats.mean[j]) / sd;
        }
    }
    const LinearSurrogate surrogate = fit_weighted_ridge(z, set.labels, set.weights, config.lambda);

    Explanation ex;
    ex.kind = kind;
    ex.intercept = surrogate.intercept;
    ex.fidelity = surrogate.fidelity;
    ex.seed = config.seed;
    ex.n_samples = config.n_samples;
    ex.lambda = config.lambda;
    ex.kernel_width = kernel.width;
    ex.black_box_value = set.labels[0];

    ex.entries.reserve(data::kFeatureCount);
    double prediction = surrogate.intercept;
    for (std::size_t j = 0; j < data::kFeatureCount; ++j) {
        ExplanationEntry entry;
        entry.feature = "V" + std::to_string(j + 1);
        entry.raw_value = instance[j];
        entry.standardized_value = z(0, j);
        entry.coefficient = surrogate.coefficients[j];
        entry.contribution = entry.coefficient * entry.standardized_value;
        prediction += entry.contribution;
        ex.entries.push_back(std::move(entry));
    }
    ex.predicted_value = prediction;

    // |contribution| descending; equal magnitudes keep feature order.
    std::stable_sort(ex.entries.begin(), ex.entries.end(),
                     [](const ExplanationEntry& a, const ExplanationEntry& b) {
                         return std::abs(a.contribution) > std::abs(b.contribution);
                     });
    return ex;
}

Explanation explain(ExplainerKind kind, const detector::DetectorModel& model,
                    std::span<const double> instance, const data::FeatureStats& ref_stats,
                    const ExplainConfig& config) {
    std::function<std::vector<double>(const Matrix&)> black_box;
    switch (kind) {
        case ExplainerKind::Ae:
            black_box = [&model](const Matrix& samples) {
                const Matrix recon = model.reconstructor.forward_eval(samples);
                std::vector<double> labels(samples.rows, 0.0);
                for (std::size_t i = 0; i < samples.rows; ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < samples.cols; ++j) {
                        const double d = recon(i, j) - samples(i, j);
                        sum += d * d;
                    }
                    labels[i] = sum / static_cast<double>(samples.cols);
                }
                return labels;
            };
            break;
        case ExplainerKind::Classifier:
            // The instance here is a reconstructed feature vector; the
            // classifier is probed directly on its perturbations.
            black_box = [&model](const Matrix& samples) {
                const Matrix p = model.classifier.forward_eval(samples);
                return std::vector<double>(p.data.begin(), p.data.end());
            };
            break;
        case ExplainerKind::General:
            black_box = [&model, &config](const Matrix& samples) {
                return detector::score_batch(model, samples, config.score_mode);
            };
            break;
    }
    return explain_function(kind, black_box, instance, ref_stats, config);
}

Explanation top_k(const Explanation& explanation, std::size_t k) {
    if (k < 1 || k > explanation.entries.size())
        throw ConfigError("top_k: k must be between 1 and " +
                          std::to_string(explanation.entries.size()));
    Explanation out = explanation;
    out.entries.resize(k);
    return out;
}

std::string to_json(const Explanation& explanation) {
    nlohmann::json j;
    j["kind"] = explainer_kind_name(explanation.kind);
    j["predicted_value"] = explanation.predicted_value;
    j["black_box_value"] = explanation.black_box_value;
    j["intercept"] = explanation.intercept;
    j["fidelity"] = explanation.fidelity;
    j["seed"] = explanation.seed;
    j["n_samples"] = explanation.n_samples;
    j["lambda"] = explanation.lambda;
    j["kernel_width"] = explanation.kernel_width;
    j["features"] = nlohmann::json::array();
    for (const auto& e : explanation.entries) {
        nlohmann::json f;
        f["feature"] = e.feature;
        f["contribution"] = e.contribution;
        f["raw_value"] = e.raw_value;
        f["coefficient"] = e.coefficient;
        f["standardized_value"] = e.standardized_value;
        j["features"].push_back(f);
    }
    return j.dump(2) + "\n";
}

std::string to_text_table(const Explanation& explanation) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%s explainer\n", explainer_kind_name(explanation.kind).c_str());
    out += line;
    std::snprintf(line, sizeof(line), "predicted value : %.6f\n", explanation.predicted_value);
    out += line;
    std::snprintf(line, sizeof(line), "model output    : %.6f\n", explanation.black_box_value);
    out += line;
    std::snprintf(line, sizeof(line), "fidelity (wR2)  : %.6f\n", explanation.fidelity);
    out += line;
    out += "\nfeature  contribution       value\n";
    out += "-------  -------------  ----------\n";
    for (const auto& e : explanation.entries) {
        std::snprintf(line, sizeof(line), "%-7s  %13.6f  %10.4f\n", e.feature.c_str(),
                      e.contribution, e.raw_value);
        out += line;
    }
    return out;
}

std::string to_svg(const Explanation& explanation) {
    const int bar_height = 22;
    const int gap = 6;
    const int left = 70;
    const int width = 640;
    const int plot_width = width - left - 90;
    const std::size_t n = explanation.entries.size();
    const int height = 50 + static_cast<int>(n) * (bar_height + gap);

    double max_abs = 1e-12;
    for (const auto& e : explanation.entries) max_abs = std::max(max_abs, std::abs(e.contribution));

    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n",
                  width, height, width, height);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "  <text x=\"%d\" y=\"20\" font-family=\"monospace\" font-size=\"14\">"
                  "%s explainer, predicted %.4f</text>\n",
                  left, explainer_kind_name(explanation.kind).c_str(), explanation.predicted_value);
    svg += buf;
    const double mid = left + plot_width / 2.0;
    std::snprintf(buf, sizeof(buf),
                  "  <line x1=\"%.1f\" y1=\"30\" x2=\"%.1f\" y2=\"%d\" stroke=\"#888\"/>\n", mid,
                  mid, height - 10);
    svg += buf;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = explanation.entries[i];
        const int y = 40 + static_cast<int>(i) * (bar_height + gap);
        const double half = plot_width / 2.0;
        const double len = std::abs(e.contribution) / max_abs * (half - 4.0);
        const double x = e.contribution >= 0.0 ? mid : mid - len;
        const char* color = e.contribution >= 0.0 ? "#d62728" : "#2ca02c";
        std::snprintf(buf, sizeof(buf),
                      "  <text x=\"%d\" y=\"%d\" font-family=\"monospace\" font-size=\"12\">%s"
                      "</text>\n",
                      8, y + bar_height - 7, e.feature.c_str());
        svg += buf;
        std::snprintf(buf, sizeof(buf),
                      "  <rect x=\"%.2f\" y=\"%d\" width=\"%.2f\" height=\"%d\" fill=\"%s\"/>\n", x,
                      y, std::max(len, 0.5), bar_height, color);
        svg += buf;
        std::snprintf(buf, sizeof(buf),
                      "  <text x=\"%.2f\" y=\"%d\" font-family=\"monospace\" font-size=\"11\">"
                      "%.4f</text>\n",
                      e.contribution >= 0.0 ? x + len + 6.0 : x - 60.0, y + bar_height - 7,
                      e.contribution);
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace ocad::explain
