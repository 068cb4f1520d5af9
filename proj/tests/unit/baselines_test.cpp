#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "../support/temp_dir.hpp"
#include "ocad/baselines.hpp"
#include "ocad/errors.hpp"
#include "ocad/metrics.hpp"

using namespace ocad;
using baselines::OcnnModel;
using testsupport::TempDir;

namespace {

data::TransactionRecord record_at(std::initializer_list<std::pair<std::size_t, double>> coords,
                                  int label = 0) {
    data::TransactionRecord rec;
    rec.label = label;
    for (auto [j, v] : coords) rec.features[j] = v;
    return rec;
}

std::vector<data::TransactionRecord> random_genuine(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<data::TransactionRecord> records(n);
    for (auto& rec : records) {
        for (double& f : rec.features) f = rng.normal();
        rec.label = 0;
    }
    return records;
}

// Exhaustive oracle: sort every (distance, index) pair and average the first k.
double ocnn_oracle(const OcnnModel& model, std::span<const double> x) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < model.train_points.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = model.train_points(i, j) - x[j];
            sum += diff * diff;
        }
        d.emplace_back(sum, i);
    }
    std::sort(d.begin(), d.end());
    double total = 0.0;
    for (std::size_t i = 0; i < model.k; ++i) total += std::sqrt(d[i].first);
    return total / static_cast<double>(model.k);
}

}  // namespace

TEST_CASE("ocnn_score basic geometry") {
    SUBCASE("query duplicated k times scores zero") {
        std::vector<data::TransactionRecord> points(5, record_at({{0, 3.0}, {1, -1.0}}));
        const auto model = baselines::ocnn_fit(points, 5);
        std::vector<double> q(28, 0.0);
        q[0] = 3.0;
        q[1] = -1.0;
        CHECK(baselines::ocnn_score(model, q) == 0.0);
    }
    SUBCASE("axis-aligned two-point case") {
        // Points at V1 = 0 and V1 = 10, query at V1 = 4, k = 2 -> (4+6)/2 = 5.
        std::vector<data::TransactionRecord> points{record_at({{0, 0.0}}),
                                                    record_at({{0, 10.0}})};
        const auto model = baselines::ocnn_fit(points, 2);
        std::vector<double> q(28, 0.0);
        q[0] = 4.0;
        CHECK(baselines::ocnn_score(model, q) == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("k equal to the training size averages every distance") {
        const auto records = random_genuine(20, 11);
        const auto model = baselines::ocnn_fit(records, 20);
        std::vector<double> q(28, 0.2);
        double total = 0.0;
        for (const auto& rec : records) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 28; ++j)
                sum += (rec.features[j] - q[j]) * (rec.features[j] - q[j]);
            total += std::sqrt(sum);
        }
        CHECK(baselines::ocnn_score(model, q) == doctest::Approx(total / 20.0).epsilon(1e-12));
    }
    SUBCASE("unfitted model and bad k are rejected") {
        OcnnModel empty;
        std::vector<double> q(28, 0.0);
        CHECK_THROWS_AS(baselines::ocnn_score(empty, q), ConfigError);
        const auto records = random_genuine(4, 1);
        CHECK_THROWS_AS(baselines::ocnn_fit(records, 5), ConfigError);
        CHECK_THROWS_AS(baselines::ocnn_fit(records, 0), ConfigError);
    }
}

TEST_CASE("ocnn_score equals the exhaustive oracle exactly") {
    Rng rng(401);
    const auto records = random_genuine(500, 403);
    for (std::size_t k : {1, 3, 5, 17}) {
        const auto model = baselines::ocnn_fit(records, k);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> q(28);
            for (double& v : q) v = 2.0 * rng.normal();
            CHECK(baselines::ocnn_score(model, q) == ocnn_oracle(model, q));
        }
    }
}

TEST_CASE("ocnn_score is translation invariant") {
    Rng rng(407);
    auto records = random_genuine(60, 409);
    const auto model = baselines::ocnn_fit(records, 5);
    std::vector<double> q(28);
    for (double& v : q) v = rng.normal();
    const double base = baselines::ocnn_score(model, q);

    std::vector<double> shift(28);
    for (double& v : shift) v = rng.normal(0.0, 3.0);
    for (auto& rec : records)
        for (std::size_t j = 0; j < 28; ++j) rec.features[j] += shift[j];
    const auto shifted_model = baselines::ocnn_fit(records, 5);
    std::vector<double> shifted_q(q);
    for (std::size_t j = 0; j < 28; ++j) shifted_q[j] += shift[j];
    CHECK(baselines::ocnn_score(shifted_model, shifted_q) ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("calibrate_threshold maximizes MCC and resolves ties downward") {
    SUBCASE("separable scores reach MCC 1") {
        const std::vector<double> scores{0.1, 0.2, 0.3, 1.1, 1.2, 1.3};
        const std::vector<int> labels{0, 0, 0, 1, 1, 1};
        const double t = baselines::calibrate_threshold(scores, labels);
        CHECK(t > 0.0);
        std::vector<int> preds;
        for (double s : scores) preds.push_back(s > t ? 1 : 0);
        CHECK(metrics::metric_report(metrics::confusion(preds, labels)).mcc == 1.0);
        // Smallest optimal threshold: 0.3 achieves MCC 1, anything above too.
        CHECK(t == doctest::Approx(0.3));
    }
    SUBCASE("deterministic") {
        Rng rng(411);
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 50; ++i) {
            scores.push_back(rng.uniform() * 3.0);
            labels.push_back(static_cast<int>(rng.below(2)));
        }
        CHECK(baselines::calibrate_threshold(scores, labels) ==
              baselines::calibrate_threshold(scores, labels));
    }
    SUBCASE("single-class evaluation set is rejected") {
        CHECK_THROWS_AS(baselines::calibrate_threshold({0.1, 0.2}, {0, 0}), ConfigError);
    }
}

TEST_CASE("ocnn_calibrate separates an easy evaluation set") {
    const auto train = random_genuine(200, 413);
    auto model = baselines::ocnn_fit(train, 5);
    std::vector<data::TransactionRecord> eval_set;
    Rng rng(417);
    for (int i = 0; i < 25; ++i) {
        data::TransactionRecord rec;
        for (double& f : rec.features) f = rng.normal();  // inliers
        rec.label = 0;
        eval_set.push_back(rec);
    }
    for (int i = 0; i < 25; ++i) {
        data::TransactionRecord rec;
        for (double& f : rec.features) f = rng.normal(12.0, 1.0);  // far outliers
        rec.label = 1;
        eval_set.push_back(rec);
    }
    const double t = baselines::ocnn_calibrate(model, eval_set);
    CHECK(t > 0.0);
    CHECK(model.threshold == t);
    std::vector<int> preds, labels;
    for (const auto& rec : eval_set) {
        preds.push_back(baselines::ocnn_score(model, rec.features) > t ? 1 : 0);
        labels.push_back(rec.label);
    }
    CHECK(metrics::metric_report(metrics::confusion(preds, labels)).mcc == 1.0);
}

TEST_CASE("ae baseline trains on genuine rows only and scores reconstruction error") {
    auto records = random_genuine(120, 419);
    baselines::AeBaselineConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.seed = 7;

    SUBCASE("fraud in training data is rejected") {
        records[3].label = 1;
        CHECK_THROWS_AS(baselines::ae_baseline_train(records, cfg), ConfigError);
    }
    SUBCASE("training reduces reconstruction error on the training manifold") {
        const auto model = baselines::ae_baseline_train(records, cfg);
        // Score definition: mean squared difference over features.
        std::vector<double> x(records[0].features.begin(), records[0].features.end());
        const Matrix recon = model.autoencoder.forward_eval(Matrix::from_row(x));
        double expected = 0.0;
        for (std::size_t j = 0; j < 28; ++j)
            expected += (recon.data[j] - x[j]) * (recon.data[j] - x[j]);
        expected /= 28.0;
        CHECK(baselines::ae_baseline_score(model, x) == doctest::Approx(expected).epsilon(1e-15));

        // Genuine-like inputs reconstruct better than far outliers.
        Rng rng(421);
        double genuine_total = 0.0, outlier_total = 0.0;
        for (int i = 0; i < 20; ++i) {
            std::vector<double> g(28), o(28);
            for (double& v : g) v = rng.normal();
            for (double& v : o) v = rng.normal(10.0, 2.0);
            genuine_total += baselines::ae_baseline_score(model, g);
            outlier_total += baselines::ae_baseline_score(model, o);
        }
        CHECK(outlier_total > genuine_total);

        // Determinism.
        const auto again = baselines::ae_baseline_train(records, cfg);
        CHECK(baselines::ae_baseline_score(again, x) == baselines::ae_baseline_score(model, x));
    }
}

TEST_CASE("baseline model files round-trip with kind discrimination") {
    TempDir dir("baseline");
    const auto records = random_genuine(50, 423);

    auto ocnn = baselines::ocnn_fit(records, 5, "fp-1");
    ocnn.threshold = 1.25;
    const auto ocnn_path = dir.file("ocnn.json");
    baselines::save_ocnn(ocnn, ocnn_path);
    const auto ocnn_loaded = baselines::load_ocnn(ocnn_path);
    CHECK(ocnn_loaded.k == 5);
    CHECK(ocnn_loaded.threshold == 1.25);
    CHECK(ocnn_loaded.train_points.data == ocnn.train_points.data);
    CHECK(ocnn_loaded.data_fingerprint == "fp-1");

    baselines::AeBaselineConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 25;
    cfg.seed = 3;
    auto ae = baselines::ae_baseline_train(records, cfg, "fp-2");
    ae.threshold = 0.5;
    const auto ae_path = dir.file("ae.json");
    baselines::save_ae_baseline(ae, ae_path);
    const auto ae_loaded = baselines::load_ae_baseline(ae_path);
    CHECK(ae_loaded.threshold == 0.5);
    CHECK(ae_loaded.config.epochs == 5);
    std::vector<double> x(records[0].features.begin(), records[0].features.end());
    CHECK(baselines::ae_baseline_score(ae_loaded, x) == baselines::ae_baseline_score(ae, x));

    // Kind discriminator: loading one kind as the other fails distinctly.
    CHECK_THROWS_AS(baselines::load_ocnn(ae_path), CorruptFileError);
    CHECK_THROWS_AS(baselines::load_ae_baseline(ocnn_path), CorruptFileError);
}
