#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ocad/rng.hpp"

namespace ocad::data {

inline constexpr std::size_t kFeatureCount = 28;

// One labeled transaction. Time and amount are parsed for report readability
// but never enter the model; the 28 PCA components are the input.
struct TransactionRecord {
    std::array<double, kFeatureCount> features{};
    double time = 0.0;
    double amount = 0.0;
    int label = 0;  // 0 genuine, 1 fraud
};

struct DatasetSchema {
    std::vector<std::string> feature_names;
    std::size_t feature_count = kFeatureCount;
    std::size_t row_count = 0;
    std::size_t genuine_count = 0;
    std::size_t fraud_count = 0;
};

struct Dataset {
    std::vector<TransactionRecord> records;
    DatasetSchema schema;
};

// Parses the benchmark CSV (RFC-4180, quoted headers). The header must be
// exactly "Time","V1",...,"V28","Amount","Class"; every error is addressed by
// its 1-based line number.
Dataset load_csv(const std::string& path);

// Test set is 490 fraud + 490 genuine; the remaining genuine rows form the
// training set and the unchosen fraud rows are discarded.
inline constexpr std::size_t kTestPerClass = 490;

struct DataSplit {
    std::uint64_t seed = 0;
    std::string data_fingerprint;
    std::vector<std::size_t> train_indices;      // genuine only, sorted
    std::vector<std::size_t> test_indices;       // sorted, both classes
    std::vector<std::size_t> discarded_indices;  // fraud rows left out
};

DataSplit split_benchmark(const Dataset& dataset, std::uint64_t seed);

struct FeatureStats {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> stddev{};  // population std
};

FeatureStats feature_stats(std::span<const TransactionRecord> records);
FeatureStats feature_stats(const Dataset& dataset, std::span<const std::size_t> indices);

// Uniform sample without replacement of `count` rows with the given label,
// never touching rows listed in `exclude`. Returned indices are sorted.
std::vector<std::size_t> sample_subset(const Dataset& dataset, int label, std::size_t count,
                                       Rng& rng, std::span<const std::size_t> exclude = {});

// Optional experiment helper: z-scores the V-features in place against the
// given statistics. The modeling pipeline keeps features raw by default (the
// benchmark data is already PCA output).
void apply_zscore(std::vector<TransactionRecord>& records, const FeatureStats& stats);

// Content hash binding models to the data they were trained on.
std::string fingerprint(const Dataset& dataset);

void save_manifest(const DataSplit& split, const Dataset& dataset, const std::string& path);
DataSplit load_manifest(const std::string& path);

std::vector<TransactionRecord> gather(const Dataset& dataset,
                                      std::span<const std::size_t> indices);

}  // namespace ocad::data
