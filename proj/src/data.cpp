#include "ocad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ocad/errors.hpp"

namespace ocad::data {

namespace {

// Splits one CSV line into fields, honoring double quotes.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string current;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    if (in_quotes) throw ParseError(line_no, "unterminated quoted field");
    fields.push_back(std::move(current));
    return fields;
}

double parse_double(const std::string& field, std::size_t line_no, const std::string& column) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || field.empty()) {
        throw ParseError(line_no, "non-numeric value '" + field + "' in column " + column);
    }
    return value;
}

std::vector<std::string> expected_header() {
    std::vector<std::string> names;
    names.emplace_back("Time");
    for (std::size_t i = 1; i <= kFeatureCount; ++i) names.push_back("V" + std::to_string(i));
    names.emplace_back("Amount");
    names.emplace_back("Class");
    return names;
}

constexpr std::uint64_t kHashOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kHashPrime = 0x100000001b3ULL;

void mix(std::uint64_t& h, std::uint64_t value) {
    h ^= value;
    h *= kHashPrime;
}

std::uint64_t double_bits(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty file, expected header row");
    const auto header = split_csv_line(line, 1);
    const auto expected = expected_header();
    if (header != expected) {
        throw ParseError(1, "header mismatch: expected \"Time\",\"V1\",...,\"V28\",\"Amount\",\"Class\"");
    }

    Dataset dataset;
    dataset.schema.feature_names.assign(expected.begin() + 1, expected.begin() + 1 + kFeatureCount);

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
        const auto fields = split_csv_line(line, line_no);
        if (fields.size() != expected.size()) {
            throw ParseError(line_no, "expected " + std::to_string(expected.size()) +
                                          " columns, found " + std::to_string(fields.size()));
        }
        TransactionRecord rec;
        rec.time = parse_double(fields[0], line_no, "Time");
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            const double v = parse_double(fields[1 + j], line_no, expected[1 + j]);
            if (!std::isfinite(v)) throw ParseError(line_no, "non-finite value in " + expected[1 + j]);
            rec.features[j] = v;
        }
        rec.amount = parse_double(fields[1 + kFeatureCount], line_no, "Amount");
        const double cls = parse_double(fields.back(), line_no, "Class");
        if (cls != 0.0 && cls != 1.0) throw ParseError(line_no, "Class must be 0 or 1");
        rec.label = static_cast<int>(cls);
        dataset.records.push_back(rec);
    }

    dataset.schema.row_count = dataset.records.size();
    for (const auto& rec : dataset.records) {
        if (rec.label == 1)
            ++dataset.schema.fraud_count;
        else
            ++dataset.schema.genuine_count;
    }
    if (dataset.records.empty()) throw ParseError(1, "file has a header but no data rows");
    return dataset;
}

std::string fingerprint(const Dataset& dataset) {
    std::uint64_t h = kHashOffset;
    std::uint64_t frauds = 0;
    for (const auto& rec : dataset.records) frauds += rec.label == 1 ? 1 : 0;
    mix(h, dataset.records.size());
    mix(h, frauds);
    for (const auto& rec : dataset.records) {
        for (double v : rec.features) mix(h, double_bits(v));
        mix(h, double_bits(rec.time));
        mix(h, double_bits(rec.amount));
        mix(h, static_cast<std::uint64_t>(rec.label));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

DataSplit split_benchmark(const Dataset& dataset, std::uint64_t seed) {
    std::vector<std::size_t> fraud_rows, genuine_rows;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        (dataset.records[i].label == 1 ? fraud_rows : genuine_rows).push_back(i);
    }
    if (fraud_rows.size() < kTestPerClass + 2) {
        throw ConfigError("split: need at least 492 fraud rows, found " +
                          std::to_string(fraud_rows.size()));
    }
    if (genuine_rows.size() < 2 * kTestPerClass) {
        throw ConfigError("split: need at least 980 genuine rows, found " +
                          std::to_string(genuine_rows.size()));
    }

    Rng rng(derive_seed(seed, "split"));
    const auto fraud_pick = rng.sample_indices(fraud_rows.size(), kTestPerClass);
    const auto genuine_pick = rng.sample_indices(genuine_rows.size(), kTestPerClass);

    DataSplit split;
    split.seed = seed;
    split.data_fingerprint = fingerprint(dataset);

    std::vector<bool> fraud_chosen(fraud_rows.size(), false);
    for (std::size_t p : fraud_pick) {
        split.test_indices.push_back(fraud_rows[p]);
        fraud_chosen[p] = true;
    }
    std::vector<bool> genuine_chosen(genuine_rows.size(), false);
    for (std::size_t p : genuine_pick) {
        split.test_indices.push_back(genuine_rows[p]);
        genuine_chosen[p] = true;
    }
    for (std::size_t i = 0; i < fraud_rows.size(); ++i) {
        if (!fraud_chosen[i]) split.discarded_indices.push_back(fraud_rows[i]);
    }
    for (std::size_t i = 0; i < genuine_rows.size(); ++i) {
        if (!genuine_chosen[i]) split.train_indices.push_back(genuine_rows[i]);
    }
    std::sort(split.test_indices.begin(), split.test_indices.end());
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.discarded_indices.begin(), split.discarded_indices.end());
    return split;
}

FeatureStats feature_stats(std::span<const TransactionRecord> records) {
    if (records.empty()) throw ConfigError("feature_stats: empty input");
    FeatureStats stats;
    const double n = static_cast<double>(records.size());
    for (const auto& rec : records) {
        for (std::size_t j = 0; j < kFeatureCount; ++j) stats.mean[j] += rec.features[j];
    }
    for (std::size_t j = 0; j < kFeatureCount; ++j) stats.mean[j] /= n;
    for (const auto& rec : records) {
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            const double d = rec.features[j] - stats.mean[j];
            stats.stddev[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < kFeatureCount; ++j) stats.stddev[j] = std::sqrt(stats.stddev[j] / n);
    return stats;
}

FeatureStats feature_stats(const Dataset& dataset, std::span<const std::size_t> indices) {
    const auto records = gather(dataset, indices);
    return feature_stats(records);
}

void apply_zscore(std::vector<TransactionRecord>& records, const FeatureStats& stats) {
    for (auto& rec : records) {
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            const double sd = std::max(stats.stddev[j], 1e-12);
            rec.features[j] = (rec.features[j] - stats.mean[j]) / sd;
        }
    }
}

std::vector<std::size_t> sample_subset(const Dataset& dataset, int label, std::size_t count,
                                       Rng& rng, std::span<const std::size_t> exclude) {
    std::set<std::size_t> excluded(exclude.begin(), exclude.end());
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        if (dataset.records[i].label == label && !excluded.contains(i)) pool.push_back(i);
    }
    if (count > pool.size()) {
        throw ConfigError("sample_subset: requested " + std::to_string(count) +
                          " rows with label " + std::to_string(label) + ", only " +
                          std::to_string(pool.size()) + " available");
    }
    const auto picks = rng.sample_indices(pool.size(), count);
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t p : picks) out.push_back(pool[p]);
    return out;  // picks are sorted, pool is ascending, so out is sorted
}

std::vector<TransactionRecord> gather(const Dataset& dataset,
                                      std::span<const std::size_t> indices) {
    std::vector<TransactionRecord> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= dataset.records.size())
            throw ConfigError("row index " + std::to_string(i) + " out of range");
        out.push_back(dataset.records[i]);
    }
    return out;
}

void save_manifest(const DataSplit& split, const Dataset& dataset, const std::string& path) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["seed"] = split.seed;
    doc["data_fingerprint"] = split.data_fingerprint;
    doc["row_count"] = dataset.schema.row_count;
    doc["genuine_count"] = dataset.schema.genuine_count;
    doc["fraud_count"] = dataset.schema.fraud_count;
    doc["train_indices"] = split.train_indices;
    doc["test_indices"] = split.test_indices;
    doc["discarded_indices"] = split.discarded_indices;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump() << "\n";
}

DataSplit load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError("manifest " + path + ": " + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1)
            throw VersionError("manifest " + path + ": unsupported version");
        DataSplit split;
        split.seed = doc.at("seed").get<std::uint64_t>();
        split.data_fingerprint = doc.at("data_fingerprint").get<std::string>();
        split.train_indices = doc.at("train_indices").get<std::vector<std::size_t>>();
        split.test_indices = doc.at("test_indices").get<std::vector<std::size_t>>();
        split.discarded_indices = doc.at("discarded_indices").get<std::vector<std::size_t>>();
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError("manifest " + path + ": " + e.what());
    }
}

}  // namespace ocad::data
