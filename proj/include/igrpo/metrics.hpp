#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "igrpo/objective.hpp"

namespace igrpo {

/// One row per training iteration. CSV columns follow field order.
struct MetricsRecord {
    std::int64_t iteration = 0;
    double meanStage2Reward = 0.0;
    double meanBestDraftReward = 0.0;  // 0 when no drafts are drawn
    double meanTokenEntropyNats = 0.0;
    double meanResponseLength = 0.0;
    double clipFraction = 0.0;
    double meanKL = 0.0;
    double learningRate = 0.0;
    std::int64_t rolloutCount = 0;
    double wallTimeSeconds = 0.0;
    std::int64_t epoch = 0;  // dataset pass the batch was drawn from

    bool operator==(const MetricsRecord&) const = default;
};

const std::vector<std::string>& metrics_columns();

/// Per-token Shannon entropy (nats) of the policy at every completion
/// position of every group, averaged with equal weight per token.
/// Throws InvalidInputError when the batch holds no tokens.
double mean_token_entropy(std::span<const RolloutGroup> batch, const PolicyParams& params);

enum class ExportFormat { Csv, Jsonl };

void export_metrics(std::span<const MetricsRecord> records, const std::filesystem::path& path,
                    ExportFormat format);
std::vector<MetricsRecord> import_metrics(const std::filesystem::path& path, ExportFormat format);

std::string metrics_csv(std::span<const MetricsRecord> records);
std::string metrics_jsonl(std::span<const MetricsRecord> records);

/// Running mean that returns x exactly when every sample equals x.
class RunningMean {
public:
    void add(double x)
    {
        ++n_;
        mean_ += (x - mean_) / static_cast<double>(n_);
    }
    double value() const { return mean_; }
    std::size_t count() const { return n_; }

private:
    double mean_ = 0.0;
    std::size_t n_ = 0;
};

}  // namespace igrpo
