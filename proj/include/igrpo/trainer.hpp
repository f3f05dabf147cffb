#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igrpo/igrpo.hpp"
#include "igrpo/metrics.hpp"
#include "igrpo/objective.hpp"
#include "igrpo/policy.hpp"
#include "igrpo/tasks.hpp"

namespace igrpo {

enum class TrainMode { Grpo, Igrpo };

/// Every knob of a run. Config files use these field names as keys.
struct TrainerConfig {
    TrainMode mode = TrainMode::Igrpo;
    double epsilon = 0.2;
    double beta = 0.0;
    int num_drafts = 4;
    int group_size = 4;
    int grpo_group_size = 8;
    bool matched_budget = true;
    int batch_size = 32;
    int iterations = 300;
    double learning_rate = 0.5;
    double min_lr_rate = 0.1;
    double warmup_ratio = 0.1;
    int max_prompt_len = 32;
    int max_completion_len = 8;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    StdDivisor std_divisor = StdDivisor::Population;
    int inner_epochs = 1;
    bool condition_on_failed_draft = true;

    TaskKind task = TaskKind::Addition;
    int task_size = 2;
    int dataset_size = 512;
    int heldout_size = 128;
    RewardKind reward = RewardKind::BinaryExact;
    double format_weight = 0.0;

    int vocab_size = 16;
    int window = 4;
    int threads = 1;
    bool record_wall_time = false;

    /// Mode-implied fields applied (grpo: group_size = grpo_group_size),
    /// then every invariant checked. Throws ConfigError naming the field.
    TrainerConfig resolved() const;
    void validate() const;

    BudgetSplit split() const { return {num_drafts, group_size, grpo_group_size}; }
    Vocabulary vocabulary() const { return Vocabulary::with_reserved_tail(vocab_size); }
    TaskSpec task_spec() const;
    RewardSpec reward_spec() const;
};

std::string to_string(TrainMode mode);

/// Flat `key = value` text; `#` starts a comment. Unknown or repeated
/// keys are errors. Missing keys keep their defaults.
TrainerConfig parse_config(std::istream& in);
TrainerConfig load_config(const std::string& path);
void apply_config_entry(TrainerConfig& cfg, const std::string& key, const std::string& value);

/// Fully resolved configuration, one key per line in declaration order.
std::string config_echo(const TrainerConfig& cfg);

/// FNV-1a of the echo with grpo written as its igrpo N = 0 equivalent, so
/// the two spellings of the same run share a hash.
std::uint64_t config_hash(const TrainerConfig& cfg);

/// Linear warmup over warmup_ratio * iterations steps, then cosine decay
/// from learning_rate to min_lr_rate * learning_rate at step == iterations.
double lr_at(int step, const TrainerConfig& cfg);

struct Checkpoint {
    PolicyParams params;
    std::int64_t iteration = 0;  // iterations completed
    std::string rngState;        // dataset-order stream at the start of the current epoch
    std::uint64_t configHash = 0;

    bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
    PolicyParams params;
    std::vector<MetricsRecord> metrics;
    Checkpoint checkpoint;
    std::size_t samplerCalls = 0;
    std::optional<std::string> abortReason;
};

struct TrainObserver {
    // Called once per iteration with the collected batch, before the update.
    std::function<void(std::int64_t iteration, std::span<const Collected> batch,
                       const PolicyParams& snapshot)>
        onBatch;
    std::function<void(const MetricsRecord&)> onRecord;
    // Asked after each completed iteration; true ends the run there with a
    // resumable checkpoint.
    std::function<bool(std::int64_t completed)> stop;
};

/// Algorithm loop: snapshot, two-stage collection per prompt, surrogate
/// gradient ascent with the scheduled learning rate. Resumes from `resume`
/// when given. Stops early (abortReason set) on a non-finite update.
TrainResult train(const TrainerConfig& config, std::span<const Problem> dataset,
                  const std::optional<Checkpoint>& resume = std::nullopt,
                  const TrainObserver& observer = {});

struct PassAtN {
    std::vector<double> passAt;  // passAt[n - 1]
    std::size_t problems = 0;

    double at(int n) const { return passAt.at(static_cast<std::size_t>(n - 1)); }
};

/// Single-shot sampling from the bare prompt; a problem counts at n when
/// one of its first n samples is exactly correct.
PassAtN evaluate(const PolicyParams& params, std::span<const Problem> problems, int attempts,
                 Rng& rng, int max_len, double temperature = 1.0);

}  // namespace igrpo
