#include "igrpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <optional>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include "igrpo/errors.hpp"

namespace igrpo {

double lr_at(int step, const TrainerConfig& cfg)
{
    const double total = static_cast<double>(cfg.iterations);
    const double s = static_cast<double>(step);
    const double warmup = std::floor(cfg.warmup_ratio * total);
    if (s < warmup) {
        return cfg.learning_rate * s / warmup;
    }
    const double span = total - warmup;
    const double progress = span > 0.0 ? std::clamp((s - warmup) / span, 0.0, 1.0) : 1.0;
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return cfg.learning_rate * (cfg.min_lr_rate + (1.0 - cfg.min_lr_rate) * cosine);
}

// ---------------------------------------------------------------------------

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt)
{
    out << "igrpo-checkpoint 1\n"
        << "iteration " << ckpt.iteration << '\n'
        << "config_hash " << ckpt.configHash << '\n'
        << "rng " << ckpt.rngState << '\n';
    write_policy(out, ckpt.params);
}

Checkpoint read_checkpoint(std::istream& in)
{
    Checkpoint c;
    std::string line;
    auto expect = [&](const std::string& key) {
        if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) {
            throw CheckpointError("checkpoint missing '" + key + "' line");
        }
        return line.substr(key.size() + 1);
    };
    if (!std::getline(in, line) || line != "igrpo-checkpoint 1") {
        throw CheckpointError("not an igrpo checkpoint (bad header)");
    }
    try {
        c.iteration = std::stoll(expect("iteration"));
        c.configHash = std::stoull(expect("config_hash"));
    } catch (const std::logic_error&) {
        throw CheckpointError("malformed checkpoint metadata");
    }
    c.rngState = expect("rng");
    rng_from_state(c.rngState);  // validates
    c.params = read_policy(in);
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    write_checkpoint(f, ckpt);
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw CheckpointError("cannot open checkpoint " + path);
    }
    return read_checkpoint(f);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kOrderStream = 0xba7c4;

// Walks the dataset in per-epoch shuffled order. Each epoch's permutation
// comes from its own stream; checkpoints record the stream of the epoch
// the next iteration draws from.
class BatchOrder {
public:
    BatchOrder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::vector<std::size_t> batch(std::int64_t iteration, int batch, std::int64_t& epoch_out)
    {
        std::vector<std::size_t> out;
        out.reserve(static_cast<std::size_t>(batch));
        const auto first = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch);
        epoch_out = epoch_of(first);
        for (int k = 0; k < batch; ++k) {
            const auto pos = first + static_cast<std::uint64_t>(k);
            const auto epoch = epoch_of(pos);
            if (epoch != cachedEpoch_) {
                order_.resize(n_);
                for (std::size_t i = 0; i < n_; ++i) {
                    order_[i] = i;
                }
                Rng rng = stream(epoch);
                deterministic_shuffle(order_, rng);
                cachedEpoch_ = epoch;
            }
            out.push_back(order_[pos % n_]);
        }
        return out;
    }

    std::int64_t epoch_of(std::uint64_t pos) const { return static_cast<std::int64_t>(pos / n_); }

    Rng stream(std::int64_t epoch) const
    {
        if (restored_ && epoch == restoredEpoch_) {
            return *restored_;
        }
        return derive_rng(seed_, kOrderStream, static_cast<std::uint64_t>(epoch));
    }

    void restore(std::int64_t epoch, const std::string& state)
    {
        restored_ = rng_from_state(state);
        restoredEpoch_ = epoch;
        cachedEpoch_ = -1;
    }

private:
    std::size_t n_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::int64_t cachedEpoch_ = -1;
    std::optional<Rng> restored_;
    std::int64_t restoredEpoch_ = -1;
};

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn)
{
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = static_cast<std::size_t>(t); i < n;
                     i += static_cast<std::size_t>(threads)) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace

TrainResult train(const TrainerConfig& config, std::span<const Problem> dataset,
                  const std::optional<Checkpoint>& resume, const TrainObserver& observer)
{
    const TrainerConfig cfg = config.resolved();
    if (dataset.empty()) {
        throw InvalidInputError("training dataset is empty");
    }
    const auto vocab = cfg.vocabulary();
    const auto hash = config_hash(cfg);
    const auto reward_spec = cfg.reward_spec();

    TrainResult result;
    const PolicyParams reference = PolicyParams::zeros(vocab, cfg.window);
    PolicyParams theta = reference;
    std::int64_t start = 0;

    BatchOrder order(dataset.size(), cfg.seed);
    if (resume) {
        if (resume->configHash != hash) {
            throw CheckpointError("checkpoint was written by a different configuration");
        }
        if (resume->params.vocab.size != vocab.size || resume->params.features.window != cfg.window) {
            throw CheckpointError("checkpoint policy shape does not match the configuration");
        }
        theta = resume->params;
        start = resume->iteration;
        order.restore(order.epoch_of(static_cast<std::uint64_t>(start) *
                                     static_cast<std::uint64_t>(cfg.batch_size)),
                      resume->rngState);
    }

    const BudgetSplit split = cfg.split();
    CollectOptions collect_opts;
    collect_opts.maxPromptLen = static_cast<std::size_t>(cfg.max_prompt_len);
    collect_opts.divisor = cfg.std_divisor;
    collect_opts.conditionOnFailedDraft = cfg.condition_on_failed_draft;

    SurrogateOptions sopts;
    sopts.epsilon = cfg.epsilon;
    sopts.beta = cfg.beta;

    auto state_at = [&](std::int64_t iteration) {
        return rng_state(order.stream(order.epoch_of(static_cast<std::uint64_t>(iteration) *
                                                     static_cast<std::uint64_t>(cfg.batch_size))));
    };
    for (std::int64_t it = start; it < cfg.iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        const PolicyParams snapshot = theta;
        const Sampler sampler(snapshot, cfg.max_completion_len, cfg.temperature);

        std::int64_t epoch = 0;
        const auto picks = order.batch(it, cfg.batch_size, epoch);
        MetricsRecord rec;
        rec.iteration = it;
        rec.epoch = epoch;
        rec.learningRate = lr_at(static_cast<int>(it) + 1, cfg);
        try {
            std::vector<Collected> batch(picks.size());
            parallel_for(picks.size(), cfg.threads, [&](std::size_t k) {
                const Problem& prob = dataset[picks[k]];
                RewardFn reward = [&](std::span<const Token> c) {
                    return score_completion(reward_spec, c, prob.answer, vocab);
                };
                Rng rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(it) + 1, k);
                batch[k] = igrpo_collect(sampler, reference, prob.prompt, split, reward, collect_opts, rng);
            });
            if (observer.onBatch) {
                observer.onBatch(it, batch, snapshot);
            }

            std::vector<RolloutGroup> groups;
            groups.reserve(batch.size());
            RunningMean stage2_reward;
            RunningMean best_draft;
            RunningMean length;
            for (const auto& c : batch) {
                groups.push_back(c.group);
                for (std::size_t j = 0; j < c.group.size(); ++j) {
                    stage2_reward.add(c.group.rewards[j]);
                    length.add(static_cast<double>(c.group.completions[j].size()));
                }
                if (!c.drafts.empty()) {
                    best_draft.add(c.drafts.best_reward());
                }
            }

            rec.meanStage2Reward = stage2_reward.value();
            rec.meanBestDraftReward = best_draft.value();
            rec.meanResponseLength = length.value();
            rec.meanTokenEntropyNats = mean_token_entropy(groups, snapshot);
            rec.rolloutCount = static_cast<std::int64_t>(sampler.calls());
            result.samplerCalls += sampler.calls();

            for (int e = 0; e < cfg.inner_epochs; ++e) {
                const auto rep = surrogate(groups, theta, sopts);
                theta.weights.add_scaled(rep.gradient, rec.learningRate);
                if (!theta.weights.all_finite()) {
                    throw NumericalStateError("update produced non-finite weights");
                }
                rec.clipFraction = rep.clipFraction;
                rec.meanKL = rep.meanKL;
            }
        } catch (const NumericalStateError& e) {
            result.abortReason = "iteration " + std::to_string(it) + ": " + e.what();
            result.metrics.push_back(rec);
            theta = snapshot;
            result.checkpoint = Checkpoint{theta, it, state_at(it), hash};
            result.params = theta;
            return result;
        }
        ++theta.version;

        if (cfg.record_wall_time) {
            rec.wallTimeSeconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        result.metrics.push_back(rec);
        if (observer.onRecord) {
            observer.onRecord(rec);
        }
        if (observer.stop && observer.stop(it + 1)) {
            result.params = theta;
            result.checkpoint = Checkpoint{theta, it + 1, state_at(it + 1), hash};
            return result;
        }
    }

    const auto done = std::max<std::int64_t>(start, cfg.iterations);
    result.params = theta;
    result.checkpoint = Checkpoint{theta, done, state_at(done), hash};
    return result;
}

// ---------------------------------------------------------------------------

PassAtN evaluate(const PolicyParams& params, std::span<const Problem> problems, int attempts,
                 Rng& rng, int max_len, double temperature)
{
    if (attempts < 1) {
        throw InvalidInputError("evaluation needs at least one attempt");
    }
    PassAtN out;
    out.problems = problems.size();
    const auto n_attempts = static_cast<std::size_t>(attempts);
    std::vector<std::size_t> solved_by(n_attempts, 0);
    for (const auto& prob : problems) {
        Rng local(rng());
        std::size_t first_hit = n_attempts;
        for (std::size_t a = 0; a < n_attempts; ++a) {
            const auto c = sample_sequence(params, prob.prompt, max_len, local, temperature);
            if (first_hit == n_attempts && binary_reward(c, prob.answer, params.vocab) == 1.0) {
                first_hit = a;
            }
        }
        if (first_hit < n_attempts) {
            ++solved_by[first_hit];
        }
    }
    out.passAt.resize(n_attempts, 0.0);
    std::size_t cum = 0;
    for (std::size_t a = 0; a < n_attempts; ++a) {
        cum += solved_by[a];
        out.passAt[a] = problems.empty() ? 0.0
                                         : static_cast<double>(cum) / static_cast<double>(problems.size());
    }
    return out;
}

}  // namespace igrpo
