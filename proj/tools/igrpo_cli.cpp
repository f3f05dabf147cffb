#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "igrpo/analysis.hpp"
#include "igrpo/errors.hpp"
#include "igrpo/igrpo.hpp"
#include "igrpo/metrics.hpp"
#include "igrpo/tasks.hpp"
#include "igrpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace igrpo;

namespace {

enum Exit { kOk = 0, kConfig = 2, kAborted = 3, kCheckpoint = 4, kIo = 5 };

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kAnalyzeStream = 0xa7a1;

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << text;
}

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seedOverride;
    std::string task;
};

TrainerConfig load(const Common& c)
{
    TrainerConfig cfg = c.config.empty() ? TrainerConfig{} : load_config(c.config);
    if (c.seedOverride) {
        cfg.seed = *c.seedOverride;
    }
    if (!c.task.empty()) {
        cfg.task = task_kind_from_string(c.task);
    }
    return cfg.resolved();
}

std::vector<int> pass_points(int attempts)
{
    std::vector<int> pts;
    for (int n = 1; n <= attempts; n *= 2) {
        pts.push_back(n);
    }
    if (pts.back() != attempts) {
        pts.push_back(attempts);
    }
    return pts;
}

std::string pass_table(const PassAtN& p, int attempts)
{
    std::ostringstream os;
    os << "n,pass_at_n,problems\n";
    for (int n : pass_points(attempts)) {
        os << n << ',' << fmt(p.at(n)) << ',' << p.problems << '\n';
    }
    return os.str();
}

struct RunSummary {
    double finalReward = 0.0;
    double tailReward = 0.0;  // mean over the last tenth of iterations
    double finalEntropy = 0.0;
    std::int64_t rollouts = 0;
};

RunSummary summarize(const std::vector<MetricsRecord>& m)
{
    RunSummary s;
    if (m.empty()) {
        return s;
    }
    s.finalReward = m.back().meanStage2Reward;
    s.finalEntropy = m.back().meanTokenEntropyNats;
    const std::size_t tail = std::max<std::size_t>(1, m.size() / 10);
    RunningMean mean;
    for (std::size_t i = m.size() - tail; i < m.size(); ++i) {
        mean.add(m[i].meanStage2Reward);
    }
    s.tailReward = mean.value();
    for (const auto& r : m) {
        s.rollouts += r.rolloutCount;
    }
    return s;
}

// Trains one run into `dir`. Returns the exit status and the held-out pass@1.
int run_training(const TrainerConfig& cfg, const fs::path& dir, double* heldout_pass1,
                 RunSummary* summary)
{
    fs::create_directories(dir);
    write_file(dir / "config.echo", config_echo(cfg));
    const auto split = make_split(cfg.task_spec(), static_cast<std::size_t>(cfg.heldout_size),
                                  cfg.vocabulary());
    const auto result = train(cfg, split.train);
    export_metrics(result.metrics, dir / "metrics.csv", ExportFormat::Csv);
    export_metrics(result.metrics, dir / "metrics.jsonl", ExportFormat::Jsonl);
    save_checkpoint((dir / "checkpoint.final").string(), result.checkpoint);

    const auto s = summarize(result.metrics);
    if (summary) {
        *summary = s;
    }
    if (heldout_pass1) {
        Rng rng = derive_rng(cfg.seed, kEvalStream);
        *heldout_pass1 = split.heldOut.empty()
                             ? 0.0
                             : evaluate(result.params, split.heldOut, 1, rng, cfg.max_completion_len,
                                        cfg.temperature)
                                   .at(1);
    }
    std::printf("%s: %zu iterations, final reward %.4f, tail reward %.4f, entropy %.4f nats\n",
                dir.string().c_str(), result.metrics.size(), s.finalReward, s.tailReward,
                s.finalEntropy);
    if (result.abortReason) {
        std::fprintf(stderr, "training aborted: %s\n", result.abortReason->c_str());
        return kAborted;
    }
    return kOk;
}

int cmd_train(const Common& c)
{
    const auto cfg = load(c);
    return run_training(cfg, c.out, nullptr, nullptr);
}

int parse_int(const std::string& key, const std::string& s)
{
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ConfigError(key + ": cannot parse '" + s + "' as an integer");
    }
    return v;
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

int cmd_sweep(const Common& c, const std::string& axis, const std::string& values)
{
    const auto base = load(c);
    const auto items = split_list(values);
    if (items.empty()) {
        throw ConfigError("values: at least one sweep value is required");
    }
    if (axis != "beta" && axis != "completions") {
        throw ConfigError("axis: expected beta or completions, got '" + axis + "'");
    }
    std::vector<TrainerConfig> runs;
    for (std::size_t i = 0; i < items.size(); ++i) {
        TrainerConfig cfg = base;
        cfg.seed = base.seed + i;
        if (axis == "beta") {
            apply_config_entry(cfg, "beta", items[i]);
        } else {
            const int total = parse_int("values", items[i]);
            if (total < 4 || total % 2 != 0) {
                throw ConfigError("values: completion total " + items[i] +
                                  " must be even and >= 4 to split evenly across both stages");
            }
            cfg.mode = TrainMode::Igrpo;
            cfg.num_drafts = total / 2;
            cfg.group_size = total / 2;
            cfg.grpo_group_size = total;
        }
        runs.push_back(cfg.resolved());
    }

    const fs::path out(c.out);
    fs::create_directories(out);
    std::ostringstream table;
    table << "axis,value,seed,num_drafts,group_size,final_reward,tail_reward,final_entropy,"
             "rollouts,heldout_pass_at_1,status\n";
    int worst = kOk;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto dir = out / ("run_" + std::to_string(i));
        double pass1 = 0.0;
        RunSummary s;
        const int status = run_training(runs[i], dir, &pass1, &s);
        worst = std::max(worst, status);
        table << axis << ',' << items[i] << ',' << runs[i].seed << ',' << runs[i].num_drafts << ','
              << runs[i].group_size << ',' << fmt(s.finalReward) << ',' << fmt(s.tailReward) << ','
              << fmt(s.finalEntropy) << ',' << s.rollouts << ',' << fmt(pass1) << ',' << status
              << '\n';
    }
    write_file(out / "sweep_summary.csv", table.str());
    std::cout << table.str();
    return worst;
}

Checkpoint open_checkpoint(const std::string& path, const TrainerConfig& cfg)
{
    auto ckpt = load_checkpoint(path);
    if (ckpt.params.vocab.size != cfg.vocab_size || ckpt.params.features.window != cfg.window) {
        throw CheckpointError("checkpoint shape does not match vocab_size/window of the config");
    }
    return ckpt;
}

int cmd_eval(const Common& c, const std::string& checkpoint, int attempts)
{
    const auto cfg = load(c);
    if (attempts < 1 || attempts > 1024) {
        throw ConfigError("attempts: must lie in [1, 1024]");
    }
    const auto ckpt = open_checkpoint(checkpoint, cfg);
    const auto split = make_split(cfg.task_spec(), static_cast<std::size_t>(cfg.heldout_size),
                                  cfg.vocabulary());
    const auto& problems = split.heldOut.empty() ? split.train : split.heldOut;

    Rng rng = derive_rng(cfg.seed, kEvalStream);
    const auto pass = evaluate(ckpt.params, problems, attempts, rng, cfg.max_completion_len,
                               cfg.temperature);
    const fs::path reports = fs::path(c.out) / "reports";
    fs::create_directories(reports);
    write_file(fs::path(c.out) / "config.echo", config_echo(cfg));
    const auto table = pass_table(pass, attempts);
    write_file(reports / "pass_at_n.csv", table);
    std::cout << table;
    return kOk;
}

std::vector<int> parse_ints(const std::string& key, const std::string& s)
{
    std::vector<int> out;
    for (const auto& item : split_list(s)) {
        const int v = parse_int(key, item);
        if (v < 1) {
            throw ConfigError(key + ": values must be >= 1");
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw ConfigError(key + ": at least one value is required");
    }
    return out;
}

struct AnalyzeFlags {
    std::string nGrid = "1,2,4,8";
    std::size_t trials = 10000;
    int drafts = 4;
    int groupSize = 4;
    int grpoGroupSize = 8;
    std::size_t promptIndex = 0;
};

int cmd_analyze(const Common& c, const std::string& checkpoint, const AnalyzeFlags& f)
{
    const auto cfg = load(c);
    const auto grid = parse_ints("n-grid", f.nGrid);
    if (f.trials < 1) {
        throw ConfigError("trials: must be >= 1");
    }
    const auto ckpt = open_checkpoint(checkpoint, cfg);
    const auto vocab = cfg.vocabulary();
    const auto split = make_split(cfg.task_spec(), static_cast<std::size_t>(cfg.heldout_size), vocab);
    const auto& problems = split.heldOut.empty() ? split.train : split.heldOut;
    if (f.promptIndex >= problems.size()) {
        throw ConfigError("prompt-index: out of range for the evaluation set");
    }
    const Problem& prob = problems[f.promptIndex];
    const Sampler sampler(ckpt.params, cfg.max_completion_len, cfg.temperature);
    const RewardFn reward = [&](std::span<const Token> comp) {
        return binary_reward(comp, prob.answer, vocab);
    };

    std::ostringstream csv;
    csv << "n,p_hat,closed_form,mc_estimate,mc_trials,std_error,z,within_3sigma\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Rng rng = derive_rng(cfg.seed, kAnalyzeStream, i);
        const auto r = verify_proposition(sampler, prob.prompt, reward, grid[i], f.trials, rng);
        csv << r.n << ',' << fmt(r.p) << ',' << fmt(r.closedForm) << ',' << fmt(r.mcEstimate) << ','
            << r.mcTrials << ',' << fmt(r.stdError) << ',' << fmt(r.z_score()) << ','
            << (r.within(3.0) ? "true" : "false") << '\n';
        std::cout << format_report(r) << '\n';
    }

    const BudgetSplit budget{f.drafts, f.groupSize, f.grpoGroupSize};
    budget.validate(false);
    const auto b = budget_report(budget);
    std::cout << format_report(b) << '\n';

    const fs::path reports = fs::path(c.out) / "reports";
    fs::create_directories(reports);
    write_file(fs::path(c.out) / "config.echo", config_echo(cfg));
    write_file(reports / "proposition.csv", csv.str());
    write_file(reports / "budget.txt", format_report(b) + "\n");
    return kOk;
}

int cmd_report(const std::string& runs, const std::string& out)
{
    const auto dirs = split_list(runs);
    if (dirs.empty()) {
        throw ConfigError("runs: at least one run directory is required");
    }
    const fs::path reports = fs::path(out) / "reports";
    fs::create_directories(reports);
    std::ostringstream cross;
    cross << "run,iterations,final_reward,tail_reward,final_entropy,rollouts\n";
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const auto metrics = import_metrics(fs::path(dirs[i]) / "metrics.csv", ExportFormat::Csv);
        const auto s = summarize(metrics);
        std::ostringstream per;
        per << "iteration,mean_stage2_reward,mean_best_draft_reward,mean_token_entropy_nats,"
               "mean_response_length\n";
        for (const auto& m : metrics) {
            per << m.iteration << ',' << fmt(m.meanStage2Reward) << ',' << fmt(m.meanBestDraftReward)
                << ',' << fmt(m.meanTokenEntropyNats) << ',' << fmt(m.meanResponseLength) << '\n';
        }
        write_file(reports / ("run_" + std::to_string(i) + ".csv"), per.str());
        cross << dirs[i] << ',' << metrics.size() << ',' << fmt(s.finalReward) << ','
              << fmt(s.tailReward) << ',' << fmt(s.finalEntropy) << ',' << s.rollouts << '\n';
    }
    write_file(reports / "summary.csv", cross.str());
    std::cout << cross.str();
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"GRPO / iGRPO on linear softmax policies over synthetic tasks"};
    app.require_subcommand(1);

    Common common;
    std::string checkpoint;
    std::string axis;
    std::string values;
    std::string runs;
    int attempts = 1;
    AnalyzeFlags af;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", common.config, "config file (key = value lines)");
        if (needs_config) {
            opt->required();
        }
        sub->add_option("--out", common.out, "output directory")->required();
        sub->add_option("--seed-override", common.seedOverride, "replace the config seed");
        sub->add_option("--task", common.task, "addition, parity or sort");
    };

    auto* train_cmd = app.add_subcommand("train", "train one run");
    add_common(train_cmd, true);

    auto* eval_cmd = app.add_subcommand("eval", "pass@n of a checkpoint on the held-out set");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--attempts", attempts, "1..1024");

    auto* sweep_cmd = app.add_subcommand("sweep", "one run per value along an axis");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--axis", axis, "beta or completions")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->required();

    auto* analyze_cmd = app.add_subcommand("analyze", "best-of-N check and budget report");
    add_common(analyze_cmd, false);
    analyze_cmd->add_option("--checkpoint", checkpoint)->required();
    analyze_cmd->add_option("--n-grid", af.nGrid, "comma-separated draft counts");
    analyze_cmd->add_option("--trials", af.trials, "Monte Carlo trials per N");
    analyze_cmd->add_option("--drafts", af.drafts, "budget report N");
    analyze_cmd->add_option("--group-size", af.groupSize, "budget report G");
    analyze_cmd->add_option("--grpo-group-size", af.grpoGroupSize, "budget report G_grpo");
    analyze_cmd->add_option("--prompt-index", af.promptIndex, "evaluation problem to analyze");

    auto* report_cmd = app.add_subcommand("report", "summary CSVs over finished runs");
    report_cmd->add_option("--runs", runs, "comma-separated run directories")->required();
    report_cmd->add_option("--out", common.out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            return cmd_train(common);
        }
        if (*eval_cmd) {
            return cmd_eval(common, checkpoint, attempts);
        }
        if (*sweep_cmd) {
            return cmd_sweep(common, axis, values);
        }
        if (*analyze_cmd) {
            return cmd_analyze(common, checkpoint, af);
        }
        return cmd_report(runs, common.out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kCheckpoint;
    } catch (const TrainingAborted& e) {
        std::fprintf(stderr, "training aborted: %s\n", e.what());
        return kAborted;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    }
}
