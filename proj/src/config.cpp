#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "igrpo/errors.hpp"
#include "igrpo/trainer.hpp"

namespace igrpo {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value)
{
    T v{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ConfigError(key + ": cannot parse '" + value + "' as a number");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1") {
        return true;
    }
    if (value == "false" || value == "0") {
        return false;
    }
    throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw ConfigError(message);
    }
}

}  // namespace

std::string to_string(TrainMode mode)
{
    return mode == TrainMode::Grpo ? "grpo" : "igrpo";
}

void apply_config_entry(TrainerConfig& c, const std::string& key, const std::string& v)
{
    if (key == "mode") {
        if (v == "grpo") {
            c.mode = TrainMode::Grpo;
        } else if (v == "igrpo") {
            c.mode = TrainMode::Igrpo;
        } else {
            throw ConfigError("mode: expected grpo or igrpo, got '" + v + "'");
        }
    } else if (key == "epsilon") {
        c.epsilon = parse_number<double>(key, v);
    } else if (key == "beta") {
        c.beta = parse_number<double>(key, v);
    } else if (key == "num_drafts") {
        c.num_drafts = parse_number<int>(key, v);
    } else if (key == "group_size") {
        c.group_size = parse_number<int>(key, v);
    } else if (key == "grpo_group_size") {
        c.grpo_group_size = parse_number<int>(key, v);
    } else if (key == "matched_budget") {
        c.matched_budget = parse_bool(key, v);
    } else if (key == "batch_size") {
        c.batch_size = parse_number<int>(key, v);
    } else if (key == "iterations") {
        c.iterations = parse_number<int>(key, v);
    } else if (key == "learning_rate") {
        c.learning_rate = parse_number<double>(key, v);
    } else if (key == "min_lr_rate") {
        c.min_lr_rate = parse_number<double>(key, v);
    } else if (key == "warmup_ratio") {
        c.warmup_ratio = parse_number<double>(key, v);
    } else if (key == "max_prompt_len") {
        c.max_prompt_len = parse_number<int>(key, v);
    } else if (key == "max_completion_len") {
        c.max_completion_len = parse_number<int>(key, v);
    } else if (key == "temperature") {
        c.temperature = parse_number<double>(key, v);
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "std_divisor") {
        if (v == "population") {
            c.std_divisor = StdDivisor::Population;
        } else if (v == "sample") {
            c.std_divisor = StdDivisor::Sample;
        } else {
            throw ConfigError("std_divisor: expected population or sample, got '" + v + "'");
        }
    } else if (key == "inner_epochs") {
        c.inner_epochs = parse_number<int>(key, v);
    } else if (key == "condition_on_failed_draft") {
        c.condition_on_failed_draft = parse_bool(key, v);
    } else if (key == "task") {
        c.task = task_kind_from_string(v);
    } else if (key == "task_size") {
        c.task_size = parse_number<int>(key, v);
    } else if (key == "dataset_size") {
        c.dataset_size = parse_number<int>(key, v);
    } else if (key == "heldout_size") {
        c.heldout_size = parse_number<int>(key, v);
    } else if (key == "reward") {
        c.reward = reward_kind_from_string(v);
    } else if (key == "format_weight") {
        c.format_weight = parse_number<double>(key, v);
    } else if (key == "vocab_size") {
        c.vocab_size = parse_number<int>(key, v);
    } else if (key == "window") {
        c.window = parse_number<int>(key, v);
    } else if (key == "threads") {
        c.threads = parse_number<int>(key, v);
    } else if (key == "record_wall_time") {
        c.record_wall_time = parse_bool(key, v);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

TrainerConfig parse_config(std::istream& in)
{
    TrainerConfig cfg;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        apply_config_entry(cfg, key, value);
    }
    return cfg;
}

TrainerConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("cannot open config file " + path);
    }
    return parse_config(f);
}

TrainerConfig TrainerConfig::resolved() const
{
    TrainerConfig c = *this;
    if (c.mode == TrainMode::Grpo) {
        require(c.num_drafts == 0, "num_drafts: mode=grpo requires num_drafts = 0, got " +
                                       std::to_string(c.num_drafts));
        c.group_size = c.grpo_group_size;
    }
    c.validate();
    return c;
}

void TrainerConfig::validate() const
{
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon: must lie in (0, 1)");
    require(beta >= 0.0, "beta: must be >= 0");
    require(num_drafts >= 0, "num_drafts: must be >= 0");
    require(group_size >= 2, "group_size: must be >= 2");
    require(grpo_group_size >= 2, "grpo_group_size: must be >= 2");
    if (mode == TrainMode::Grpo) {
        require(num_drafts == 0, "num_drafts: mode=grpo requires num_drafts = 0");
        require(group_size == grpo_group_size, "group_size: mode=grpo requires group_size = grpo_group_size");
    }
    if (matched_budget) {
        require(num_drafts + group_size == grpo_group_size,
                "group_size: matched_budget requires num_drafts + group_size = grpo_group_size");
    }
    require(batch_size >= 1, "batch_size: must be >= 1");
    require(iterations >= 0, "iterations: must be >= 0");
    require(learning_rate > 0.0, "learning_rate: must be > 0");
    require(min_lr_rate >= 0.0 && min_lr_rate <= 1.0, "min_lr_rate: must lie in [0, 1]");
    require(warmup_ratio >= 0.0 && warmup_ratio < 1.0, "warmup_ratio: must lie in [0, 1)");
    require(max_completion_len >= 1, "max_completion_len: must be >= 1");
    require(max_prompt_len >= 3, "max_prompt_len: must be >= 3");
    require(temperature > 0.0, "temperature: must be > 0");
    require(inner_epochs >= 1, "inner_epochs: must be >= 1");
    require(task_size >= 1, "task_size: must be >= 1");
    require(dataset_size >= 1, "dataset_size: must be >= 1");
    require(heldout_size >= 0, "heldout_size: must be >= 0");
    require(vocab_size >= 6, "vocab_size: must be >= 6");
    require(window >= 1, "window: must be >= 1");
    require(threads >= 1, "threads: must be >= 1");
    // Dataset capacity and prompt length are checked against the task.
    const auto probe = make_dataset(TaskSpec{task, task_size, 1, seed}, vocabulary());
    require(static_cast<int>(probe.front().prompt.size()) + 2 <= max_prompt_len,
            "max_prompt_len: too small for the task prompt plus separators");
    const auto space = instance_space(task_spec());
    require(heldout_size == 0 || static_cast<std::uint64_t>(dataset_size) +
                                         static_cast<std::uint64_t>(heldout_size) <=
                                     space,
            "heldout_size: train + held-out exceeds the task's distinct instances");
}

TaskSpec TrainerConfig::task_spec() const
{
    return TaskSpec{task, task_size, static_cast<std::size_t>(dataset_size), seed};
}

RewardSpec TrainerConfig::reward_spec() const
{
    return RewardSpec{reward, 1.0, format_weight};
}

std::string config_echo(const TrainerConfig& c)
{
    std::ostringstream os;
    os << "mode = " << to_string(c.mode) << '\n'
       << "epsilon = " << fmt(c.epsilon) << '\n'
       << "beta = " << fmt(c.beta) << '\n'
       << "num_drafts = " << c.num_drafts << '\n'
       << "group_size = " << c.group_size << '\n'
       << "grpo_group_size = " << c.grpo_group_size << '\n'
       << "matched_budget = " << (c.matched_budget ? "true" : "false") << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "iterations = " << c.iterations << '\n'
       << "learning_rate = " << fmt(c.learning_rate) << '\n'
       << "min_lr_rate = " << fmt(c.min_lr_rate) << '\n'
       << "warmup_ratio = " << fmt(c.warmup_ratio) << '\n'
       << "max_prompt_len = " << c.max_prompt_len << '\n'
       << "max_completion_len = " << c.max_completion_len << '\n'
       << "temperature = " << fmt(c.temperature) << '\n'
       << "seed = " << c.seed << '\n'
       << "std_divisor = " << (c.std_divisor == StdDivisor::Population ? "population" : "sample") << '\n'
       << "inner_epochs = " << c.inner_epochs << '\n'
       << "condition_on_failed_draft = " << (c.condition_on_failed_draft ? "true" : "false") << '\n'
       << "task = " << to_string(c.task) << '\n'
       << "task_size = " << c.task_size << '\n'
       << "dataset_size = " << c.dataset_size << '\n'
       << "heldout_size = " << c.heldout_size << '\n'
       << "reward = " << to_string(c.reward) << '\n'
       << "format_weight = " << fmt(c.format_weight) << '\n'
       << "vocab_size = " << c.vocab_size << '\n'
       << "window = " << c.window << '\n'
       << "threads = " << c.threads << '\n'
       << "record_wall_time = " << (c.record_wall_time ? "true" : "false") << '\n';
    return os.str();
}

std::uint64_t config_hash(const TrainerConfig& cfg)
{
    TrainerConfig canon = cfg;
    canon.mode = TrainMode::Igrpo;
    // Thread count does not change results.
    canon.threads = 1;
    const auto text = config_echo(canon);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace igrpo
