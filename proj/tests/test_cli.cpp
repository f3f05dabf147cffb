#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("igrpo_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + IGRPO_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& body)
{
    const auto p = dir / "run.cfg";
    std::ofstream(p) << body;
    return p;
}

const char* kSmall =
    "task = parity\ntask_size = 5\nvocab_size = 8\nwindow = 3\n"
    "iterations = 3\nbatch_size = 4\nmax_completion_len = 4\n"
    "dataset_size = 16\nheldout_size = 8\n";

}  // namespace

TEST(Cli, TrainWritesExactlyFourArtifacts)
{
    const auto dir = scratch("train");
    const auto cfg = write_config(dir, kSmall);
    ASSERT_EQ(cli("train --config " + cfg.string() + " --out " + (dir / "out").string()), 0);
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir / "out")) {
        names.insert(e.path().filename().string());
    }
    EXPECT_EQ(names, (std::set<std::string>{"config.echo", "metrics.csv", "metrics.jsonl", "checkpoint.final"}));
}

TEST(Cli, ConfigErrorsExitTwo)
{
    const auto dir = scratch("config");
    EXPECT_EQ(cli("train --config " + write_config(dir, "no_such_key = 1\n").string() + " --out " +
                  (dir / "a").string()),
              2);
    EXPECT_EQ(cli("train --config " + write_config(dir, "mode = grpo\nnum_drafts = 4\n").string() + " --out " +
                  (dir / "b").string()),
              2);
    const auto ok = write_config(dir, kSmall);
    EXPECT_EQ(cli("sweep --config " + ok.string() + " --axis completions --values 7 --out " + (dir / "c").string()),
              2);
}

TEST(Cli, CorruptCheckpointExitsFour)
{
    const auto dir = scratch("ckpt");
    const auto cfg = write_config(dir, kSmall);
    const auto bad = dir / "bad.ckpt";
    std::ofstream(bad) << "igrpo-checkpoint 1\niteration x\n";
    EXPECT_EQ(cli("eval --config " + cfg.string() + " --checkpoint " + bad.string() + " --out " +
                  (dir / "e").string()),
              4);
}

TEST(Cli, TrainThenEvalAndAnalyze)
{
    const auto dir = scratch("pipeline");
    const auto cfg = write_config(dir, kSmall);
    const auto out = dir / "out";
    ASSERT_EQ(cli("train --config " + cfg.string() + " --out " + out.string()), 0);
    const auto ckpt = (out / "checkpoint.final").string();
    EXPECT_EQ(cli("eval --config " + cfg.string() + " --checkpoint " + ckpt + " --attempts 4 --out " +
                  (dir / "e").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "e" / "reports" / "pass_at_n.csv"));
    EXPECT_EQ(cli("analyze --config " + cfg.string() + " --checkpoint " + ckpt + " --trials 200 --out " +
                  (dir / "a").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "a" / "reports" / "proposition.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / "reports" / "budget.txt"));
}
