#include "igrpo/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "igrpo/errors.hpp"

namespace igrpo {

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError(where + ": malformed number '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& s, const std::string& where)
{
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError(where + ": malformed integer '" + s + "'");
    }
    return v;
}

nlohmann::ordered_json to_json(const MetricsRecord& r)
{
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["meanStage2Reward"] = r.meanStage2Reward;
    j["meanBestDraftReward"] = r.meanBestDraftReward;
    j["meanTokenEntropyNats"] = r.meanTokenEntropyNats;
    j["meanResponseLength"] = r.meanResponseLength;
    j["clipFraction"] = r.clipFraction;
    j["meanKL"] = r.meanKL;
    j["learningRate"] = r.learningRate;
    j["rolloutCount"] = r.rolloutCount;
    j["wallTimeSeconds"] = r.wallTimeSeconds;
    j["epoch"] = r.epoch;
    return j;
}

MetricsRecord from_json(const nlohmann::json& j)
{
    MetricsRecord r;
    r.iteration = j.at("iteration").get<std::int64_t>();
    r.meanStage2Reward = j.at("meanStage2Reward").get<double>();
    r.meanBestDraftReward = j.at("meanBestDraftReward").get<double>();
    r.meanTokenEntropyNats = j.at("meanTokenEntropyNats").get<double>();
    r.meanResponseLength = j.at("meanResponseLength").get<double>();
    r.clipFraction = j.at("clipFraction").get<double>();
    r.meanKL = j.at("meanKL").get<double>();
    r.learningRate = j.at("learningRate").get<double>();
    r.rolloutCount = j.at("rolloutCount").get<std::int64_t>();
    r.wallTimeSeconds = j.at("wallTimeSeconds").get<double>();
    r.epoch = j.at("epoch").get<std::int64_t>();
    return r;
}

}  // namespace

const std::vector<std::string>& metrics_columns()
{
    static const std::vector<std::string> cols = {
        "iteration",          "meanStage2Reward", "meanBestDraftReward", "meanTokenEntropyNats",
        "meanResponseLength", "clipFraction",     "meanKL",              "learningRate",
        "rolloutCount",       "wallTimeSeconds",  "epoch"};
    return cols;
}

double mean_token_entropy(std::span<const RolloutGroup> batch, const PolicyParams& params)
{
    RunningMean mean;
    TokenSequence ctx;
    for (const auto& g : batch) {
        for (const auto& comp : g.completions) {
            ctx.assign(g.context.begin(), g.context.end());
            for (Token t : comp) {
                mean.add(token_entropy(params, ctx));
                ctx.push_back(t);
            }
        }
    }
    if (mean.count() == 0) {
        throw InvalidInputError("mean token entropy is undefined for a batch without tokens");
    }
    return mean.value();
}

std::string metrics_csv(std::span<const MetricsRecord> records)
{
    std::ostringstream os;
    const auto& cols = metrics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        os << (i ? "," : "") << cols[i];
    }
    os << '\n';
    for (const auto& r : records) {
        os << r.iteration << ',' << fmt(r.meanStage2Reward) << ',' << fmt(r.meanBestDraftReward)
           << ',' << fmt(r.meanTokenEntropyNats) << ',' << fmt(r.meanResponseLength) << ','
           << fmt(r.clipFraction) << ',' << fmt(r.meanKL) << ',' << fmt(r.learningRate) << ','
           << r.rolloutCount << ',' << fmt(r.wallTimeSeconds) << ',' << r.epoch << '\n';
    }
    return os.str();
}

std::string metrics_jsonl(std::span<const MetricsRecord> records)
{
    std::string out;
    for (const auto& r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

void export_metrics(std::span<const MetricsRecord> records, const std::filesystem::path& path,
                    ExportFormat format)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f << (format == ExportFormat::Csv ? metrics_csv(records) : metrics_jsonl(records));
    if (!f) {
        throw IoError("write failed for " + path.string());
    }
}

std::vector<MetricsRecord> import_metrics(const std::filesystem::path& path, ExportFormat format)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::vector<MetricsRecord> out;
    std::string line;
    std::size_t lineno = 0;
    if (format == ExportFormat::Jsonl) {
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) {
                continue;
            }
            try {
                out.push_back(from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return out;
    }

    if (!std::getline(f, line)) {
        throw IoError(path.string() + ": missing csv header");
    }
    const auto& cols = metrics_columns();
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        const std::string where = path.string() + ":" + std::to_string(lineno + 1);
        if (cells.size() != cols.size()) {
            throw IoError(where + ": expected " + std::to_string(cols.size()) + " columns");
        }
        MetricsRecord r;
        r.iteration = parse_int(cells[0], where);
        r.meanStage2Reward = parse_double(cells[1], where);
        r.meanBestDraftReward = parse_double(cells[2], where);
        r.meanTokenEntropyNats = parse_double(cells[3], where);
        r.meanResponseLength = parse_double(cells[4], where);
        r.clipFraction = parse_double(cells[5], where);
        r.meanKL = parse_double(cells[6], where);
        r.learningRate = parse_double(cells[7], where);
        r.rolloutCount = parse_int(cells[8], where);
        r.wallTimeSeconds = parse_double(cells[9], where);
        r.epoch = parse_int(cells[10], where);
        out.push_back(r);
    }
    return out;
}

}  // namespace igrpo
