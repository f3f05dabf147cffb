#include "igrpo/tasks.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "igrpo/errors.hpp"

namespace igrpo {

namespace {

std::uint64_t pow_u64(std::uint64_t base, int exp)
{
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        r *= base;
    }
    return r;
}

void append_digits(TokenSequence& out, std::uint64_t value, int width)
{
    for (int i = width - 1; i >= 0; --i) {
        out.push_back(static_cast<Token>((value / pow_u64(10, i)) % 10));
    }
}

void check_capacity(const TaskSpec& spec, const Vocabulary& vocab)
{
    if (spec.datasetSize < 1) {
        throw ConfigError("dataset size must be at least 1");
    }
    if (spec.size < 1) {
        throw ConfigError("task size must be at least 1");
    }
    int needed = 0;
    int max_size = 0;
    switch (spec.kind) {
    case TaskKind::Addition:
        needed = 11;
        max_size = 9;
        break;
    case TaskKind::Parity:
        needed = 2;
        max_size = 62;
        break;
    case TaskKind::SortDigits:
        needed = 10;
        max_size = 18;
        break;
    }
    if (vocab.content_size() < needed) {
        throw ConfigError(to_string(spec.kind) + " needs " + std::to_string(needed) +
                          " content tokens but the vocabulary has " +
                          std::to_string(vocab.content_size()));
    }
    if (spec.size > max_size) {
        throw ConfigError(to_string(spec.kind) + " size " + std::to_string(spec.size) +
                          " exceeds the supported maximum " + std::to_string(max_size));
    }
}

Problem decode_instance(const TaskSpec& spec, std::uint64_t index, const Vocabulary& vocab)
{
    Problem p;
    p.prompt.push_back(vocab.bos);
    switch (spec.kind) {
    case TaskKind::Addition: {
        const std::uint64_t base = pow_u64(10, spec.size);
        const std::uint64_t a = index / base;
        const std::uint64_t b = index % base;
        append_digits(p.prompt, a, spec.size);
        p.prompt.push_back(kPlusToken);
        append_digits(p.prompt, b, spec.size);
        append_digits(p.answer, a + b, spec.size + 1);
        break;
    }
    case TaskKind::Parity: {
        Token x = 0;
        for (int i = spec.size - 1; i >= 0; --i) {
            const auto bit = static_cast<Token>((index >> i) & 1U);
            p.prompt.push_back(bit);
            x ^= bit;
        }
        p.answer.push_back(x);
        break;
    }
    case TaskKind::SortDigits: {
        append_digits(p.prompt, index, spec.size);
        p.answer.assign(p.prompt.begin() + 1, p.prompt.end());
        std::sort(p.answer.begin(), p.answer.end());
        break;
    }
    }
    return p;
}

std::vector<std::uint64_t> draw_indices(const TaskSpec& spec, std::size_t count)
{
    const std::uint64_t space = instance_space(spec);
    Rng rng = derive_rng(spec.seed, 0x7a5c, static_cast<std::uint64_t>(spec.kind));
    std::vector<std::uint64_t> out;
    out.reserve(count);

    constexpr std::uint64_t kEnumerateLimit = 1U << 22;
    if (space <= kEnumerateLimit) {
        std::vector<std::uint64_t> all(space);
        for (std::uint64_t i = 0; i < space; ++i) {
            all[i] = i;
        }
        while (out.size() < count) {
            deterministic_shuffle(all, rng);
            const auto take = std::min<std::size_t>(count - out.size(), all.size());
            out.insert(out.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
        }
        return out;
    }
    std::unordered_set<std::uint64_t> seen;
    while (out.size() < count) {
        const auto idx = uniform_below(rng, space);
        if (seen.insert(idx).second) {
            out.push_back(idx);
        }
    }
    return out;
}

TokenSequence strip_eos(std::span<const Token> answer, const Vocabulary& vocab)
{
    TokenSequence a(answer.begin(), answer.end());
    if (!a.empty() && a.back() == vocab.eos) {
        a.pop_back();
    }
    return a;
}

}  // namespace

std::string to_string(TaskKind kind)
{
    switch (kind) {
    case TaskKind::Addition:
        return "addition";
    case TaskKind::Parity:
        return "parity";
    case TaskKind::SortDigits:
        return "sort";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& name)
{
    if (name == "addition") {
        return TaskKind::Addition;
    }
    if (name == "parity") {
        return TaskKind::Parity;
    }
    if (name == "sort" || name == "sortDigits") {
        return TaskKind::SortDigits;
    }
    throw ConfigError("unknown task kind '" + name + "' (expected addition, parity or sort)");
}

std::uint64_t instance_space(const TaskSpec& spec)
{
    switch (spec.kind) {
    case TaskKind::Addition:
        return pow_u64(10, 2 * spec.size);
    case TaskKind::Parity:
        return std::uint64_t{1} << spec.size;
    case TaskKind::SortDigits:
        return pow_u64(10, spec.size);
    }
    return 0;
}

std::vector<Problem> make_dataset(const TaskSpec& spec, const Vocabulary& vocab)
{
    check_capacity(spec, vocab);
    std::vector<Problem> out;
    out.reserve(spec.datasetSize);
    for (auto idx : draw_indices(spec, spec.datasetSize)) {
        out.push_back(decode_instance(spec, idx, vocab));
    }
    return out;
}

DatasetSplit make_split(const TaskSpec& spec, std::size_t held_out, const Vocabulary& vocab)
{
    check_capacity(spec, vocab);
    const auto space = instance_space(spec);
    if (held_out > 0 && spec.datasetSize + held_out > space) {
        throw ConfigError("train + held-out size " + std::to_string(spec.datasetSize + held_out) +
                          " exceeds the " + std::to_string(space) + " distinct instances");
    }
    const auto idx = draw_indices(spec, spec.datasetSize + held_out);
    DatasetSplit s;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto p = decode_instance(spec, idx[i], vocab);
        (i < spec.datasetSize ? s.train : s.heldOut).push_back(std::move(p));
    }
    return s;
}

std::optional<TokenSequence> extract_answer(std::span<const Token> completion,
                                            const Vocabulary& vocab)
{
    auto it = std::find(completion.rbegin(), completion.rend(), vocab.ans);
    if (it == completion.rend()) {
        return std::nullopt;
    }
    auto start = it.base();  // one past the marker
    auto stop = std::find(start, completion.end(), vocab.eos);
    return TokenSequence(start, stop);
}

double binary_reward(std::span<const Token> completion, std::span<const Token> answer,
                     const Vocabulary& vocab)
{
    const auto got = extract_answer(completion, vocab);
    if (!got) {
        return 0.0;
    }
    return *got == strip_eos(answer, vocab) ? 1.0 : 0.0;
}

double graded_reward(std::span<const Token> completion, std::span<const Token> answer,
                     const Vocabulary& vocab)
{
    const auto got = extract_answer(completion, vocab);
    const auto want = strip_eos(answer, vocab);
    // Length must match, so single-token answers grade exactly like binary.
    if (!got || want.empty() || got->size() != want.size()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        hits += (*got)[i] == want[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(want.size());
}

std::string to_string(RewardKind kind)
{
    return kind == RewardKind::BinaryExact ? "binary" : "graded";
}

RewardKind reward_kind_from_string(const std::string& name)
{
    if (name == "binary") {
        return RewardKind::BinaryExact;
    }
    if (name == "graded") {
        return RewardKind::GradedDigitMatch;
    }
    throw ConfigError("unknown reward kind '" + name + "' (expected binary or graded)");
}

double score_completion(const RewardSpec& spec, std::span<const Token> completion,
                        std::span<const Token> answer, const Vocabulary& vocab)
{
    const double acc = spec.kind == RewardKind::BinaryExact
                           ? binary_reward(completion, answer, vocab)
                           : graded_reward(completion, answer, vocab);
    double r = spec.accuracyWeight * acc;
    if (spec.formatWeight != 0.0 && extract_answer(completion, vocab)) {
        r += spec.formatWeight;
    }
    return r;
}

TokenSequence gold_completion(const Problem& problem, const Vocabulary& vocab)
{
    TokenSequence c{vocab.ans};
    c.insert(c.end(), problem.answer.begin(), problem.answer.end());
    c.push_back(vocab.eos);
    return c;
}

void write_dataset(std::ostream& out, std::span<const Problem> problems)
{
    for (const auto& p : problems) {
        for (std::size_t i = 0; i < p.prompt.size(); ++i) {
            out << (i ? " " : "") << p.prompt[i];
        }
        out << '\t';
        for (std::size_t i = 0; i < p.answer.size(); ++i) {
            out << (i ? " " : "") << p.answer[i];
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing dataset");
    }
}

std::vector<Problem> read_dataset(std::istream& in)
{
    std::vector<Problem> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw IoError("dataset line " + std::to_string(lineno) + " has no tab separator");
        }
        Problem p;
        auto parse = [&](const std::string& text, TokenSequence& dst) {
            std::istringstream is(text);
            Token t = 0;
            while (is >> t) {
                dst.push_back(t);
            }
            if (!is.eof()) {
                throw IoError("dataset line " + std::to_string(lineno) + " has a non-integer token");
            }
        };
        parse(line.substr(0, tab), p.prompt);
        parse(line.substr(tab + 1), p.answer);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace igrpo
