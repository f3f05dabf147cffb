#pragma once

// Synthetic verifiable reasoning tasks and rule-based rewards.
//
// Encodings (content tokens are ids 0..|V|-6; digits map to themselves):
//   addition   q = [BOS, a (MSB first), PLUS, b (MSB first)]
//              a = digits of a + b, zero-padded to width+1, MSB first
//   parity     q = [BOS, bits...]               a = [xor of bits]
//   sortDigits q = [BOS, digits...]             a = digits in ascending order
// PLUS is content id 10, so addition needs at least 11 content tokens.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igrpo/policy.hpp"

namespace igrpo {

enum class TaskKind { Addition, Parity, SortDigits };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct TaskSpec {
    TaskKind kind = TaskKind::Addition;
    int size = 2;                 // operand digits, or sequence length
    std::size_t datasetSize = 512;
    std::uint64_t seed = 0;
};

struct Problem {
    TokenSequence prompt;
    TokenSequence answer;  // no terminal EOS

    bool operator==(const Problem&) const = default;
};

inline constexpr Token kPlusToken = 10;

/// Number of distinct instances the task can generate.
std::uint64_t instance_space(const TaskSpec& spec);

/// Deterministic dataset. Distinct prompts while the instance space
/// allows, otherwise the space is repeated in shuffled order.
std::vector<Problem> make_dataset(const TaskSpec& spec, const Vocabulary& vocab);

struct DatasetSplit {
    std::vector<Problem> train;
    std::vector<Problem> heldOut;
};

/// Disjoint train / held-out sets drawn from one generation pass.
DatasetSplit make_split(const TaskSpec& spec, std::size_t held_out, const Vocabulary& vocab);

/// Tokens strictly between the last ANS and the next EOS (or the end).
std::optional<TokenSequence> extract_answer(std::span<const Token> completion,
                                            const Vocabulary& vocab);

double binary_reward(std::span<const Token> completion, std::span<const Token> answer,
                     const Vocabulary& vocab);

/// Fraction of answer positions reproduced at the same position; 0 when
/// the extracted answer has the wrong length or is missing.
double graded_reward(std::span<const Token> completion, std::span<const Token> answer,
                     const Vocabulary& vocab);

enum class RewardKind { BinaryExact, GradedDigitMatch };

std::string to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& name);

struct RewardSpec {
    RewardKind kind = RewardKind::BinaryExact;
    double accuracyWeight = 1.0;
    // Added when the completion contains an ANS marker.
    double formatWeight = 0.0;
};

double score_completion(const RewardSpec& spec, std::span<const Token> completion,
                        std::span<const Token> answer, const Vocabulary& vocab);

/// Reference solution [ANS, answer..., EOS].
TokenSequence gold_completion(const Problem& problem, const Vocabulary& vocab);

// One record per line: prompt tokens, a tab, answer tokens.
void write_dataset(std::ostream& out, std::span<const Problem> problems);
std::vector<Problem> read_dataset(std::istream& in);

}  // namespace igrpo
