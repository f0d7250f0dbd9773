#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace quartet {

/// Qualitative direction of influence: more of (+), less of (-), no effect (.).
enum class Direction { MORE, LESS, NONE };

std::string directionToString(Direction d);
Direction directionFromString(const std::string& s);
/// Compact symbol for table-style output: "+", "-", ".".
std::string directionSymbol(Direction d);

/// Sentinel for an absent step index. Reports render absent indices as -1.
constexpr int kAbsentStep = -1;

/// A procedural passage: ordered steps x_1..x_K, 1-indexed.
struct Passage {
    std::string id;
    std::vector<std::string> steps;

    int stepCount() const { return static_cast<int>(steps.size()); }
};

enum class QuestionType { IN_PARA, OUT_OF_PARA, NO_EFFECT };

std::string questionTypeToString(QuestionType t);
QuestionType questionTypeFromString(const std::string& s);

/// The structured answer: an influence chain q_p -> d_i x_i -> d_j x_j -> d_e q_e.
/// A single supporting sentence is represented as j == i; the no-effect case
/// has both indices absent and all directions NONE.
struct Explanation {
    int i = kAbsentStep;
    int j = kAbsentStep;
    Direction di = Direction::NONE;
    Direction dj = Direction::NONE;
    Direction de = Direction::NONE;

    static Explanation noEffect() { return Explanation{}; }
    static Explanation span(int i, int j, Direction d, Direction de) {
        return Explanation{i, j, d, d, de};
    }
    bool isNoEffect() const { return i == kAbsentStep && j == kAbsentStep && di == Direction::NONE; }

    bool operator==(const Explanation& o) const = default;
};

/// A perturbation/effect question against one passage.
struct InfluenceQuestion {
    std::string id;
    std::string passageId;
    std::string qp;   // perturbation
    std::string qe;   // candidate effect
    QuestionType type = QuestionType::NO_EFFECT;
    std::optional<Explanation> gold;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Verdict of validateExplanation. `violations` holds rule ids among
/// {a1, a2, a4, a5, a6, range}; empty iff valid.
struct ValidationResult {
    bool valid = true;
    std::vector<std::string> violations;
};

/// Checks the consistency rules of an explanation against a passage of
/// `stepCount` steps:
///   a1: both indices present implies i <= j
///   a2: d_j == d_i
///   a4: d_i == NONE implies d_e == NONE
///   a5: d_i == NONE iff i absent
///   a6: d_e == NONE iff j absent
///   range: present indices lie in [1, stepCount]
ValidationResult validateExplanation(const Explanation& e, int stepCount);

/// The answer label is the end node d_e. Throws ValidationError if the
/// explanation violates the structural rules (a1..a6; range is not checkable
/// without the passage and is skipped here).
Direction answerOf(const Explanation& e);

// ---------------------------------------------------------------------------
// BIEO tag codec
// ---------------------------------------------------------------------------

/// Seven-label tag alphabet for the sequence-tagging reduction.
/// CORRECT corresponds to MORE (+), OPPOSITE to LESS (-).
enum class TagLabel {
    O = 0,
    B_CORRECT = 1,
    I_CORRECT = 2,
    E_CORRECT = 3,
    B_OPPOSITE = 4,
    I_OPPOSITE = 5,
    E_OPPOSITE = 6,
};

constexpr int kNumTagLabels = 7;

std::string tagLabelToString(TagLabel t);
TagLabel tagLabelFromString(const std::string& s);

using TagSequence = std::vector<TagLabel>;

/// Result of decoding a tag sequence. `noEffect` set for the all-O sequence.
struct DecodedTags {
    bool noEffect = false;
    int i = kAbsentStep;
    int j = kAbsentStep;
    Direction di = Direction::NONE;
    Direction dj = Direction::NONE;
};

/// Renders an explanation span as a tag sequence over K steps.
/// A no-effect input (both indices absent) yields all O. A length-1 span is a
/// lone B label, which requires dirI == dirJ. Mixed directions are accepted
/// for spans of length >= 2 (the B carries dirI, the E carries dirJ).
/// Throws ValidationError on out-of-range or inconsistent input.
TagSequence encodeTags(int i, int j, Direction dirI, Direction dirJ, int stepCount);
TagSequence encodeTags(const Explanation& e, int stepCount);

/// Inverse of encodeTags. Throws ValidationError naming the first violating
/// position (1-indexed) when the sequence breaks the tag grammar.
DecodedTags decodeTags(const TagSequence& tags);

/// True iff `tags` satisfies the tag-sequence grammar accepted by decodeTags.
bool isValidTagSequence(const TagSequence& tags);

/// Exhaustive set of explanations satisfying a1..a6 for a K-step passage:
/// the single no-effect structure plus every (i <= j, d_i = d_j in {MORE,LESS},
/// d_e in {MORE,LESS}) combination. Canonical order: no-effect first, then
/// ascending (i, j), d_i MORE before LESS, d_e MORE before LESS.
/// Size is 1 + 4 * K*(K+1)/2.
std::vector<Explanation> enumerateValidExplanations(int stepCount);

}  // namespace quartet
