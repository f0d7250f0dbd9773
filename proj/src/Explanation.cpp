#include "quartet/Explanation.h"

#include <algorithm>

namespace quartet {

std::string directionToString(Direction d) {
    switch (d) {
        case Direction::MORE: return "MORE";
        case Direction::LESS: return "LESS";
        case Direction::NONE: return "NONE";
    }
    throw ValidationError("unknown direction value");
}

Direction directionFromString(const std::string& s) {
    if (s == "MORE") return Direction::MORE;
    if (s == "LESS") return Direction::LESS;
    if (s == "NONE") return Direction::NONE;
    throw ValidationError("unknown direction: " + s);
}

std::string directionSymbol(Direction d) {
    switch (d) {
        case Direction::MORE: return "+";
        case Direction::LESS: return "-";
        case Direction::NONE: return ".";
    }
    throw ValidationError("unknown direction value");
}

std::string questionTypeToString(QuestionType t) {
    switch (t) {
        case QuestionType::IN_PARA: return "IN_PARA";
        case QuestionType::OUT_OF_PARA: return "OUT_OF_PARA";
        case QuestionType::NO_EFFECT: return "NO_EFFECT";
    }
    throw ValidationError("unknown question type value");
}

QuestionType questionTypeFromString(const std::string& s) {
    if (s == "IN_PARA") return QuestionType::IN_PARA;
    if (s == "OUT_OF_PARA") return QuestionType::OUT_OF_PARA;
    if (s == "NO_EFFECT") return QuestionType::NO_EFFECT;
    throw ValidationError("unknown question type: " + s);
}

ValidationResult validateExplanation(const Explanation& e, int stepCount) {
    ValidationResult r;
    auto violate = [&r](const char* rule) {
        r.valid = false;
        r.violations.emplace_back(rule);
    };

    const bool iPresent = e.i != kAbsentStep;
    const bool jPresent = e.j != kAbsentStep;

    if (iPresent && jPresent && e.i > e.j) violate("a1");
    if (e.dj != e.di) violate("a2");
    if (e.di == Direction::NONE && e.de != Direction::NONE) violate("a4");
    if ((e.di == Direction::NONE) != !iPresent) violate("a5");
    if ((e.de == Direction::NONE) != !jPresent) violate("a6");
    if ((iPresent && (e.i < 1 || e.i > stepCount)) ||
        (jPresent && (e.j < 1 || e.j > stepCount))) {
        violate("range");
    }
    return r;
}

Direction answerOf(const Explanation& e) {
    ValidationResult r = validateExplanation(e, std::max({e.i, e.j, 1}));
    if (!r.valid) {
        std::string rules;
        for (const auto& v : r.violations) rules += (rules.empty() ? "" : ",") + v;
        throw ValidationError("invalid explanation (violates " + rules + ")");
    }
    return e.de;
}

std::string tagLabelToString(TagLabel t) {
    switch (t) {
        case TagLabel::O: return "O";
        case TagLabel::B_CORRECT: return "B-CORRECT";
        case TagLabel::I_CORRECT: return "I-CORRECT";
        case TagLabel::E_CORRECT: return "E-CORRECT";
        case TagLabel::B_OPPOSITE: return "B-OPPOSITE";
        case TagLabel::I_OPPOSITE: return "I-OPPOSITE";
        case TagLabel::E_OPPOSITE: return "E-OPPOSITE";
    }
    throw ValidationError("unknown tag label value");
}

TagLabel tagLabelFromString(const std::string& s) {
    if (s == "O") return TagLabel::O;
    if (s == "B-CORRECT") return TagLabel::B_CORRECT;
    if (s == "I-CORRECT") return TagLabel::I_CORRECT;
    if (s == "E-CORRECT") return TagLabel::E_CORRECT;
    if (s == "B-OPPOSITE") return TagLabel::B_OPPOSITE;
    if (s == "I-OPPOSITE") return TagLabel::I_OPPOSITE;
    if (s == "E-OPPOSITE") return TagLabel::E_OPPOSITE;
    throw ValidationError("unknown tag label: " + s);
}

namespace {

TagLabel beginLabel(Direction d) {
    if (d == Direction::MORE) return TagLabel::B_CORRECT;
    if (d == Direction::LESS) return TagLabel::B_OPPOSITE;
    throw ValidationError("span direction must be MORE or LESS");
}

TagLabel insideLabel(Direction d) {
    return d == Direction::MORE ? TagLabel::I_CORRECT : TagLabel::I_OPPOSITE;
}

TagLabel endLabel(Direction d) {
    if (d == Direction::MORE) return TagLabel::E_CORRECT;
    if (d == Direction::LESS) return TagLabel::E_OPPOSITE;
    throw ValidationError("span direction must be MORE or LESS");
}

bool isBegin(TagLabel t) { return t == TagLabel::B_CORRECT || t == TagLabel::B_OPPOSITE; }
bool isInside(TagLabel t) { return t == TagLabel::I_CORRECT || t == TagLabel::I_OPPOSITE; }
bool isEnd(TagLabel t) { return t == TagLabel::E_CORRECT || t == TagLabel::E_OPPOSITE; }

Direction tagDirection(TagLabel t) {
    switch (t) {
        case TagLabel::B_CORRECT:
        case TagLabel::I_CORRECT:
        case TagLabel::E_CORRECT:
            return Direction::MORE;
        case TagLabel::B_OPPOSITE:
        case TagLabel::I_OPPOSITE:
        case TagLabel::E_OPPOSITE:
            return Direction::LESS;
        default:
            throw ValidationError("O tag carries no direction");
    }
}

[[noreturn]] void decodeFail(int position, const std::string& why) {
    throw ValidationError("malformed tag sequence at position " + std::to_string(position) + ": " + why);
}

}  // namespace

TagSequence encodeTags(int i, int j, Direction dirI, Direction dirJ, int stepCount) {
    if (stepCount < 1) throw ValidationError("stepCount must be >= 1");
    TagSequence tags(static_cast<size_t>(stepCount), TagLabel::O);
    if (i == kAbsentStep && j == kAbsentStep) return tags;  // no effect
    if (i == kAbsentStep || j == kAbsentStep) {
        throw ValidationError("indices must be both present or both absent");
    }
    if (i < 1 || j > stepCount || i > j) {
        throw ValidationError("span (" + std::to_string(i) + "," + std::to_string(j) +
                              ") out of range for K=" + std::to_string(stepCount));
    }
    if (i == j) {
        if (dirI != dirJ) throw ValidationError("length-1 span requires a single direction");
        tags[i - 1] = beginLabel(dirI);
        return tags;
    }
    tags[i - 1] = beginLabel(dirI);
    for (int p = i + 1; p < j; ++p) tags[p - 1] = insideLabel(dirI);
    tags[j - 1] = endLabel(dirJ);
    return tags;
}

TagSequence encodeTags(const Explanation& e, int stepCount) {
    return encodeTags(e.i, e.j, e.di, e.dj, stepCount);
}

DecodedTags decodeTags(const TagSequence& tags) {
    if (tags.empty()) throw ValidationError("empty tag sequence");
    const int n = static_cast<int>(tags.size());

    int first = -1;
    for (int p = 0; p < n; ++p) {
        if (tags[p] != TagLabel::O) {
            first = p;
            break;
        }
    }
    if (first < 0) {
        DecodedTags d;
        d.noEffect = true;
        return d;
    }
    if (!isBegin(tags[first])) decodeFail(first + 1, "run must start with a B label");

    const Direction runDir = tagDirection(tags[first]);
    int last = first;
    bool closed = false;  // E label seen
    for (int p = first + 1; p < n; ++p) {
        const TagLabel t = tags[p];
        if (t == TagLabel::O) break;
        if (closed) decodeFail(p + 1, "non-O label after the run ended");
        if (isBegin(t)) decodeFail(p + 1, "second B label inside a run");
        if (isInside(t)) {
            if (tagDirection(t) != runDir) decodeFail(p + 1, "I label direction differs from B");
            last = p;
            continue;
        }
        // E label: closes the run; its direction may differ from the B direction.
        last = p;
        closed = true;
    }
    if (last > first && !closed) decodeFail(last + 1, "run of length >= 2 must end with an E label");
    for (int p = last + 1; p < n; ++p) {
        if (tags[p] != TagLabel::O) decodeFail(p + 1, "non-O label outside the run");
    }

    DecodedTags d;
    d.i = first + 1;
    d.j = last + 1;
    d.di = runDir;
    d.dj = closed ? tagDirection(tags[last]) : runDir;
    return d;
}

bool isValidTagSequence(const TagSequence& tags) {
    try {
        decodeTags(tags);
        return true;
    } catch (const ValidationError&) {
        return false;
    }
}

std::vector<Explanation> enumerateValidExplanations(int stepCount) {
    if (stepCount < 1) throw ValidationError("stepCount must be >= 1");
    std::vector<Explanation> out;
    out.push_back(Explanation::noEffect());
    for (int i = 1; i <= stepCount; ++i) {
        for (int j = i; j <= stepCount; ++j) {
            for (Direction d : {Direction::MORE, Direction::LESS}) {
                for (Direction de : {Direction::MORE, Direction::LESS}) {
                    out.push_back(Explanation::span(i, j, d, de));
                }
            }
        }
    }
    return out;
}

}  // namespace quartet
