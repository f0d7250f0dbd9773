#pragma once

#include <array>
#include <cstdint>

#include "quartet/Corpus.h"

namespace quartet {

enum class BaselineKind { RANDOM, MAJORITY, BOW_ALIGN, EFFECT_ONLY, ANSWER_ONLY };

/// Structural random baseline ("convention b"): draws d_e over the three
/// labels first, then a consistent explanation — no-effect structure for
/// NONE, otherwise a uniform span with a uniform non-NONE chain direction.
/// Always valid under the consistency rules.
Explanation randomPredict(const Passage& passage, std::mt19937_64& rng);

/// Independent per-component random guesses ("convention a"): step indices
/// uniform over 1..K (j >= i), both directions uniform over all three labels.
/// This is the literal reading behind the reference accuracy figures
/// (acc_i = 1/K, direction accuracies = 1/3 on effect-only data), but the
/// tuple may violate the consistency rules, so it is never emitted as a
/// prediction; it exists for baseline statistics only.
struct RandomComponents {
    int i = kAbsentStep;
    int j = kAbsentStep;
    Direction di = Direction::NONE;
    Direction de = Direction::NONE;
};
RandomComponents randomComponentSample(int stepCount, std::mt19937_64& rng);

/// Component accuracies (percent) of repeated random guessing against the
/// gold explanations of a split, under either convention.
struct BaselineComponentReport {
    double accI = 0, accJ = 0, accDi = 0, accDe = 0;
    double accExpl() const { return (accI + accJ + accDi + accDe) / 4.0; }
};
enum class RandomConvention { INDEPENDENT_COMPONENTS, STRUCTURAL };
BaselineComponentReport randomBaselineReport(const DatasetSplit& split, std::uint64_t seed,
                                             RandomConvention convention);

/// Majority baseline. Fitted on a training split; predicts the modal d_e
/// (the no-effect structure when the mode is NONE, otherwise the most
/// frequent gold span and chain direction).
class MajorityBaseline {
public:
    void fit(const DatasetSplit& train);
    Direction modalAnswer() const { return modal; }
    Explanation predict(const Passage& passage, const InfluenceQuestion& q) const;

private:
    Direction modal = Direction::NONE;
    Explanation modalEffect = Explanation::span(1, 1, Direction::MORE, Direction::MORE);
};

/// Bag-of-words alignment baseline: picks the step with the largest token
/// overlap with q_p (lowest index on ties), j = i, directions from a small
/// negative-polarity cue list (defaults MORE). Never predicts no-effect.
Explanation bowAlignPredict(const Passage& passage, const InfluenceQuestion& q);

/// Token-overlap similarity used by the alignment baseline.
int tokenOverlap(const std::string& a, const std::string& b);

}  // namespace quartet
