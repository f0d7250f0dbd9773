#pragma once

#include <cstdint>
#include <string>

#include "quartet/Corpus.h"

namespace quartet {

/// Parameters for the templated influence-chain generator. Each passage is a
/// causal chain ("the amount of <entity_k> <verb_k>", step k enabling step
/// k+1); each question perturbs one chain variable and asks about another.
struct SynthConfig {
    std::uint64_t seed = 13;
    int numPassages = 200;
    int questionsPerPassage = 5;
    int minSteps = 3;
    int maxSteps = 6;
    double noEffectFrac = 0.418;
    double paraphraseRate = 0.7;   // fraction of effect questions phrased out-of-para
    double lengthOneFrac = 0.095;  // fraction of effect questions with j == i
    double backwardFrac = 0.25;    // fraction of no-effect questions perturbing a later step
    std::string splitName = "train";
};

/// Forward-flow propagation rule for a synthetic gold explanation: perturbing
/// step s with sign `sigma` (+1 more, -1 less) influences step t >= s in the
/// same direction; the effect statement is phrased with polarity `pi`
/// (+1 "more of", -1 "less of"), so d_e = MORE iff sigma * pi > 0.
Explanation syntheticGold(int s, int t, int sigma, int pi);

/// Deterministic per seed: identical configs produce byte-identical splits.
DatasetSplit generateSyntheticCorpus(const SynthConfig& config);

}  // namespace quartet
