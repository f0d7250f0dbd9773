#include "quartet/SyntheticCorpus.h"

#include <algorithm>
#include <random>

namespace quartet {

namespace {

const std::vector<std::string>& entityLexicon() {
    static const std::vector<std::string> entities = {
        "water", "heat",  "light",  "seeds",  "roots", "oxygen", "fuel",   "smoke",
        "rain",  "soil",  "sound",  "waves",  "steam", "ice",    "clouds", "pollen",
        "bees",  "fish",  "algae",  "iron",   "rust",  "coal",   "fire",   "wood",
        "sap",   "bark",  "leaves", "fruit",  "sugar", "yeast",  "dough",  "bread",
        "milk",  "wool",  "thread", "cloth",  "paper", "ink",    "sand",   "gravel",
    };
    return entities;
}

const std::vector<std::string>& verbLexicon() {
    static const std::vector<std::string> verbs = {
        "forms",  "rises",  "flows",   "spreads", "builds", "collects",
        "grows",  "settles", "expands", "thickens", "drains", "gathers",
    };
    return verbs;
}

std::string perturbationText(const std::string& entity, int sigma, bool paraphrase, int variant) {
    if (!paraphrase) {
        return sigma > 0 ? "suppose there is more " + entity
                         : "suppose there is less " + entity;
    }
    if (sigma > 0) {
        return variant == 0 ? "a surge of " + entity + " happens"
                            : "extra " + entity + " builds up";
    }
    return variant == 0 ? "a shortage of " + entity + " happens"
                        : "hardly any " + entity + " remains";
}

std::string effectText(const std::string& entity, int pi) {
    return pi > 0 ? "there will be more " + entity : "there will be less " + entity;
}

}  // namespace

Explanation syntheticGold(int s, int t, int sigma, int pi) {
    Direction chain = sigma > 0 ? Direction::MORE : Direction::LESS;
    Direction de = sigma * pi > 0 ? Direction::MORE : Direction::LESS;
    return Explanation::span(s, t, chain, de);
}

DatasetSplit generateSyntheticCorpus(const SynthConfig& config) {
    if (config.minSteps < 1 || config.maxSteps < config.minSteps) {
        throw DataError("invalid step range");
    }
    if (config.numPassages < 1 || config.questionsPerPassage < 1) {
        throw DataError("need at least one passage and one question per passage");
    }
    const auto& entities = entityLexicon();
    const auto& verbs = verbLexicon();
    if (config.maxSteps + 1 > static_cast<int>(entities.size())) {
        throw DataError("step range exceeds the entity lexicon");
    }

    std::mt19937_64 rng(config.seed);
    auto uniformInt = [&rng](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    auto bernoulli = [&rng](double p) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
    };

    DatasetSplit split;
    split.name = config.splitName;

    for (int pi = 0; pi < config.numPassages; ++pi) {
        const int K = uniformInt(config.minSteps, config.maxSteps);

        // Chain entities plus one spare for unrelated perturbations.
        std::vector<int> picks(entities.size());
        for (size_t k = 0; k < picks.size(); ++k) picks[k] = static_cast<int>(k);
        std::shuffle(picks.begin(), picks.end(), rng);
        std::vector<std::string> chain;
        for (int k = 0; k < K; ++k) chain.push_back(entities[static_cast<size_t>(picks[static_cast<size_t>(k)])]);
        const std::string spare = entities[static_cast<size_t>(picks[static_cast<size_t>(K)])];

        Passage p;
        p.id = "synth-" + config.splitName + "-p" + std::to_string(pi);
        for (int k = 0; k < K; ++k) {
            p.steps.push_back("the amount of " + chain[static_cast<size_t>(k)] + " " +
                              verbs[static_cast<size_t>(uniformInt(0, static_cast<int>(verbs.size()) - 1))]);
        }
        split.addPassage(p);

        for (int qi = 0; qi < config.questionsPerPassage; ++qi) {
            InfluenceQuestion q;
            q.id = p.id + "-q" + std::to_string(qi);
            q.passageId = p.id;

            const int sigma = bernoulli(0.5) ? 1 : -1;
            const int polarity = bernoulli(0.5) ? 1 : -1;
            const bool paraphrase = bernoulli(config.paraphraseRate);
            const int variant = uniformInt(0, 1);

            if (bernoulli(config.noEffectFrac)) {
                q.type = QuestionType::NO_EFFECT;
                q.gold = Explanation::noEffect();
                if (K >= 2 && bernoulli(config.backwardFrac)) {
                    // Perturb a later step; ask about an earlier one.
                    const int s = uniformInt(2, K);
                    const int t = uniformInt(1, s - 1);
                    q.qp = perturbationText(chain[static_cast<size_t>(s - 1)], sigma, paraphrase, variant);
                    q.qe = effectText(chain[static_cast<size_t>(t - 1)], polarity);
                } else {
                    // Perturb an entity that does not appear in the chain.
                    const int t = uniformInt(1, K);
                    q.qp = perturbationText(spare, sigma, paraphrase, variant);
                    q.qe = effectText(chain[static_cast<size_t>(t - 1)], polarity);
                }
            } else {
                int s, t;
                if (K == 1 || bernoulli(config.lengthOneFrac)) {
                    s = t = uniformInt(1, K);
                } else {
                    s = uniformInt(1, K - 1);
                    t = uniformInt(s + 1, K);
                }
                q.type = paraphrase ? QuestionType::OUT_OF_PARA : QuestionType::IN_PARA;
                q.qp = perturbationText(chain[static_cast<size_t>(s - 1)], sigma, paraphrase, variant);
                q.qe = effectText(chain[static_cast<size_t>(t - 1)], polarity);
                q.gold = syntheticGold(s, t, sigma, polarity);
            }
            split.addQuestion(q);
        }
    }
    return split;
}

}  // namespace quartet
