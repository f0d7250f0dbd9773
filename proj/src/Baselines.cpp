#include "quartet/Baselines.h"

#include <algorithm>
#include <map>
#include <set>

namespace quartet {

Explanation randomPredict(const Passage& passage, std::mt19937_64& rng) {
    const int K = passage.stepCount();
    std::uniform_int_distribution<int> three(0, 2);
    const auto de = static_cast<Direction>(three(rng));
    if (de == Direction::NONE) return Explanation::noEffect();
    const Direction chain =
        std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? Direction::MORE : Direction::LESS;
    const int i = std::uniform_int_distribution<int>(1, K)(rng);
    const int j = std::uniform_int_distribution<int>(i, K)(rng);
    return Explanation::span(i, j, chain, de);
}

RandomComponents randomComponentSample(int stepCount, std::mt19937_64& rng) {
    RandomComponents c;
    c.i = std::uniform_int_distribution<int>(1, stepCount)(rng);
    c.j = std::uniform_int_distribution<int>(c.i, stepCount)(rng);
    c.di = static_cast<Direction>(std::uniform_int_distribution<int>(0, 2)(rng));
    c.de = static_cast<Direction>(std::uniform_int_distribution<int>(0, 2)(rng));
    return c;
}

BaselineComponentReport randomBaselineReport(const DatasetSplit& split, std::uint64_t seed,
                                             RandomConvention convention) {
    if (split.questions.empty()) throw DataError("empty split");
    std::mt19937_64 rng(seed);
    long hitI = 0, hitJ = 0, hitDi = 0, hitDe = 0, n = 0;
    for (const auto& q : split.questions) {
        if (!q.gold) throw DataError("record " + q.id + " has no gold explanation");
        const int K = split.passageOf(q).stepCount();
        int pi, pj;
        Direction pdi, pde;
        if (convention == RandomConvention::INDEPENDENT_COMPONENTS) {
            const RandomComponents c = randomComponentSample(K, rng);
            pi = c.i;
            pj = c.j;
            pdi = c.di;
            pde = c.de;
        } else {
            const Explanation e = randomPredict(split.passageOf(q), rng);
            pi = e.i;
            pj = e.j;
            pdi = e.di;
            pde = e.de;
        }
        hitI += pi == q.gold->i;
        hitJ += pj == q.gold->j;
        hitDi += pdi == q.gold->di;
        hitDe += pde == q.gold->de;
        ++n;
    }
    BaselineComponentReport r;
    r.accI = 100.0 * hitI / n;
    r.accJ = 100.0 * hitJ / n;
    r.accDi = 100.0 * hitDi / n;
    r.accDe = 100.0 * hitDe / n;
    return r;
}

void MajorityBaseline::fit(const DatasetSplit& train) {
    std::array<long, 3> counts{};
    std::map<std::tuple<int, int, int, int>, long> effectCounts;
    for (const auto& q : train.questions) {
        if (!q.gold) continue;
        counts[static_cast<size_t>(q.gold->de)]++;
        if (!q.gold->isNoEffect()) {
            effectCounts[{q.gold->i, q.gold->j, static_cast<int>(q.gold->di),
                          static_cast<int>(q.gold->de)}]++;
        }
    }
    if (counts[0] + counts[1] + counts[2] == 0) throw DataError("majority baseline needs gold labels");
    modal = Direction::NONE;
    long best = counts[static_cast<size_t>(Direction::NONE)];
    for (Direction d : {Direction::MORE, Direction::LESS}) {
        if (counts[static_cast<size_t>(d)] > best) {
            best = counts[static_cast<size_t>(d)];
            modal = d;
        }
    }
    if (!effectCounts.empty()) {
        auto bestIt = effectCounts.begin();
        for (auto it = effectCounts.begin(); it != effectCounts.end(); ++it) {
            if (it->second > bestIt->second) bestIt = it;
        }
        auto [i, j, di, de] = bestIt->first;
        modalEffect = Explanation::span(i, j, static_cast<Direction>(di), static_cast<Direction>(de));
    }
}

Explanation MajorityBaseline::predict(const Passage& passage, const InfluenceQuestion&) const {
    if (modal == Direction::NONE) return Explanation::noEffect();
    Explanation e = modalEffect;
    e.de = modal;
    // Clamp the remembered span into this passage.
    e.i = std::min(e.i, passage.stepCount());
    e.j = std::min(std::max(e.j, e.i), passage.stepCount());
    return e;
}

int tokenOverlap(const std::string& a, const std::string& b) {
    const auto ta = tokenize(a);
    const auto tb = tokenize(b);
    std::set<std::string> sa(ta.begin(), ta.end());
    std::set<std::string> sb(tb.begin(), tb.end());
    int overlap = 0;
    for (const auto& t : sa) overlap += sb.count(t) > 0;
    return overlap;
}

namespace {

bool hasNegativeCue(const std::string& text) {
    static const std::set<std::string> cues = {
        "less",  "fewer",  "no",      "not",    "without", "decrease", "decreases",
        "lower", "weaker", "smaller", "reduced", "shortage", "hardly",  "scarce",
    };
    for (const auto& t : tokenize(text)) {
        if (cues.count(t)) return true;
    }
    return false;
}

}  // namespace

Explanation bowAlignPredict(const Passage& passage, const InfluenceQuestion& q) {
    int bestStep = 1;
    int bestOverlap = -1;
    for (int k = 1; k <= passage.stepCount(); ++k) {
        const int overlap = tokenOverlap(q.qp, passage.steps[static_cast<size_t>(k - 1)]);
        if (overlap > bestOverlap) {  // ties keep the lowest index
            bestOverlap = overlap;
            bestStep = k;
        }
    }
    const Direction di = hasNegativeCue(q.qp) ? Direction::LESS : Direction::MORE;
    const Direction de = hasNegativeCue(q.qe) ? (di == Direction::MORE ? Direction::LESS : Direction::MORE)
                                              : di;
    return Explanation::span(bestStep, bestStep, di, de);
}

}  // namespace quartet
