#include "doctest.h"

#include <cmath>
#include <random>

#include "quartet/SyntheticCorpus.h"
#include "quartet/TaggingModel.h"

using namespace quartet;

namespace {

TagSequence tags(std::initializer_list<const char*> names) {
    TagSequence t;
    for (const char* n : names) t.push_back(tagLabelFromString(n));
    return t;
}

bool oracleIsEnd(TagLabel t) { return t == TagLabel::E_CORRECT || t == TagLabel::E_OPPOSITE; }
bool oracleIsInside(TagLabel t) { return t == TagLabel::I_CORRECT || t == TagLabel::I_OPPOSITE; }
bool oracleIsBegin(TagLabel t) { return t == TagLabel::B_CORRECT || t == TagLabel::B_OPPOSITE; }
bool oracleMore(TagLabel t) {
    return t == TagLabel::B_CORRECT || t == TagLabel::I_CORRECT || t == TagLabel::E_CORRECT;
}

// Independent restatement of the grammar: all O, or exactly one run that is
// either B I* E in a single direction, or a lone B at the very last position.
bool oracleGrammarValid(const TagSequence& t) {
    const int n = static_cast<int>(t.size());
    int first = -1;
    for (int p = 0; p < n; ++p) {
        if (t[static_cast<size_t>(p)] != TagLabel::O) {
            first = p;
            break;
        }
    }
    if (first < 0) return true;
    if (!oracleIsBegin(t[static_cast<size_t>(first)])) return false;
    const bool more = oracleMore(t[static_cast<size_t>(first)]);

    int p = first + 1;
    while (p < n && oracleIsInside(t[static_cast<size_t>(p)]) &&
           oracleMore(t[static_cast<size_t>(p)]) == more) {
        ++p;
    }
    if (p == first + 1 && (p == n || true)) {
        // Either a lone B (only valid at the last position) or B directly
        // followed by its E.
        if (p == n) return first == n - 1;
    }
    if (p < n && oracleIsEnd(t[static_cast<size_t>(p)]) &&
        oracleMore(t[static_cast<size_t>(p)]) == more) {
        for (int q = p + 1; q < n; ++q) {
            if (t[static_cast<size_t>(q)] != TagLabel::O) return false;
        }
        return true;
    }
    // Unterminated run: B or B I.. reaching the end or hitting O/mismatch.
    return false;
}

std::vector<TagSequence> allSequences(int K) {
    std::vector<TagSequence> out;
    long total = 1;
    for (int p = 0; p < K; ++p) total *= kNumTagLabels;
    for (long code = 0; code < total; ++code) {
        long c = code;
        TagSequence t(static_cast<size_t>(K));
        for (int p = 0; p < K; ++p) {
            t[static_cast<size_t>(p)] = static_cast<TagLabel>(c % kNumTagLabels);
            c /= kNumTagLabels;
        }
        out.push_back(std::move(t));
    }
    return out;
}

CrfParams randomParams(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    CrfParams p{Mat(kNumTagLabels, kNumTagLabels), Mat(1, kNumTagLabels), Mat(1, kNumTagLabels)};
    for (double& v : p.transition.a) v = dist(rng);
    for (double& v : p.start.a) v = dist(rng);
    for (double& v : p.end.a) v = dist(rng);
    return p;
}

Mat randomEmissions(int K, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 2.0);
    Mat e(K, kNumTagLabels);
    for (double& v : e.a) v = dist(rng);
    return e;
}

double bruteForceLogPartition(const Mat& emissions, const CrfParams& params) {
    double z = -std::numeric_limits<double>::infinity();
    for (const auto& t : allSequences(emissions.rows)) {
        if (!oracleGrammarValid(t)) continue;
        double s = params.start.at(0, static_cast<int>(t[0]));
        for (int p = 0; p < emissions.rows; ++p) {
            s += emissions.at(p, static_cast<int>(t[static_cast<size_t>(p)]));
            if (p + 1 < emissions.rows) {
                s += params.transition.at(static_cast<int>(t[static_cast<size_t>(p)]),
                                          static_cast<int>(t[static_cast<size_t>(p + 1)]));
            }
        }
        s += params.end.at(0, static_cast<int>(t.back()));
        if (z == -std::numeric_limits<double>::infinity()) {
            z = s;
        } else {
            const double m = std::max(z, s);
            z = m + std::log(std::exp(z - m) + std::exp(s - m));
        }
    }
    return z;
}

std::pair<TagSequence, double> bruteForceViterbi(const Mat& emissions, const CrfParams& params,
                                                 bool excludeAllO) {
    TagSequence best;
    double bestScore = -std::numeric_limits<double>::infinity();
    for (const auto& t : allSequences(emissions.rows)) {
        if (!oracleGrammarValid(t)) continue;
        if (excludeAllO) {
            bool allO = true;
            for (TagLabel l : t) allO = allO && l == TagLabel::O;
            if (allO) continue;
        }
        double s = params.start.at(0, static_cast<int>(t[0]));
        for (int p = 0; p < emissions.rows; ++p) {
            s += emissions.at(p, static_cast<int>(t[static_cast<size_t>(p)]));
            if (p + 1 < emissions.rows) {
                s += params.transition.at(static_cast<int>(t[static_cast<size_t>(p)]),
                                          static_cast<int>(t[static_cast<size_t>(p + 1)]));
            }
        }
        s += params.end.at(0, static_cast<int>(t.back()));
        if (s > bestScore) {
            bestScore = s;
            best = t;
        }
    }
    return {best, bestScore};
}

DatasetSplit taggingSynthSplit(int passages, std::uint64_t seed = 23) {
    SynthConfig sc;
    sc.seed = seed;
    sc.numPassages = passages;
    sc.questionsPerPassage = 5;
    sc.minSteps = 3;
    sc.maxSteps = 4;
    return generateSyntheticCorpus(sc);
}

TaggingConfig tinyTaggingConfig() {
    TaggingConfig cfg;
    cfg.encoder.layers = 2;
    cfg.encoder.embedDim = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ffDim = 32;
    cfg.encoder.dropout = 0.0;
    cfg.headDim = 16;
    return cfg;
}

}  // namespace

TEST_CASE("grammar representability matches the stated transition rules") {
    CHECK(isCrfRepresentable(tags({"O", "O", "O"})));
    CHECK(isCrfRepresentable(tags({"B-CORRECT", "E-CORRECT", "O"})));
    CHECK(isCrfRepresentable(tags({"O", "B-OPPOSITE", "I-OPPOSITE", "E-OPPOSITE"})));
    CHECK(isCrfRepresentable(tags({"O", "O", "B-CORRECT"})));  // lone B at the end

    CHECK_FALSE(isCrfRepresentable(tags({"B-CORRECT", "O", "O"})));  // lone B mid-sequence
    CHECK_FALSE(isCrfRepresentable(tags({"B-CORRECT", "E-OPPOSITE", "O"})));  // mixed directions
    CHECK_FALSE(isCrfRepresentable(tags({"E-CORRECT", "O", "O"})));
    CHECK_FALSE(isCrfRepresentable(tags({"B-CORRECT", "I-CORRECT", "I-CORRECT"})));  // unterminated
    CHECK_FALSE(isCrfRepresentable(tags({"B-CORRECT", "E-CORRECT", "B-CORRECT"})));
    CHECK_FALSE(isCrfRepresentable(
        tags({"B-CORRECT", "E-CORRECT", "O", "B-OPPOSITE", "E-OPPOSITE"})));  // second run
}

TEST_CASE("grammar agrees with the independent oracle on every sequence up to K=5") {
    for (int K = 1; K <= 5; ++K) {
        for (const auto& t : allSequences(K)) {
            INFO("K=", K);
            REQUIRE(isCrfRepresentable(t) == oracleGrammarValid(t));
        }
    }
}

TEST_CASE("every grammar-valid sequence also satisfies the codec grammar") {
    for (int K = 1; K <= 5; ++K) {
        for (const auto& t : allSequences(K)) {
            if (isCrfRepresentable(t)) REQUIRE(isValidTagSequence(t));
        }
    }
}

TEST_CASE("log-partition matches brute-force enumeration up to K=5") {
    std::mt19937_64 rng(31);
    for (int K = 1; K <= 5; ++K) {
        for (int trial = 0; trial < 8; ++trial) {
            auto params = randomParams(rng);
            auto emissions = randomEmissions(K, rng);
            const double fast = crfLogPartition(emissions, params);
            const double brute = bruteForceLogPartition(emissions, params);
            REQUIRE(fast == doctest::Approx(brute).epsilon(1e-10));
            REQUIRE(std::abs(fast - brute) < 1e-6);
        }
    }
}

TEST_CASE("constrained Viterbi equals the brute-force argmax") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 120; ++trial) {
        const int K = 1 + static_cast<int>(rng() % 5);
        auto params = randomParams(rng);
        auto emissions = randomEmissions(K, rng);
        auto [fastSeq, fastScore] = viterbiConstrainedScored(emissions, params);
        auto [bruteSeq, bruteScore] = bruteForceViterbi(emissions, params, false);
        REQUIRE(fastScore == doctest::Approx(bruteScore).epsilon(1e-12));
        REQUIRE(fastSeq == bruteSeq);

        auto [fastSeq2, fastScore2] = viterbiConstrainedScored(emissions, params, true);
        auto [bruteSeq2, bruteScore2] = bruteForceViterbi(emissions, params, true);
        REQUIRE(fastScore2 == doctest::Approx(bruteScore2).epsilon(1e-12));
        REQUIRE(fastSeq2 == bruteSeq2);
    }
}

TEST_CASE("viterbi returns a valid sequence even when emissions prefer an invalid one") {
    CrfParams params{Mat(kNumTagLabels, kNumTagLabels), Mat(1, kNumTagLabels), Mat(1, kNumTagLabels)};
    Mat emissions(2, kNumTagLabels);
    // Hugely favor E-CORRECT then B-CORRECT, an impossible order.
    emissions.at(0, static_cast<int>(TagLabel::E_CORRECT)) = 50.0;
    emissions.at(1, static_cast<int>(TagLabel::B_CORRECT)) = 50.0;
    auto seq = viterbiConstrained(emissions, params);
    CHECK(isCrfRepresentable(seq));
    // The best valid compromise keeps the trailing B as a length-1 span.
    CHECK(seq == tags({"O", "B-CORRECT"}));

    // Dominant scores on a valid pair are simply taken.
    Mat emissions2(2, kNumTagLabels);
    emissions2.at(0, static_cast<int>(TagLabel::B_CORRECT)) = 50.0;
    emissions2.at(1, static_cast<int>(TagLabel::E_CORRECT)) = 50.0;
    CHECK(viterbiConstrained(emissions2, params) == tags({"B-CORRECT", "E-CORRECT"}));
}

TEST_CASE("crf NLL: exact zero when every alternative underflows away") {
    CrfParams params{Mat(kNumTagLabels, kNumTagLabels), Mat(1, kNumTagLabels), Mat(1, kNumTagLabels)};
    const TagSequence gold = tags({"B-CORRECT", "E-CORRECT", "O"});
    Mat emissions = Mat::fill(3, kNumTagLabels, -1e9);
    for (int t = 0; t < 3; ++t) emissions.at(t, static_cast<int>(gold[static_cast<size_t>(t)])) = 0.0;
    CHECK(crfNegLogLikelihood(emissions, gold, params) == 0.0);
}

TEST_CASE("crf NLL is non-negative and matches brute force") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 40; ++trial) {
        const int K = 2 + static_cast<int>(rng() % 3);
        auto params = randomParams(rng);
        auto emissions = randomEmissions(K, rng);
        // Draw a random grammar-valid gold.
        std::vector<TagSequence> valid;
        for (const auto& t : allSequences(K)) {
            if (oracleGrammarValid(t)) valid.push_back(t);
        }
        const auto& gold = valid[rng() % valid.size()];
        const double nll = crfNegLogLikelihood(emissions, gold, params);
        REQUIRE(nll >= 0.0);
        double expected = bruteForceLogPartition(emissions, params);
        double goldScore = crfSequenceScore(emissions, gold, params);
        REQUIRE(nll == doctest::Approx(expected - goldScore).epsilon(1e-10));
    }
}

TEST_CASE("crf NLL rejects a gold sequence outside the grammar") {
    CrfParams params{Mat(kNumTagLabels, kNumTagLabels), Mat(1, kNumTagLabels), Mat(1, kNumTagLabels)};
    Mat emissions(3, kNumTagLabels);
    CHECK_THROWS_AS(crfNegLogLikelihood(emissions, tags({"B-CORRECT", "O", "O"}), params),
                    ValidationError);
}

TEST_CASE("reconciliation composes the tag span with the d_e head") {
    CrfParams params{Mat(kNumTagLabels, kNumTagLabels), Mat(1, kNumTagLabels), Mat(1, kNumTagLabels)};

    // Strong effect sequence [O, B-CORRECT, E-CORRECT] with d_e leaning LESS.
    Mat emissions(3, kNumTagLabels);
    emissions.at(1, static_cast<int>(TagLabel::B_CORRECT)) = 8.0;
    emissions.at(2, static_cast<int>(TagLabel::E_CORRECT)) = 8.0;
    auto pred = reconcileTaggingPrediction(emissions, {0.2, 0.7, 0.1}, params);
    CHECK(pred.tags == tags({"O", "B-CORRECT", "E-CORRECT"}));
    CHECK(pred.explanation == Explanation::span(2, 3, Direction::MORE, Direction::LESS));

    // Overwhelming d_e NONE flips the joint decision to no effect.
    auto noEffect = reconcileTaggingPrediction(emissions, {1e-12, 1e-12, 1.0 - 2e-12}, params);
    CHECK(noEffect.explanation.isNoEffect());
    CHECK(noEffect.tags == TagSequence(3, TagLabel::O));

    // All-O emissions with a NONE head give the no-effect explanation.
    Mat flat(3, kNumTagLabels);
    for (int t = 0; t < 3; ++t) flat.at(t, static_cast<int>(TagLabel::O)) = 5.0;
    auto quiet = reconcileTaggingPrediction(flat, {0.1, 0.1, 0.8}, params);
    CHECK(quiet.explanation.isNoEffect());
}

TEST_CASE("reconciled predictions always satisfy the consistency rules (fuzz)") {
    std::mt19937_64 rng(34);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int K = 1 + static_cast<int>(rng() % 6);
        auto params = randomParams(rng);
        auto emissions = randomEmissions(K, rng);
        std::array<double, 3> pde{u(rng), u(rng), u(rng)};
        const double sum = pde[0] + pde[1] + pde[2];
        for (double& p : pde) p /= sum;
        auto pred = reconcileTaggingPrediction(emissions, pde, params);
        REQUIRE(validateExplanation(pred.explanation, K).valid);
        REQUIRE(isCrfRepresentable(pred.tags));
    }
}

TEST_CASE("tagging loss gradients match finite differences (tiny config)") {
    auto split = taggingSynthSplit(2);
    auto vocab = buildVocab({&split}, 1, 12);
    TaggingModel model(tinyTaggingConfig(), vocab, 41);

    // Pick an effect question so the CRF term participates.
    const InfluenceQuestion* effectQ = nullptr;
    for (const auto& q : split.questions) {
        if (!q.gold->isNoEffect() && isCrfRepresentable(encodeTags(*q.gold, split.passageOf(q).stepCount()))) {
            effectQ = &q;
            break;
        }
    }
    REQUIRE(effectQ != nullptr);
    const auto& p = split.passageOf(*effectQ);

    auto& store = model.params();
    Graph g(&store);
    bool usedCrf = false;
    int root = model.buildLossGraph(g, p, *effectQ, &usedCrf);
    REQUIRE(usedCrf);
    g.backward(root);
    std::vector<Mat> analytic(static_cast<size_t>(store.count()));
    g.accumulateParamGrads(analytic);

    std::mt19937_64 pickRng(88);
    const double h = 1e-6;
    for (int id = 0; id < store.count(); ++id) {
        Mat& value = store.valueMutable(id);
        const size_t n = value.a.size();
        const size_t samples = std::min<size_t>(n, 5);
        for (size_t s = 0; s < samples; ++s) {
            const size_t i = std::uniform_int_distribution<size_t>(0, n - 1)(pickRng);
            const double orig = value.a[i];
            value.a[i] = orig + h;
            Graph gp(&store);
            const double fp = gp.scalar(model.buildLossGraph(gp, p, *effectQ));
            value.a[i] = orig - h;
            Graph gm(&store);
            const double fm = gm.scalar(model.buildLossGraph(gm, p, *effectQ));
            value.a[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[static_cast<size_t>(id)].size() > 0
                                  ? analytic[static_cast<size_t>(id)].a[i]
                                  : 0.0;
            INFO("param ", store.entry(id).name, " entry ", i, " an=", an, " fd=", fd);
            REQUIRE(relativeError(an, fd) < 1e-4);
        }
    }
}

TEST_CASE("graph CRF NLL equals the value-level computation") {
    auto split = taggingSynthSplit(3);
    auto vocab = buildVocab({&split}, 1, 12);
    TaggingModel model(tinyTaggingConfig(), vocab, 42);

    int checked = 0;
    for (const auto& q : split.questions) {
        const auto& p = split.passageOf(q);
        const auto goldTags = encodeTags(*q.gold, p.stepCount());
        if (!isCrfRepresentable(goldTags)) continue;
        const Mat emissions = model.emissions(p, q);
        const double direct = crfNegLogLikelihood(emissions, goldTags, model.crfParams());

        Graph g(&model.params());
        bool usedCrf = false;
        const double viaGraph = g.scalar(model.buildLossGraph(g, p, q, &usedCrf));
        REQUIRE(usedCrf);
        // The graph loss adds the d_e cross entropy on top of the CRF NLL.
        auto pred = model.predictDetailed(p, q);
        const double deCe = -std::log(pred.pde[static_cast<size_t>(static_cast<int>(q.gold->de))]);
        REQUIRE(viaGraph == doctest::Approx(direct + deCe).epsilon(1e-9));
        if (++checked >= 5) break;
    }
    CHECK(checked > 0);
}

TEST_CASE("tagging training decreases the loss and counts skipped golds") {
    SynthConfig sc;
    sc.seed = 51;
    sc.numPassages = 12;
    sc.questionsPerPassage = 4;
    sc.minSteps = 3;
    sc.maxSteps = 4;
    sc.lengthOneFrac = 0.5;  // force plenty of length-1 spans
    auto split = generateSyntheticCorpus(sc);

    int midSequenceLoners = 0;
    for (const auto& q : split.questions) {
        const auto t = encodeTags(*q.gold, split.passageOf(q).stepCount());
        if (!isCrfRepresentable(t)) ++midSequenceLoners;
    }
    REQUIRE(midSequenceLoners > 0);

    auto vocab = buildVocab({&split}, 1, 12);
    TaggingModel model(tinyTaggingConfig(), vocab, 43);
    TrainConfig tc;
    tc.epochs = 8;
    tc.batchSize = 12;
    tc.seed = 5;
    tc.adam.lr = 2e-3;
    auto result = model.train(split, tc);
    CHECK(result.crfSkipped == midSequenceLoners);
    CHECK(result.epochLoss.back() < result.epochLoss.front());

    // Every prediction on the training passages is structurally valid.
    for (size_t k = 0; k < 10; ++k) {
        const auto& q = split.questions[k];
        auto e = model.predict(split.passageOf(q), q);
        CHECK(validateExplanation(e, split.passageOf(q).stepCount()).valid);
    }
}
