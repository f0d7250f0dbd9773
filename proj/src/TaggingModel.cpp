#include "quartet/TaggingModel.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

namespace quartet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool isBegin(TagLabel t) { return t == TagLabel::B_CORRECT || t == TagLabel::B_OPPOSITE; }
bool isEnd(TagLabel t) { return t == TagLabel::E_CORRECT || t == TagLabel::E_OPPOSITE; }

int labelOf(int expanded) { return expanded % kNumTagLabels; }
int flagOf(int expanded) { return expanded / kNumTagLabels; }
constexpr int kNumExpanded = 2 * kNumTagLabels;

/// Expanded-state validity tables: state = (label, runCompleted flag).
struct ExpandedGrammar {
    std::array<bool, kNumExpanded> start{};
    std::array<std::array<bool, kNumExpanded>, kNumExpanded> transition{};
    std::array<bool, kNumExpanded> end{};

    ExpandedGrammar() {
        const TransitionMask& m = TransitionMask::bieoGrammar();
        for (int s = 0; s < kNumExpanded; ++s) {
            start[static_cast<size_t>(s)] =
                flagOf(s) == 0 && m.start[static_cast<size_t>(labelOf(s))];
            end[static_cast<size_t>(s)] = m.end[static_cast<size_t>(labelOf(s))];
        }
        for (int s1 = 0; s1 < kNumExpanded; ++s1) {
            const int l1 = labelOf(s1), f1 = flagOf(s1);
            for (int s2 = 0; s2 < kNumExpanded; ++s2) {
                const int l2 = labelOf(s2), f2 = flagOf(s2);
                bool ok = m.transition[static_cast<size_t>(l1)][static_cast<size_t>(l2)];
                ok = ok && f2 == ((f1 == 1 || isEnd(static_cast<TagLabel>(l1))) ? 1 : 0);
                ok = ok && !(f1 == 1 && static_cast<TagLabel>(l2) != TagLabel::O);
                transition[static_cast<size_t>(s1)][static_cast<size_t>(s2)] = ok;
            }
        }
    }
};

const ExpandedGrammar& expandedGrammar() {
    static const ExpandedGrammar g;
    return g;
}

double logSumExpPair(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Mat normalInit(int rows, int cols, std::mt19937_64& rng, double stddev = 0.02) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (double& v : m.a) v = dist(rng);
    return m;
}

void checkEmissions(const Mat& emissions) {
    if (emissions.cols != kNumTagLabels || emissions.rows < 1) {
        throw NumericsError("emissions must be K x 7 with K >= 1");
    }
}

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch * 1000003ULL + index + 1ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

const TransitionMask& TransitionMask::bieoGrammar() {
    static const TransitionMask mask = [] {
        TransitionMask m;
        auto allow = [&m](TagLabel from, TagLabel to) {
            m.transition[static_cast<size_t>(from)][static_cast<size_t>(to)] = true;
        };
        m.start[static_cast<size_t>(TagLabel::O)] = true;
        m.start[static_cast<size_t>(TagLabel::B_CORRECT)] = true;
        m.start[static_cast<size_t>(TagLabel::B_OPPOSITE)] = true;

        allow(TagLabel::O, TagLabel::O);
        allow(TagLabel::O, TagLabel::B_CORRECT);
        allow(TagLabel::O, TagLabel::B_OPPOSITE);
        allow(TagLabel::B_CORRECT, TagLabel::I_CORRECT);
        allow(TagLabel::B_CORRECT, TagLabel::E_CORRECT);
        allow(TagLabel::B_OPPOSITE, TagLabel::I_OPPOSITE);
        allow(TagLabel::B_OPPOSITE, TagLabel::E_OPPOSITE);
        allow(TagLabel::I_CORRECT, TagLabel::I_CORRECT);
        allow(TagLabel::I_CORRECT, TagLabel::E_CORRECT);
        allow(TagLabel::I_OPPOSITE, TagLabel::I_OPPOSITE);
        allow(TagLabel::I_OPPOSITE, TagLabel::E_OPPOSITE);
        allow(TagLabel::E_CORRECT, TagLabel::O);
        allow(TagLabel::E_OPPOSITE, TagLabel::O);

        m.end[static_cast<size_t>(TagLabel::O)] = true;
        m.end[static_cast<size_t>(TagLabel::B_CORRECT)] = true;   // lone B at the end
        m.end[static_cast<size_t>(TagLabel::B_OPPOSITE)] = true;
        m.end[static_cast<size_t>(TagLabel::E_CORRECT)] = true;
        m.end[static_cast<size_t>(TagLabel::E_OPPOSITE)] = true;
        return m;
    }();
    return mask;
}

bool isCrfRepresentable(const TagSequence& tags) {
    if (tags.empty()) return false;
    const auto& g = expandedGrammar();
    int state = static_cast<int>(tags[0]);
    if (!g.start[static_cast<size_t>(state)]) return false;
    for (size_t t = 1; t < tags.size(); ++t) {
        const int label = static_cast<int>(tags[t]);
        int next = -1;
        for (int f = 0; f < 2; ++f) {
            const int cand = label + kNumTagLabels * f;
            if (g.transition[static_cast<size_t>(state)][static_cast<size_t>(cand)]) {
                next = cand;
                break;
            }
        }
        if (next < 0) return false;
        state = next;
    }
    return g.end[static_cast<size_t>(state)];
}

double crfSequenceScore(const Mat& emissions, const TagSequence& tags, const CrfParams& params) {
    checkEmissions(emissions);
    if (static_cast<int>(tags.size()) != emissions.rows) {
        throw NumericsError("tag sequence length does not match emissions");
    }
    if (!isCrfRepresentable(tags)) {
        throw ValidationError("sequence is not representable under the BIEO grammar");
    }
    double score = params.start.at(0, static_cast<int>(tags[0]));
    for (size_t t = 0; t < tags.size(); ++t) {
        score += emissions.at(static_cast<int>(t), static_cast<int>(tags[t]));
        if (t + 1 < tags.size()) {
            score += params.transition.at(static_cast<int>(tags[t]), static_cast<int>(tags[t + 1]));
        }
    }
    score += params.end.at(0, static_cast<int>(tags.back()));
    return score;
}

double crfLogPartition(const Mat& emissions, const CrfParams& params) {
    checkEmissions(emissions);
    const auto& g = expandedGrammar();
    const int K = emissions.rows;

    std::array<double, kNumExpanded> alpha;
    for (int s = 0; s < kNumExpanded; ++s) {
        alpha[static_cast<size_t>(s)] =
            g.start[static_cast<size_t>(s)]
                ? params.start.at(0, labelOf(s)) + emissions.at(0, labelOf(s))
                : kNegInf;
    }
    for (int t = 1; t < K; ++t) {
        std::array<double, kNumExpanded> next;
        for (int s2 = 0; s2 < kNumExpanded; ++s2) {
            double acc = kNegInf;
            for (int s1 = 0; s1 < kNumExpanded; ++s1) {
                if (!g.transition[static_cast<size_t>(s1)][static_cast<size_t>(s2)]) continue;
                acc = logSumExpPair(acc, alpha[static_cast<size_t>(s1)] +
                                             params.transition.at(labelOf(s1), labelOf(s2)));
            }
            next[static_cast<size_t>(s2)] =
                acc == kNegInf ? kNegInf : acc + emissions.at(t, labelOf(s2));
        }
        alpha = next;
    }
    double z = kNegInf;
    for (int s = 0; s < kNumExpanded; ++s) {
        if (!g.end[static_cast<size_t>(s)] || alpha[static_cast<size_t>(s)] == kNegInf) continue;
        z = logSumExpPair(z, alpha[static_cast<size_t>(s)] + params.end.at(0, labelOf(s)));
    }
    return z;
}

double crfNegLogLikelihood(const Mat& emissions, const TagSequence& gold, const CrfParams& params) {
    return crfLogPartition(emissions, params) - crfSequenceScore(emissions, gold, params);
}

std::pair<TagSequence, double> viterbiConstrainedScored(const Mat& emissions,
                                                        const CrfParams& params,
                                                        bool excludeAllO) {
    checkEmissions(emissions);
    const auto& g = expandedGrammar();
    const int K = emissions.rows;
    const int allOState = static_cast<int>(TagLabel::O);  // (O, flag 0)

    std::array<double, kNumExpanded> best;
    std::vector<std::array<int, kNumExpanded>> back(static_cast<size_t>(K));
    for (int s = 0; s < kNumExpanded; ++s) {
        best[static_cast<size_t>(s)] =
            g.start[static_cast<size_t>(s)]
                ? params.start.at(0, labelOf(s)) + emissions.at(0, labelOf(s))
                : kNegInf;
        back[0][static_cast<size_t>(s)] = -1;
    }
    for (int t = 1; t < K; ++t) {
        std::array<double, kNumExpanded> next;
        for (int s2 = 0; s2 < kNumExpanded; ++s2) {
            double bestScore = kNegInf;
            int bestPrev = -1;
            for (int s1 = 0; s1 < kNumExpanded; ++s1) {
                if (!g.transition[static_cast<size_t>(s1)][static_cast<size_t>(s2)]) continue;
                if (best[static_cast<size_t>(s1)] == kNegInf) continue;
                const double cand = best[static_cast<size_t>(s1)] +
                                    params.transition.at(labelOf(s1), labelOf(s2));
                if (cand > bestScore) {
                    bestScore = cand;
                    bestPrev = s1;
                }
            }
            next[static_cast<size_t>(s2)] =
                bestPrev < 0 ? kNegInf : bestScore + emissions.at(t, labelOf(s2));
            back[static_cast<size_t>(t)][static_cast<size_t>(s2)] = bestPrev;
        }
        best = next;
    }

    double bestFinal = kNegInf;
    int bestState = -1;
    for (int s = 0; s < kNumExpanded; ++s) {
        if (!g.end[static_cast<size_t>(s)]) continue;
        if (excludeAllO && s == allOState) continue;  // only the all-O path ends at (O, 0)
        if (best[static_cast<size_t>(s)] == kNegInf) continue;
        const double cand = best[static_cast<size_t>(s)] + params.end.at(0, labelOf(s));
        if (cand > bestFinal) {
            bestFinal = cand;
            bestState = s;
        }
    }
    if (bestState < 0) throw NumericsError("no grammar-valid sequence available");

    TagSequence tags(static_cast<size_t>(K));
    int state = bestState;
    for (int t = K - 1; t >= 0; --t) {
        tags[static_cast<size_t>(t)] = static_cast<TagLabel>(labelOf(state));
        state = back[static_cast<size_t>(t)][static_cast<size_t>(state)];
    }
    return {tags, bestFinal};
}

TagSequence viterbiConstrained(const Mat& emissions, const CrfParams& params, bool excludeAllO) {
    return viterbiConstrainedScored(emissions, params, excludeAllO).first;
}

void TaggingConfig::normalize() {
    encoder.validate();
    if (selection.spanLayers.empty()) selection.spanLayers = {std::min(2, encoder.layers)};
    if (selection.directionLayers.empty()) {
        selection.directionLayers = {encoder.layers - 1, encoder.layers};
    }
    selection.validate(encoder.layers);
    if (headDim < 1) throw NumericsError("headDim must be positive");
}

TaggingModel::TaggingModel(TaggingConfig config, Vocab vocab, std::uint64_t initSeed)
    : cfg(std::move(config)), vocabulary(std::move(vocab)) {
    cfg.normalize();
    std::mt19937_64 rng(initSeed);
    encoder = std::make_unique<TransformerEncoder>(cfg.encoder, vocabulary.size(), store, rng);

    const int E = cfg.encoder.embedDim;
    const int D = cfg.headDim;
    const int spanWidth = static_cast<int>(cfg.selection.spanLayers.size()) * E;
    const int dirWidth = static_cast<int>(cfg.selection.directionLayers.size()) * E;
    const int spanInWidth = cfg.selection.weightedAverage ? E : spanWidth;
    const int dirInWidth = cfg.selection.weightedAverage ? E : dirWidth;

    std::mt19937_64 headRng(initSeed ^ 0x6a09e667f3bcc909ULL);
    spanProjW = store.add("tagging.span.proj.w", normalInit(spanInWidth, D, headRng));
    spanProjB = store.add("tagging.span.proj.b", Mat(1, D), true);
    spanMix = store.add("tagging.span.mix",
                        Mat(1, static_cast<int>(cfg.selection.spanLayers.size())), true);
    dirProjW = store.add("tagging.dir.proj.w", normalInit(dirInWidth, D, headRng));
    dirProjB = store.add("tagging.dir.proj.b", Mat(1, D), true);
    dirMix = store.add("tagging.dir.mix",
                       Mat(1, static_cast<int>(cfg.selection.directionLayers.size())), true);

    emitW = store.add("tagging.emit.w", normalInit(D, kNumTagLabels, headRng));
    emitB = store.add("tagging.emit.b", Mat(1, kNumTagLabels), true);
    deW = store.add("tagging.de.w", normalInit(D, 3, headRng));
    deB = store.add("tagging.de.b", Mat(1, 3), true);
    crfTrans = store.add("tagging.crf.trans", Mat(kNumTagLabels, kNumTagLabels), true);
    crfStart = store.add("tagging.crf.start", Mat(1, kNumTagLabels), true);
    crfEnd = store.add("tagging.crf.end", Mat(1, kNumTagLabels), true);
}

CrfParams TaggingModel::crfParams() const {
    return CrfParams{store.value(crfTrans), store.value(crfStart), store.value(crfEnd)};
}

TaggingModel::ForwardNodes TaggingModel::buildForward(Graph& g, const TokenSequence& ts) const {
    const auto layers = encoder->forwardLayers(g, ts);
    const int spanFeatures = combineLayers(g, layers, cfg.selection.spanLayers,
                                           cfg.selection.weightedAverage, spanProjW, spanProjB,
                                           spanMix);
    const int dirFeatures = combineLayers(g, layers, cfg.selection.directionLayers,
                                          cfg.selection.weightedAverage, dirProjW, dirProjB,
                                          dirMix);
    const int sentences = poolSentences(g, spanFeatures, ts, cfg.encoder.meanPoolSentences);
    const int cls = poolCls(g, dirFeatures, ts);

    ForwardNodes nodes;
    nodes.emissions = g.addRowBroadcast(g.matmul(sentences, g.param(emitW)), g.param(emitB));
    nodes.deLogits = g.addRowBroadcast(g.matmul(cls, g.param(deW)), g.param(deB));
    return nodes;
}

int TaggingModel::buildCrfNll(Graph& g, int emissionsNode, const TagSequence& gold) const {
    const auto& grammar = expandedGrammar();
    const int K = static_cast<int>(gold.size());

    // Expanded score tables gathered from the 7-label parameters; -1 marks a
    // masked cell (scored kMaskScore, which underflows out of every sum).
    Mat startMap(1, kNumExpanded);
    Mat endMap(1, kNumExpanded);
    Mat emitMap(1, kNumExpanded);
    for (int s = 0; s < kNumExpanded; ++s) {
        startMap.at(0, s) = grammar.start[static_cast<size_t>(s)] ? labelOf(s) : -1;
        endMap.at(0, s) = grammar.end[static_cast<size_t>(s)] ? labelOf(s) : -1;
        emitMap.at(0, s) = labelOf(s);
    }
    Mat transMap(kNumExpanded, kNumExpanded);
    for (int s1 = 0; s1 < kNumExpanded; ++s1) {
        for (int s2 = 0; s2 < kNumExpanded; ++s2) {
            transMap.at(s1, s2) =
                grammar.transition[static_cast<size_t>(s1)][static_cast<size_t>(s2)]
                    ? labelOf(s1) * kNumTagLabels + labelOf(s2)
                    : -1;
        }
    }

    const int transNode = g.param(crfTrans);
    const int startNode = g.param(crfStart);
    const int endNode = g.param(crfEnd);
    const int transExp = g.gatherFlat(transNode, transMap);

    auto expandedEmit = [&](int t) {
        return g.gatherFlat(g.selectRows(emissionsNode, {t}), emitMap);
    };

    int alpha = g.add(g.gatherFlat(startNode, startMap), expandedEmit(0));
    for (int t = 1; t < K; ++t) {
        int scores = g.addColStretch(transExp, alpha);      // [s1][s2] + alpha[s1]
        alpha = g.add(g.logSumExpCols(scores), expandedEmit(t));
    }
    const int logZ = g.logSumExpAll(g.add(alpha, g.gatherFlat(endNode, endMap)));

    std::vector<int> goldTerms;
    goldTerms.push_back(g.pick(startNode, 0, static_cast<int>(gold[0])));
    for (int t = 0; t < K; ++t) {
        goldTerms.push_back(g.pick(emissionsNode, t, static_cast<int>(gold[static_cast<size_t>(t)])));
        if (t + 1 < K) {
            goldTerms.push_back(g.pick(transNode, static_cast<int>(gold[static_cast<size_t>(t)]),
                                       static_cast<int>(gold[static_cast<size_t>(t + 1)])));
        }
    }
    goldTerms.push_back(g.pick(endNode, 0, static_cast<int>(gold.back())));
    const int goldScore = g.addScalars(goldTerms);
    return g.addScalars({logZ, g.scale(goldScore, -1.0)});
}

int TaggingModel::buildLossGraph(Graph& g, const Passage& passage, const InfluenceQuestion& q,
                                 bool* usedCrf) const {
    if (!q.gold) throw DataError("record " + q.id + " has no gold explanation");
    const auto ts = assembleInput(passage, q.qp, q.qe, vocabulary, false);
    const auto nodes = buildForward(g, ts);

    const TagSequence goldTags = encodeTags(*q.gold, passage.stepCount());
    std::vector<int> terms;
    const bool crfUsable = isCrfRepresentable(goldTags);
    if (crfUsable) {
        terms.push_back(buildCrfNll(g, nodes.emissions, goldTags));
    }
    if (usedCrf) *usedCrf = crfUsable;

    const int logDe = g.logSoftmaxRows(nodes.deLogits);
    terms.push_back(g.scale(g.pick(logDe, 0, static_cast<int>(q.gold->de)), -1.0));
    return g.addScalars(terms);
}

Mat TaggingModel::emissions(const Passage& passage, const InfluenceQuestion& q) const {
    const auto ts = assembleInput(passage, q.qp, q.qe, vocabulary, false);
    Graph g(&store, false, nullptr);
    const auto nodes = buildForward(g, ts);
    Mat out = g.value(nodes.emissions);
    if (!out.allFinite()) throw NumericsError("non-finite emission scores");
    return out;
}

TaggingPrediction reconcileTaggingPrediction(const Mat& emissions,
                                             const std::array<double, 3>& pde,
                                             const CrfParams& params) {
    const int K = emissions.rows;
    TaggingPrediction pred;
    pred.pde = pde;

    // The shared log-partition cancels out of the comparison, so raw sequence
    // scores are used directly.
    const TagSequence allO(static_cast<size_t>(K), TagLabel::O);
    const double noEffectScore =
        crfSequenceScore(emissions, allO, params) +
        std::log(std::max(pde[static_cast<size_t>(static_cast<int>(Direction::NONE))], 1e-300));

    const auto [effectTags, effectSeqScore] = viterbiConstrainedScored(emissions, params, true);
    const double pMore = pde[static_cast<size_t>(static_cast<int>(Direction::MORE))];
    const double pLess = pde[static_cast<size_t>(static_cast<int>(Direction::LESS))];
    const Direction bestDe = pMore >= pLess ? Direction::MORE : Direction::LESS;
    const double effectScore = effectSeqScore + std::log(std::max(std::max(pMore, pLess), 1e-300));

    if (noEffectScore >= effectScore) {
        pred.tags = allO;
        pred.explanation = Explanation::noEffect();
    } else {
        pred.tags = effectTags;
        const DecodedTags d = decodeTags(effectTags);
        // Grammar-valid runs never mix directions, so d.di == d.dj here.
        pred.explanation = Explanation::span(d.i, d.j, d.di, bestDe);
    }
    ValidationResult vr = validateExplanation(pred.explanation, K);
    if (!vr.valid) throw NumericsError("tagging decoder produced an invalid explanation");
    return pred;
}

TaggingPrediction TaggingModel::predictDetailed(const Passage& passage,
                                                const InfluenceQuestion& q) const {
    const auto ts = assembleInput(passage, q.qp, q.qe, vocabulary, false);
    Graph g(&store, false, nullptr);
    const auto nodes = buildForward(g, ts);

    const Mat emit = g.value(nodes.emissions);
    if (!emit.allFinite()) throw NumericsError("non-finite emission scores");
    const Mat pdeMat = g.value(g.softmaxRows(nodes.deLogits));
    std::array<double, 3> pde{};
    for (int c = 0; c < 3; ++c) pde[static_cast<size_t>(c)] = pdeMat.at(0, c);
    return reconcileTaggingPrediction(emit, pde, crfParams());
}

Explanation TaggingModel::predict(const Passage& passage, const InfluenceQuestion& q) const {
    return predictDetailed(passage, q).explanation;
}

TaggingTrainResult TaggingModel::train(const DatasetSplit& split, const TrainConfig& tc) {
    if (split.questions.empty()) throw DataError("cannot train on an empty split");
    for (const auto& q : split.questions) {
        if (!q.gold) throw DataError("record " + q.id + " has no gold explanation");
    }
    const int n = static_cast<int>(split.questions.size());
    const int threads = std::max(1, tc.threads);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TaggingTrainResult result;
    long stepCount = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::mt19937_64 shuffleRng(tc.seed ^ (0x2545f4914f6cdd1dULL + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffleRng);

        double epochLoss = 0;
        for (int start = 0; start < n; start += tc.batchSize) {
            const int end = std::min(n, start + tc.batchSize);
            store.zeroGrads();

            std::vector<std::vector<Mat>> buffers(
                static_cast<size_t>(threads),
                std::vector<Mat>(static_cast<size_t>(store.count())));
            std::vector<double> losses(static_cast<size_t>(threads), 0.0);
            std::vector<int> skipped(static_cast<size_t>(threads), 0);
            std::vector<std::string> errors(static_cast<size_t>(threads));

            auto worker = [&](int tid) {
                try {
                    for (int b = start + tid; b < end; b += threads) {
                        const auto& q = split.questions[static_cast<size_t>(order[static_cast<size_t>(b)])];
                        std::mt19937_64 dropRng(mixSeed(tc.seed, static_cast<std::uint64_t>(epoch),
                                                        static_cast<std::uint64_t>(order[static_cast<size_t>(b)])));
                        Graph g(&store, true, &dropRng);
                        bool usedCrf = false;
                        const int loss = buildLossGraph(g, split.passageOf(q), q, &usedCrf);
                        if (!usedCrf && epoch == 0) skipped[static_cast<size_t>(tid)]++;
                        losses[static_cast<size_t>(tid)] += g.scalar(loss);
                        g.backward(loss);
                        g.accumulateParamGrads(buffers[static_cast<size_t>(tid)]);
                    }
                } catch (const std::exception& e) {
                    errors[static_cast<size_t>(tid)] = e.what();
                }
            };
            if (threads == 1) {
                worker(0);
            } else {
                std::vector<std::thread> pool;
                for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
                for (auto& t : pool) t.join();
            }
            for (const auto& err : errors) {
                if (!err.empty()) throw NumericsError("training aborted: " + err);
            }

            double batchLoss = 0;
            for (int t = 0; t < threads; ++t) {
                batchLoss += losses[static_cast<size_t>(t)];
                result.crfSkipped += skipped[static_cast<size_t>(t)];
                store.accumulate(buffers[static_cast<size_t>(t)]);
            }
            if (!std::isfinite(batchLoss)) {
                throw NumericsError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch + 1));
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (int id = 0; id < store.count(); ++id) {
                for (double& gv : store.entry(id).grad.a) gv *= scale;
            }
            adamStep(store, tc.adam, ++stepCount);
            epochLoss += batchLoss;
        }
        result.epochLoss.push_back(epochLoss / n);
        if (tc.verbose) {
            std::fprintf(stderr, "epoch %d/%d loss %.5f\n", epoch + 1, tc.epochs,
                         result.epochLoss.back());
        }
    }
    return result;
}

}  // namespace quartet
