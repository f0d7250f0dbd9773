#include "quartet/QuartetModel.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

namespace quartet {

namespace {

constexpr double kProbFloor = 1e-300;  // guards log() of an exactly-zero entry

double safeLog(double p) { return std::log(std::max(p, kProbFloor)); }

Mat normalInit(int rows, int cols, std::mt19937_64& rng, double stddev = 0.02) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (double& v : m.a) v = dist(rng);
    return m;
}

int directionIndex(Direction d) { return static_cast<int>(d); }

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
    // splitmix64 over the packed identifiers: decouples dropout noise from
    // batch layout and thread count.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch * 1000003ULL + index + 1ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void HeadDistributions::validate() const {
    if (si.size() < 2 || si.size() != sj.size()) {
        throw NumericsError("span distributions must have K+1 entries");
    }
    auto checkVector = [](const double* v, size_t n, const char* name) {
        double sum = 0;
        for (size_t k = 0; k < n; ++k) {
            if (v[k] < 0) throw NumericsError(std::string(name) + " has a negative entry");
            sum += v[k];
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw NumericsError(std::string(name) + " does not sum to 1");
        }
    };
    checkVector(si.data(), si.size(), "s_i");
    checkVector(sj.data(), sj.size(), "s_j");
    checkVector(pdi.data(), 3, "p_di");
    checkVector(pde.data(), 3, "p_de");
}

void QuartetConfig::normalize() {
    encoder.validate();
    if (selection.spanLayers.empty()) selection.spanLayers = {std::min(2, encoder.layers)};
    if (selection.directionLayers.empty()) {
        selection.directionLayers = {encoder.layers - 1, encoder.layers};
    }
    selection.validate(encoder.layers);
    if (headDim < 1) throw NumericsError("headDim must be positive");
    for (double w : lossWeights) {
        if (w < 0) throw NumericsError("loss weights must be non-negative");
    }
}

QuartetModel::QuartetModel(QuartetConfig config, Vocab vocab, std::uint64_t initSeed)
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

    std::mt19937_64 headRng(initSeed ^ 0x517cc1b727220a95ULL);
    spanProjW = store.add("heads.span.proj.w", normalInit(spanInWidth, D, headRng));
    spanProjB = store.add("heads.span.proj.b", Mat(1, D), true);
    spanMix = store.add("heads.span.mix",
                        Mat(1, static_cast<int>(cfg.selection.spanLayers.size())), true);
    dirProjW = store.add("heads.dir.proj.w", normalInit(dirInWidth, D, headRng));
    dirProjB = store.add("heads.dir.proj.b", Mat(1, D), true);
    dirMix = store.add("heads.dir.mix",
                       Mat(1, static_cast<int>(cfg.selection.directionLayers.size())), true);

    scoreIW = store.add("heads.si.w", normalInit(1, D, headRng));
    scoreIB = store.add("heads.si.b", Mat(1, 1), true);
    nullIW = store.add("heads.si.null.w", normalInit(1, D, headRng));
    nullIB = store.add("heads.si.null.b", Mat(1, 1), true);
    scoreJW = store.add("heads.sj.w", normalInit(1, 2 * D, headRng));
    scoreJB = store.add("heads.sj.b", Mat(1, 1), true);
    nullJW = store.add("heads.sj.null.w", normalInit(1, D, headRng));
    nullJB = store.add("heads.sj.null.b", Mat(1, 1), true);

    clsDiW = store.add("heads.di.w", normalInit(D, 3, headRng));
    clsDiB = store.add("heads.di.b", Mat(1, 3), true);
    clsDeW = store.add("heads.de.w", normalInit(D, 3, headRng));
    clsDeB = store.add("heads.de.b", Mat(1, 3), true);
}

QuartetModel::HeadNodes QuartetModel::buildHeads(Graph& g, const TokenSequence& ts) const {
    const auto layers = encoder->forwardLayers(g, ts);

    const int spanFeatures = combineLayers(g, layers, cfg.selection.spanLayers,
                                           cfg.selection.weightedAverage, spanProjW, spanProjB,
                                           spanMix);
    const int dirFeatures = combineLayers(g, layers, cfg.selection.directionLayers,
                                          cfg.selection.weightedAverage, dirProjW, dirProjB,
                                          dirMix);

    const int sentences = poolSentences(g, spanFeatures, ts, cfg.encoder.meanPoolSentences);
    const int clsSpan = poolCls(g, spanFeatures, ts);
    const int clsDir = poolCls(g, dirFeatures, ts);

    // s_i scores: shared per-sentence scorer plus an input-dependent NULL logit.
    int posLogitsI = g.matmulNT(g.param(scoreIW), sentences);        // 1 x K
    posLogitsI = g.addColStretch(posLogitsI, g.param(scoreIB));
    int nullLogitI = g.addColStretch(g.matmulNT(g.param(nullIW), clsSpan), g.param(nullIB));
    HeadNodes nodes;
    nodes.spanLogitsI = g.concatCols({posLogitsI, nullLogitI});      // 1 x (K+1)

    // s_j over the attended representation (s_i-weighted sentence vectors
    // concatenated with the raw sentence vectors).
    int weightsI = g.sliceCols(g.softmaxRows(nodes.spanLogitsI), 0, ts.sentenceCount());
    int attended = g.mulColStretch(sentences, weightsI);
    int joint = g.concatCols({attended, sentences});                 // K x 2D
    int posLogitsJ = g.addColStretch(g.matmulNT(g.param(scoreJW), joint), g.param(scoreJB));
    int nullLogitJ = g.addColStretch(g.matmulNT(g.param(nullJW), clsSpan), g.param(nullJB));
    nodes.spanLogitsJ = g.concatCols({posLogitsJ, nullLogitJ});

    nodes.dirLogitsI = g.addRowBroadcast(g.matmul(clsDir, g.param(clsDiW)), g.param(clsDiB));
    nodes.dirLogitsE = g.addRowBroadcast(g.matmul(clsDir, g.param(clsDeW)), g.param(clsDeB));
    return nodes;
}

HeadDistributions QuartetModel::forward(const Passage& passage, const std::string& qp,
                                        const std::string& qe) const {
    const auto ts = assembleInput(passage, qp, qe, vocabulary, cfg.maskPerturbation);
    Graph g(&store, false, nullptr);
    const auto nodes = buildHeads(g, ts);

    HeadDistributions dists;
    const Mat& si = g.value(g.softmaxRows(nodes.spanLogitsI));
    const Mat& sj = g.value(g.softmaxRows(nodes.spanLogitsJ));
    const Mat& di = g.value(g.softmaxRows(nodes.dirLogitsI));
    const Mat& de = g.value(g.softmaxRows(nodes.dirLogitsE));
    dists.si.assign(si.a.begin(), si.a.end());
    dists.sj.assign(sj.a.begin(), sj.a.end());
    for (int c = 0; c < 3; ++c) {
        dists.pdi[static_cast<size_t>(c)] = di.at(0, c);
        dists.pde[static_cast<size_t>(c)] = de.at(0, c);
    }
    dists.validate();
    return dists;
}

double QuartetModel::multitaskLoss(const HeadDistributions& dists, const Explanation& gold,
                                   const std::array<double, 4>& weights) {
    dists.validate();
    const int K = dists.stepCount();
    ValidationResult vr = validateExplanation(gold, K);
    if (!vr.valid) throw ValidationError("multitaskLoss requires a valid gold explanation");

    const int targetI = gold.i == kAbsentStep ? K : gold.i - 1;  // NULL class at index K
    const int targetJ = gold.j == kAbsentStep ? K : gold.j - 1;
    double loss = 0;
    loss -= weights[0] * safeLog(dists.si[static_cast<size_t>(targetI)]);
    loss -= weights[1] * safeLog(dists.sj[static_cast<size_t>(targetJ)]);
    loss -= weights[2] * safeLog(dists.pdi[static_cast<size_t>(directionIndex(gold.di))]);
    loss -= weights[3] * safeLog(dists.pde[static_cast<size_t>(directionIndex(gold.de))]);
    return loss;
}

Explanation QuartetModel::constrainedDecode(const HeadDistributions& dists,
                                            const std::array<double, 4>& weights) {
    dists.validate();
    const int K = dists.stepCount();

    auto scoreOf = [&](const Explanation& e) {
        const int ti = e.i == kAbsentStep ? K : e.i - 1;
        const int tj = e.j == kAbsentStep ? K : e.j - 1;
        return weights[0] * safeLog(dists.si[static_cast<size_t>(ti)]) +
               weights[1] * safeLog(dists.sj[static_cast<size_t>(tj)]) +
               weights[2] * safeLog(dists.pdi[static_cast<size_t>(directionIndex(e.di))]) +
               weights[3] * safeLog(dists.pde[static_cast<size_t>(directionIndex(e.de))]);
    };

    // Exhaustive scan over the valid assignment space, O(K^2); ties resolve to
    // the earliest candidate in canonical order.
    Explanation best = Explanation::noEffect();
    double bestScore = scoreOf(best);
    for (int i = 1; i <= K; ++i) {
        for (int j = i; j <= K; ++j) {
            for (Direction d : {Direction::MORE, Direction::LESS}) {
                for (Direction de : {Direction::MORE, Direction::LESS}) {
                    Explanation cand = Explanation::span(i, j, d, de);
                    const double s = scoreOf(cand);
                    if (s > bestScore) {
                        bestScore = s;
                        best = cand;
                    }
                }
            }
        }
    }
    return best;
}

Explanation QuartetModel::predict(const Passage& passage, const InfluenceQuestion& q) const {
    return constrainedDecode(forward(passage, q.qp, q.qe), cfg.decodeWeights);
}

int QuartetModel::buildLossGraph(Graph& g, const Passage& passage,
                                 const InfluenceQuestion& q) const {
    if (!q.gold) throw DataError("record " + q.id + " has no gold explanation");
    const auto ts = assembleInput(passage, q.qp, q.qe, vocabulary, cfg.maskPerturbation);
    const auto nodes = buildHeads(g, ts);
    const int K = ts.sentenceCount();

    const Explanation& gold = *q.gold;
    const int targetI = gold.i == kAbsentStep ? K : gold.i - 1;
    const int targetJ = gold.j == kAbsentStep ? K : gold.j - 1;
    const bool skipSpans = cfg.maskNoEffectSpanLoss && gold.isNoEffect();

    std::vector<int> terms;
    auto ceTerm = [&](int logits, int target, double weight) {
        if (weight == 0.0) return;
        int logp = g.logSoftmaxRows(logits);
        terms.push_back(g.scale(g.pick(logp, 0, target), -weight));
    };
    if (!skipSpans) {
        ceTerm(nodes.spanLogitsI, targetI, cfg.lossWeights[0]);
        ceTerm(nodes.spanLogitsJ, targetJ, cfg.lossWeights[1]);
    }
    ceTerm(nodes.dirLogitsI, directionIndex(gold.di), cfg.lossWeights[2]);
    ceTerm(nodes.dirLogitsE, directionIndex(gold.de), cfg.lossWeights[3]);
    if (terms.empty()) {
        return g.input(Mat(1, 1));  // all weights zero: constant zero loss
    }
    return g.addScalars(terms);
}

double QuartetModel::evaluateLoss(const DatasetSplit& split) const {
    if (split.questions.empty()) throw DataError("empty split");
    double total = 0;
    for (const auto& q : split.questions) {
        Graph g(&store, false, nullptr);
        total += g.scalar(buildLossGraph(g, split.passageOf(q), q));
    }
    return total / static_cast<double>(split.questions.size());
}

TrainResult QuartetModel::train(const DatasetSplit& split, const TrainConfig& tc) {
    if (split.questions.empty()) throw DataError("cannot train on an empty split");
    for (const auto& q : split.questions) {
        if (!q.gold) throw DataError("record " + q.id + " has no gold explanation");
    }
    const int n = static_cast<int>(split.questions.size());
    const int threads = std::max(1, tc.threads);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
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
            std::vector<std::string> errors(static_cast<size_t>(threads));

            auto worker = [&](int tid) {
                try {
                    for (int b = start + tid; b < end; b += threads) {
                        const auto& q = split.questions[static_cast<size_t>(order[static_cast<size_t>(b)])];
                        std::mt19937_64 dropRng(mixSeed(tc.seed, static_cast<std::uint64_t>(epoch),
                                                        static_cast<std::uint64_t>(order[static_cast<size_t>(b)])));
                        Graph g(&store, true, &dropRng);
                        const int loss = buildLossGraph(g, split.passageOf(q), q);
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
                store.accumulate(buffers[static_cast<size_t>(t)]);
            }
            if (!std::isfinite(batchLoss)) {
                throw NumericsError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch + 1));
            }
            // Mean-reduce over the batch.
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
