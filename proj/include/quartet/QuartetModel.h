#pragma once

#include <array>
#include <cstdint>

#include "quartet/Encoder.h"

namespace quartet {

/// The four head distributions for one question. Span vectors hold one entry
/// per step plus a trailing NULL class (reported as -1) used by no-effect
/// predictions; direction vectors are indexed by Direction.
struct HeadDistributions {
    std::vector<double> si;        // K + 1 entries
    std::vector<double> sj;        // K + 1 entries
    std::array<double, 3> pdi{};   // MORE, LESS, NONE
    std::array<double, 3> pde{};

    int stepCount() const { return static_cast<int>(si.size()) - 1; }
    void validate() const;  // entries >= 0, each vector sums to 1 +- 1e-6
};

struct QuartetConfig {
    EncoderConfig encoder;
    LayerSelection selection;       // defaults set in normalize()
    int headDim = 64;               // projection width for both head groups
    std::array<double, 4> lossWeights{1, 1, 1, 1};   // i, j, d_i, d_e
    std::array<double, 4> decodeWeights{1, 1, 1, 1};
    bool maskPerturbation = false;       // effect-only ablation (q_p hidden)
    bool maskNoEffectSpanLoss = false;   // ablation: drop span terms instead of
                                         // supervising toward NULL

    /// Fills defaulted selections (span {2}, direction {L-1, L}) and validates.
    void normalize();
};

struct TrainConfig {
    int epochs = 30;
    int batchSize = 16;
    std::uint64_t seed = 42;
    AdamConfig adam;
    int threads = 1;
    bool verbose = false;
};

struct TrainResult {
    std::vector<double> epochLoss;  // mean loss per epoch
};

/// Multitask model: shared encoder, span heads over pooled sentence vectors,
/// direction heads over combined CLS features, and a decoder constrained to
/// the consistent explanation space.
class QuartetModel {
public:
    QuartetModel(QuartetConfig cfg, Vocab vocab, std::uint64_t initSeed = 1234);

    const QuartetConfig& config() const { return cfg; }
    const Vocab& vocab() const { return vocabulary; }
    ParameterStore& params() { return store; }
    const ParameterStore& params() const { return store; }

    /// Inference forward pass producing the four distributions.
    HeadDistributions forward(const Passage& passage, const std::string& qp,
                              const std::string& qe) const;

    /// Sum of cross-entropy losses of the four predictions against gold.
    /// No-effect gold supervises both span heads toward the NULL class.
    static double multitaskLoss(const HeadDistributions& dists, const Explanation& gold,
                                const std::array<double, 4>& weights = {1, 1, 1, 1});

    /// Highest joint-log-probability explanation over all assignments
    /// satisfying the consistency rules; always validates.
    static Explanation constrainedDecode(const HeadDistributions& dists,
                                         const std::array<double, 4>& weights = {1, 1, 1, 1});

    Explanation predict(const Passage& passage, const InfluenceQuestion& q) const;

    /// End-to-end training; deterministic for a fixed config and seed.
    /// Throws NumericsError with a diagnostic if the loss diverges.
    TrainResult train(const DatasetSplit& split, const TrainConfig& tc);

    /// Mean multitask loss over a split without updating parameters.
    double evaluateLoss(const DatasetSplit& split) const;

    /// Internal loss-graph builder, exposed for the gradient checks: builds
    /// the full forward graph and returns the loss node.
    int buildLossGraph(Graph& g, const Passage& passage, const InfluenceQuestion& q) const;

private:
    struct HeadNodes {
        int spanLogitsI;  // 1 x (K+1)
        int spanLogitsJ;  // 1 x (K+1)
        int dirLogitsI;   // 1 x 3
        int dirLogitsE;   // 1 x 3
    };
    HeadNodes buildHeads(Graph& g, const TokenSequence& ts) const;

    QuartetConfig cfg;
    Vocab vocabulary;
    ParameterStore store;

    // head parameter ids
    int spanProjW, spanProjB, spanMix;
    int dirProjW, dirProjB, dirMix;
    int scoreIW, scoreIB, nullIW, nullIB;
    int scoreJW, scoreJB, nullJW, nullJB;
    int clsDiW, clsDiB, clsDeW, clsDeB;
    std::unique_ptr<TransformerEncoder> encoder;
};

}  // namespace quartet
