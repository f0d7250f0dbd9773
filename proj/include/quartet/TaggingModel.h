#pragma once

#include <array>
#include <cstdint>

#include "quartet/Encoder.h"
#include "quartet/QuartetModel.h"

namespace quartet {

/// First-order validity of the BIEO tag grammar: which labels may start or
/// end a sequence and which label pairs may be adjacent. The at-most-one-run
/// constraint (no new B after a completed run) is not first-order expressible
/// over the 7 labels; the decoders enforce it with a run-completed flag, so
/// the effective state space is (label, flag).
///
/// Note the grammar is stricter than the tag codec: a lone B (length-1 span)
/// is representable only at the last position, because B may only be followed
/// by I/E or the sequence end, and runs may not mix directions.
struct TransitionMask {
    std::array<std::array<bool, kNumTagLabels>, kNumTagLabels> transition{};  // [from][to]
    std::array<bool, kNumTagLabels> start{};
    std::array<bool, kNumTagLabels> end{};

    static const TransitionMask& bieoGrammar();
};

/// True iff the sequence is reachable under the BIEO grammar above.
bool isCrfRepresentable(const TagSequence& tags);

/// CRF scores: label-pair transitions plus start/end scores. Emission scores
/// come from the encoder's per-sentence features.
struct CrfParams {
    Mat transition;  // 7 x 7
    Mat start;       // 1 x 7
    Mat end;         // 1 x 7
};

/// log-potential of one grammar-valid sequence (throws on invalid ones).
double crfSequenceScore(const Mat& emissions, const TagSequence& tags, const CrfParams& params);

/// Log-partition over all grammar-valid sequences.
double crfLogPartition(const Mat& emissions, const CrfParams& params);

/// Negative log likelihood: logZ - score(gold). Gold must be grammar-valid.
double crfNegLogLikelihood(const Mat& emissions, const TagSequence& gold, const CrfParams& params);

/// Best grammar-valid sequence. With excludeAllO the all-O sequence is ruled
/// out (used to score the best effect-bearing candidate).
TagSequence viterbiConstrained(const Mat& emissions, const CrfParams& params,
                               bool excludeAllO = false);
/// Same, returning the score alongside the sequence.
std::pair<TagSequence, double> viterbiConstrainedScored(const Mat& emissions,
                                                        const CrfParams& params,
                                                        bool excludeAllO = false);

struct TaggingConfig {
    EncoderConfig encoder;
    LayerSelection selection;
    int headDim = 64;

    void normalize();
};

struct TaggingTrainResult {
    std::vector<double> epochLoss;
    int crfSkipped = 0;  // gold sequences not representable in the grammar
                         // (mid-sequence length-1 spans); they still train d_e
};

struct TaggingPrediction {
    TagSequence tags;
    std::array<double, 3> pde{};
    Explanation explanation;
};

/// Joint reconciliation of the tag sequence and the d_e head: compares the
/// no-effect reading (all-O, d_e = NONE) against the best effect-bearing
/// sequence paired with the best non-NONE d_e, by CRF score + log p(d_e).
/// The resulting explanation always satisfies the consistency rules.
TaggingPrediction reconcileTaggingPrediction(const Mat& emissions,
                                             const std::array<double, 3>& pde,
                                             const CrfParams& params);

/// Structured-prediction baseline: per-sentence emissions from the shared
/// encoder, a linear-chain CRF with validity-masked transitions, and a
/// separate d_e classifier on CLS features (the tag sequence alone cannot
/// carry d_e, which may flip sign against d_j under negated effect phrasing).
class TaggingModel {
public:
    TaggingModel(TaggingConfig cfg, Vocab vocab, std::uint64_t initSeed = 1234);

    const TaggingConfig& config() const { return cfg; }
    const Vocab& vocab() const { return vocabulary; }
    ParameterStore& params() { return store; }
    const ParameterStore& params() const { return store; }

    CrfParams crfParams() const;
    Mat emissions(const Passage& passage, const InfluenceQuestion& q) const;  // K x 7

    TaggingPrediction predictDetailed(const Passage& passage, const InfluenceQuestion& q) const;
    Explanation predict(const Passage& passage, const InfluenceQuestion& q) const;

    TaggingTrainResult train(const DatasetSplit& split, const TrainConfig& tc);

    /// Loss graph (CRF NLL when representable, plus d_e cross entropy);
    /// exposed for the gradient checks. `usedCrf` reports whether the CRF term
    /// was included for this example.
    int buildLossGraph(Graph& g, const Passage& passage, const InfluenceQuestion& q,
                       bool* usedCrf = nullptr) const;

private:
    struct ForwardNodes {
        int emissions;  // K x 7
        int deLogits;   // 1 x 3
    };
    ForwardNodes buildForward(Graph& g, const TokenSequence& ts) const;
    int buildCrfNll(Graph& g, int emissionsNode, const TagSequence& gold) const;

    TaggingConfig cfg;
    Vocab vocabulary;
    ParameterStore store;
    std::unique_ptr<TransformerEncoder> encoder;

    int spanProjW, spanProjB, spanMix;
    int dirProjW, dirProjB, dirMix;
    int emitW, emitB;
    int deW, deB;
    int crfTrans, crfStart, crfEnd;
};

}  // namespace quartet
