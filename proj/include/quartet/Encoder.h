#pragma once

#include <memory>
#include <set>
#include <utility>

#include "quartet/Autodiff.h"
#include "quartet/Corpus.h"

namespace quartet {

/// Marker-delimited model input. Layout:
///   CLS, then for each sentence k: tokens(x_k), M_k, SEP;
///   then tokens(q_p) ++ tokens(q_e), SEP.
struct TokenSequence {
    std::vector<int> tokenIds;
    int clsPosition = 0;
    std::vector<int> markerPositions;                 // one per sentence, in order
    std::vector<std::pair<int, int>> sentenceSpans;   // [begin, end) token positions of x_k
    std::vector<int> questionPositions;               // q_p ++ q_e token positions

    int length() const { return static_cast<int>(tokenIds.size()); }
    int sentenceCount() const { return static_cast<int>(markerPositions.size()); }
};

/// Builds the token sequence for a passage and question pair. The question is
/// q_p concatenated with q_e; with maskPerturbation the q_p tokens are dropped
/// (the effect-only ablation). Throws DataError when the passage exceeds the
/// vocab's marker budget or the question is empty.
TokenSequence assembleInput(const Passage& passage, const std::string& qp, const std::string& qe,
                            const Vocab& vocab, bool maskPerturbation = false);

struct EncoderConfig {
    int layers = 4;
    int embedDim = 64;
    int heads = 4;
    int ffDim = 256;
    int maxPositions = 160;
    double dropout = 0.2;
    bool meanPoolSentences = false;  // pool u_k as the mean over sentence tokens
                                     // instead of the marker hidden state

    void validate() const;
};

/// Per-layer hidden matrices H^1..H^L plus the pooled views derived from the
/// top layer (u_k per sentence, mean-pooled u_q, and the CLS vector).
struct EncoderOutput {
    std::vector<Mat> layers;
    std::vector<Mat> sentenceVectors;
    Mat questionVector;
    Mat clsVector;
};

/// Which encoder layers feed each head group (1-based layer indices).
struct LayerSelection {
    std::set<int> spanLayers;
    std::set<int> directionLayers;
    bool weightedAverage = false;  // ablation: learned weighted layer average
                                   // instead of concatenation

    void validate(int layerCount) const;
};

/// A small trained-from-scratch transformer over token ids. Parameters are
/// registered in the caller's ParameterStore under "<prefix>." names.
class TransformerEncoder {
public:
    TransformerEncoder(EncoderConfig cfg, int vocabSize, ParameterStore& store,
                       std::mt19937_64& initRng, const std::string& prefix = "encoder");

    /// Runs the stack inside `g`; returns one node per layer (each length x E).
    std::vector<int> forwardLayers(Graph& g, const TokenSequence& ts) const;

    /// Inference-mode convenience: runs a throwaway graph and materializes the
    /// per-layer matrices and top-layer pooled views.
    EncoderOutput encode(const TokenSequence& ts, const ParameterStore& store) const;

    const EncoderConfig& config() const { return cfg; }

private:
    EncoderConfig cfg;
    int vocabSize;
    // parameter ids
    int tokEmbed, posEmbed, embedGain, embedBias;
    struct LayerParams {
        int wq, bq, wk, bk, wv, bv, wo, bo;
        int ln1Gain, ln1Bias;
        int w1, b1, w2, b2;
        int ln2Gain, ln2Bias;
    };
    std::vector<LayerParams> layerParams;
};

/// Pools one vector per sentence from a hidden matrix: the hidden state at
/// each marker position, or the mean over sentence tokens when meanPool set.
int poolSentences(Graph& g, int hidden, const TokenSequence& ts, bool meanPool = false);
/// Mean over the question token positions.
int poolQuestion(Graph& g, int hidden, const TokenSequence& ts);
/// Hidden state at the CLS position.
int poolCls(Graph& g, int hidden, const TokenSequence& ts);

/// Combines the selected layers (ascending index) by concatenation along the
/// embedding axis, or by a learned softmax-weighted average when the selection
/// requests it, then applies the head group's linear projection.
/// `projW` is (sum of selected widths) x headDim, `projB` 1 x headDim, and
/// `mixWeights` (1 x |selection|) is only used in weighted-average mode.
int combineLayers(Graph& g, const std::vector<int>& layerNodes, const std::set<int>& selection,
                  bool weightedAverage, int projW, int projB, int mixWeights);

/// Interface for plugging an external pretrained sequence encoder. The
/// adapter owns its own tokenization; callers hand it token ids from its
/// tokenizer and receive per-layer hidden matrices (layer l: length x E_l).
class PretrainedEncoderAdapter {
public:
    virtual ~PretrainedEncoderAdapter() = default;
    virtual int layerCount() const = 0;
    virtual int embedDim(int layer) const = 0;
    virtual std::vector<Mat> encodeLayers(const std::vector<int>& tokenIds) const = 0;
};

}  // namespace quartet
