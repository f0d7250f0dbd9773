#include "quartet/Encoder.h"

#include <cmath>

namespace quartet {

TokenSequence assembleInput(const Passage& passage, const std::string& qp, const std::string& qe,
                            const Vocab& vocab, bool maskPerturbation) {
    const int K = passage.stepCount();
    if (K < 1) throw DataError("passage has no steps");
    if (K > vocab.maxMarkers()) {
        throw DataError("passage " + passage.id + " has " + std::to_string(K) +
                        " steps, exceeding the marker budget of " + std::to_string(vocab.maxMarkers()));
    }

    TokenSequence ts;
    ts.tokenIds.push_back(Vocab::kClsId);
    ts.clsPosition = 0;

    for (int k = 1; k <= K; ++k) {
        const auto tokens = tokenize(passage.steps[static_cast<size_t>(k - 1)]);
        if (tokens.empty()) throw DataError("passage " + passage.id + " step " + std::to_string(k) + " is empty");
        const int begin = ts.length();
        for (const auto& t : tokens) ts.tokenIds.push_back(vocab.tokenId(t));
        ts.sentenceSpans.emplace_back(begin, ts.length());
        ts.markerPositions.push_back(ts.length());
        ts.tokenIds.push_back(vocab.markerId(k));
        ts.tokenIds.push_back(Vocab::kSepId);
    }

    std::vector<std::string> questionTokens;
    if (!maskPerturbation) {
        for (auto& t : tokenize(qp)) questionTokens.push_back(t);
    }
    for (auto& t : tokenize(qe)) questionTokens.push_back(t);
    if (questionTokens.empty()) throw DataError("question is empty");
    for (const auto& t : questionTokens) {
        ts.questionPositions.push_back(ts.length());
        ts.tokenIds.push_back(vocab.tokenId(t));
    }
    ts.tokenIds.push_back(Vocab::kSepId);
    return ts;
}

void EncoderConfig::validate() const {
    if (layers < 2) throw NumericsError("encoder needs at least 2 layers");
    if (embedDim < 1 || heads < 1 || ffDim < 1) throw NumericsError("encoder dimensions must be positive");
    if (embedDim % heads != 0) throw NumericsError("embedDim must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw NumericsError("dropout must be in [0, 1)");
}

void LayerSelection::validate(int layerCount) const {
    if (spanLayers.empty() || directionLayers.empty()) {
        throw NumericsError("layer selections must be non-empty");
    }
    for (int l : spanLayers) {
        if (l < 1 || l > layerCount) throw NumericsError("span layer index out of range");
    }
    for (int l : directionLayers) {
        if (l < 1 || l > layerCount) throw NumericsError("direction layer index out of range");
    }
}

namespace {

Mat normalInit(int rows, int cols, std::mt19937_64& rng, double stddev = 0.02) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (double& v : m.a) v = dist(rng);
    return m;
}

}  // namespace

TransformerEncoder::TransformerEncoder(EncoderConfig config, int vocabSizeIn, ParameterStore& store,
                                       std::mt19937_64& rng, const std::string& prefix)
    : cfg(config), vocabSize(vocabSizeIn) {
    cfg.validate();
    const int E = cfg.embedDim;
    tokEmbed = store.add(prefix + ".embed.tok", normalInit(vocabSize, E, rng));
    posEmbed = store.add(prefix + ".embed.pos", normalInit(cfg.maxPositions, E, rng));
    embedGain = store.add(prefix + ".embed.ln.gain", Mat::fill(1, E, 1.0), true);
    embedBias = store.add(prefix + ".embed.ln.bias", Mat(1, E), true);
    for (int l = 1; l <= cfg.layers; ++l) {
        const std::string lp = prefix + ".layer" + std::to_string(l);
        LayerParams p;
        p.wq = store.add(lp + ".attn.wq", normalInit(E, E, rng));
        p.bq = store.add(lp + ".attn.bq", Mat(1, E), true);
        p.wk = store.add(lp + ".attn.wk", normalInit(E, E, rng));
        p.bk = store.add(lp + ".attn.bk", Mat(1, E), true);
        p.wv = store.add(lp + ".attn.wv", normalInit(E, E, rng));
        p.bv = store.add(lp + ".attn.bv", Mat(1, E), true);
        p.wo = store.add(lp + ".attn.wo", normalInit(E, E, rng));
        p.bo = store.add(lp + ".attn.bo", Mat(1, E), true);
        p.ln1Gain = store.add(lp + ".ln1.gain", Mat::fill(1, E, 1.0), true);
        p.ln1Bias = store.add(lp + ".ln1.bias", Mat(1, E), true);
        p.w1 = store.add(lp + ".ffn.w1", normalInit(E, cfg.ffDim, rng));
        p.b1 = store.add(lp + ".ffn.b1", Mat(1, cfg.ffDim), true);
        p.w2 = store.add(lp + ".ffn.w2", normalInit(cfg.ffDim, E, rng));
        p.b2 = store.add(lp + ".ffn.b2", Mat(1, E), true);
        p.ln2Gain = store.add(lp + ".ln2.gain", Mat::fill(1, E, 1.0), true);
        p.ln2Bias = store.add(lp + ".ln2.bias", Mat(1, E), true);
        layerParams.push_back(p);
    }
}

std::vector<int> TransformerEncoder::forwardLayers(Graph& g, const TokenSequence& ts) const {
    const int T = ts.length();
    if (T > cfg.maxPositions) {
        throw DataError("sequence length " + std::to_string(T) + " exceeds position budget " +
                        std::to_string(cfg.maxPositions));
    }
    const int E = cfg.embedDim;
    const int H = cfg.heads;
    const int dk = E / H;
    const double invSqrtDk = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<int> positions(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) positions[static_cast<size_t>(t)] = t;

    int x = g.add(g.selectRows(g.param(tokEmbed), ts.tokenIds),
                  g.selectRows(g.param(posEmbed), positions));
    x = g.layerNorm(x, g.param(embedGain), g.param(embedBias));
    x = g.dropout(x, cfg.dropout);

    std::vector<int> outputs;
    outputs.reserve(static_cast<size_t>(cfg.layers));
    for (const auto& p : layerParams) {
        int q = g.addRowBroadcast(g.matmul(x, g.param(p.wq)), g.param(p.bq));
        int k = g.addRowBroadcast(g.matmul(x, g.param(p.wk)), g.param(p.bk));
        int v = g.addRowBroadcast(g.matmul(x, g.param(p.wv)), g.param(p.bv));

        std::vector<int> headCtx;
        headCtx.reserve(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) {
            const int c0 = h * dk, c1 = (h + 1) * dk;
            int qh = g.sliceCols(q, c0, c1);
            int kh = g.sliceCols(k, c0, c1);
            int vh = g.sliceCols(v, c0, c1);
            int scores = g.scale(g.matmulNT(qh, kh), invSqrtDk);
            int attn = g.softmaxRows(scores);
            headCtx.push_back(g.matmul(attn, vh));
        }
        int ctx = g.concatCols(headCtx);
        int attnOut = g.dropout(g.addRowBroadcast(g.matmul(ctx, g.param(p.wo)), g.param(p.bo)),
                                cfg.dropout);
        x = g.layerNorm(g.add(x, attnOut), g.param(p.ln1Gain), g.param(p.ln1Bias));

        int hidden = g.gelu(g.addRowBroadcast(g.matmul(x, g.param(p.w1)), g.param(p.b1)));
        int ffnOut = g.dropout(g.addRowBroadcast(g.matmul(hidden, g.param(p.w2)), g.param(p.b2)),
                               cfg.dropout);
        x = g.layerNorm(g.add(x, ffnOut), g.param(p.ln2Gain), g.param(p.ln2Bias));
        outputs.push_back(x);
    }
    return outputs;
}

EncoderOutput TransformerEncoder::encode(const TokenSequence& ts, const ParameterStore& store) const {
    Graph g(&store, false, nullptr);
    const auto layerNodes = forwardLayers(g, ts);

    EncoderOutput out;
    for (int node : layerNodes) {
        const Mat& h = g.value(node);
        if (!h.allFinite()) throw NumericsError("encoder produced non-finite activations");
        out.layers.push_back(h);
    }
    const int top = layerNodes.back();
    const int sent = poolSentences(g, top, ts, cfg.meanPoolSentences);
    const Mat& u = g.value(sent);
    for (int k = 0; k < u.rows; ++k) {
        Mat row(1, u.cols);
        for (int c = 0; c < u.cols; ++c) row.at(0, c) = u.at(k, c);
        out.sentenceVectors.push_back(std::move(row));
    }
    out.questionVector = g.value(poolQuestion(g, top, ts));
    out.clsVector = g.value(poolCls(g, top, ts));
    return out;
}

int poolSentences(Graph& g, int hidden, const TokenSequence& ts, bool meanPool) {
    if (ts.markerPositions.empty()) throw DataError("token sequence has no sentences");
    if (!meanPool) {
        return g.selectRows(hidden, ts.markerPositions);
    }
    std::vector<int> rows;
    for (size_t k = 0; k < ts.sentenceSpans.size(); ++k) {
        auto [begin, end] = ts.sentenceSpans[k];
        std::vector<int> span;
        for (int t = begin; t < end; ++t) span.push_back(t);
        rows.push_back(g.meanRows(g.selectRows(hidden, span)));
    }
    return rows.size() == 1 ? rows[0] : g.stackRows(rows);
}

int poolQuestion(Graph& g, int hidden, const TokenSequence& ts) {
    if (ts.questionPositions.empty()) throw DataError("token sequence has no question span");
    return g.meanRows(g.selectRows(hidden, ts.questionPositions));
}

int poolCls(Graph& g, int hidden, const TokenSequence& ts) {
    return g.selectRows(hidden, {ts.clsPosition});
}

int combineLayers(Graph& g, const std::vector<int>& layerNodes, const std::set<int>& selection,
                  bool weightedAverage, int projW, int projB, int mixWeights) {
    if (selection.empty()) throw NumericsError("layer selection is empty");
    std::vector<int> picked;
    for (int l : selection) {  // std::set iterates ascending
        if (l < 1 || l > static_cast<int>(layerNodes.size())) {
            throw NumericsError("selected layer " + std::to_string(l) + " out of range");
        }
        picked.push_back(layerNodes[static_cast<size_t>(l - 1)]);
    }
    int features;
    if (!weightedAverage) {
        features = picked.size() == 1 ? picked[0] : g.concatCols(picked);
    } else {
        int weights = g.softmaxRows(g.param(mixWeights));  // 1 x |selection|
        features = -1;
        for (size_t k = 0; k < picked.size(); ++k) {
            int scaled = g.scaleByScalarNode(picked[k], g.pick(weights, 0, static_cast<int>(k)));
            features = features < 0 ? scaled : g.add(features, scaled);
        }
    }
    return g.addRowBroadcast(g.matmul(features, g.param(projW)), g.param(projB));
}

}  // namespace quartet
