#include "doctest.h"

#include <algorithm>
#include <random>

#include "quartet/Encoder.h"

using namespace quartet;

namespace {

Vocab toyVocab() {
    return Vocab({"water", "flows", "steam", "rises", "ice", "forms", "more", "less",
                  "the", "amount", "of", "suppose", "there", "is", "will", "be"},
                 8);
}

Passage toyPassage() {
    return Passage{"p1", {"water flows", "steam rises", "ice forms"}};
}

EncoderConfig tinyConfig() {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.embedDim = 16;
    cfg.heads = 2;
    cfg.ffDim = 24;
    cfg.maxPositions = 64;
    cfg.dropout = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("assembleInput produces the marker-delimited layout") {
    auto vocab = toyVocab();
    Passage p{"p", {"water flows", "steam rises"}};
    auto ts = assembleInput(p, "more water", "less ice", vocab);

    CHECK(ts.sentenceCount() == 2);
    CHECK(ts.tokenIds[0] == Vocab::kClsId);
    int seps = 0, markers = 0, cls = 0;
    for (int id : ts.tokenIds) {
        if (id == Vocab::kSepId) ++seps;
        if (id == Vocab::kClsId) ++cls;
        if (id >= Vocab::kFirstMarkerId && id < vocab.firstCorpusId()) ++markers;
    }
    CHECK(seps == 3);  // one per sentence plus the final question SEP
    CHECK(markers == 2);
    CHECK(cls == 1);

    // Marker k sits right after sentence k's tokens and carries marker id k.
    for (int k = 0; k < 2; ++k) {
        const int pos = ts.markerPositions[static_cast<size_t>(k)];
        CHECK(ts.tokenIds[static_cast<size_t>(pos)] == vocab.markerId(k + 1));
        CHECK(ts.sentenceSpans[static_cast<size_t>(k)].second == pos);
    }
    // Question span covers q_p ++ q_e tokens: 2 + 2.
    CHECK(ts.questionPositions.size() == 4);

    // Deterministic.
    auto ts2 = assembleInput(p, "more water", "less ice", vocab);
    CHECK(ts.tokenIds == ts2.tokenIds);
}

TEST_CASE("assembleInput handles the degenerate and error cases") {
    auto vocab = toyVocab();
    Passage p{"p", {"water flows"}};

    auto qpOnly = assembleInput(p, "more water", "", vocab);
    CHECK(qpOnly.questionPositions.size() == 2);

    auto masked = assembleInput(p, "more water", "less ice", vocab, /*maskPerturbation=*/true);
    CHECK(masked.questionPositions.size() == 2);  // q_e only

    CHECK_THROWS_AS(assembleInput(p, "", "", vocab), DataError);

    Passage tooLong{"p2", std::vector<std::string>(9, "water flows")};
    CHECK_THROWS_AS(assembleInput(tooLong, "more water", "", vocab), DataError);
}

TEST_CASE("encode is deterministic and shape-correct in inference mode") {
    auto vocab = toyVocab();
    auto passage = toyPassage();
    auto ts = assembleInput(passage, "suppose there is more water", "there will be more ice", vocab);

    ParameterStore store;
    std::mt19937_64 rng(11);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);

    auto out1 = enc.encode(ts, store);
    auto out2 = enc.encode(ts, store);

    REQUIRE(out1.layers.size() == 2);
    for (const auto& layer : out1.layers) {
        CHECK(layer.rows == ts.length());
        CHECK(layer.cols == 16);
        CHECK(layer.allFinite());
    }
    for (size_t l = 0; l < out1.layers.size(); ++l) {
        CHECK(out1.layers[l].a == out2.layers[l].a);  // bitwise identical
    }
    CHECK(out1.sentenceVectors.size() == 3);
    CHECK(out1.questionVector.cols == 16);
    CHECK(out1.clsVector.a == out2.clsVector.a);
}

TEST_CASE("pooled vectors are the hidden rows at the marker and CLS positions") {
    auto vocab = toyVocab();
    auto passage = toyPassage();
    auto ts = assembleInput(passage, "more water", "less ice", vocab);

    ParameterStore store;
    std::mt19937_64 rng(12);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);
    auto out = enc.encode(ts, store);

    const Mat& top = out.layers.back();
    for (int k = 0; k < 3; ++k) {
        const int pos = ts.markerPositions[static_cast<size_t>(k)];
        for (int c = 0; c < top.cols; ++c) {
            CHECK(out.sentenceVectors[static_cast<size_t>(k)].at(0, c) == top.at(pos, c));
        }
    }
    for (int c = 0; c < top.cols; ++c) CHECK(out.clsVector.at(0, c) == top.at(0, c));

    // u_q is the mean over question token positions.
    Mat expected(1, top.cols);
    for (int pos : ts.questionPositions) {
        for (int c = 0; c < top.cols; ++c) expected.at(0, c) += top.at(pos, c);
    }
    for (int c = 0; c < top.cols; ++c) {
        expected.at(0, c) /= static_cast<double>(ts.questionPositions.size());
        CHECK(out.questionVector.at(0, c) == doctest::Approx(expected.at(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("permuting passage sentences moves the pooled assignments with the markers") {
    auto vocab = toyVocab();
    Passage original{"p", {"water flows", "steam rises", "ice forms"}};
    Passage permuted{"p", {"steam rises", "water flows", "ice forms"}};

    auto tsA = assembleInput(original, "more water", "less ice", vocab);
    auto tsB = assembleInput(permuted, "more water", "less ice", vocab);

    // Marker positions delimit the permuted sentence spans.
    CHECK(tsB.sentenceSpans[0].second - tsB.sentenceSpans[0].first == 2);
    CHECK(tsB.tokenIds[static_cast<size_t>(tsB.sentenceSpans[0].first)] ==
          tsA.tokenIds[static_cast<size_t>(tsA.sentenceSpans[1].first)]);

    ParameterStore store;
    std::mt19937_64 rng(13);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);
    auto outB = enc.encode(tsB, store);
    const Mat& top = outB.layers.back();
    for (int k = 0; k < 3; ++k) {
        const int pos = tsB.markerPositions[static_cast<size_t>(k)];
        for (int c = 0; c < top.cols; ++c) {
            REQUIRE(outB.sentenceVectors[static_cast<size_t>(k)].at(0, c) == top.at(pos, c));
        }
    }
}

TEST_CASE("attention stack is permutation-equivariant once positions are zeroed") {
    auto vocab = toyVocab();
    ParameterStore store;
    std::mt19937_64 rng(14);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);

    // Zero the positional table; the rest of the stack must then commute with
    // any permutation of the token ids.
    int posId = store.find("encoder.embed.pos");
    REQUIRE(posId >= 0);
    std::fill(store.valueMutable(posId).a.begin(), store.valueMutable(posId).a.end(), 0.0);

    TokenSequence ts;
    ts.tokenIds = {Vocab::kClsId, 10, 11, 12, Vocab::kSepId, 13, 14, Vocab::kSepId};
    ts.clsPosition = 0;
    ts.markerPositions = {3};
    ts.sentenceSpans = {{1, 3}};
    ts.questionPositions = {5, 6};

    std::vector<int> perm = {4, 2, 7, 0, 6, 1, 3, 5};
    TokenSequence tsPerm = ts;
    for (size_t t = 0; t < perm.size(); ++t) {
        tsPerm.tokenIds[static_cast<size_t>(perm[t])] = ts.tokenIds[t];
    }

    auto outA = enc.encode(ts, store);
    auto outB = enc.encode(tsPerm, store);
    const Mat& a = outA.layers.back();
    const Mat& b = outB.layers.back();
    for (size_t t = 0; t < perm.size(); ++t) {
        for (int c = 0; c < a.cols; ++c) {
            REQUIRE(a.at(static_cast<int>(t), c) ==
                    doctest::Approx(b.at(perm[t], c)).epsilon(1e-12));
        }
    }
}

TEST_CASE("combineLayers concatenates ascending and projects to the head width") {
    auto vocab = toyVocab();
    auto ts = assembleInput(toyPassage(), "more water", "less ice", vocab);

    ParameterStore store;
    std::mt19937_64 rng(15);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);

    std::normal_distribution<double> dist(0.0, 0.1);
    Mat w1(16, 8), w2(32, 8);
    for (double& v : w1.a) v = dist(rng);
    for (double& v : w2.a) v = dist(rng);
    int projSingle = store.add("head.proj1", w1);
    int projDouble = store.add("head.proj2", w2);
    int bias = store.add("head.bias", Mat(1, 8), true);
    int mix = store.add("head.mix", Mat(1, 2), true);

    Graph g(&store);
    auto layers = enc.forwardLayers(g, ts);

    int single = combineLayers(g, layers, {2}, false, projSingle, bias, -1);
    CHECK(g.value(single).rows == ts.length());
    CHECK(g.value(single).cols == 8);

    int both = combineLayers(g, layers, {1, 2}, false, projDouble, bias, -1);
    CHECK(g.value(both).cols == 8);

    // Weighted-average mixing keeps the raw embedding width.
    int mixed = combineLayers(g, layers, {1, 2}, true, projSingle, bias, mix);
    CHECK(g.value(mixed).cols == 8);

    CHECK_THROWS_AS(combineLayers(g, layers, {}, false, projSingle, bias, -1), NumericsError);
    CHECK_THROWS_AS(combineLayers(g, layers, {3}, false, projSingle, bias, -1), NumericsError);
}

TEST_CASE("mean-pool sentence mode averages the sentence token rows") {
    auto vocab = toyVocab();
    auto cfg = tinyConfig();
    cfg.meanPoolSentences = true;
    auto ts = assembleInput(toyPassage(), "more water", "less ice", vocab);

    ParameterStore store;
    std::mt19937_64 rng(16);
    TransformerEncoder enc(cfg, vocab.size(), store, rng);
    auto out = enc.encode(ts, store);
    const Mat& top = out.layers.back();

    auto [begin, end] = ts.sentenceSpans[1];
    Mat mean(1, top.cols);
    for (int t = begin; t < end; ++t) {
        for (int c = 0; c < top.cols; ++c) mean.at(0, c) += top.at(t, c);
    }
    for (int c = 0; c < top.cols; ++c) {
        mean.at(0, c) /= (end - begin);
        CHECK(out.sentenceVectors[1].at(0, c) == doctest::Approx(mean.at(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("encoder gradients match finite differences on the tiny config") {
    auto vocab = toyVocab();
    Passage p{"p", {"water flows", "ice forms"}};
    auto ts = assembleInput(p, "more water", "less ice", vocab);

    ParameterStore store;
    std::mt19937_64 rng(17);
    TransformerEncoder enc(tinyConfig(), vocab.size(), store, rng);

    auto build = [&](Graph& g) {
        auto layers = enc.forwardLayers(g, ts);
        int pooled = poolSentences(g, layers.back(), ts);
        int u = g.meanRows(pooled);
        int squared = g.mulElem(u, u);
        int ones = g.input(Mat::fill(1, 16, 1.0));
        return g.matmulNT(g.meanRows(squared), ones);
    };

    Graph g(&store);
    int root = build(g);
    g.backward(root);
    std::vector<Mat> analytic(static_cast<size_t>(store.count()));
    g.accumulateParamGrads(analytic);

    // Sample a deterministic subset of entries per tensor; full sweeps of the
    // embedding tables add nothing.
    std::mt19937_64 pickRng(5);
    const double h = 1e-6;
    int checked = 0;
    for (int id = 0; id < store.count(); ++id) {
        Mat& value = store.valueMutable(id);
        const size_t n = value.a.size();
        const size_t samples = std::min<size_t>(n, 6);
        for (size_t s = 0; s < samples; ++s) {
            const size_t i = std::uniform_int_distribution<size_t>(0, n - 1)(pickRng);
            const double orig = value.a[i];
            value.a[i] = orig + h;
            Graph gp(&store);
            const double fp = gp.scalar(build(gp));
            value.a[i] = orig - h;
            Graph gm(&store);
            const double fm = gm.scalar(build(gm));
            value.a[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[static_cast<size_t>(id)].size() > 0
                                  ? analytic[static_cast<size_t>(id)].a[i]
                                  : 0.0;
            INFO("param ", store.entry(id).name, " entry ", i);
            REQUIRE(relativeError(an, fd) < 1e-4);
            ++checked;
        }
    }
    CHECK(checked > 100);
}
