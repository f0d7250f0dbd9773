#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace quartet {

class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return a.size(); }
    bool sameShape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool allFinite() const;

    static Mat fill(int r, int c, double v);
    static Mat rowVector(const std::vector<double>& v);
};

/// Score used to mask forbidden assignments in log space. Low enough that
/// exp(kMaskScore - anything reasonable) underflows to exactly zero, so masked
/// states contribute nothing to partitions or gradients.
constexpr double kMaskScore = -1e30;

// dst += a * b variants (NN: plain, NT: b transposed, TN: a transposed).
void mmNN(const Mat& a, const Mat& b, Mat& dst);
void mmNT(const Mat& a, const Mat& b, Mat& dst);
void mmTN(const Mat& a, const Mat& b, Mat& dst);

/// Named parameter tensors with gradient and Adam state.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Mat value;
        Mat grad;
        Mat adamM;
        Mat adamV;
        bool noDecay = false;
    };

    int add(const std::string& name, Mat init, bool noDecay = false);
    int count() const { return static_cast<int>(entries.size()); }
    Entry& entry(int id) { return entries[static_cast<size_t>(id)]; }
    const Entry& entry(int id) const { return entries[static_cast<size_t>(id)]; }
    const Mat& value(int id) const { return entries[static_cast<size_t>(id)].value; }
    Mat& valueMutable(int id) { return entries[static_cast<size_t>(id)].value; }
    int find(const std::string& name) const;  // -1 when absent

    void zeroGrads();
    /// Adds per-parameter gradient buffers (indexed by parameter id) into grads.
    void accumulate(const std::vector<Mat>& buffers);
    long parameterCount() const;

private:
    std::vector<Entry> entries;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weightDecay = 0.0;  // decoupled; skipped for noDecay entries
};

/// One optimizer step over all parameters; `step` counts from 1 for bias correction.
void adamStep(ParameterStore& params, const AdamConfig& cfg, long step);

/// Reverse-mode tape over Mat values. Build per example, call backward once.
class Graph {
public:
    explicit Graph(const ParameterStore* params, bool training = false,
                   std::mt19937_64* rng = nullptr)
        : store(params), trainingMode(training), dropoutRng(rng) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    int input(Mat m);
    int param(int paramId);

    int matmul(int a, int b);
    int matmulNT(int a, int b);                 // a * b^T
    int add(int a, int b);
    int addRowBroadcast(int a, int rowVec);     // adds 1xC row vector to every row
    int addColStretch(int m, int rowVec);       // out[r,c] = m[r,c] + rowVec[0,r]
    int mulColStretch(int m, int rowVec);       // out[r,c] = m[r,c] * rowVec[0,r]
    int mulElem(int a, int b);
    int scale(int a, double s);
    int concatCols(const std::vector<int>& parts);
    int stackRows(const std::vector<int>& parts);
    int sliceCols(int a, int begin, int end);   // [begin, end)
    int scaleByScalarNode(int a, int scalar);   // multiply by a 1x1 node
    int selectRows(int a, std::vector<int> rowIdx);
    int meanRows(int a);                        // 1xC mean over rows
    int softmaxRows(int a);
    int logSoftmaxRows(int a);
    int layerNorm(int x, int gain, int bias);   // per-row, eps 1e-5
    int gelu(int a);
    int dropout(int a, double rate);
    int pick(int a, int r, int c);              // 1x1 view of one entry
    int addScalars(const std::vector<int>& scalars);
    int logSumExpCols(int a);                   // 1xC over the rows of each column
    int logSumExpAll(int a);                    // 1x1 over all entries
    /// out[r,c] = idxMap[r,c] < 0 ? kMaskScore : flat(a)[idxMap[r,c]]
    int gatherFlat(int a, const Mat& idxMap);

    const Mat& value(int id) const;
    double scalar(int id) const;
    bool training() const { return trainingMode; }

    /// Backpropagates from a 1x1 node; fills parameter gradients into an
    /// internal per-node store readable via accumulateParamGrads.
    void backward(int rootScalar);
    /// Adds d(root)/d(param) into buffers[paramId]; buffers must be sized and
    /// shaped by the caller (zeros or running sums).
    void accumulateParamGrads(std::vector<Mat>& buffers) const;

private:
    struct Node {
        Mat ownVal;
        const Mat* extVal = nullptr;  // set for parameter nodes
        int paramId = -1;
        std::function<void(Graph&, int)> back;  // consumes grads[nodeId]
    };

    const Mat& val(int id) const {
        const Node& n = nodes[static_cast<size_t>(id)];
        return n.extVal ? *n.extVal : n.ownVal;
    }
    Mat& grad(int id) { return grads[static_cast<size_t>(id)]; }
    int push(Node n);
    void checkFinite(int id, const char* op) const;

    const ParameterStore* store;
    bool trainingMode;
    std::mt19937_64* dropoutRng;
    std::vector<Node> nodes;
    std::vector<Mat> grads;
    friend struct GraphOps;
};

/// Relative-error comparison used by the finite-difference checks:
/// |a - b| / max(floor, |a|, |b|).
double relativeError(double a, double b, double floor = 1e-4);

}  // namespace quartet
