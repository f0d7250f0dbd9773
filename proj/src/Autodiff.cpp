#include "quartet/Autodiff.h"

#include <algorithm>
#include <cmath>

namespace quartet {

bool Mat::allFinite() const {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Mat Mat::fill(int r, int c, double v) {
    Mat m(r, c);
    std::fill(m.a.begin(), m.a.end(), v);
    return m;
}

Mat Mat::rowVector(const std::vector<double>& v) {
    Mat m(1, static_cast<int>(v.size()));
    m.a = v;
    return m;
}

void mmNN(const Mat& a, const Mat& b, Mat& dst) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.a[static_cast<size_t>(i) * a.cols];
        double* drow = &dst.a[static_cast<size_t>(i) * dst.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &b.a[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) drow[j] += av * brow[j];
        }
    }
}

void mmNT(const Mat& a, const Mat& b, Mat& dst) {
    // dst(i,j) += sum_k a(i,k) * b(j,k)
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.a[static_cast<size_t>(i) * a.cols];
        double* drow = &dst.a[static_cast<size_t>(i) * dst.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = &b.a[static_cast<size_t>(j) * b.cols];
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            drow[j] += acc;
        }
    }
}

void mmTN(const Mat& a, const Mat& b, Mat& dst) {
    // dst(i,j) += sum_k a(k,i) * b(k,j)
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = &a.a[static_cast<size_t>(k) * a.cols];
        const double* brow = &b.a[static_cast<size_t>(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* drow = &dst.a[static_cast<size_t>(i) * dst.cols];
            for (int j = 0; j < b.cols; ++j) drow[j] += av * brow[j];
        }
    }
}

int ParameterStore::add(const std::string& name, Mat init, bool noDecay) {
    if (find(name) >= 0) throw NumericsError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Mat(init.rows, init.cols);
    e.adamM = Mat(init.rows, init.cols);
    e.adamV = Mat(init.rows, init.cols);
    e.value = std::move(init);
    e.noDecay = noDecay;
    entries.push_back(std::move(e));
    return static_cast<int>(entries.size()) - 1;
}

int ParameterStore::find(const std::string& name) const {
    for (size_t k = 0; k < entries.size(); ++k) {
        if (entries[k].name == name) return static_cast<int>(k);
    }
    return -1;
}

void ParameterStore::zeroGrads() {
    for (auto& e : entries) std::fill(e.grad.a.begin(), e.grad.a.end(), 0.0);
}

void ParameterStore::accumulate(const std::vector<Mat>& buffers) {
    if (buffers.size() != entries.size()) throw NumericsError("gradient buffer count mismatch");
    for (size_t k = 0; k < entries.size(); ++k) {
        if (buffers[k].size() == 0) continue;
        auto& g = entries[k].grad;
        for (size_t i = 0; i < g.a.size(); ++i) g.a[i] += buffers[k].a[i];
    }
}

long ParameterStore::parameterCount() const {
    long n = 0;
    for (const auto& e : entries) n += static_cast<long>(e.value.size());
    return n;
}

void adamStep(ParameterStore& params, const AdamConfig& cfg, long step) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (int id = 0; id < params.count(); ++id) {
        auto& e = params.entry(id);
        for (size_t i = 0; i < e.value.a.size(); ++i) {
            const double g = e.grad.a[i];
            e.adamM.a[i] = cfg.beta1 * e.adamM.a[i] + (1.0 - cfg.beta1) * g;
            e.adamV.a[i] = cfg.beta2 * e.adamV.a[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.adamM.a[i] / bc1;
            const double vhat = e.adamV.a[i] / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg.eps);
            if (!e.noDecay && cfg.weightDecay > 0.0) update += cfg.weightDecay * e.value.a[i];
            e.value.a[i] -= cfg.lr * update;
        }
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

int Graph::push(Node n) {
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

const Mat& Graph::value(int id) const { return val(id); }

double Graph::scalar(int id) const {
    const Mat& m = val(id);
    if (m.rows != 1 || m.cols != 1) throw NumericsError("scalar() on a non-1x1 node");
    return m.a[0];
}

void Graph::checkFinite(int id, const char* op) const {
    if (!val(id).allFinite()) {
        throw NumericsError(std::string("non-finite values produced by ") + op);
    }
}

int Graph::input(Mat m) {
    Node n;
    n.ownVal = std::move(m);
    return push(std::move(n));
}

int Graph::param(int paramId) {
    Node n;
    n.extVal = &store->value(paramId);
    n.paramId = paramId;
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols != B.rows) throw NumericsError("matmul shape mismatch");
    Node n;
    n.ownVal = Mat(A.rows, B.cols);
    mmNN(A, B, n.ownVal);
    n.back = [a, b](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        mmNT(gout, g.val(b), g.grad(a));  // dA += dC * B^T
        mmTN(g.val(a), gout, g.grad(b));  // dB += A^T * dC
    };
    return push(std::move(n));
}

int Graph::matmulNT(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols != B.cols) throw NumericsError("matmulNT shape mismatch");
    Node n;
    n.ownVal = Mat(A.rows, B.rows);
    mmNT(A, B, n.ownVal);
    n.back = [a, b](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        mmNN(gout, g.val(b), g.grad(a));  // dA += dC * B
        mmTN(gout, g.val(a), g.grad(b));  // dB += dC^T * A
    };
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.sameShape(B)) throw NumericsError("add shape mismatch");
    Node n;
    n.ownVal = A;
    for (size_t i = 0; i < B.a.size(); ++i) n.ownVal.a[i] += B.a[i];
    n.back = [a, b](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        for (size_t i = 0; i < gout.a.size(); ++i) {
            g.grad(a).a[i] += gout.a[i];
            g.grad(b).a[i] += gout.a[i];
        }
    };
    return push(std::move(n));
}

int Graph::addRowBroadcast(int a, int rowVec) {
    const Mat& A = val(a);
    const Mat& R = val(rowVec);
    if (R.rows != 1 || R.cols != A.cols) throw NumericsError("addRowBroadcast shape mismatch");
    Node n;
    n.ownVal = A;
    for (int r = 0; r < A.rows; ++r) {
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(r, c) += R.a[static_cast<size_t>(c)];
    }
    n.back = [a, rowVec](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        Mat& gr = g.grad(rowVec);
        for (int r = 0; r < gout.rows; ++r) {
            for (int c = 0; c < gout.cols; ++c) {
                ga.at(r, c) += gout.at(r, c);
                gr.a[static_cast<size_t>(c)] += gout.at(r, c);
            }
        }
    };
    return push(std::move(n));
}

int Graph::addColStretch(int m, int rowVec) {
    const Mat& A = val(m);
    const Mat& R = val(rowVec);
    if (R.rows != 1 || R.cols != A.rows) throw NumericsError("addColStretch shape mismatch");
    Node n;
    n.ownVal = A;
    for (int r = 0; r < A.rows; ++r) {
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(r, c) += R.a[static_cast<size_t>(r)];
    }
    n.back = [m, rowVec](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(m);
        Mat& gr = g.grad(rowVec);
        for (int r = 0; r < gout.rows; ++r) {
            for (int c = 0; c < gout.cols; ++c) {
                ga.at(r, c) += gout.at(r, c);
                gr.a[static_cast<size_t>(r)] += gout.at(r, c);
            }
        }
    };
    return push(std::move(n));
}

int Graph::mulColStretch(int m, int rowVec) {
    const Mat& A = val(m);
    const Mat& R = val(rowVec);
    if (R.rows != 1 || R.cols != A.rows) throw NumericsError("mulColStretch shape mismatch");
    Node n;
    n.ownVal = A;
    for (int r = 0; r < A.rows; ++r) {
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(r, c) *= R.a[static_cast<size_t>(r)];
    }
    n.back = [m, rowVec](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        const Mat& A2 = g.val(m);
        const Mat& R2 = g.val(rowVec);
        Mat& ga = g.grad(m);
        Mat& gr = g.grad(rowVec);
        for (int r = 0; r < gout.rows; ++r) {
            for (int c = 0; c < gout.cols; ++c) {
                ga.at(r, c) += gout.at(r, c) * R2.a[static_cast<size_t>(r)];
                gr.a[static_cast<size_t>(r)] += gout.at(r, c) * A2.at(r, c);
            }
        }
    };
    return push(std::move(n));
}

int Graph::mulElem(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.sameShape(B)) throw NumericsError("mulElem shape mismatch");
    Node n;
    n.ownVal = A;
    for (size_t i = 0; i < B.a.size(); ++i) n.ownVal.a[i] *= B.a[i];
    n.back = [a, b](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        const Mat& A2 = g.val(a);
        const Mat& B2 = g.val(b);
        for (size_t i = 0; i < gout.a.size(); ++i) {
            g.grad(a).a[i] += gout.a[i] * B2.a[i];
            g.grad(b).a[i] += gout.a[i] * A2.a[i];
        }
    };
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    Node n;
    n.ownVal = val(a);
    for (double& v : n.ownVal.a) v *= s;
    n.back = [a, s](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        for (size_t i = 0; i < gout.a.size(); ++i) g.grad(a).a[i] += gout.a[i] * s;
    };
    return push(std::move(n));
}

int Graph::concatCols(const std::vector<int>& parts) {
    if (parts.empty()) throw NumericsError("concatCols needs at least one part");
    const int rows = val(parts[0]).rows;
    int cols = 0;
    for (int p : parts) {
        if (val(p).rows != rows) throw NumericsError("concatCols row mismatch");
        cols += val(p).cols;
    }
    Node n;
    n.ownVal = Mat(rows, cols);
    int off = 0;
    for (int p : parts) {
        const Mat& P = val(p);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < P.cols; ++c) n.ownVal.at(r, off + c) = P.at(r, c);
        }
        off += P.cols;
    }
    n.back = [parts](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        int off2 = 0;
        for (int p : parts) {
            Mat& gp = g.grad(p);
            for (int r = 0; r < gout.rows; ++r) {
                for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += gout.at(r, off2 + c);
            }
            off2 += gp.cols;
        }
    };
    return push(std::move(n));
}

int Graph::stackRows(const std::vector<int>& parts) {
    if (parts.empty()) throw NumericsError("stackRows needs at least one part");
    const int cols = val(parts[0]).cols;
    int rows = 0;
    for (int p : parts) {
        if (val(p).cols != cols) throw NumericsError("stackRows column mismatch");
        rows += val(p).rows;
    }
    Node n;
    n.ownVal = Mat(rows, cols);
    int off = 0;
    for (int p : parts) {
        const Mat& P = val(p);
        for (int r = 0; r < P.rows; ++r) {
            for (int c = 0; c < cols; ++c) n.ownVal.at(off + r, c) = P.at(r, c);
        }
        off += P.rows;
    }
    n.back = [parts](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        int off2 = 0;
        for (int p : parts) {
            Mat& gp = g.grad(p);
            for (int r = 0; r < gp.rows; ++r) {
                for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += gout.at(off2 + r, c);
            }
            off2 += gp.rows;
        }
    };
    return push(std::move(n));
}

int Graph::scaleByScalarNode(int a, int scalar) {
    const Mat& A = val(a);
    const Mat& S = val(scalar);
    if (S.rows != 1 || S.cols != 1) throw NumericsError("scaleByScalarNode needs a 1x1 scalar");
    Node n;
    n.ownVal = A;
    for (double& v : n.ownVal.a) v *= S.a[0];
    n.back = [a, scalar](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        const Mat& A2 = g.val(a);
        const double s = g.val(scalar).a[0];
        Mat& ga = g.grad(a);
        double acc = 0;
        for (size_t i = 0; i < gout.a.size(); ++i) {
            ga.a[i] += gout.a[i] * s;
            acc += gout.a[i] * A2.a[i];
        }
        g.grad(scalar).a[0] += acc;
    };
    return push(std::move(n));
}

int Graph::sliceCols(int a, int begin, int end) {
    const Mat& A = val(a);
    if (begin < 0 || end > A.cols || begin >= end) throw NumericsError("sliceCols range invalid");
    Node n;
    n.ownVal = Mat(A.rows, end - begin);
    for (int r = 0; r < A.rows; ++r) {
        for (int c = begin; c < end; ++c) n.ownVal.at(r, c - begin) = A.at(r, c);
    }
    n.back = [a, begin](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (int r = 0; r < gout.rows; ++r) {
            for (int c = 0; c < gout.cols; ++c) ga.at(r, begin + c) += gout.at(r, c);
        }
    };
    return push(std::move(n));
}

int Graph::selectRows(int a, std::vector<int> rowIdx) {
    const Mat& A = val(a);
    for (int r : rowIdx) {
        if (r < 0 || r >= A.rows) throw NumericsError("selectRows index out of range");
    }
    Node n;
    n.ownVal = Mat(static_cast<int>(rowIdx.size()), A.cols);
    for (size_t k = 0; k < rowIdx.size(); ++k) {
        for (int c = 0; c < A.cols; ++c) {
            n.ownVal.at(static_cast<int>(k), c) = A.at(rowIdx[k], c);
        }
    }
    n.back = [a, rowIdx = std::move(rowIdx)](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (size_t k = 0; k < rowIdx.size(); ++k) {
            for (int c = 0; c < gout.cols; ++c) {
                ga.at(rowIdx[k], c) += gout.at(static_cast<int>(k), c);
            }
        }
    };
    return push(std::move(n));
}

int Graph::meanRows(int a) {
    const Mat& A = val(a);
    if (A.rows < 1) throw NumericsError("meanRows on empty matrix");
    Node n;
    n.ownVal = Mat(1, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(0, c) += A.at(r, c);
    }
    for (int c = 0; c < A.cols; ++c) n.ownVal.at(0, c) /= A.rows;
    n.back = [a](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        const double inv = 1.0 / ga.rows;
        for (int r = 0; r < ga.rows; ++r) {
            for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += gout.at(0, c) * inv;
        }
    };
    return push(std::move(n));
}

int Graph::softmaxRows(int a) {
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        double mx = A.at(r, 0);
        for (int c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
        double sum = 0;
        for (int c = 0; c < A.cols; ++c) {
            const double e = std::exp(A.at(r, c) - mx);
            n.ownVal.at(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(r, c) /= sum;
    }
    n.back = [a](Graph& g, int self) {
        const Mat& y = g.val(self);
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (int r = 0; r < y.rows; ++r) {
            double dot = 0;
            for (int c = 0; c < y.cols; ++c) dot += gout.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols; ++c) {
                ga.at(r, c) += y.at(r, c) * (gout.at(r, c) - dot);
            }
        }
    };
    int id = push(std::move(n));
    checkFinite(id, "softmaxRows");
    return id;
}

int Graph::logSoftmaxRows(int a) {
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        double mx = A.at(r, 0);
        for (int c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
        double sum = 0;
        for (int c = 0; c < A.cols; ++c) sum += std::exp(A.at(r, c) - mx);
        const double lse = mx + std::log(sum);
        for (int c = 0; c < A.cols; ++c) n.ownVal.at(r, c) = A.at(r, c) - lse;
    }
    n.back = [a](Graph& g, int self) {
        const Mat& y = g.val(self);
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (int r = 0; r < y.rows; ++r) {
            double gsum = 0;
            for (int c = 0; c < y.cols; ++c) gsum += gout.at(r, c);
            for (int c = 0; c < y.cols; ++c) {
                ga.at(r, c) += gout.at(r, c) - std::exp(y.at(r, c)) * gsum;
            }
        }
    };
    int id = push(std::move(n));
    checkFinite(id, "logSoftmaxRows");
    return id;
}

int Graph::layerNorm(int x, int gain, int bias) {
    constexpr double kEps = 1e-5;
    const Mat& X = val(x);
    const Mat& G = val(gain);
    const Mat& B = val(bias);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols) {
        throw NumericsError("layerNorm gain/bias shape mismatch");
    }
    Node n;
    n.ownVal = Mat(X.rows, X.cols);
    for (int r = 0; r < X.rows; ++r) {
        double mean = 0;
        for (int c = 0; c < X.cols; ++c) mean += X.at(r, c);
        mean /= X.cols;
        double var = 0;
        for (int c = 0; c < X.cols; ++c) {
            const double d = X.at(r, c) - mean;
            var += d * d;
        }
        var /= X.cols;
        const double inv = 1.0 / std::sqrt(var + kEps);
        for (int c = 0; c < X.cols; ++c) {
            const double xhat = (X.at(r, c) - mean) * inv;
            n.ownVal.at(r, c) = G.a[static_cast<size_t>(c)] * xhat + B.a[static_cast<size_t>(c)];
        }
    }
    n.back = [x, gain, bias](Graph& g, int self) {
        const Mat& X2 = g.val(x);
        const Mat& G2 = g.val(gain);
        const Mat& gout = g.grad(self);
        Mat& gx = g.grad(x);
        Mat& gg = g.grad(gain);
        Mat& gb = g.grad(bias);
        const int nCols = X2.cols;
        for (int r = 0; r < X2.rows; ++r) {
            double mean = 0;
            for (int c = 0; c < nCols; ++c) mean += X2.at(r, c);
            mean /= nCols;
            double var = 0;
            for (int c = 0; c < nCols; ++c) {
                const double d = X2.at(r, c) - mean;
                var += d * d;
            }
            var /= nCols;
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            double meanDxhat = 0, meanDxhatXhat = 0;
            std::vector<double> xhat(static_cast<size_t>(nCols)), dxhat(static_cast<size_t>(nCols));
            for (int c = 0; c < nCols; ++c) {
                xhat[static_cast<size_t>(c)] = (X2.at(r, c) - mean) * inv;
                dxhat[static_cast<size_t>(c)] = gout.at(r, c) * G2.a[static_cast<size_t>(c)];
                meanDxhat += dxhat[static_cast<size_t>(c)];
                meanDxhatXhat += dxhat[static_cast<size_t>(c)] * xhat[static_cast<size_t>(c)];
                gg.a[static_cast<size_t>(c)] += gout.at(r, c) * xhat[static_cast<size_t>(c)];
                gb.a[static_cast<size_t>(c)] += gout.at(r, c);
            }
            meanDxhat /= nCols;
            meanDxhatXhat /= nCols;
            for (int c = 0; c < nCols; ++c) {
                gx.at(r, c) += inv * (dxhat[static_cast<size_t>(c)] - meanDxhat -
                                      xhat[static_cast<size_t>(c)] * meanDxhatXhat);
            }
        }
    };
    return push(std::move(n));
}

int Graph::gelu(int a) {
    constexpr double kInvSqrt2 = 0.7071067811865475;
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(A.rows, A.cols);
    for (size_t i = 0; i < A.a.size(); ++i) {
        const double x = A.a[i];
        n.ownVal.a[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    n.back = [a](Graph& g, int self) {
        const Mat& A2 = g.val(a);
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (size_t i = 0; i < A2.a.size(); ++i) {
            const double x = A2.a[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga.a[i] += gout.a[i] * (cdf + x * pdf);
        }
    };
    return push(std::move(n));
}

int Graph::dropout(int a, double rate) {
    if (!trainingMode || rate <= 0.0) return a;
    if (!dropoutRng) throw NumericsError("dropout requires an RNG in training mode");
    if (rate >= 1.0) throw NumericsError("dropout rate must be < 1");
    const Mat& A = val(a);
    const double keep = 1.0 - rate;
    Mat mask(A.rows, A.cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& m : mask.a) m = (u(*dropoutRng) < keep) ? 1.0 / keep : 0.0;
    Node n;
    n.ownVal = A;
    for (size_t i = 0; i < A.a.size(); ++i) n.ownVal.a[i] *= mask.a[i];
    n.back = [a, mask = std::move(mask)](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (size_t i = 0; i < gout.a.size(); ++i) ga.a[i] += gout.a[i] * mask.a[i];
    };
    return push(std::move(n));
}

int Graph::pick(int a, int r, int c) {
    const Mat& A = val(a);
    if (r < 0 || r >= A.rows || c < 0 || c >= A.cols) throw NumericsError("pick out of range");
    Node n;
    n.ownVal = Mat(1, 1);
    n.ownVal.a[0] = A.at(r, c);
    n.back = [a, r, c](Graph& g, int self) { g.grad(a).at(r, c) += g.grad(self).a[0]; };
    return push(std::move(n));
}

int Graph::addScalars(const std::vector<int>& scalars) {
    if (scalars.empty()) throw NumericsError("addScalars needs at least one term");
    Node n;
    n.ownVal = Mat(1, 1);
    for (int s : scalars) {
        const Mat& S = val(s);
        if (S.rows != 1 || S.cols != 1) throw NumericsError("addScalars term is not 1x1");
        n.ownVal.a[0] += S.a[0];
    }
    n.back = [scalars](Graph& g, int self) {
        const double gout = g.grad(self).a[0];
        for (int s : scalars) g.grad(s).a[0] += gout;
    };
    return push(std::move(n));
}

int Graph::logSumExpCols(int a) {
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(1, A.cols);
    for (int c = 0; c < A.cols; ++c) {
        double mx = A.at(0, c);
        for (int r = 1; r < A.rows; ++r) mx = std::max(mx, A.at(r, c));
        if (mx <= kMaskScore) {
            n.ownVal.at(0, c) = kMaskScore;
            continue;
        }
        double sum = 0;
        for (int r = 0; r < A.rows; ++r) sum += std::exp(A.at(r, c) - mx);
        n.ownVal.at(0, c) = mx + std::log(sum);
    }
    n.back = [a](Graph& g, int self) {
        const Mat& A2 = g.val(a);
        const Mat& y = g.val(self);
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (int c = 0; c < A2.cols; ++c) {
            if (y.at(0, c) <= kMaskScore) continue;
            for (int r = 0; r < A2.rows; ++r) {
                ga.at(r, c) += gout.at(0, c) * std::exp(A2.at(r, c) - y.at(0, c));
            }
        }
    };
    return push(std::move(n));
}

int Graph::logSumExpAll(int a) {
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(1, 1);
    double mx = A.a[0];
    for (double v : A.a) mx = std::max(mx, v);
    if (mx <= kMaskScore) {
        n.ownVal.a[0] = kMaskScore;
    } else {
        double sum = 0;
        for (double v : A.a) sum += std::exp(v - mx);
        n.ownVal.a[0] = mx + std::log(sum);
    }
    n.back = [a](Graph& g, int self) {
        const Mat& A2 = g.val(a);
        const double y = g.val(self).a[0];
        if (y <= kMaskScore) return;
        const double gout = g.grad(self).a[0];
        Mat& ga = g.grad(a);
        for (size_t i = 0; i < A2.a.size(); ++i) ga.a[i] += gout * std::exp(A2.a[i] - y);
    };
    return push(std::move(n));
}

int Graph::gatherFlat(int a, const Mat& idxMap) {
    const Mat& A = val(a);
    Node n;
    n.ownVal = Mat(idxMap.rows, idxMap.cols);
    for (size_t i = 0; i < idxMap.a.size(); ++i) {
        const int idx = static_cast<int>(idxMap.a[i]);
        if (idx < 0) {
            n.ownVal.a[i] = kMaskScore;
        } else {
            if (idx >= static_cast<int>(A.a.size())) throw NumericsError("gatherFlat index out of range");
            n.ownVal.a[i] = A.a[static_cast<size_t>(idx)];
        }
    }
    Mat idxCopy = idxMap;
    n.back = [a, idxCopy = std::move(idxCopy)](Graph& g, int self) {
        const Mat& gout = g.grad(self);
        Mat& ga = g.grad(a);
        for (size_t i = 0; i < idxCopy.a.size(); ++i) {
            const int idx = static_cast<int>(idxCopy.a[i]);
            if (idx >= 0) ga.a[static_cast<size_t>(idx)] += gout.a[i];
        }
    };
    return push(std::move(n));
}

void Graph::backward(int rootScalar) {
    const Mat& root = val(rootScalar);
    if (root.rows != 1 || root.cols != 1) throw NumericsError("backward root must be 1x1");
    grads.clear();
    grads.resize(nodes.size());
    for (size_t k = 0; k < nodes.size(); ++k) {
        const Mat& v = val(static_cast<int>(k));
        grads[k] = Mat(v.rows, v.cols);
    }
    grads[static_cast<size_t>(rootScalar)].a[0] = 1.0;
    for (int k = rootScalar; k >= 0; --k) {
        if (nodes[static_cast<size_t>(k)].back) {
            nodes[static_cast<size_t>(k)].back(*this, k);
        }
    }
}

void Graph::accumulateParamGrads(std::vector<Mat>& buffers) const {
    if (grads.empty()) throw NumericsError("backward() has not run");
    for (size_t k = 0; k < nodes.size(); ++k) {
        const Node& n = nodes[k];
        if (n.paramId < 0) continue;
        Mat& dst = buffers[static_cast<size_t>(n.paramId)];
        const Mat& src = grads[k];
        if (dst.size() == 0) dst = Mat(src.rows, src.cols);
        for (size_t i = 0; i < src.a.size(); ++i) dst.a[i] += src.a[i];
    }
}

double relativeError(double a, double b, double floor) {
    const double denom = std::max({floor, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

}  // namespace quartet
