#pragma once

#include <functional>
#include <utility>

#include "sbgc/common.hpp"

// Reverse- and forward-mode differentiation over dense row-major arrays.
//
// A Tape records an acyclic evaluation graph. Values are shared across all
// tangent channels; each channel carries one directional derivative through
// the forward pass and, in backward_dual, through the reverse pass as well
// (forward-over-reverse). That second path is what produces Hessian-vector
// products without ever materializing a Hessian.
//
// The operation set is deliberately small: affine maps, elementwise
// arithmetic and nonlinearities, sum/mean, concatenation. Enough for MLP
// score networks; no broadcasting beyond a per-row bias.

namespace sbgc::ad {

enum class Op : uint8_t {
    Input,
    MatMul,      // a[m×k] * b[k×n]
    AddRowBias,  // a[m×n] + ones[m] * b[1×n]
    Add,
    Sub,
    Mul,       // elementwise
    MulConst,  // elementwise by a constant matrix stored on the node
    Scale,     // by a scalar constant
    Tanh,
    Sigmoid,
    Sum,   // -> 1×1
    Mean,  // -> 1×1
    ConcatCols,
};

// Per-node channel block: `ch` copies of the node's flattened shape.
struct Chan {
    int ch = 0;
    size_t len = 0;  // per-channel length
    std::vector<double> a;

    Chan() = default;
    Chan(int channels, size_t n) : ch(channels), len(n), a(static_cast<size_t>(channels) * n, 0.0) {}

    double* at(int c) { return a.data() + static_cast<size_t>(c) * len; }
    const double* at(int c) const { return a.data() + static_cast<size_t>(c) * len; }
    bool empty() const { return ch == 0; }
};

struct Node {
    Op op = Op::Input;
    int a = -1, b = -1;
    Mat val;
    Chan tan;     // forward tangents, one block per channel
    Mat cmat;     // MulConst payload
    double scal = 0.0;
};

class Tape {
public:
    explicit Tape(int tangent_channels = 0) : channels_(tangent_channels) {
        require(tangent_channels >= 0, "Tape: negative channel count");
    }

    int channels() const { return channels_; }
    int size() const { return static_cast<int>(nodes_.size()); }

    const Mat& val(int id) const { return nodes_[check(id)].val; }

    Mat tangent(int id, int channel) const {
        const Node& n = nodes_[check(id)];
        Mat out(n.val.rows, n.val.cols);
        if (!n.tan.empty()) {
            require(channel >= 0 && channel < n.tan.ch, "tangent: channel out of range");
            std::memcpy(out.a.data(), n.tan.at(channel), sizeof(double) * n.tan.len);
        }
        return out;
    }

    // ---- leaves ----

    int input(Mat v) {
        Node n;
        n.op = Op::Input;
        n.val = std::move(v);
        if (channels_ > 0) n.tan = Chan(channels_, n.val.size());
        return push(std::move(n));
    }

    // `tangents` holds one row per channel, flattened to the input's size.
    int input(Mat v, const Mat& tangents) {
        require(channels_ > 0, "input: tape has no tangent channels");
        require(tangents.rows == channels_ && tangents.cols == static_cast<int>(v.size()),
                "input: tangent block must be channels × value-size");
        Node n;
        n.op = Op::Input;
        n.val = std::move(v);
        n.tan = Chan(channels_, n.val.size());
        std::memcpy(n.tan.a.data(), tangents.a.data(), sizeof(double) * tangents.a.size());
        return push(std::move(n));
    }

    // ---- operations ----

    int matmul(int a, int b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        require(A.cols == B.rows, "matmul: dimension mismatch");
        Node n;
        n.op = Op::MatMul;
        n.a = a;
        n.b = b;
        forward(n);
        return push(std::move(n));
    }

    int add_row_bias(int x, int bias) {
        const Mat& X = val(x);
        const Mat& B = val(bias);
        require(B.rows == 1 && B.cols == X.cols, "add_row_bias: bias must be 1×cols");
        Node n;
        n.op = Op::AddRowBias;
        n.a = x;
        n.b = bias;
        forward(n);
        return push(std::move(n));
    }

    int add(int a, int b) { return binary(Op::Add, a, b); }
    int sub(int a, int b) { return binary(Op::Sub, a, b); }
    int mul(int a, int b) { return binary(Op::Mul, a, b); }

    int mul_const(int a, Mat c) {
        require(val(a).same_shape(c), "mul_const: shape mismatch");
        Node n;
        n.op = Op::MulConst;
        n.a = a;
        n.cmat = std::move(c);
        forward(n);
        return push(std::move(n));
    }

    int scale(int a, double c) {
        Node n;
        n.op = Op::Scale;
        n.a = a;
        n.scal = c;
        forward(n);
        return push(std::move(n));
    }

    int tanh_(int a) { return unary(Op::Tanh, a); }
    int sigmoid_(int a) { return unary(Op::Sigmoid, a); }
    int sum(int a) { return unary(Op::Sum, a); }
    int mean(int a) { return unary(Op::Mean, a); }

    int silu(int a) { return mul(a, sigmoid_(a)); }

    int concat_cols(int a, int b) {
        require(val(a).rows == val(b).rows, "concat_cols: row mismatch");
        Node n;
        n.op = Op::ConcatCols;
        n.a = a;
        n.b = b;
        forward(n);
        return push(std::move(n));
    }

    // Re-executes the recorded graph from stored inputs. Same code path and
    // order as recording, so values reproduce bit-identically.
    void replay() {
        for (auto& n : nodes_)
            if (n.op != Op::Input) forward(n);
    }

    // ---- reverse passes ----

    // Plain reverse-mode accumulation; value adjoints only. `seed` is
    // dL/d(out) and must match the output's shape.
    void backward(int out, const Mat& seed, std::vector<Mat>& adj) const {
        const Node& on = nodes_[check(out)];
        require(seed.same_shape(on.val), "backward: seed shape mismatch");
        adj.assign(nodes_.size(), Mat());
        adj[out] = seed;
        for (int id = out; id >= 0; --id) {
            if (adj[id].size() == 0) continue;
            accumulate_value(id, adj);
        }
    }

    struct DualAdjoints {
        std::vector<Chan> val;  // per node: channels × node-size
        std::vector<Chan> tan;
    };

    // Forward-over-reverse. One value/tangent adjoint pair per tangent
    // channel; `seed_val` and `seed_tan` hold one flattened output seed per
    // channel (seed_tan may be null for zero tangent seeds). The tangent
    // adjoint of an input leaf carries the Hessian-vector product associated
    // with that channel's forward tangent.
    void backward_dual(int out, const Mat& seed_val, const Mat* seed_tan, DualAdjoints& dadj) const {
        require(channels_ > 0, "backward_dual: tape has no tangent channels");
        const Node& on = nodes_[check(out)];
        const size_t osz = on.val.size();
        require(seed_val.rows == channels_ && seed_val.cols == static_cast<int>(osz),
                "backward_dual: seed must be channels × out-size");
        if (seed_tan)
            require(seed_tan->rows == channels_ && seed_tan->cols == static_cast<int>(osz),
                    "backward_dual: tangent seed shape mismatch");
        dadj.val.assign(nodes_.size(), Chan());
        dadj.tan.assign(nodes_.size(), Chan());
        dadj.val[out] = Chan(channels_, osz);
        dadj.tan[out] = Chan(channels_, osz);
        std::memcpy(dadj.val[out].a.data(), seed_val.a.data(), sizeof(double) * seed_val.a.size());
        if (seed_tan)
            std::memcpy(dadj.tan[out].a.data(), seed_tan->a.data(), sizeof(double) * seed_tan->a.size());
        for (int id = out; id >= 0; --id) {
            if (dadj.val[id].empty()) continue;
            accumulate_dual(id, dadj);
        }
    }

private:
    int channels_;
    std::vector<Node> nodes_;

    int check(int id) const {
        require(id >= 0 && id < static_cast<int>(nodes_.size()), "Tape: bad node id");
        return id;
    }

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int binary(Op op, int a, int b) {
        require(val(a).same_shape(val(b)), "elementwise op: shape mismatch");
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        forward(n);
        return push(std::move(n));
    }

    int unary(Op op, int a) {
        Node n;
        n.op = op;
        n.a = a;
        forward(n);
        return push(std::move(n));
    }

    // ---- forward evaluation (values + tangent channels) ----

    void forward(Node& n) {
        const Node* A = n.a >= 0 ? &nodes_[n.a] : nullptr;
        const Node* B = n.b >= 0 ? &nodes_[n.b] : nullptr;
        switch (n.op) {
            case Op::Input:
                return;
            case Op::MatMul: {
                matmul_nn(A->val, B->val, n.val);
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    Mat tmp;
                    for (int c = 0; c < channels_; ++c) {
                        Mat ta = chan_as_mat(*A, c);
                        Mat tb = chan_as_mat(*B, c);
                        matmul_nn(ta, B->val, tmp);
                        Mat tmp2;
                        matmul_nn(A->val, tb, tmp2);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i) dst[i] = tmp.a[i] + tmp2.a[i];
                    }
                }
                break;
            }
            case Op::AddRowBias: {
                n.val = A->val;
                for (int i = 0; i < n.val.rows; ++i) {
                    double* r = n.val.row_ptr(i);
                    const double* b = B->val.row_ptr(0);
                    for (int j = 0; j < n.val.cols; ++j) r[j] += b[j];
                }
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        const double* tb = B->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (int i = 0; i < n.val.rows; ++i)
                            for (int j = 0; j < n.val.cols; ++j)
                                dst[static_cast<size_t>(i) * n.val.cols + j] =
                                    ta[static_cast<size_t>(i) * n.val.cols + j] + tb[j];
                    }
                }
                break;
            }
            case Op::Add:
            case Op::Sub: {
                const double sgn = n.op == Op::Add ? 1.0 : -1.0;
                n.val = A->val;
                for (size_t i = 0; i < n.val.size(); ++i) n.val.a[i] += sgn * B->val.a[i];
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        const double* tb = B->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i) dst[i] = ta[i] + sgn * tb[i];
                    }
                }
                break;
            }
            case Op::Mul: {
                n.val = A->val;
                for (size_t i = 0; i < n.val.size(); ++i) n.val.a[i] *= B->val.a[i];
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        const double* tb = B->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i)
                            dst[i] = ta[i] * B->val.a[i] + A->val.a[i] * tb[i];
                    }
                }
                break;
            }
            case Op::MulConst: {
                n.val = A->val;
                for (size_t i = 0; i < n.val.size(); ++i) n.val.a[i] *= n.cmat.a[i];
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i) dst[i] = ta[i] * n.cmat.a[i];
                    }
                }
                break;
            }
            case Op::Scale: {
                n.val = A->val;
                for (double& x : n.val.a) x *= n.scal;
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i) dst[i] = ta[i] * n.scal;
                    }
                }
                break;
            }
            case Op::Tanh: {
                n.val = A->val;
                for (double& x : n.val.a) x = std::tanh(x);
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i)
                            dst[i] = ta[i] * (1.0 - n.val.a[i] * n.val.a[i]);
                    }
                }
                break;
            }
            case Op::Sigmoid: {
                n.val = A->val;
                for (double& x : n.val.a) x = 1.0 / (1.0 + std::exp(-x));
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (size_t i = 0; i < n.tan.len; ++i)
                            dst[i] = ta[i] * n.val.a[i] * (1.0 - n.val.a[i]);
                    }
                }
                break;
            }
            case Op::Sum:
            case Op::Mean: {
                const double scale = n.op == Op::Sum ? 1.0 : 1.0 / static_cast<double>(A->val.size());
                n.val = Mat(1, 1);
                double s = 0.0;
                for (double x : A->val.a) s += x;
                n.val.a[0] = s * scale;
                if (channels_ > 0) {
                    n.tan = Chan(channels_, 1);
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        double ts = 0.0;
                        for (size_t i = 0; i < A->val.size(); ++i) ts += ta[i];
                        n.tan.at(c)[0] = ts * scale;
                    }
                }
                break;
            }
            case Op::ConcatCols: {
                const int r = A->val.rows, p = A->val.cols, q = B->val.cols;
                n.val = Mat(r, p + q);
                for (int i = 0; i < r; ++i) {
                    std::memcpy(n.val.row_ptr(i), A->val.row_ptr(i), sizeof(double) * p);
                    std::memcpy(n.val.row_ptr(i) + p, B->val.row_ptr(i), sizeof(double) * q);
                }
                if (channels_ > 0) {
                    n.tan = Chan(channels_, n.val.size());
                    for (int c = 0; c < channels_; ++c) {
                        const double* ta = A->tan.at(c);
                        const double* tb = B->tan.at(c);
                        double* dst = n.tan.at(c);
                        for (int i = 0; i < r; ++i) {
                            std::memcpy(dst + static_cast<size_t>(i) * (p + q), ta + static_cast<size_t>(i) * p,
                                        sizeof(double) * p);
                            std::memcpy(dst + static_cast<size_t>(i) * (p + q) + p,
                                        tb + static_cast<size_t>(i) * q, sizeof(double) * q);
                        }
                    }
                }
                break;
            }
        }
    }

    static Mat chan_as_mat(const Node& n, int c) {
        Mat m(n.val.rows, n.val.cols);
        if (!n.tan.empty()) std::memcpy(m.a.data(), n.tan.at(c), sizeof(double) * n.tan.len);
        return m;
    }

    // ---- reverse helpers ----

    static void ensure(Mat& m, const Mat& like) {
        if (m.size() == 0) m = Mat(like.rows, like.cols);
    }

    void ensure_dual(DualAdjoints& d, int id) const {
        if (d.val[id].empty()) {
            d.val[id] = Chan(channels_, nodes_[id].val.size());
            d.tan[id] = Chan(channels_, nodes_[id].val.size());
        }
    }

    void accumulate_value(int id, std::vector<Mat>& adj) const {
        const Node& n = nodes_[id];
        const Mat& g = adj[id];
        switch (n.op) {
            case Op::Input:
                return;
            case Op::MatMul: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure(adj[n.a], A.val);
                ensure(adj[n.b], B.val);
                matmul_nt(g, B.val, adj[n.a], true);
                matmul_tn(A.val, g, adj[n.b], true);
                return;
            }
            case Op::AddRowBias: {
                ensure(adj[n.a], nodes_[n.a].val);
                for (size_t i = 0; i < g.size(); ++i) adj[n.a].a[i] += g.a[i];
                ensure(adj[n.b], nodes_[n.b].val);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) adj[n.b].a[j] += g(i, j);
                return;
            }
            case Op::Add:
            case Op::Sub: {
                const double sgn = n.op == Op::Add ? 1.0 : -1.0;
                ensure(adj[n.a], nodes_[n.a].val);
                ensure(adj[n.b], nodes_[n.b].val);
                for (size_t i = 0; i < g.size(); ++i) {
                    adj[n.a].a[i] += g.a[i];
                    adj[n.b].a[i] += sgn * g.a[i];
                }
                return;
            }
            case Op::Mul: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure(adj[n.a], A.val);
                ensure(adj[n.b], B.val);
                for (size_t i = 0; i < g.size(); ++i) {
                    adj[n.a].a[i] += g.a[i] * B.val.a[i];
                    adj[n.b].a[i] += g.a[i] * A.val.a[i];
                }
                return;
            }
            case Op::MulConst: {
                ensure(adj[n.a], nodes_[n.a].val);
                for (size_t i = 0; i < g.size(); ++i) adj[n.a].a[i] += g.a[i] * n.cmat.a[i];
                return;
            }
            case Op::Scale: {
                ensure(adj[n.a], nodes_[n.a].val);
                for (size_t i = 0; i < g.size(); ++i) adj[n.a].a[i] += g.a[i] * n.scal;
                return;
            }
            case Op::Tanh: {
                ensure(adj[n.a], nodes_[n.a].val);
                for (size_t i = 0; i < g.size(); ++i)
                    adj[n.a].a[i] += g.a[i] * (1.0 - n.val.a[i] * n.val.a[i]);
                return;
            }
            case Op::Sigmoid: {
                ensure(adj[n.a], nodes_[n.a].val);
                for (size_t i = 0; i < g.size(); ++i)
                    adj[n.a].a[i] += g.a[i] * n.val.a[i] * (1.0 - n.val.a[i]);
                return;
            }
            case Op::Sum:
            case Op::Mean: {
                const Node& A = nodes_[n.a];
                const double scale =
                    n.op == Op::Sum ? 1.0 : 1.0 / static_cast<double>(A.val.size());
                ensure(adj[n.a], A.val);
                const double gs = g.a[0] * scale;
                for (size_t i = 0; i < A.val.size(); ++i) adj[n.a].a[i] += gs;
                return;
            }
            case Op::ConcatCols: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure(adj[n.a], A.val);
                ensure(adj[n.b], B.val);
                const int p = A.val.cols, q = B.val.cols;
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < p + q; ++j) {
                        if (j < p)
                            adj[n.a](i, j) += g(i, j);
                        else
                            adj[n.b](i, j - p) += g(i, j);
                    }
                return;
            }
        }
    }

    // Dual reverse pass for one node: adjoints carry (value, tangent) per
    // channel; local derivatives are evaluated in dual arithmetic using the
    // forward tangents, which is where second-order information enters.
    void accumulate_dual(int id, DualAdjoints& d) const {
        const Node& n = nodes_[id];
        const Chan& gv = d.val[id];
        const Chan& gt = d.tan[id];
        switch (n.op) {
            case Op::Input:
                return;
            case Op::MatMul: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure_dual(d, n.a);
                ensure_dual(d, n.b);
                Mat tmp;
                for (int c = 0; c < channels_; ++c) {
                    Mat gvc(n.val.rows, n.val.cols);
                    std::memcpy(gvc.a.data(), gv.at(c), sizeof(double) * gv.len);
                    Mat gtc(n.val.rows, n.val.cols);
                    std::memcpy(gtc.a.data(), gt.at(c), sizeof(double) * gt.len);
                    Mat At = chan_as_mat(A, c);
                    Mat Bt = chan_as_mat(B, c);
                    // d(A) value: gv * B^T ; tangent: gt * B^T + gv * Bt^T
                    Mat accv(A.val.rows, A.val.cols);
                    matmul_nt(gvc, B.val, accv, true);
                    add_into(d.val[n.a], c, accv);
                    Mat acct(A.val.rows, A.val.cols);
                    matmul_nt(gtc, B.val, acct, true);
                    matmul_nt(gvc, Bt, acct, true);
                    add_into(d.tan[n.a], c, acct);
                    // d(B) value: A^T * gv ; tangent: At^T * gv + A^T * gt
                    Mat accbv(B.val.rows, B.val.cols);
                    matmul_tn(A.val, gvc, accbv, true);
                    add_into(d.val[n.b], c, accbv);
                    Mat accbt(B.val.rows, B.val.cols);
                    matmul_tn(At, gvc, accbt, true);
                    matmul_tn(A.val, gtc, accbt, true);
                    add_into(d.tan[n.b], c, accbt);
                    (void)tmp;
                }
                return;
            }
            case Op::AddRowBias: {
                ensure_dual(d, n.a);
                ensure_dual(d, n.b);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        av[i] += v[i];
                        at[i] += t[i];
                    }
                    double* bv = d.val[n.b].at(c);
                    double* bt = d.tan[n.b].at(c);
                    for (int i = 0; i < n.val.rows; ++i)
                        for (int j = 0; j < n.val.cols; ++j) {
                            bv[j] += v[static_cast<size_t>(i) * n.val.cols + j];
                            bt[j] += t[static_cast<size_t>(i) * n.val.cols + j];
                        }
                }
                return;
            }
            case Op::Add:
            case Op::Sub: {
                const double sgn = n.op == Op::Add ? 1.0 : -1.0;
                ensure_dual(d, n.a);
                ensure_dual(d, n.b);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    double* bv = d.val[n.b].at(c);
                    double* bt = d.tan[n.b].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        av[i] += v[i];
                        at[i] += t[i];
                        bv[i] += sgn * v[i];
                        bt[i] += sgn * t[i];
                    }
                }
                return;
            }
            case Op::Mul: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure_dual(d, n.a);
                ensure_dual(d, n.b);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    const double* at_f = A.tan.empty() ? nullptr : A.tan.at(c);
                    const double* bt_f = B.tan.empty() ? nullptr : B.tan.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    double* bv = d.val[n.b].at(c);
                    double* bt = d.tan[n.b].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        const double bvf = B.val.a[i], avf = A.val.a[i];
                        const double btf = bt_f ? bt_f[i] : 0.0, atf = at_f ? at_f[i] : 0.0;
                        av[i] += v[i] * bvf;
                        at[i] += t[i] * bvf + v[i] * btf;
                        bv[i] += v[i] * avf;
                        bt[i] += t[i] * avf + v[i] * atf;
                    }
                }
                return;
            }
            case Op::MulConst: {
                ensure_dual(d, n.a);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        av[i] += v[i] * n.cmat.a[i];
                        at[i] += t[i] * n.cmat.a[i];
                    }
                }
                return;
            }
            case Op::Scale: {
                ensure_dual(d, n.a);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        av[i] += v[i] * n.scal;
                        at[i] += t[i] * n.scal;
                    }
                }
                return;
            }
            case Op::Tanh: {
                const Node& A = nodes_[n.a];
                ensure_dual(d, n.a);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    const double* ut = n.tan.empty() ? nullptr : n.tan.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        const double u = n.val.a[i];
                        const double dv = 1.0 - u * u;              // phi'
                        const double dt = ut ? -2.0 * u * ut[i] : 0.0;  // d/dc phi'
                        av[i] += v[i] * dv;
                        at[i] += t[i] * dv + v[i] * dt;
                    }
                }
                (void)A;
                return;
            }
            case Op::Sigmoid: {
                ensure_dual(d, n.a);
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    const double* ut = n.tan.empty() ? nullptr : n.tan.at(c);
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < gv.len; ++i) {
                        const double u = n.val.a[i];
                        const double dv = u * (1.0 - u);
                        const double dt = ut ? (1.0 - 2.0 * u) * ut[i] : 0.0;
                        av[i] += v[i] * dv;
                        at[i] += t[i] * dv + v[i] * dt;
                    }
                }
                return;
            }
            case Op::Sum:
            case Op::Mean: {
                const Node& A = nodes_[n.a];
                const double scale =
                    n.op == Op::Sum ? 1.0 : 1.0 / static_cast<double>(A.val.size());
                ensure_dual(d, n.a);
                for (int c = 0; c < channels_; ++c) {
                    const double v = gv.at(c)[0] * scale;
                    const double t = gt.at(c)[0] * scale;
                    double* av = d.val[n.a].at(c);
                    double* at = d.tan[n.a].at(c);
                    for (size_t i = 0; i < A.val.size(); ++i) {
                        av[i] += v;
                        at[i] += t;
                    }
                }
                return;
            }
            case Op::ConcatCols: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                ensure_dual(d, n.a);
                ensure_dual(d, n.b);
                const int p = A.val.cols, q = B.val.cols;
                for (int c = 0; c < channels_; ++c) {
                    const double* v = gv.at(c);
                    const double* t = gt.at(c);
                    double* avv = d.val[n.a].at(c);
                    double* avt = d.tan[n.a].at(c);
                    double* bvv = d.val[n.b].at(c);
                    double* bvt = d.tan[n.b].at(c);
                    for (int i = 0; i < n.val.rows; ++i)
                        for (int j = 0; j < p + q; ++j) {
                            const size_t src = static_cast<size_t>(i) * (p + q) + j;
                            if (j < p) {
                                avv[static_cast<size_t>(i) * p + j] += v[src];
                                avt[static_cast<size_t>(i) * p + j] += t[src];
                            } else {
                                bvv[static_cast<size_t>(i) * q + j - p] += v[src];
                                bvt[static_cast<size_t>(i) * q + j - p] += t[src];
                            }
                        }
                }
                return;
            }
        }
    }

    static void add_into(Chan& ch, int c, const Mat& m) {
        double* dst = ch.at(c);
        for (size_t i = 0; i < m.size(); ++i) dst[i] += m.a[i];
    }
};

// ---- functional wrappers ----

// Builds a graph from a single 1×D input row and returns the output node.
using GraphFn = std::function<int(Tape&, int)>;

// Gradient of a scalar-valued function at x.
inline Vec grad(const GraphFn& f, const Vec& x) {
    Tape tp;
    int in = tp.input(Mat::row(x));
    int out = f(tp, in);
    require(tp.val(out).size() == 1, "grad: function output is not scalar");
    std::vector<Mat> adj;
    Mat seed(1, 1);
    seed.a[0] = 1.0;
    tp.backward(out, seed, adj);
    if (adj[in].size() == 0) return Vec(x.size(), 0.0);
    return adj[in].as_vec();
}

// Jacobian-vector product (dF/dx)|x · v for a vector-valued function.
inline Vec jvp(const GraphFn& F, const Vec& x, const Vec& v) {
    require(v.size() == x.size(), "jvp: dimension mismatch");
    Tape tp(1);
    Mat tan(1, static_cast<int>(x.size()), v);
    int in = tp.input(Mat::row(x), tan);
    int out = F(tp, in);
    return tp.tangent(out, 0).as_vec();
}

// Hessian-vector product (∇²f)|x · v via forward-over-reverse.
inline Vec hvp(const GraphFn& f, const Vec& x, const Vec& v) {
    require(v.size() == x.size(), "hvp: dimension mismatch");
    Tape tp(1);
    Mat tan(1, static_cast<int>(x.size()), v);
    int in = tp.input(Mat::row(x), tan);
    int out = f(tp, in);
    require(tp.val(out).size() == 1, "hvp: function output is not scalar");
    Mat seed_val(1, 1);
    seed_val.a[0] = 1.0;
    Tape::DualAdjoints dadj;
    tp.backward_dual(out, seed_val, nullptr, dadj);
    Vec h(x.size(), 0.0);
    if (!dadj.tan[in].empty())
        for (size_t i = 0; i < h.size(); ++i) h[i] = dadj.tan[in].at(0)[i];
    return h;
}

}  // namespace sbgc::ad
