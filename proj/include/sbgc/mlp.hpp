#pragma once

#include <optional>
#include <string>

#include "sbgc/autodiff.hpp"
#include "sbgc/io.hpp"
#include "sbgc/rng.hpp"
#include "sbgc/score_model.hpp"

namespace sbgc {

// Conditional MLP score network. The input is [x ‖ timeembed(t)]; a one-hot
// class label is linearly projected and added to the first hidden
// pre-activation, entering the network the same way the time embedding does.
// The output head is linear and the returned score is the raw output scaled
// by 1/sigma(t), which keeps the network output O(1) across noise levels.
struct MlpScoreNet {
    int dim = 2;
    int num_classes = 0;  // 0 = unconditional
    std::vector<int> hidden = {256, 256, 256};
    int time_embed_dim = 64;  // even: sin/cos pairs at geometric frequencies
    double freq_min = 1.0;
    double freq_max = 1000.0;

    // Declaration order fixes the checkpoint payload layout.
    std::vector<Mat> params;
    std::vector<std::string> param_names;

    static MlpScoreNet make(int dim, int num_classes, std::vector<int> hidden, uint64_t seed,
                            int time_embed_dim = 64) {
        require(dim >= 1 && !hidden.empty(), "MlpScoreNet: bad architecture");
        require(time_embed_dim >= 2 && time_embed_dim % 2 == 0,
                "MlpScoreNet: time embedding must have even size >= 2");
        MlpScoreNet net;
        net.dim = dim;
        net.num_classes = num_classes;
        net.hidden = std::move(hidden);
        net.time_embed_dim = time_embed_dim;

        Rng rng(derive_seed(seed, {0x696e6974ULL}));
        auto xavier = [&](int rows, int cols) {
            Mat w(rows, cols);
            const double s = 1.0 / std::sqrt(static_cast<double>(rows));
            for (double& v : w.a) v = s * rng.normal();
            return w;
        };

        const int in_dim = dim + time_embed_dim;
        net.push("w_in", xavier(in_dim, net.hidden[0]));
        net.push("b_1", Mat(1, net.hidden[0]));
        if (num_classes > 0) net.push("w_label", xavier(num_classes, net.hidden[0]));
        for (size_t l = 1; l < net.hidden.size(); ++l) {
            net.push("w_" + std::to_string(l + 1), xavier(net.hidden[l - 1], net.hidden[l]));
            net.push("b_" + std::to_string(l + 1), Mat(1, net.hidden[l]));
        }
        // zero-initialized output head: the initial score field is identically 0
        net.push("w_out", Mat(net.hidden.back(), dim));
        net.push("b_out", Mat(1, dim));
        return net;
    }

    void push(std::string name, Mat m) {
        param_names.push_back(std::move(name));
        params.push_back(std::move(m));
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params) n += p.size();
        return n;
    }

    Mat time_embedding(const Vec& ts) const {
        const int half = time_embed_dim / 2;
        Mat e(static_cast<int>(ts.size()), time_embed_dim);
        for (int i = 0; i < e.rows; ++i) {
            for (int k = 0; k < half; ++k) {
                const double f =
                    half == 1 ? freq_min
                              : freq_min * std::pow(freq_max / freq_min,
                                                    static_cast<double>(k) / (half - 1));
                e(i, k) = std::sin(f * ts[i]);
                e(i, half + k) = std::cos(f * ts[i]);
            }
        }
        return e;
    }
};

// Node bindings of one recorded forward pass.
struct MlpGraph {
    int out = -1;                // score output [N×dim]
    int x = -1;                  // data input node
    std::vector<int> param_ids;  // same order as net.params
};

// Records the forward pass on `tp`. `x_node` must already be on the tape
// ([N×dim]); ts and (optional) labels are per-row. Throws if a label is out
// of range or any t is outside (0, T].
inline MlpGraph build_score_graph(ad::Tape& tp, const MlpScoreNet& net, const SdeSpec& spec,
                                  int x_node, const Vec& ts,
                                  const std::vector<int>* labels) {
    const int n = tp.val(x_node).rows;
    require(tp.val(x_node).cols == net.dim, "build_score_graph: input dim mismatch");
    require(static_cast<int>(ts.size()) == n, "build_score_graph: t count mismatch");
    for (double t : ts) require(t > 0.0 && t <= spec.t_max, "build_score_graph: t outside (0, T]");
    if (labels) {
        require(static_cast<int>(labels->size()) == n, "build_score_graph: label count mismatch");
        for (int y : *labels)
            require(y >= 0 && y < net.num_classes, "build_score_graph: class id out of range");
    }

    MlpGraph g;
    g.x = x_node;
    g.param_ids.reserve(net.params.size());
    for (const auto& p : net.params) g.param_ids.push_back(tp.input(p));

    auto pid = [&](const std::string& name) {
        for (size_t i = 0; i < net.param_names.size(); ++i)
            if (net.param_names[i] == name) return g.param_ids[i];
        throw std::logic_error("build_score_graph: missing parameter " + name);
    };

    int emb = tp.input(net.time_embedding(ts));
    int h = tp.add_row_bias(tp.matmul(tp.concat_cols(x_node, emb), pid("w_in")), pid("b_1"));
    if (net.num_classes > 0 && labels) {
        Mat onehot(n, net.num_classes);
        for (int i = 0; i < n; ++i) onehot(i, (*labels)[i]) = 1.0;
        h = tp.add(h, tp.matmul(tp.input(std::move(onehot)), pid("w_label")));
    }
    h = tp.silu(h);
    for (size_t l = 1; l < net.hidden.size(); ++l) {
        const std::string idx = std::to_string(l + 1);
        h = tp.silu(tp.add_row_bias(tp.matmul(h, pid("w_" + idx)), pid("b_" + idx)));
    }
    int raw = tp.add_row_bias(tp.matmul(h, pid("w_out")), pid("b_out"));

    Mat inv_sigma(n, net.dim);
    for (int i = 0; i < n; ++i) {
        const double s = perturb_scale(spec, ts[i]).std;
        require(s > 0.0, "build_score_graph: sigma(t) must be positive");
        for (int j = 0; j < net.dim; ++j) inv_sigma(i, j) = 1.0 / s;
    }
    g.out = tp.mul_const(raw, std::move(inv_sigma));
    return g;
}

// ScoreModel adapter around a trained (or fresh) network.
class MlpScoreModel final : public ScoreModel {
public:
    MlpScoreModel(MlpScoreNet net, SdeSpec spec) : net_(std::move(net)), spec_(spec) {
        spec_.validate();
    }

    const MlpScoreNet& net() const { return net_; }
    const SdeSpec& sde() const { return spec_; }

    int dim() const override { return net_.dim; }
    int num_classes() const override { return net_.num_classes; }

    Vec score(const Vec& x, double t, std::optional<int> y) const override {
        check_class(y);
        ad::Tape tp;
        MlpGraph g = run(tp, x, t, y);
        return tp.val(g.out).as_vec();
    }

    ScoreJvp score_jvp(const Vec& x, double t, std::optional<int> y, const Mat& dirs) const override {
        check_class(y);
        require(dirs.cols == net_.dim, "score_jvp: direction dim mismatch");
        ad::Tape tp(dirs.rows);
        MlpGraph g = run(tp, x, t, y, &dirs);
        ScoreJvp out;
        out.score = tp.val(g.out).as_vec();
        out.jvp = Mat(dirs.rows, net_.dim);
        for (int c = 0; c < dirs.rows; ++c) {
            Mat tc = tp.tangent(g.out, c);
            std::memcpy(out.jvp.row_ptr(c), tc.a.data(), sizeof(double) * net_.dim);
        }
        return out;
    }

    StageVjp score_stage_vjp(const Vec& x, double t, std::optional<int> y, const Vec& adj,
                             const Mat& probes, const Vec& probe_w) const override {
        check_class(y);
        require(static_cast<int>(adj.size()) == net_.dim, "score_stage_vjp: adjoint dim mismatch");
        require(probes.cols == net_.dim && probes.rows == static_cast<int>(probe_w.size()),
                "score_stage_vjp: probe shape mismatch");
        ad::Tape tp(probes.rows);
        MlpGraph g = run(tp, x, t, y, &probes);

        StageVjp out;
        std::vector<Mat> vadj;
        tp.backward(g.out, Mat::row(adj), vadj);
        out.vjp = vadj[g.x].size() ? vadj[g.x].as_vec() : Vec(net_.dim, 0.0);

        // Forward-over-reverse: channel c is seeded with probe e_c both as a
        // forward tangent and as the output adjoint; the tangent adjoint of x
        // then carries ∇_x (e_c^T (∂s/∂x) e_c).
        ad::Tape::DualAdjoints dadj;
        tp.backward_dual(g.out, probes, nullptr, dadj);
        out.div_grad = Vec(net_.dim, 0.0);
        for (int c = 0; c < probes.rows; ++c) {
            const double* tanc = dadj.tan[g.x].at(c);
            for (int i = 0; i < net_.dim; ++i) out.div_grad[i] += probe_w[c] * tanc[i];
        }
        return out;
    }

private:
    MlpScoreNet net_;
    SdeSpec spec_;

    MlpGraph run(ad::Tape& tp, const Vec& x, double t, std::optional<int> y,
                 const Mat* tangents = nullptr) const {
        require(static_cast<int>(x.size()) == net_.dim, "MlpScoreModel: dim mismatch");
        int xn = tangents ? tp.input(Mat::row(x), *tangents) : tp.input(Mat::row(x));
        std::vector<int> labels;
        const std::vector<int>* lp = nullptr;
        if (y) {
            labels = {*y};
            lp = &labels;
        }
        return build_score_graph(tp, net_, spec_, xn, {t}, lp);
    }
};

// ---- checkpoint I/O ----

inline void save_checkpoint(const std::string& path, const MlpScoreNet& net, const SdeSpec& spec) {
    json shapes = json::array();
    for (size_t i = 0; i < net.params.size(); ++i)
        shapes.push_back({{"name", net.param_names[i]},
                          {"rows", net.params[i].rows},
                          {"cols", net.params[i].cols}});
    json meta{{"kind", "checkpoint"},
              {"arch",
               {{"dim", net.dim},
                {"num_classes", net.num_classes},
                {"hidden", net.hidden},
                {"time_embed_dim", net.time_embed_dim},
                {"freq_min", net.freq_min},
                {"freq_max", net.freq_max}}},
              {"sde", sde_to_json(spec)},
              {"params", shapes}};
    std::vector<double> flat;
    flat.reserve(net.param_count());
    for (const auto& p : net.params) flat.insert(flat.end(), p.a.begin(), p.a.end());
    write_container(path, meta, flat.data(), flat.size() * sizeof(double));
}

inline std::pair<MlpScoreNet, SdeSpec> load_checkpoint(const std::string& path) {
    Container c = read_container(path);
    require(c.meta.value("kind", "") == "checkpoint", "load_checkpoint: not a checkpoint file");
    const json& arch = c.meta.at("arch");
    MlpScoreNet net;
    net.dim = arch.at("dim").get<int>();
    net.num_classes = arch.at("num_classes").get<int>();
    net.hidden = arch.at("hidden").get<std::vector<int>>();
    net.time_embed_dim = arch.at("time_embed_dim").get<int>();
    net.freq_min = arch.at("freq_min").get<double>();
    net.freq_max = arch.at("freq_max").get<double>();
    const double* p = reinterpret_cast<const double*>(c.payload.data());
    size_t avail = c.payload.size() / sizeof(double);
    for (const auto& s : c.meta.at("params")) {
        int rows = s.at("rows").get<int>(), cols = s.at("cols").get<int>();
        size_t n = static_cast<size_t>(rows) * cols;
        require(avail >= n, "load_checkpoint: payload too short");
        Mat m(rows, cols, std::vector<double>(p, p + n));
        net.push(s.at("name").get<std::string>(), std::move(m));
        p += n;
        avail -= n;
    }
    require(avail == 0, "load_checkpoint: trailing payload bytes");
    return {std::move(net), sde_from_json(c.meta.at("sde"))};
}

}  // namespace sbgc
