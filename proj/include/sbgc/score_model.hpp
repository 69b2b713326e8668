#pragma once

#include <memory>
#include <optional>

#include "sbgc/common.hpp"
#include "sbgc/rng.hpp"
#include "sbgc/sde.hpp"

namespace sbgc {

enum class TraceMode { Exact, Hutchinson };
enum class ProbeLaw { Rademacher, Gaussian };

// Divergence estimator configuration. Probe i is generated from the stream
// (seed, i), so the first n probes of any two configurations with the same
// seed coincide; one probe set is drawn per likelihood solve and reused at
// every time step of that solve.
struct TraceCfg {
    TraceMode mode = TraceMode::Exact;
    int probes = 30;
    ProbeLaw law = ProbeLaw::Rademacher;
    uint64_t seed = 0;

    void validate() const {
        require(mode == TraceMode::Exact || probes >= 1, "TraceCfg: Hutchinson needs probes >= 1");
    }
};

inline Vec probe_vector(const TraceCfg& cfg, int index, int dim) {
    Rng rng(derive_seed(cfg.seed, {0x70726f6265ULL, static_cast<uint64_t>(index)}));
    Vec e(dim);
    for (auto& v : e) v = cfg.law == ProbeLaw::Rademacher ? rng.rademacher() : rng.normal();
    return e;
}

// One row per probe. Exact mode returns the identity basis and ignores the seed.
inline Mat probe_matrix(const TraceCfg& cfg, int dim) {
    cfg.validate();
    if (cfg.mode == TraceMode::Exact) {
        Mat e(dim, dim);
        for (int i = 0; i < dim; ++i) e(i, i) = 1.0;
        return e;
    }
    Mat e(cfg.probes, dim);
    for (int i = 0; i < cfg.probes; ++i) {
        Vec p = probe_vector(cfg, i, dim);
        std::memcpy(e.row_ptr(i), p.data(), sizeof(double) * dim);
    }
    return e;
}

struct ScoreJvp {
    Vec score;
    Mat jvp;  // one row per direction: (∂s/∂x) d_i
};

// Adjoint quantities needed by the differentiable fixed-grid likelihood:
// vjp = (∂s/∂x)^T a, and div_grad = ∇_x Σ_i w_i e_i^T (∂s/∂x) e_i for probe
// rows e_i with weights w_i. The latter engages second derivatives of the
// score field.
struct StageVjp {
    Vec vjp;
    Vec div_grad;
};

// Callable score field s(x, t, y). Implementations must be deterministic for
// fixed (x, t, y) and immutable after construction, so evaluations are safe
// to run concurrently.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;

    virtual int dim() const = 0;
    virtual int num_classes() const = 0;  // 0 for unconditional-only models

    virtual Vec score(const Vec& x, double t, std::optional<int> y) const = 0;

    virtual ScoreJvp score_jvp(const Vec& x, double t, std::optional<int> y,
                               const Mat& dirs) const = 0;

    virtual StageVjp score_stage_vjp(const Vec& x, double t, std::optional<int> y, const Vec& adj,
                                     const Mat& probes, const Vec& probe_w) const = 0;

protected:
    void check_class(std::optional<int> y) const {
        if (y) require(*y >= 0 && *y < std::max(1, num_classes()), "score: class id out of range");
    }
};

// ---------------------------------------------------------------------------
// Analytic reference models. Under the forward diffusion the density of
// N(mu, s2 I) at time t is N(m(t) mu, (m(t)^2 s2 + sigma(t)^2) I), so the
// score and all of its derivatives are closed-form. These serve as oracles
// for the ODE likelihood machinery.
// ---------------------------------------------------------------------------

class AnalyticGaussianScore final : public ScoreModel {
public:
    AnalyticGaussianScore(Vec mu, double s2, SdeSpec spec)
        : mu_(std::move(mu)), s2_(s2), spec_(spec) {
        require(s2 > 0.0, "AnalyticGaussianScore: variance must be positive");
        spec_.validate();
    }

    int dim() const override { return static_cast<int>(mu_.size()); }
    int num_classes() const override { return 0; }

    Vec score(const Vec& x, double t, std::optional<int> y) const override {
        (void)y;
        auto [m, den] = moments(t);
        Vec s(x.size());
        for (size_t i = 0; i < x.size(); ++i) s[i] = -(x[i] - m * mu_[i]) / den;
        return s;
    }

    ScoreJvp score_jvp(const Vec& x, double t, std::optional<int> y, const Mat& dirs) const override {
        ScoreJvp out;
        out.score = score(x, t, y);
        auto [m, den] = moments(t);
        (void)m;
        out.jvp = dirs;
        for (double& v : out.jvp.a) v = -v / den;  // Jacobian is -I/den
        return out;
    }

    StageVjp score_stage_vjp(const Vec& x, double t, std::optional<int> y, const Vec& adj,
                             const Mat& probes, const Vec& probe_w) const override {
        (void)x;
        (void)y;
        (void)probes;
        (void)probe_w;
        auto [m, den] = moments(t);
        (void)m;
        StageVjp out;
        out.vjp = adj;
        for (double& v : out.vjp) v = -v / den;
        out.div_grad = Vec(mu_.size(), 0.0);  // trace of a constant Jacobian
        return out;
    }

    // Log-density of the diffused distribution (the quantity the ODE
    // likelihood must reproduce).
    double logpdf(const Vec& x, double t) const {
        auto [m, den] = moments(t);
        constexpr double kLog2Pi = 1.8378770664093454835606594728112;
        double q = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            double d = x[i] - m * mu_[i];
            q += d * d;
        }
        return -0.5 * (static_cast<double>(x.size()) * (kLog2Pi + std::log(den)) + q / den);
    }

private:
    Vec mu_;
    double s2_;
    SdeSpec spec_;

    std::pair<double, double> moments(double t) const {
        PerturbScale ps = perturb_scale(spec_, t);
        double den = ps.mean_coeff * ps.mean_coeff * s2_ + ps.std * ps.std;
        return {ps.mean_coeff, den};
    }
};

// Per-class isotropic Gaussian mixture: weights w_j, means mu_j, shared
// per-component variance s2_j.
struct GmmClass {
    Vec weights;
    std::vector<Vec> means;
    Vec vars;  // per-component s2

    void validate(int dim) const {
        require(!weights.empty() && weights.size() == means.size() && weights.size() == vars.size(),
                "GmmClass: component count mismatch");
        double wsum = 0.0;
        for (double w : weights) {
            require(w > 0.0, "GmmClass: weights must be positive");
            wsum += w;
        }
        require(std::fabs(wsum - 1.0) < 1e-9, "GmmClass: weights must sum to 1");
        for (const auto& m : means) require(static_cast<int>(m.size()) == dim, "GmmClass: mean dim");
        for (double v : vars) require(v > 0.0, "GmmClass: variances must be positive");
    }
};

class AnalyticGmmScore final : public ScoreModel {
public:
    AnalyticGmmScore(std::vector<GmmClass> classes, int dim, SdeSpec spec)
        : classes_(std::move(classes)), dim_(dim), spec_(spec) {
        require(!classes_.empty(), "AnalyticGmmScore: no classes");
        for (const auto& c : classes_) c.validate(dim_);
        spec_.validate();
    }

    int dim() const override { return dim_; }
    int num_classes() const override { return static_cast<int>(classes_.size()); }

    Vec score(const Vec& x, double t, std::optional<int> y) const override {
        Parts p = parts(x, t, resolve(y));
        return p.score;
    }

    ScoreJvp score_jvp(const Vec& x, double t, std::optional<int> y, const Mat& dirs) const override {
        Parts p = parts(x, t, resolve(y));
        ScoreJvp out;
        out.score = p.score;
        out.jvp = Mat(dirs.rows, dirs.cols);
        for (int r = 0; r < dirs.rows; ++r) {
            Vec v(dirs.row_ptr(r), dirs.row_ptr(r) + dirs.cols);
            Vec hv = hessian_vec(p, v);
            std::memcpy(out.jvp.row_ptr(r), hv.data(), sizeof(double) * dim_);
        }
        return out;
    }

    StageVjp score_stage_vjp(const Vec& x, double t, std::optional<int> y, const Vec& adj,
                             const Mat& probes, const Vec& probe_w) const override {
        Parts p = parts(x, t, resolve(y));
        StageVjp out;
        out.vjp = hessian_vec(p, adj);  // score Jacobian is the symmetric Hessian of log p_t
        out.div_grad = Vec(dim_, 0.0);
        for (int r = 0; r < probes.rows; ++r) {
            Vec e(probes.row_ptr(r), probes.row_ptr(r) + probes.cols);
            Vec g = quad_form_grad(p, e);
            axpy(probe_w[r], g, out.div_grad);
        }
        return out;
    }

    // Closed-form log p_t(x | y) of the diffused class mixture.
    double logpdf(const Vec& x, double t, int y) const {
        Parts p = parts(x, t, y);
        return p.logp;
    }

    const std::vector<GmmClass>& classes() const { return classes_; }
    const SdeSpec& sde() const { return spec_; }

private:
    std::vector<GmmClass> classes_;
    int dim_;
    SdeSpec spec_;

    int resolve(std::optional<int> y) const {
        if (!y) {
            require(classes_.size() == 1, "AnalyticGmmScore: class label required");
            return 0;
        }
        require(*y >= 0 && *y < num_classes(), "AnalyticGmmScore: class id out of range");
        return *y;
    }

    // Diffused-mixture quantities reused by every derivative order:
    //   r_j  posterior responsibilities,  g_j = -(x - m mu_j)/v_j,
    //   score = sum r_j g_j,  logp the mixture log-density.
    struct Parts {
        Vec r;
        std::vector<Vec> g;
        Vec vhat;
        Vec score;
        double logp = 0.0;
    };

    Parts parts(const Vec& x, double t, int y) const {
        require(static_cast<int>(x.size()) == dim_, "AnalyticGmmScore: dim mismatch");
        const GmmClass& c = classes_[y];
        PerturbScale ps = perturb_scale(spec_, t);
        const double m = ps.mean_coeff, s2t = ps.std * ps.std;
        const size_t J = c.weights.size();
        constexpr double kLog2Pi = 1.8378770664093454835606594728112;

        Parts p;
        p.vhat.resize(J);
        p.g.resize(J);
        Vec logk(J);
        for (size_t j = 0; j < J; ++j) {
            p.vhat[j] = m * m * c.vars[j] + s2t;
            double q = 0.0;
            p.g[j].resize(dim_);
            for (int i = 0; i < dim_; ++i) {
                double d = x[i] - m * c.means[j][i];
                p.g[j][i] = -d / p.vhat[j];
                q += d * d;
            }
            logk[j] = std::log(c.weights[j]) -
                      0.5 * (dim_ * (kLog2Pi + std::log(p.vhat[j])) + q / p.vhat[j]);
        }
        p.logp = log_sum_exp(logk);
        p.r.resize(J);
        p.score.assign(dim_, 0.0);
        for (size_t j = 0; j < J; ++j) {
            p.r[j] = std::exp(logk[j] - p.logp);
            axpy(p.r[j], p.g[j], p.score);
        }
        return p;
    }

    // H v with H = sum_j r_j (-I/v_j + g_j g_j^T) - s s^T.
    Vec hessian_vec(const Parts& p, const Vec& v) const {
        Vec out(dim_, 0.0);
        for (size_t j = 0; j < p.r.size(); ++j) {
            const double gv = dot(p.g[j], v);
            for (int i = 0; i < dim_; ++i)
                out[i] += p.r[j] * (-v[i] / p.vhat[j] + p.g[j][i] * gv);
        }
        const double sv = dot(p.score, v);
        for (int i = 0; i < dim_; ++i) out[i] -= p.score[i] * sv;
        return out;
    }

    // ∇_x (e^T H(x) e), using ∇ r_j = r_j (g_j - s) and ∇ (s^T e) = H e.
    Vec quad_form_grad(const Parts& p, const Vec& e) const {
        const double ee = dot(e, e);
        Vec out(dim_, 0.0);
        for (size_t j = 0; j < p.r.size(); ++j) {
            const double ge = dot(p.g[j], e);
            const double qj = -ee / p.vhat[j] + ge * ge;
            for (int i = 0; i < dim_; ++i) {
                out[i] += p.r[j] * (p.g[j][i] - p.score[i]) * qj;
                out[i] += p.r[j] * 2.0 * ge * (-e[i] / p.vhat[j]);
            }
        }
        const double se = dot(p.score, e);
        Vec he = hessian_vec(p, e);
        axpy(-2.0 * se, he, out);
        return out;
    }
};

// Single class holding one Gaussian: convenience used by oracle setups.
inline AnalyticGmmScore gaussian_as_gmm(const Vec& mu, double s2, const SdeSpec& spec) {
    GmmClass c;
    c.weights = {1.0};
    c.means = {mu};
    c.vars = {s2};
    return AnalyticGmmScore({c}, static_cast<int>(mu.size()), spec);
}

}  // namespace sbgc
