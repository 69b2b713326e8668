#pragma once

#include <optional>

#include "sbgc/rk45.hpp"
#include "sbgc/score_model.hpp"

// Exact-likelihood machinery: the deterministic flow x' = f(x,t) - g(t)^2 s/2
// shares marginals with the diffusion, so integrating it together with the
// divergence of its right-hand side turns the terminal prior density into the
// model density at t_eps (continuous change of variables).

namespace sbgc {

struct LikelihoodOut {
    double logp = 0.0;
    double prior_term = 0.0;
    double div_integral = 0.0;
    Vec x_terminal;
    long nfe = 0;

    // echoed estimator settings, for per-sample records
    TraceMode mode = TraceMode::Exact;
    int n_probes = 0;
};

inline Vec ode_rhs(const ScoreModel& model, const SdeSpec& spec, const Vec& x, double t,
                   std::optional<int> y) {
    Vec s = model.score(x, t, y);
    require(all_finite(s), "ode_rhs: non-finite score output");
    const double half_g2 = 0.5 * diffusion_sq(spec, t);
    Vec out = drift(spec, x, t);
    for (size_t i = 0; i < x.size(); ++i) out[i] -= half_g2 * s[i];
    return out;
}

namespace detail {

inline Vec probe_weights(const TraceCfg& tcfg, int rows) {
    if (tcfg.mode == TraceMode::Exact) return Vec(rows, 1.0);
    return Vec(rows, 1.0 / static_cast<double>(rows));
}

// Trace estimate of d(rhs)/dx from score probes. The drift contributes
// -beta/2 per coordinate analytically; the score part comes from the model's
// directional derivatives.
inline double div_estimate(const ScoreModel& model, const SdeSpec& spec, const Vec& x, double t,
                           std::optional<int> y, const Mat& probes, const Vec& w, Mat* jvp_out) {
    const double b = beta(spec, t);
    const double half_g2 = 0.5 * diffusion_sq(spec, t);
    ScoreJvp sj = model.score_jvp(x, t, y, probes);
    double acc = 0.0;
    for (int r = 0; r < probes.rows; ++r) {
        double ee = 0.0, eje = 0.0;
        const double* e = probes.row_ptr(r);
        const double* j = sj.jvp.row_ptr(r);
        for (int i = 0; i < probes.cols; ++i) {
            ee += e[i] * e[i];
            eje += e[i] * j[i];
        }
        acc += w[r] * (-0.5 * b * ee - half_g2 * eje);
    }
    require(std::isfinite(acc), "divergence: non-finite probe result");
    if (jvp_out) *jvp_out = std::move(sj.jvp);
    return acc;
}

}  // namespace detail

// Divergence of the flow field at one point, per the estimator config.
inline double divergence(const ScoreModel& model, const SdeSpec& spec, const Vec& x, double t,
                         std::optional<int> y, const TraceCfg& tcfg) {
    tcfg.validate();
    Mat probes = probe_matrix(tcfg, static_cast<int>(x.size()));
    Vec w = detail::probe_weights(tcfg, probes.rows);
    return detail::div_estimate(model, spec, x, t, y, probes, w, nullptr);
}

// Integrates the augmented system (x, accumulated divergence) from t_eps to T
// and assembles log p(x0 | y) = prior(x(T)) + ∫ div dt. One probe set is
// drawn up front from tcfg.seed and reused at every step, so the result is
// deterministic given the seed.
inline LikelihoodOut log_likelihood(const ScoreModel& model, const SdeSpec& spec, const Vec& x0,
                                    const SolverCfg& cfg, const TraceCfg& tcfg,
                                    std::optional<int> y = std::nullopt) {
    spec.validate();
    cfg.validate();
    tcfg.validate();
    require(all_finite(x0), "log_likelihood: non-finite input");
    require(static_cast<int>(x0.size()) == model.dim(), "log_likelihood: dim mismatch");

    const int d = model.dim();
    Mat probes = probe_matrix(tcfg, d);
    Vec w = detail::probe_weights(tcfg, probes.rows);

    OdeRhs rhs = [&](double t, const Vec& state, Vec& out) {
        Vec x(state.begin(), state.begin() + d);
        Vec s = model.score(x, t, y);
        require(all_finite(s), "log_likelihood: non-finite score output");
        const double half_g2 = 0.5 * diffusion_sq(spec, t);
        Vec dr = drift(spec, x, t);
        out.resize(d + 1);
        for (int i = 0; i < d; ++i) out[i] = dr[i] - half_g2 * s[i];
        out[d] = detail::div_estimate(model, spec, x, t, y, probes, w, nullptr);
    };

    Vec aug(d + 1, 0.0);
    std::copy(x0.begin(), x0.end(), aug.begin());

    RkResult rk;
    try {
        rk = rk45_integrate(rhs, aug, spec.t_eps, spec.t_max, cfg);
    } catch (const SolverError& e) {
        throw SolverError(std::string(e.what()) +
                          (y ? " (class " + std::to_string(*y) + ")" : " (unconditional)"));
    }

    LikelihoodOut out;
    out.x_terminal = Vec(rk.state.begin(), rk.state.begin() + d);
    out.div_integral = rk.state[d];
    out.prior_term = prior_logpdf(spec, out.x_terminal);
    out.logp = out.prior_term + out.div_integral;
    out.nfe = rk.nfe;
    out.mode = tcfg.mode;
    out.n_probes = tcfg.mode == TraceMode::Exact ? d : tcfg.probes;
    return out;
}

// (x_int + u) / levels, mapping quantized entries to [0, 1).
inline Vec dequantize(const std::vector<int>& x_int, int levels, const Vec& u) {
    require(levels >= 2, "dequantize: need at least 2 levels");
    require(u.size() == x_int.size(), "dequantize: noise size mismatch");
    Vec out(x_int.size());
    for (size_t i = 0; i < x_int.size(); ++i) {
        require(x_int[i] >= 0 && x_int[i] < levels, "dequantize: entry out of range");
        require(u[i] >= 0.0 && u[i] < 1.0, "dequantize: noise must be in [0,1)");
        out[i] = (static_cast<double>(x_int[i]) + u[i]) / static_cast<double>(levels);
    }
    return out;
}

inline Vec dequantize(const std::vector<int>& x_int, int levels, Rng& rng) {
    Vec u(x_int.size());
    for (auto& v : u) v = rng.uniform();
    return dequantize(x_int, levels, u);
}

// Negative log-likelihood in bits per dimension for densities over [0,1)^D
// fitted to dequantized `levels`-ary data.
inline double bits_per_dim(double logp, int dim, int levels) {
    require(levels >= 2, "bits_per_dim: need at least 2 levels");
    require(dim >= 1, "bits_per_dim: need at least 1 dimension");
    constexpr double kLn2 = 0.69314718055994530941723212145818;
    return -logp / (static_cast<double>(dim) * kLn2) +
           std::log2(static_cast<double>(levels));
}

}  // namespace sbgc
