#pragma once

#include <functional>

#include "sbgc/common.hpp"

// Adaptive Dormand-Prince 5(4) with PI step-size control. The state is a
// plain vector, which lets callers integrate augmented systems (sample
// coordinates concatenated with a running divergence accumulator).

namespace sbgc {

struct SolverCfg {
    double rtol = 1e-5;
    double atol = 1e-5;
    int max_steps = 100000;
    int fixed_steps = 64;  // used by the differentiable fixed-grid path
    double safety = 0.9;

    void validate() const {
        require(rtol > 0.0 && atol > 0.0, "SolverCfg: tolerances must be positive");
        require(fixed_steps >= 8, "SolverCfg: fixed_steps must be >= 8");
        require(max_steps > 0 && safety > 0.0, "SolverCfg: bad limits");
    }
};

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using OdeRhs = std::function<void(double t, const Vec& state, Vec& out)>;

struct RkResult {
    Vec state;
    long nfe = 0;
    long steps_accepted = 0;
    long steps_rejected = 0;
};

inline RkResult rk45_integrate(const OdeRhs& rhs, const Vec& x0, double t0, double t1,
                               const SolverCfg& cfg) {
    cfg.validate();
    require(t0 != t1, "rk45_integrate: empty interval");
    const size_t n = x0.size();

    // Dormand-Prince coefficients
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    RkResult res;
    res.state = x0;
    Vec& y = res.state;
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);

    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::fabs(t1 - t0);
    double t = t0;

    rhs(t, y, k1);
    res.nfe++;
    require(all_finite(k1), "rk45_integrate: non-finite derivative at t0");

    // initial step from the scaled derivative norm
    double h;
    {
        double dny = 0.0, dnf = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double sk = cfg.atol + cfg.rtol * std::fabs(y[i]);
            dny += (y[i] / sk) * (y[i] / sk);
            dnf += (k1[i] / sk) * (k1[i] / sk);
        }
        h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 * span : 0.01 * std::sqrt(dny / dnf);
        h = std::min(h, span);
    }

    const double pi_alpha = 0.7 / 5.0, pi_beta = 0.4 / 5.0;  // PI controller exponents
    double err_prev = 1.0;
    bool rejected = false;

    for (int step = 0; step < cfg.max_steps; ++step) {
        bool last = false;
        if (std::fabs(h) >= std::fabs(t1 - t)) {
            h = std::fabs(t1 - t);
            last = true;
        }
        const double hd = dir * h;

        for (size_t i = 0; i < n; ++i) ytmp[i] = y[i] + hd * a21 * k1[i];
        rhs(t + c2 * hd, ytmp, k2);
        for (size_t i = 0; i < n; ++i) ytmp[i] = y[i] + hd * (a31 * k1[i] + a32 * k2[i]);
        rhs(t + c3 * hd, ytmp, k3);
        for (size_t i = 0; i < n; ++i)
            ytmp[i] = y[i] + hd * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(t + c4 * hd, ytmp, k4);
        for (size_t i = 0; i < n; ++i)
            ytmp[i] = y[i] + hd * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(t + c5 * hd, ytmp, k5);
        for (size_t i = 0; i < n; ++i)
            ytmp[i] = y[i] + hd * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        rhs(t + hd, ytmp, k6);
        for (size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + hd * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(t + hd, ynew, k7);  // FSAL
        res.nfe += 6;

        if (!all_finite(ynew)) throw SolverError("rk45_integrate: non-finite state");

        double err = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double ei = hd * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                    e6 * k6[i] + e7 * k7[i]);
            const double sk = cfg.atol + cfg.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            err += (ei / sk) * (ei / sk);
        }
        err = std::sqrt(err / static_cast<double>(n));

        if (err <= 1.0) {
            t += hd;
            y = ynew;
            k1 = k7;
            res.steps_accepted++;
            if (last || std::fabs(t - t1) < 1e-14 * span) return res;
            double fac = cfg.safety * std::pow(std::max(err, 1e-10), -pi_alpha) *
                         std::pow(err_prev, pi_beta);
            fac = std::min(10.0, std::max(0.2, fac));
            if (rejected) fac = std::min(1.0, fac);
            h *= fac;
            err_prev = std::max(err, 1e-10);
            rejected = false;
        } else {
            res.steps_rejected++;
            double fac = cfg.safety * std::pow(err, -0.2);
            h *= std::min(1.0, std::max(0.1, fac));
            rejected = true;
        }
    }
    throw SolverError("rk45_integrate: max step count exceeded");
}

}  // namespace sbgc
