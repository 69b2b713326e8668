#include <catch_amalgamated.hpp>

#include "sbgc/sde.hpp"

using namespace sbgc;

namespace {

SdeSpec vp_spec() {
    SdeSpec s;
    s.kind = SdeKind::VP;
    return s;
}

SdeSpec subvp_spec() {
    SdeSpec s;
    s.kind = SdeKind::SubVP;
    return s;
}

}  // namespace

TEST_CASE("beta is linear between its endpoints") {
    SdeSpec s = vp_spec();
    CHECK(beta(s, 0.0) == Catch::Approx(0.1));
    CHECK(beta(s, 1.0) == Catch::Approx(20.0));
    CHECK(beta(s, 0.5) == Catch::Approx(10.05));
    CHECK_THROWS_AS(beta(s, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(beta(s, 1.1), std::invalid_argument);
}

TEST_CASE("VP drift is -beta x / 2") {
    SdeSpec s = vp_spec();
    // beta(t)=10 at t = (10-0.1)/19.9
    double t = (10.0 - 0.1) / 19.9;
    Vec d = drift(s, {1.0, 1.0}, t);
    CHECK(d[0] == Catch::Approx(-5.0).epsilon(1e-12));
    CHECK(d[1] == Catch::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("sub-VP diffusion vanishes as t -> 0 and matches closed form at T") {
    SdeSpec s = subvp_spec();
    CHECK(diffusion_sq(s, 1e-8) < 1e-6);
    // ∫0^1 beta = 10.05, g^2(T) = 20 (1 - e^{-20.1})
    CHECK(beta_integral(s, 1.0) == Catch::Approx(10.05).epsilon(1e-14));
    CHECK(diffusion_sq(s, 1.0) == Catch::Approx(20.0 * (1.0 - std::exp(-20.1))).epsilon(1e-13));
}

TEST_CASE("perturbation scales approach the identity at t -> 0") {
    for (SdeSpec s : {vp_spec(), subvp_spec()}) {
        PerturbScale ps = perturb_scale(s, 1e-9);
        CHECK(ps.mean_coeff == Catch::Approx(1.0).margin(1e-8));
        CHECK(ps.std == Catch::Approx(0.0).margin(1e-4));
    }
}

TEST_CASE("VP perturbation scale at t=0.5 matches the closed-form integral") {
    SdeSpec s = vp_spec();
    PerturbScale ps = perturb_scale(s, 0.5);
    // ∫0^0.5 beta = 0.05 + 2.4875 = 2.5375, m = e^{-1.26875}
    CHECK(beta_integral(s, 0.5) == Catch::Approx(2.5375).epsilon(1e-14));
    CHECK(ps.mean_coeff == Catch::Approx(0.28117).epsilon(1e-4));
    CHECK(ps.std == Catch::Approx(0.95966).epsilon(1e-4));

    // independent quadrature oracle for the integral, 1e6 midpoint panels
    const int n = 1000000;
    double acc = 0.0, h = 0.5 / n;
    for (int i = 0; i < n; ++i) acc += beta(s, (i + 0.5) * h) * h;
    CHECK(ps.mean_coeff == Catch::Approx(std::exp(-0.5 * acc)).epsilon(1e-9));
}

TEST_CASE("VP mean coefficient at T is about 6.6e-3") {
    SdeSpec s = vp_spec();
    CHECK(perturb_scale(s, 1.0).mean_coeff == Catch::Approx(std::exp(-5.025)).epsilon(1e-12));
    CHECK(perturb_scale(s, 1.0).mean_coeff == Catch::Approx(6.56e-3).epsilon(2e-3));
}

TEST_CASE("variance preservation: m^2 + sigma^2 = 1 for VP") {
    SdeSpec s = vp_spec();
    for (double t : {1e-5, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
        PerturbScale ps = perturb_scale(s, t);
        CHECK(std::fabs(ps.mean_coeff * ps.mean_coeff + ps.std * ps.std - 1.0) < 1e-12);
    }
}

TEST_CASE("perturbation scales are monotone") {
    for (SdeSpec s : {vp_spec(), subvp_spec()}) {
        double prev_m = 1.0, prev_sd = 0.0;
        for (double t = 0.05; t <= 1.0; t += 0.05) {
            PerturbScale ps = perturb_scale(s, t);
            CHECK(ps.mean_coeff < prev_m);
            CHECK(ps.std >= prev_sd);
            prev_m = ps.mean_coeff;
            prev_sd = ps.std;
        }
    }
}

TEST_CASE("kernel moments match the Euler-Maruyama moment recursion") {
    // For the linear SDE the mean/variance of the Euler-Maruyama chain obey
    //   E_{k+1} = (1 - 0.5 beta h) E_k,  V_{k+1} = (1 - 0.5 beta h)^2 V_k + g^2 h,
    // which converges to m(t) x0 and sigma(t)^2 as h -> 0.
    const int steps = 100000;
    for (SdeSpec s : {vp_spec(), subvp_spec()}) {
        const double x0 = 1.0, t1 = 1.0, h = t1 / steps;
        double mean = x0, var = 0.0;
        for (int k = 0; k < steps; ++k) {
            double t = k * h;
            double a = 1.0 - 0.5 * beta(s, t) * h;
            var = a * a * var + diffusion_sq(s, t) * h;
            mean *= a;
        }
        PerturbScale ps = perturb_scale(s, t1);
        CHECK(std::fabs(mean - ps.mean_coeff * x0) < 2e-3);
        CHECK(std::fabs(var - ps.std * ps.std) < 2e-3);
    }
}

TEST_CASE("sub-VP diffusion is dominated by VP diffusion") {
    SdeSpec vp = vp_spec(), sub = subvp_spec();
    for (double t = 0.01; t <= 1.0; t += 0.01)
        CHECK(diffusion_sq(sub, t) <= diffusion_sq(vp, t));
}

TEST_CASE("prior log-density is the standard normal") {
    SdeSpec s = vp_spec();
    CHECK(prior_logpdf(s, {0.0, 0.0}) == Catch::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
    CHECK(prior_logpdf(s, {1.0}) == Catch::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5).epsilon(1e-12));
    CHECK(prior_logpdf(s, Vec(8, 0.0)) == Catch::Approx(-4.0 * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("spec validation rejects bad parameters") {
    SdeSpec s = vp_spec();
    s.t_eps = 2.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = vp_spec();
    s.beta_min = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
