#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <functional>
#include <optional>

#include "sbgc/score_model.hpp"

namespace sbgc::testutil {

// Score field s(x) = S x + c. Under a given SdeSpec and a fixed time t0, the
// flow right-hand side has Jacobian A = -beta(t0)/2 I - g(t0)^2/2 S, so S can
// be chosen to realize any prescribed A. Used to validate trace estimators on
// fields with a known exact trace.
class LinearScoreField final : public ScoreModel {
public:
    LinearScoreField(Mat s, Vec c) : s_(std::move(s)), c_(std::move(c)) {
        require(s_.rows == s_.cols && s_.rows == static_cast<int>(c_.size()),
                "LinearScoreField: square matrix required");
    }

    // Builds the field whose flow rhs at time t0 has Jacobian `target`.
    static LinearScoreField with_rhs_jacobian(const Mat& target, const SdeSpec& spec, double t0) {
        const double b = beta(spec, t0);
        const double half_g2 = 0.5 * diffusion_sq(spec, t0);
        require(half_g2 > 0.0, "with_rhs_jacobian: g(t0)^2 must be positive");
        Mat s(target.rows, target.cols);
        for (int i = 0; i < target.rows; ++i)
            for (int j = 0; j < target.cols; ++j) {
                double a = target(i, j) + (i == j ? 0.5 * b : 0.0);
                s(i, j) = -a / half_g2;
            }
        return LinearScoreField(std::move(s), Vec(target.rows, 0.0));
    }

    int dim() const override { return s_.rows; }
    int num_classes() const override { return 0; }

    Vec score(const Vec& x, double t, std::optional<int> y) const override {
        (void)t;
        (void)y;
        Vec out = c_;
        for (int i = 0; i < s_.rows; ++i)
            for (int j = 0; j < s_.cols; ++j) out[i] += s_(i, j) * x[j];
        return out;
    }

    ScoreJvp score_jvp(const Vec& x, double t, std::optional<int> y, const Mat& dirs) const override {
        ScoreJvp out;
        out.score = score(x, t, y);
        out.jvp = Mat(dirs.rows, dirs.cols);
        for (int r = 0; r < dirs.rows; ++r)
            for (int i = 0; i < s_.rows; ++i) {
                double acc = 0.0;
                for (int j = 0; j < s_.cols; ++j) acc += s_(i, j) * dirs(r, j);
                out.jvp(r, i) = acc;
            }
        return out;
    }

    StageVjp score_stage_vjp(const Vec& x, double t, std::optional<int> y, const Vec& adj,
                             const Mat& probes, const Vec& probe_w) const override {
        (void)x;
        (void)t;
        (void)y;
        (void)probes;
        (void)probe_w;
        StageVjp out;
        out.vjp.assign(s_.rows, 0.0);
        for (int i = 0; i < s_.rows; ++i)
            for (int j = 0; j < s_.cols; ++j) out.vjp[j] += s_(i, j) * adj[i];
        out.div_grad = Vec(s_.rows, 0.0);
        return out;
    }

private:
    Mat s_;
    Vec c_;
};

}  // namespace sbgc::testutil
