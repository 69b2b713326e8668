#pragma once

#include <limits>
#include <optional>

#include "sbgc/dataset.hpp"
#include "sbgc/prob_flow.hpp"

// The generative decision rule: evaluate log p(x | y) for every class with a
// shared probe seed (the per-class solves then form a paired comparison,
// which keeps argmax flips from estimator noise down) and predict the argmax.

namespace sbgc {

struct ClassificationResult {
    Vec class_logp;               // K conditional log-likelihoods (nats)
    std::vector<long> class_nfe;  // solver cost per class
    int predicted = -1;           // -1 while failed
    double margin = 0.0;          // top1 - top2, 0 for K = 1
    bool ok = false;
    std::string error;

    long total_nfe() const {
        long s = 0;
        for (long v : class_nfe) s += v;
        return s;
    }
};

inline ClassificationResult classify(const ScoreModel& model, const SdeSpec& spec, const Vec& x,
                                     const SolverCfg& cfg, const TraceCfg& tcfg) {
    const int k = model.num_classes();
    require(k >= 1, "classify: model is not conditional");
    ClassificationResult res;
    res.class_logp.assign(k, 0.0);
    res.class_nfe.assign(k, 0);
    for (int y = 0; y < k; ++y) {
        try {
            LikelihoodOut out = log_likelihood(model, spec, x, cfg, tcfg, y);
            res.class_logp[y] = out.logp;
            res.class_nfe[y] = out.nfe;
        } catch (const SolverError& e) {
            res.ok = false;
            res.predicted = -1;
            res.error = e.what();
            return res;  // prediction withheld on any per-class failure
        }
    }
    // argmax with ties broken by lowest class id
    int best = 0;
    for (int y = 1; y < k; ++y)
        if (res.class_logp[y] > res.class_logp[best]) best = y;
    res.predicted = best;
    if (k > 1) {
        double second = -std::numeric_limits<double>::infinity();
        for (int y = 0; y < k; ++y)
            if (y != best) second = std::max(second, res.class_logp[y]);
        res.margin = res.class_logp[best] - second;
    }
    res.ok = true;
    return res;
}

// log sum_y pi_y p(x|y) via log-sum-exp; uniform prior by default.
inline double marginal_loglik(const ScoreModel& model, const SdeSpec& spec, const Vec& x,
                              const SolverCfg& cfg, const TraceCfg& tcfg,
                              const std::optional<Vec>& prior = std::nullopt) {
    const int k = model.num_classes();
    require(k >= 1, "marginal_loglik: model is not conditional");
    Vec logpi(k, -std::log(static_cast<double>(k)));
    if (prior) {
        require(static_cast<int>(prior->size()) == k, "marginal_loglik: prior size mismatch");
        double s = 0.0;
        for (double p : *prior) {
            require(p > 0.0, "marginal_loglik: prior entries must be positive");
            s += p;
        }
        require(std::fabs(s - 1.0) < 1e-9, "marginal_loglik: prior must sum to 1");
        for (int y = 0; y < k; ++y) logpi[y] = std::log((*prior)[y]);
    }
    Vec terms(k);
    for (int y = 0; y < k; ++y)
        terms[y] = log_likelihood(model, spec, x, cfg, tcfg, y).logp + logpi[y];
    return log_sum_exp(terms);
}

struct SampleRecord {
    int sample_id = 0;
    int label = 0;
    int predicted = -1;
    double margin = 0.0;
    Vec class_logp;
    long nfe = 0;
    bool ok = false;
    std::string error;
};

struct AccuracyOut {
    double accuracy = 0.0;
    double mean_margin = 0.0;
    double mean_nfe = 0.0;
    int failures = 0;
    std::vector<SampleRecord> records;
};

// Seed for one sample's classification; shared across its class solves.
inline uint64_t sample_probe_seed(uint64_t root, int sample_id) {
    return derive_seed(root, {0x73616d70ULL, static_cast<uint64_t>(sample_id)});
}

// Classifies every sample; per-sample probe seeds derive from (tcfg.seed,
// sample id) and are shared across that sample's class solves. Failed solves
// are flagged and counted as errors rather than dropped.
inline AccuracyOut evaluate_accuracy(const ScoreModel& model, const SdeSpec& spec,
                                     const Dataset& ds, const SolverCfg& cfg,
                                     const TraceCfg& tcfg) {
    require(ds.size() > 0, "evaluate_accuracy: empty dataset");
    ds.validate();
    require(model.num_classes() == ds.num_classes, "evaluate_accuracy: class count mismatch");

    AccuracyOut out;
    out.records.reserve(ds.size());
    int correct = 0;
    double margin_acc = 0.0, nfe_acc = 0.0;
    for (int i = 0; i < ds.size(); ++i) {
        TraceCfg tc = tcfg;
        tc.seed = sample_probe_seed(tcfg.seed, i);
        ClassificationResult r = classify(model, spec, ds.sample(i), cfg, tc);
        SampleRecord rec;
        rec.sample_id = i;
        rec.label = ds.labels[i];
        rec.predicted = r.predicted;
        rec.margin = r.margin;
        rec.class_logp = r.class_logp;
        rec.nfe = r.total_nfe();
        rec.ok = r.ok;
        rec.error = r.error;
        if (r.ok) {
            if (r.predicted == ds.labels[i]) ++correct;
            margin_acc += r.margin;
            nfe_acc += static_cast<double>(rec.nfe);
        } else {
            ++out.failures;
        }
        out.records.push_back(std::move(rec));
    }
    const int n = ds.size();
    out.accuracy = static_cast<double>(correct) / n;
    const int ok_n = n - out.failures;
    out.mean_margin = ok_n > 0 ? margin_acc / ok_n : 0.0;
    out.mean_nfe = ok_n > 0 ? nfe_acc / ok_n : 0.0;
    return out;
}

}  // namespace sbgc
