#pragma once

#include <algorithm>

#include "sbgc/io.hpp"
#include "sbgc/prob_flow.hpp"
#include "sbgc/rng.hpp"
#include "sbgc/score_model.hpp"

namespace sbgc {

// Labeled sample container. Quantized datasets hold integer values (stored as
// doubles) in [0, levels); `lo`/`hi` describe the continuous data domain that
// models and attacks operate on.
struct Dataset {
    Mat samples;  // N×D, row-major; images are flattened rows
    std::vector<int> labels;
    int num_classes = 0;
    bool quantized = false;
    int levels = 0;
    double lo = 0.0, hi = 1.0;
    int height = 0, width = 0;  // set for image-shaped data
    json meta;                  // generator parameters, echoed for provenance

    int size() const { return samples.rows; }
    int dim() const { return samples.cols; }

    Vec sample(int i) const {
        require(i >= 0 && i < samples.rows, "Dataset: sample index out of range");
        return Vec(samples.row_ptr(i), samples.row_ptr(i) + samples.cols);
    }

    void validate() const {
        require(static_cast<int>(labels.size()) == samples.rows, "Dataset: label count mismatch");
        for (int y : labels) require(y >= 0 && y < num_classes, "Dataset: label out of range");
        require(hi > lo, "Dataset: empty domain");
        if (quantized) {
            require(levels >= 2, "Dataset: quantized data needs levels >= 2");
            for (double v : samples.a)
                require(v == std::floor(v) && v >= 0.0 && v < levels,
                        "Dataset: quantized entries must be integers in [0, levels)");
        }
        if (height > 0) require(height * width == samples.cols, "Dataset: image shape mismatch");
    }
};

// ---------------------------------------------------------------------------
// Class-conditional Gaussian mixtures with closed-form ground truth.
// ---------------------------------------------------------------------------

struct GmmSpec {
    std::vector<GmmClass> classes;
    int dim = 0;

    int num_classes() const { return static_cast<int>(classes.size()); }

    void validate() const {
        require(!classes.empty() && dim >= 1, "GmmSpec: empty spec");
        for (const auto& c : classes) c.validate(dim);
    }

    // log p(x | y) of the clean (t = 0) data distribution
    double class_logpdf(const Vec& x, int y) const {
        const GmmClass& c = classes.at(y);
        constexpr double kLog2Pi = 1.8378770664093454835606594728112;
        Vec logk(c.weights.size());
        for (size_t j = 0; j < c.weights.size(); ++j) {
            double q = 0.0;
            for (int i = 0; i < dim; ++i) {
                double d = x[i] - c.means[j][i];
                q += d * d;
            }
            logk[j] = std::log(c.weights[j]) -
                      0.5 * (dim * (kLog2Pi + std::log(c.vars[j])) + q / c.vars[j]);
        }
        return log_sum_exp(logk);
    }

    // Bayes decision under equal class priors; ties broken by lowest id.
    int bayes_predict(const Vec& x) const {
        int best = 0;
        double best_lp = class_logpdf(x, 0);
        for (int y = 1; y < num_classes(); ++y) {
            double lp = class_logpdf(x, y);
            if (lp > best_lp) {
                best = y;
                best_lp = lp;
            }
        }
        return best;
    }

    json to_json() const {
        json jc = json::array();
        for (const auto& c : classes) {
            json comp = json::array();
            for (size_t j = 0; j < c.weights.size(); ++j)
                comp.push_back({{"w", c.weights[j]}, {"mean", c.means[j]}, {"var", c.vars[j]}});
            jc.push_back(comp);
        }
        return json{{"dim", dim}, {"classes", jc}};
    }

    static GmmSpec from_json(const json& j) {
        GmmSpec s;
        s.dim = j.at("dim").get<int>();
        for (const auto& jc : j.at("classes")) {
            GmmClass c;
            for (const auto& comp : jc) {
                c.weights.push_back(comp.at("w").get<double>());
                c.means.push_back(comp.at("mean").get<Vec>());
                c.vars.push_back(comp.at("var").get<double>());
            }
            s.classes.push_back(std::move(c));
        }
        s.validate();
        return s;
    }
};

// One isotropic Gaussian per class at the given modes.
inline GmmSpec make_gmm_spec(const std::vector<Vec>& modes, double scale) {
    require(!modes.empty() && scale > 0.0, "make_gmm_spec: bad arguments");
    GmmSpec s;
    s.dim = static_cast<int>(modes[0].size());
    for (const auto& m : modes) {
        GmmClass c;
        c.weights = {1.0};
        c.means = {m};
        c.vars = {scale * scale};
        s.classes.push_back(std::move(c));
    }
    s.validate();
    return s;
}

inline AnalyticGmmScore make_analytic_model(const GmmSpec& gmm, const SdeSpec& sde) {
    return AnalyticGmmScore(gmm.classes, gmm.dim, sde);
}

inline Dataset gen_gmm_dataset(const GmmSpec& gmm, int n_per_class, uint64_t seed,
                               double lo = -8.0, double hi = 8.0) {
    gmm.validate();
    require(n_per_class >= 0, "gen_gmm_dataset: negative sample count");
    const int k = gmm.num_classes();
    Dataset ds;
    ds.samples = Mat(k * n_per_class, gmm.dim);
    ds.labels.resize(static_cast<size_t>(k) * n_per_class);
    ds.num_classes = k;
    ds.lo = lo;
    ds.hi = hi;
    ds.meta = json{{"generator", "gmm"}, {"gmm", gmm.to_json()}, {"n_per_class", n_per_class}, {"seed", seed}};

    int row = 0;
    for (int y = 0; y < k; ++y) {
        Rng rng(derive_seed(seed, {0x676d6dULL, static_cast<uint64_t>(y)}));
        const GmmClass& c = gmm.classes[y];
        for (int i = 0; i < n_per_class; ++i, ++row) {
            // component choice by inverse CDF over the weights
            double u = rng.uniform();
            size_t j = 0;
            double acc = 0.0;
            for (; j + 1 < c.weights.size(); ++j) {
                acc += c.weights[j];
                if (u < acc) break;
            }
            const double sd = std::sqrt(c.vars[j]);
            for (int dcol = 0; dcol < gmm.dim; ++dcol)
                ds.samples(row, dcol) = c.means[j][dcol] + sd * rng.normal();
            ds.labels[row] = y;
        }
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Quantized toy images: oriented gratings, one orientation per class, with
// additive amplitude noise. Exercises the dequantization + bits/dim path.
// ---------------------------------------------------------------------------

inline Dataset gen_toyimage_dataset(int num_classes, int h, int w, int n_per_class, uint64_t seed,
                                    double noise_amp = 8.0, double cycles = 2.0) {
    require(num_classes >= 1 && h >= 2 && w >= 2, "gen_toyimage_dataset: bad shape");
    Dataset ds;
    ds.samples = Mat(num_classes * n_per_class, h * w);
    ds.labels.resize(static_cast<size_t>(num_classes) * n_per_class);
    ds.num_classes = num_classes;
    ds.quantized = true;
    ds.levels = 256;
    ds.lo = 0.0;
    ds.hi = 1.0;
    ds.height = h;
    ds.width = w;
    ds.meta = json{{"generator", "toyimage"}, {"h", h},      {"w", w},
                   {"n_per_class", n_per_class},             {"seed", seed},
                   {"noise_amp", noise_amp},                 {"cycles", cycles}};

    const double ext = static_cast<double>(std::max(h, w));
    int row = 0;
    for (int y = 0; y < num_classes; ++y) {
        Rng rng(derive_seed(seed, {0x696d67ULL, static_cast<uint64_t>(y)}));
        const double theta = M_PI * static_cast<double>(y) / num_classes;
        const double cth = std::cos(theta), sth = std::sin(theta);
        for (int s = 0; s < n_per_class; ++s, ++row) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const double u = (i + 0.5) * cth + (j + 0.5) * sth;
                    double v = 127.5 + 90.0 * std::sin(2.0 * M_PI * cycles * u / ext);
                    v += noise_amp * rng.normal();
                    ds.samples(row, i * w + j) = std::clamp(std::round(v), 0.0, 255.0);
                }
            ds.labels[row] = y;
        }
    }
    ds.validate();
    return ds;
}

// Uniform dequantization of a quantized dataset into [0, 1)^D. Deterministic
// given the seed; noise stream is per sample so subsets stay reproducible.
inline Dataset dequantize_dataset(const Dataset& ds, uint64_t seed) {
    require(ds.quantized, "dequantize_dataset: dataset is not quantized");
    Dataset out = ds;
    out.quantized = false;
    out.lo = 0.0;
    out.hi = 1.0;
    for (int i = 0; i < ds.size(); ++i) {
        Rng rng(derive_seed(seed, {0x64657175ULL, static_cast<uint64_t>(i)}));
        std::vector<int> xi(ds.dim());
        for (int j = 0; j < ds.dim(); ++j) xi[j] = static_cast<int>(ds.samples(i, j));
        Vec v = dequantize(xi, ds.levels, rng);
        std::memcpy(out.samples.row_ptr(i), v.data(), sizeof(double) * v.size());
    }
    out.meta["dequantized_seed"] = seed;
    return out;
}

// ---- container I/O ----

inline void save_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    json meta{{"kind", "dataset"},
              {"dtype", ds.quantized ? "u8" : "f64"},
              {"K", ds.num_classes},
              {"levels", ds.levels},
              {"domain", {ds.lo, ds.hi}},
              {"labels", ds.labels},
              {"gen", ds.meta}};
    if (ds.height > 0)
        meta["shape"] = {ds.size(), ds.height, ds.width};
    else
        meta["shape"] = {ds.size(), ds.dim()};
    if (ds.quantized) {
        std::vector<uint8_t> bytes(ds.samples.size());
        for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<uint8_t>(ds.samples.a[i]);
        write_container(path, meta, bytes.data(), bytes.size());
    } else {
        write_container(path, meta, ds.samples.a.data(), ds.samples.size() * sizeof(double));
    }
}

inline Dataset load_dataset(const std::string& path) {
    Container c = read_container(path);
    require(c.meta.value("kind", "") == "dataset", "load_dataset: not a dataset file");
    Dataset ds;
    std::vector<int> shape = c.meta.at("shape").get<std::vector<int>>();
    int n = shape[0];
    int dim = shape.size() == 3 ? shape[1] * shape[2] : shape[1];
    if (shape.size() == 3) {
        ds.height = shape[1];
        ds.width = shape[2];
    }
    ds.num_classes = c.meta.at("K").get<int>();
    ds.levels = c.meta.at("levels").get<int>();
    ds.quantized = c.meta.at("dtype").get<std::string>() == "u8";
    auto dom = c.meta.at("domain").get<std::vector<double>>();
    ds.lo = dom[0];
    ds.hi = dom[1];
    ds.labels = c.meta.at("labels").get<std::vector<int>>();
    ds.meta = c.meta.value("gen", json::object());
    ds.samples = Mat(n, dim);
    if (ds.quantized) {
        require(c.payload.size() == static_cast<size_t>(n) * dim, "load_dataset: payload size");
        for (size_t i = 0; i < c.payload.size(); ++i) ds.samples.a[i] = c.payload[i];
    } else {
        require(c.payload.size() == static_cast<size_t>(n) * dim * sizeof(double),
                "load_dataset: payload size");
        std::memcpy(ds.samples.a.data(), c.payload.data(), c.payload.size());
    }
    ds.validate();
    return ds;
}

}  // namespace sbgc
