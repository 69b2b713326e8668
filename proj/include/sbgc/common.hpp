#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbgc {

using Vec = std::vector<double>;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Dense row-major matrix of 64-bit floats. All numerics in this library are
// double precision; ODE likelihoods are tolerance-sensitive.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
        require(a.size() == static_cast<size_t>(r) * c, "Mat: data size mismatch");
    }

    static Mat row(const Vec& v) { return Mat(1, static_cast<int>(v.size()), v); }
    static Mat zeros(int r, int c) { return Mat(r, c); }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row_ptr(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row_ptr(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    Vec as_vec() const { return a; }
};

// C = A*B, optionally accumulating into C.
inline void matmul_nn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    require(A.cols == B.rows, "matmul_nn: inner dimension mismatch");
    if (!accumulate) {
        C = Mat(A.rows, B.cols);
    }
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row_ptr(i);
        double* ci = C.row_ptr(i);
        for (int k = 0; k < A.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = B.row_ptr(k);
            for (int j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C = A*B^T
inline void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    require(A.cols == B.cols, "matmul_nt: inner dimension mismatch");
    if (!accumulate) C = Mat(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row_ptr(i);
        double* ci = C.row_ptr(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* bj = B.row_ptr(j);
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += ai[k] * bj[k];
            ci[j] += s;
        }
    }
}

// C = A^T*B
inline void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    require(A.rows == B.rows, "matmul_tn: inner dimension mismatch");
    if (!accumulate) C = Mat(A.cols, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row_ptr(i);
        const double* bi = B.row_ptr(i);
        for (int p = 0; p < A.cols; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            double* cp = C.row_ptr(p);
            for (int j = 0; j < B.cols; ++j) cp[j] += aip * bi[j];
        }
    }
}

inline double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::fabs(x));
    return m;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    require(x.size() == y.size(), "axpy: dimension mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.a)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double log_sum_exp(const Vec& v) {
    require(!v.empty(), "log_sum_exp: empty input");
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace sbgc
