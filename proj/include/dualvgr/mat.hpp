#pragma once

#include <cassert>
#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace dualvgr {

// Dense row-major matrix of doubles. Vectors are represented as 1xN or Nx1.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {
        assert(r >= 0 && c >= 0);
    }
    Mat(int r, int c, double fill) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
    Mat(std::initializer_list<std::initializer_list<double>> init) {
        rows = static_cast<int>(init.size());
        cols = rows > 0 ? static_cast<int>(init.begin()->size()) : 0;
        v.reserve(static_cast<size_t>(rows) * cols);
        for (const auto& row : init) {
            if (static_cast<int>(row.size()) != cols)
                throw std::invalid_argument("Mat: ragged initializer");
            for (double x : row) v.push_back(x);
        }
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat row(std::initializer_list<double> xs) {
        Mat m(1, static_cast<int>(xs.size()));
        int i = 0;
        for (double x : xs) m.v[i++] = x;
        return m;
    }
    static Mat col(std::initializer_list<double> xs) {
        Mat m(static_cast<int>(xs.size()), 1);
        int i = 0;
        for (double x : xs) m.v[i++] = x;
        return m;
    }
    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline bool bitwise_equal(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.v.size(); ++i)
        if (a.v[i] != b.v[i]) return false;
    return true;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    assert(a.same_shape(b));
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace dualvgr
