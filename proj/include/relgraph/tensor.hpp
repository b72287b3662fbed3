#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

// Dense row-major f64 matrix. All model math runs in 64-bit precision so
// analytic gradients can be checked against central finite differences.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (double& x : v) x = rng.uniform(lo, hi);
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline void require_same_shape(const Mat& a, const Mat& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionMismatch(std::string(what) + ": " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
}

}  // namespace relgraph
