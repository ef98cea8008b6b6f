#include "svfm/energy.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "svfm/errors.hpp"

namespace svfm {

namespace {

std::vector<double> sorted_column(const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    std::sort(v.begin(), v.end());
    return v;
}

// Sum over all (i, j) of |a_i - b_j| for sorted 1-D samples.
double cross_abs_sum(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> prefix(b.size() + 1, 0.0);
    for (std::size_t j = 0; j < b.size(); ++j) prefix[j + 1] = prefix[j] + b[j];
    const double total = prefix.back();
    const double m = static_cast<double>(b.size());
    double s = 0.0;
    for (double x : a) {
        const auto c = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), x) - b.begin());
        const double below = prefix[c];
        const double cd = static_cast<double>(c);
        s += (x * cd - below) + ((total - below) - x * (m - cd));
    }
    return s;
}

// Sum over all ordered (i, j) of |a_i - a_j| for sorted 1-D samples.
double self_abs_sum(const std::vector<double>& a) {
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * (2.0 * static_cast<double>(k) - n + 1.0);
    return 2.0 * s;
}

double pair_sum(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data().data() + i * d;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data().data() + j * d;
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ai[k] - bj[k];
                acc += diff * diff;
            }
            s += std::sqrt(acc);
        }
    }
    return s;
}

// Ordered-pair sum within one set, each unordered pair visited once.
double self_pair_sum(const Tensor& a) {
    const std::size_t n = a.rows(), d = a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data().data() + i * d;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* aj = a.data().data() + j * d;
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ai[k] - aj[k];
                acc += diff * diff;
            }
            s += std::sqrt(acc);
        }
    }
    return 2.0 * s;
}

void check_sets(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError("energy_distance: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("energy_distance: empty sample set");
}

}  // namespace

double mean_pair_distance(const Tensor& a, const Tensor& b) {
    check_sets(a, b);
    const double nm = static_cast<double>(a.rows()) * static_cast<double>(b.rows());
    if (a.cols() == 1) return cross_abs_sum(sorted_column(a), sorted_column(b)) / nm;
    return pair_sum(a, b) / nm;
}

double energy_distance(const Tensor& a, const Tensor& b) {
    check_sets(a, b);
    const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
    double ab, aa, bb;
    if (a.cols() == 1) {
        const auto sa = sorted_column(a), sb = sorted_column(b);
        ab = cross_abs_sum(sa, sb) / (n * m);
        aa = self_abs_sum(sa) / (n * n);
        bb = self_abs_sum(sb) / (m * m);
    } else {
        ab = pair_sum(a, b) / (n * m);
        aa = self_pair_sum(a) / (n * n);
        bb = self_pair_sum(b) / (m * m);
    }
    return std::max(0.0, 2.0 * ab - aa - bb);
}

double energy_distance(const SampleSet& a, const SampleSet& b) { return energy_distance(a.points, b.points); }

}  // namespace svfm
