#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "svfm/nn.hpp"
#include "svfm/tensor.hpp"

namespace svfm::testing {

inline double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// |a - b| / max(|a|, |b|, floor), norm-wise.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return norm(d) / std::max({norm(a), norm(b), floor});
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Central differences of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Small nets keep finite-difference sweeps cheap.
inline NetConfig tiny_net(std::size_t latent_dim, bool zero_output = false) {
    NetConfig c;
    c.data_dim = 2;
    c.latent_dim = latent_dim;
    c.time_embed_dim = 4;
    c.latent_embed_dim = 3;
    c.velocity_hidden = {5, 4};
    c.posterior_hidden = {4};
    c.zero_init_output = zero_output;
    return c;
}

}  // namespace svfm::testing
