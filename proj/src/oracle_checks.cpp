#include <cmath>

#include "svfm/data.hpp"
#include "svfm/errors.hpp"
#include "svfm/oracle.hpp"

namespace svfm {

namespace {

constexpr double kReferenceN = 1e5;

struct Context {
    SuiteOptions opt;
    double widen = 1.0;  // tolerance_scale * sqrt(1e5 / n), never below tolerance_scale
    std::vector<CheckRow>* rows;

    void add(const std::string& suite, const std::string& name, double stat, double threshold, bool passed) const {
        rows->push_back(CheckRow{suite, name, stat, threshold, passed});
    }
    void below(const std::string& suite, const std::string& name, double stat, double threshold) const {
        add(suite, name, stat, threshold, stat < threshold);
    }
};

GmmSpec dirac_target(double m) {
    GmmSpec g;
    g.weights = {1.0};
    g.means = Tensor(Shape{1, 1}, m);
    g.stds = {0.0};
    return g;
}

void run_marginal(const Context& c) {
    const std::vector<double> probes{0.0, 0.25, 0.5, 0.75, 1.0};
    const auto schedule = StepSchedule::uniform(c.opt.steps);
    std::uint64_t stream = 100;
    for (const char* name : {"gauss_to_gauss", "gmm_1d"}) {
        const auto gmm = *DatasetSpec::make(name).target_gmm();
        Rng rng(c.opt.seed, stream++);
        const auto dist = check_marginal_preservation(gmm, c.opt.n, probes, schedule, rng);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            c.below("marginal", std::string(name) + " energy(t=" + std::to_string(probes[p]).substr(0, 4) + ")",
                    dist[p], 0.02 * c.widen);
        }
    }
}

void run_cost(const Context& c) {
    const auto schedule = StepSchedule::uniform(c.opt.steps);
    {
        Rng rng(c.opt.seed, 200);
        const auto gmm = *DatasetSpec::make("gauss_to_gauss").target_gmm();
        const auto r = check_transport_cost(gmm, c.opt.n, schedule, rng);
        c.below("cost", "gauss_to_gauss cost_z", r.cost_z, 0.01 * c.widen);
        c.below("cost", "gauss_to_gauss |cost_x - 2|", std::abs(r.cost_x - 2.0), 0.05 * c.widen);
        c.add("cost", "gauss_to_gauss cost_z - cost_x <= 3 SE", r.cost_z - r.cost_x, 3.0 * r.se, r.holds());
    }
    std::uint64_t stream = 201;
    for (const char* name : {"gmm_1d", "hexagonal"}) {
        Rng rng(c.opt.seed, stream++);
        const auto gmm = *DatasetSpec::make(name).target_gmm();
        const auto r = check_transport_cost(gmm, c.opt.n, schedule, rng);
        c.add("cost", std::string(name) + " cost_z - cost_x <= 3 SE", r.cost_z - r.cost_x, 3.0 * r.se, r.holds());
    }
    {
        // A single atom admits one transport: both costs coincide.
        Rng rng(c.opt.seed, 210);
        const auto r = check_transport_cost(dirac_target(3.0), c.opt.n, schedule, rng);
        const double gap = std::abs(r.cost_z - r.cost_x);
        c.add("cost", "dirac |cost_z - cost_x| / cost_x", gap / r.cost_x, 1e-9, gap <= 1e-9 * r.cost_x);
    }
}

// Traced analytic fields for the material-derivative checks.
Dual broadcast_row(Graph& g, const std::vector<double>& c, std::size_t n) {
    Tensor t(Shape{n, c.size()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c.size(); ++j) t(i, j) = c[j];
    return Dual(g.constant(std::move(t)));
}

void run_material(const Context& c) {
    const std::size_t n = std::min<std::size_t>(c.opt.n, 256);
    const std::size_t d = 2;
    const std::vector<double> cvec{1.5, -0.5};
    const double cnorm = std::hypot(cvec[0], cvec[1]);
    const auto schedule = StepSchedule::uniform(std::min<std::size_t>(c.opt.steps, 100));
    Rng rng(c.opt.seed, 300);
    const Tensor x0 = rng.normal_tensor(Shape{n, d});
    const Tensor no_z(Shape{n, 0});

    auto max_of = [](const Tensor& t) {
        double m = 0.0;
        for (double v : t.data()) m = std::max(m, v);
        return m;
    };

    {
        TracedVelocity constant = [&](Graph& g, const Dual& x, const Dual&, const std::optional<Dual>&) {
            return broadcast_row(g, cvec, x.shape()[0]);
        };
        VelocityFn plain = [&](const Tensor& x, double, const Tensor&) {
            Graph g;
            return broadcast_row(g, cvec, x.rows()).primal.value();
        };
        const auto traj = integrate(plain, x0, no_z, schedule);
        const double m = max_of(material_derivative_norm(constant, traj));
        c.add("material", "constant field max |D_t v|", m, 0.0, m == 0.0);
    }
    {
        // Straight but non-constant: x_t = x0 (1 + a t) so v = a x / (1 + a t).
        const double a = 0.5;
        TracedVelocity straight = [a](Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>&) {
            Dual denom = matmul(add_scalar(scale(t, a), 1.0),
                                Dual(g.constant(Tensor(Shape{1, x.shape()[1]}, 1.0))));
            return div(scale(x, a), denom);
        };
        VelocityFn plain = [a](const Tensor& x, double t, const Tensor&) {
            Tensor v(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) v[i] = a * x[i] / (1.0 + a * t);
            return v;
        };
        const auto traj = integrate(plain, x0, no_z, schedule);
        const double m = max_of(material_derivative_norm(straight, traj));
        c.add("material", "straight field max |D_t v|", m, 1e-12, m <= 1e-12);
    }
    {
        TracedVelocity ramp = [&](Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>&) {
            (void)x;
            return matmul(t, Dual(g.constant(Tensor(Shape{1, cvec.size()}, cvec))));
        };
        VelocityFn plain = [&](const Tensor& x, double t, const Tensor&) {
            Tensor v(x.shape());
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < d; ++j) v(i, j) = t * cvec[j];
            return v;
        };
        const auto traj = integrate(plain, x0, no_z, schedule);
        const auto norms = material_derivative_norm(ramp, traj);
        double worst = 0.0;
        for (double v : norms.data()) worst = std::max(worst, std::abs(v - cnorm));
        c.add("material", "v = t c: max ||D_t v| - |c||", worst, 1e-12, worst <= 1e-12);
    }
    {
        TracedVelocity identity = [](Graph&, const Dual& x, const Dual&, const std::optional<Dual>&) { return x; };
        VelocityFn plain = [](const Tensor& x, double, const Tensor&) { return x; };
        const auto traj = integrate(plain, x0, no_z, schedule);
        const auto norms = material_derivative_norm(identity, traj);
        double worst = 0.0;
        for (std::size_t k = 0; k < traj.states.size(); ++k)
            for (std::size_t i = 0; i < n; ++i) {
                const double xn = std::hypot(traj.states[k](i, 0), traj.states[k](i, 1));
                worst = std::max(worst, std::abs(norms(k, i) - xn) / std::max(1.0, xn));
            }
        c.add("material", "v = x: max rel ||D_t v| - |x||", worst, 1e-12, worst <= 1e-12);
    }
}

void run_v_functional(const Context& c) {
    const std::vector<double> grid3{0.25, 0.5, 0.75};
    {
        const Tensor x0 = Tensor::matrix({{-1.0}, {1.0}});
        const Tensor x1 = Tensor::matrix({{1.0}, {-1.0}});
        const double v = estimate_v_functional(x0, x1, grid3, 0.1);
        const double err = std::abs(v - 4.0 / 3.0);
        c.add("v-functional", "crossing pair |V - 4/3|", err, 1e-12, err <= 1e-12);
    }
    {
        const Tensor x0 = Tensor::matrix({{0.0}, {0.0}});
        const Tensor x1 = Tensor::matrix({{-1.0}, {1.0}});
        const double v = estimate_v_functional(x0, x1, interior_grid(9), 0.1);
        c.add("v-functional", "fan from an atom V", v, 0.0, v == 0.0);
    }
    {
        // Comonotone coupling: sorted source matched to sorted target never crosses.
        const std::size_t n = std::min<std::size_t>(c.opt.n, 20000);
        Rng rng(c.opt.seed, 400);
        Tensor x0 = rng.normal_tensor(Shape{n, 1});
        Tensor x1 = DatasetSpec::make("gmm_1d").target_gmm()->sample(n, rng);
        std::sort(x0.storage().begin(), x0.storage().end());
        std::sort(x1.storage().begin(), x1.storage().end());
        // Within-cell variation of a smooth delta leaves an O(h^2) bias, so the
        // comonotone estimate must shrink with h rather than vanish outright.
        const double coarse = estimate_v_functional(x0, x1, interior_grid(9), 0.1);
        const double fine = estimate_v_functional(x0, x1, interior_grid(9), 0.01);
        c.add("v-functional", "comonotone coupling V(h=0.01) / V(h=0.1)", fine / coarse, 0.05, fine <= 0.05 * coarse);

        // The independent coupling of the same marginals does cross.
        Rng shuffle(c.opt.seed, 401);
        for (std::size_t i = n; i > 1; --i) std::swap(x1[i - 1], x1[shuffle.index(i)]);
        const double v = estimate_v_functional(x0, x1, interior_grid(9), 0.1);
        c.add("v-functional", "comonotone V / independent V (h=0.1)", coarse / v, 0.05, coarse <= 0.05 * v);
    }
    {
        const Tensor x0 = Tensor::matrix({{-1.0}, {1.0}});
        const Tensor x1 = Tensor::matrix({{4.0}, {4.0}});
        const double v = estimate_v_functional(x0, x1, grid3, 0.1);
        (void)c.widen;
        c.add("v-functional", "converging pair V", v, 0.0, v >= 0.0);
    }
}

}  // namespace

const std::vector<std::string>& oracle_suite_names() {
    static const std::vector<std::string> names{"marginal", "cost", "material", "v-functional", "all"};
    return names;
}

std::vector<CheckRow> run_oracle_suite(const std::string& suite, const SuiteOptions& options) {
    if (options.n < 2) throw ConfigError("oracle-check: n must be >= 2");
    if (!(options.tolerance_scale > 0.0)) throw ConfigError("oracle-check: tolerance scale must be > 0");
    std::vector<CheckRow> rows;
    Context c{options, options.tolerance_scale * std::sqrt(std::max(1.0, kReferenceN / static_cast<double>(options.n))),
              &rows};
    const bool all = suite == "all";
    bool known = all;
    if (all || suite == "marginal") known = true, run_marginal(c);
    if (all || suite == "cost") known = true, run_cost(c);
    if (all || suite == "material") known = true, run_material(c);
    if (all || suite == "v-functional") known = true, run_v_functional(c);
    if (!known) throw ConfigError("unknown oracle suite '" + suite + "'");
    return rows;
}

}  // namespace svfm
