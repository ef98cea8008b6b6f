#include "svfm/dynamics.hpp"

#include <string>

#include "svfm/errors.hpp"

namespace svfm {

StepSchedule::StepSchedule(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw std::invalid_argument("StepSchedule: need at least two knots");
    if (knots_.front() != 0.0 || knots_.back() != 1.0) throw std::invalid_argument("StepSchedule: knots must run from 0 to 1");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i] > knots_[i - 1])) throw std::invalid_argument("StepSchedule: knots must be strictly increasing");
    }
}

StepSchedule StepSchedule::uniform(std::size_t steps) {
    if (steps < 1) throw std::invalid_argument("StepSchedule::uniform: steps must be >= 1");
    std::vector<double> k(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) k[i] = static_cast<double>(i) / static_cast<double>(steps);
    return StepSchedule(std::move(k));
}

VelocityFn velocity_fn(const VelocityField& field) {
    return [&field](const Tensor& x, double t, const Tensor& z) {
        return field.predict(x, t, field.has_latent() ? &z : nullptr);
    };
}

Tensor Trajectory::path(std::size_t i) const {
    const std::size_t d = states.front().cols();
    Tensor out(Shape{states.size(), d});
    for (std::size_t k = 0; k < states.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) out(k, j) = states[k](i, j);
    return out;
}

Tensor euler_step(const Tensor& x, const Tensor& v, double t, double t_next) {
    if (!(t_next > t)) throw std::invalid_argument("euler_step: t_next must exceed t");
    if (x.shape() != v.shape()) throw ShapeError("euler_step: x " + shape_str(x.shape()) + " vs v " + shape_str(v.shape()));
    const double h = t_next - t;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + h * v[i];
    return out;
}

Tensor integrate_observed(const VelocityFn& v, const Tensor& x0, const Tensor& z, const StepSchedule& schedule,
                          const StateObserver& observer, Stepper stepper) {
    const auto& knots = schedule.knots();
    Tensor x = x0;
    if (!x.all_finite()) throw NumericError("integrate: non-finite initial state");
    if (observer) observer(0, knots[0], x);
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double t = knots[i], t_next = knots[i + 1];
        if (stepper == Stepper::euler) {
            x = euler_step(x, v(x, t, z), t, t_next);
        } else {
            const double mid = 0.5 * (t + t_next);
            Tensor half = euler_step(x, v(x, t, z), t, mid);
            x = euler_step(x, v(half, mid, z), t, t_next);
        }
        if (!x.all_finite()) throw NumericError("integrate: non-finite state at step " + std::to_string(i + 1));
        if (observer) observer(i + 1, t_next, x);
    }
    return x;
}

Trajectory integrate(const VelocityFn& v, const Tensor& x0, const Tensor& z, const StepSchedule& schedule,
                     Stepper stepper) {
    Trajectory traj;
    traj.latent = z;
    traj.times = schedule.knots();
    traj.states.reserve(traj.times.size());
    integrate_observed(
        v, x0, z, schedule, [&](std::size_t, double, const Tensor& x) { traj.states.push_back(x); }, stepper);
    return traj;
}

SampleResult sample(const VelocityField& field, std::size_t n, const SourceSampler& source,
                    const StepSchedule& schedule, Rng& rng, Stepper stepper) {
    Tensor x0 = source(n, rng);
    Tensor z = field.has_latent() ? LatentSpec(field.config().latent_dim).sample_prior(n, rng) : Tensor(Shape{n, 0});
    SampleResult r;
    r.trajectory = integrate(velocity_fn(field), x0, z, schedule, stepper);
    r.samples = r.trajectory.endpoint();
    return r;
}

SourceSampler source_sampler(const DatasetSpec& spec) {
    return [spec](std::size_t n, Rng& rng) { return sample_source(spec, n, rng); };
}

}  // namespace svfm
