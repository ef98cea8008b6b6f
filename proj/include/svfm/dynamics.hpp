#pragma once

#include <functional>
#include <vector>

#include "svfm/data.hpp"
#include "svfm/nn.hpp"

namespace svfm {

/// Strictly increasing time knots from 0 to 1.
class StepSchedule {
public:
    explicit StepSchedule(std::vector<double> knots);
    static StepSchedule uniform(std::size_t steps);

    const std::vector<double>& knots() const { return knots_; }
    std::size_t steps() const { return knots_.size() - 1; }

private:
    std::vector<double> knots_;
};

// Untraced velocity v(x, t, z) for a batch sharing one time. `z` may be empty
// (shape [n, 0]) for fields without a latent.
using VelocityFn = std::function<Tensor(const Tensor& x, double t, const Tensor& z)>;

VelocityFn velocity_fn(const VelocityField& field);

/// Batch of trajectories over one schedule, each with a fixed latent.
struct Trajectory {
    Tensor latent;                // [n, latent_dim]
    std::vector<double> times;    // knots, length N + 1
    std::vector<Tensor> states;   // N + 1 states of shape [n, d]

    std::size_t nfe() const { return times.empty() ? 0 : times.size() - 1; }
    std::size_t count() const { return states.empty() ? 0 : states.front().rows(); }
    const Tensor& endpoint() const { return states.back(); }
    // Path of trajectory i as an [N + 1, d] tensor.
    Tensor path(std::size_t i) const;
};

enum class Stepper { euler, midpoint };

// x + (t_next - t) v
Tensor euler_step(const Tensor& x, const Tensor& v, double t, double t_next);

// Observer receives (knot index, time, state) for every knot including 0 and N.
using StateObserver = std::function<void(std::size_t, double, const Tensor&)>;

/// Fixed-step integration with z held constant; returns the endpoint. Throws
/// NumericError naming the step index if a state becomes non-finite.
Tensor integrate_observed(const VelocityFn& v, const Tensor& x0, const Tensor& z, const StepSchedule& schedule,
                          const StateObserver& observer, Stepper stepper = Stepper::euler);

// Dense variant recording every state.
Trajectory integrate(const VelocityFn& v, const Tensor& x0, const Tensor& z, const StepSchedule& schedule,
                     Stepper stepper = Stepper::euler);

using SourceSampler = std::function<Tensor(std::size_t n, Rng& rng)>;

struct SampleResult {
    Tensor samples;
    Trajectory trajectory;
};

/// Draws x0 from `source`, z from the prior (when the field has a latent), and
/// integrates. Draw order: all x0 first, then all z.
SampleResult sample(const VelocityField& field, std::size_t n, const SourceSampler& source,
                    const StepSchedule& schedule, Rng& rng, Stepper stepper = Stepper::euler);

SourceSampler source_sampler(const DatasetSpec& spec);

}  // namespace svfm
