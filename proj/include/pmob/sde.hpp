#pragma once

#include <cstdint>
#include <vector>

namespace pmob {

/// Fully determines a Wiener increment stream. Increments are addressed by
/// (seed, trajectory_id, step, mode) through a counter-based generator, so
/// any worker can produce any increment without sequencing and the first J
/// increments do not depend on step_count. variant_tag never enters the
/// noise addressing; it only seeds auxiliary randomness (e.g. initial-data
/// perturbations), which is what keeps coupled pairs on a common path.
struct NoisePathSpec {
    std::uint64_t seed = 0;
    std::uint64_t trajectory_id = 0;
    int mode_count = 0;
    int step_count = 0;
    double dt = 0.0;
    std::uint64_t variant_tag = 0;

    /// Same noise stream, different auxiliary randomness.
    NoisePathSpec couple(std::uint64_t new_variant_tag) const {
        NoisePathSpec s = *this;
        s.variant_tag = new_variant_tag;
        return s;
    }
    /// Same stream addressing with a different member id (ensembles).
    NoisePathSpec with_trajectory(std::uint64_t id) const {
        NoisePathSpec s = *this;
        s.trajectory_id = id;
        return s;
    }
    bool same_noise(const NoisePathSpec& o) const {
        return seed == o.seed && trajectory_id == o.trajectory_id && mode_count == o.mode_count &&
               dt == o.dt;
    }
};

/// Increments dW^k_j ~ N(0, dt), laid out step-major.
class IncrementBlock {
public:
    IncrementBlock() = default;
    IncrementBlock(int steps, int modes)
        : steps_(steps), modes_(modes), data_(static_cast<size_t>(steps) * modes, 0.0) {}

    int steps() const { return steps_; }
    int modes() const { return modes_; }
    double operator()(int step, int mode) const {
        return data_[static_cast<size_t>(step) * modes_ + mode];
    }
    double& operator()(int step, int mode) {
        return data_[static_cast<size_t>(step) * modes_ + mode];
    }
    const std::vector<double>& data() const { return data_; }

private:
    int steps_ = 0;
    int modes_ = 0;
    std::vector<double> data_;
};

/// Standard normal quantile (Wichura's AS241, double precision).
double inverse_normal_cdf(double p);

/// Deterministic uniform in (0,1) for the given counter words.
double counter_uniform(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step,
                       std::uint64_t mode);

/// One increment dW^{mode}_{step}; bit-reproducible.
double wiener_increment(const NoisePathSpec& spec, int step, int mode);

/// The whole block for spec.step_count steps.
IncrementBlock wiener_increments(const NoisePathSpec& spec);

/// Auxiliary (non-noise) uniform stream, addressed by the variant tag.
double variant_uniform(const NoisePathSpec& spec, std::uint64_t index);

}  // namespace pmob
