#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace driftvec {

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam for gradient *ascent*: step() returns the increment the
/// caller adds to the parameters. One state per parameter array.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::size_t size, AdamConfig config);

    /// Throws Error on a non-finite gradient, leaving the state untouched.
    void step(std::span<const double> gradient, std::span<double> ascent_step);

    /// Sparse variant for minibatches: only the listed rows (of width
    /// `row_width`) update their moments. `gradient` and `ascent_step` hold the
    /// selected rows packed in order. The step counter is shared by all rows.
    void step_rows(std::span<const std::size_t> rows, std::size_t row_width,
                   std::span<const double> gradient, std::span<double> ascent_step);

    void reset();
    void set_config(AdamConfig config) { config_ = config; }

    const AdamConfig& config() const { return config_; }
    std::size_t size() const { return first_.size(); }
    std::size_t step_count() const { return steps_; }
    const std::vector<double>& first_moment() const { return first_; }
    const std::vector<double>& second_moment() const { return second_; }

    /// Restores a saved state (checkpoint resume).
    void restore(std::vector<double> first, std::vector<double> second, std::size_t steps);

private:
    double update(double& m, double& v, double g, double c1, double c2) const;

    AdamConfig config_;
    std::vector<double> first_;
    std::vector<double> second_;
    std::size_t steps_ = 0;
};

/// Positivity-preserving update of a Cholesky diagonal entry nu > 0 by an
/// ascent step d: nu' = nu*d/2 + sqrt((nu*d/2)^2 + nu^2). Strictly positive and
/// increasing in d.
double mirror_ascent_update(double nu, double step);

}  // namespace driftvec
