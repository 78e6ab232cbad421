#include "driftvec/optim.hpp"

#include <cmath>

#include "driftvec/types.hpp"

namespace driftvec {

AdamState::AdamState(std::size_t size, AdamConfig config)
    : config_(config), first_(size, 0.0), second_(size, 0.0) {}

double AdamState::update(double& m, double& v, double g, double c1, double c2) const {
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
    return config_.learning_rate * (m / c1) / (std::sqrt(v / c2) + config_.epsilon);
}

void AdamState::step(std::span<const double> gradient, std::span<double> ascent_step) {
    if (gradient.size() != size() || ascent_step.size() != size())
        throw ValidationError("AdamState::step: size mismatch");
    for (double g : gradient)
        if (!std::isfinite(g)) throw Error("AdamState::step: non-finite gradient");
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < size(); ++i)
        ascent_step[i] = update(first_[i], second_[i], gradient[i], c1, c2);
}

void AdamState::step_rows(std::span<const std::size_t> rows, std::size_t row_width,
                          std::span<const double> gradient, std::span<double> ascent_step) {
    if (gradient.size() != rows.size() * row_width || ascent_step.size() != gradient.size())
        throw ValidationError("AdamState::step_rows: size mismatch");
    for (std::size_t r : rows)
        if ((r + 1) * row_width > size()) throw ValidationError("AdamState::step_rows: row out of range");
    for (double g : gradient)
        if (!std::isfinite(g)) throw Error("AdamState::step_rows: non-finite gradient");
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t k = 0; k < row_width; ++k) {
            const std::size_t idx = rows[a] * row_width + k;
            const std::size_t packed = a * row_width + k;
            ascent_step[packed] = update(first_[idx], second_[idx], gradient[packed], c1, c2);
        }
}

void AdamState::reset() {
    std::fill(first_.begin(), first_.end(), 0.0);
    std::fill(second_.begin(), second_.end(), 0.0);
    steps_ = 0;
}

void AdamState::restore(std::vector<double> first, std::vector<double> second, std::size_t steps) {
    if (first.size() != second.size()) throw ValidationError("AdamState::restore: size mismatch");
    first_ = std::move(first);
    second_ = std::move(second);
    steps_ = steps;
}

double mirror_ascent_update(double nu, double step) {
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("mirror ascent needs nu > 0");
    if (!std::isfinite(step)) throw Error("mirror ascent step is not finite");
    const double half = 0.5 * nu * step;
    // For large negative steps the direct form cancels; use the conjugate
    // nu^2 / (sqrt(half^2 + nu^2) - half), which is algebraically identical.
    const double root = std::hypot(half, nu);
    if (half >= 0.0) return half + root;
    return nu * nu / (root - half);
}

}  // namespace driftvec
