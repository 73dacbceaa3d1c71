#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cbm {

/// Loss value plus an identifier of the piecewise-smooth region the
/// parameters fall in (e.g. an activation signature). Finite differences whose
/// probes land in a different region than the base point are not compared.
struct LossProbe {
    double loss = 0.0;
    std::uint64_t region = 0;
};

struct GradientCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Relative error is |a - n| / max(|a|, |n|, abs_floor).
    double abs_floor = 1e-5;
    /// Coordinates probed per tensor; 0 checks every coordinate.
    std::size_t samples_per_tensor = 0;
    std::uint64_t seed = 0;
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_nonsmooth = 0;
    /// Tensor index and coordinate of the worst mismatch.
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = true;
};

/// Compares analytic gradients with central finite differences. `params` are
/// perturbed in place (and restored) and `loss` re-evaluated each time; it
/// must read the current parameter values.
GradientCheckReport gradient_check(const std::vector<std::span<double>>& params,
                                   const std::vector<std::span<const double>>& analytic,
                                   const std::function<LossProbe()>& loss,
                                   const GradientCheckOptions& options = {});

}  // namespace cbm
