#include "cbm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cbm {

GradientCheckReport gradient_check(const std::vector<std::span<double>>& params,
                                   const std::vector<std::span<const double>>& analytic,
                                   const std::function<LossProbe()>& loss, const GradientCheckOptions& options) {
    if (params.size() != analytic.size()) throw std::invalid_argument("gradient_check: tensor count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t)
        if (params[t].size() != analytic[t].size()) throw std::invalid_argument("gradient_check: shape mismatch");

    GradientCheckReport report;
    const std::uint64_t base_region = loss().region;
    std::mt19937_64 rng(options.seed);

    for (std::size_t t = 0; t < params.size(); ++t) {
        const std::size_t n = params[t].size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::size_t budget = n;
        if (options.samples_per_tensor && options.samples_per_tensor < n) {
            std::shuffle(order.begin(), order.end(), rng);
            budget = options.samples_per_tensor;
        }
        std::size_t checked_here = 0;
        for (std::size_t idx : order) {
            if (checked_here == budget) break;
            double& x = params[t][idx];
            const double saved = x;
            x = saved + options.step;
            LossProbe plus = loss();
            x = saved - options.step;
            LossProbe minus = loss();
            x = saved;
            if (plus.region != base_region || minus.region != base_region) {
                ++report.skipped_nonsmooth;
                continue;
            }
            ++checked_here;
            ++report.checked;
            const double numeric = (plus.loss - minus.loss) / (2.0 * options.step);
            const double a = analytic[t][idx];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            if (!(rel <= report.max_relative_error)) {
                report.max_relative_error = rel;
                report.worst_tensor = t;
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_relative_error < options.tolerance;
    return report;
}

}  // namespace cbm
