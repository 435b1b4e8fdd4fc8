#include <cmath>
#include <numbers>

#include "tmca/errors.hpp"
#include "tmca/training.hpp"

namespace tmca {

double lr_at(int64_t step, int64_t total_steps, double lr0, double lr_min) {
    if (total_steps < 0 || step < 0 || step > total_steps) {
        throw ConfigError("lr_at: need 0 <= step <= total_steps");
    }
    if (total_steps == 0) return lr0;
    if (step == total_steps) return lr_min;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace tmca
