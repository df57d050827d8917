#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace demp {

enum class ScheduleKind { OneCycle, Constant, WarmupOnly, DecayOnly };

/// Scalar schedule shared by the regularization strength and the noise
/// variance: linear warmup to `peak` over the first ceil(rho*T) steps,
/// cosine decay back to zero afterwards (OneCycle), plus the ablation shapes.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Constant;
    double peak = 0.0;
    std::uint64_t total_steps = 1;
    double warmup_fraction = 0.1;

    ScheduleSpec() = default;
    ScheduleSpec(ScheduleKind k, double p, std::uint64_t T, double rho = 0.1)
        : kind(k), peak(p), total_steps(T), warmup_fraction(rho) {
        if (p < 0.0) throw std::invalid_argument("schedule: peak must be >= 0");
        if (T < 1) throw std::invalid_argument("schedule: total_steps must be >= 1");
        const bool uses_warmup = k == ScheduleKind::OneCycle || k == ScheduleKind::WarmupOnly;
        if (uses_warmup && (rho <= 0.0 || rho >= 1.0))
            throw std::invalid_argument("schedule: warmup_fraction must be in (0,1)");
    }
};

inline double value_at(const ScheduleSpec& spec, std::uint64_t t) {
    const std::uint64_t T = spec.total_steps;
    if (t > T) throw std::out_of_range("schedule: step index beyond total_steps");
    const auto td = static_cast<double>(t);
    const auto warm = static_cast<double>(
        static_cast<std::uint64_t>(std::ceil(spec.warmup_fraction * static_cast<double>(T))));
    switch (spec.kind) {
        case ScheduleKind::Constant:
            return spec.peak;
        case ScheduleKind::OneCycle:
            if (td <= warm) return spec.peak * (warm > 0.0 ? td / warm : 1.0);
            return spec.peak * 0.5 *
                   (1.0 + std::cos(M_PI * (td - warm) / (static_cast<double>(T) - warm)));
        case ScheduleKind::WarmupOnly:
            return td <= warm ? spec.peak * (warm > 0.0 ? td / warm : 1.0) : spec.peak;
        case ScheduleKind::DecayOnly:
            return spec.peak * 0.5 * (1.0 + std::cos(M_PI * td / static_cast<double>(T)));
    }
    return 0.0;
}

}  // namespace demp
