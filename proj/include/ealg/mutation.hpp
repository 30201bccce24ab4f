#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string_view>

#include "ealg/rng.hpp"

namespace ealg {

/// Relative selection weights over the edit classes of one DSL. `Edit` is an
/// enum whose enumerators run 0..N-1.
template <class Edit, std::size_t N>
struct MutationWeights {
    static constexpr std::size_t size = N;
    static constexpr double min_weight = 0.25;
    static constexpr double max_weight = 4.0;

    std::array<double, N> values{};

    constexpr MutationWeights() { values.fill(1.0); }

    static constexpr MutationWeights only(Edit e)
    {
        MutationWeights w;
        w.values.fill(0.0);
        w.values[static_cast<std::size_t>(e)] = 1.0;
        return w;
    }

    double& operator[](Edit e) noexcept { return values[static_cast<std::size_t>(e)]; }
    double operator[](Edit e) const noexcept { return values[static_cast<std::size_t>(e)]; }

    Edit draw(Rng& rng) const
    {
        std::discrete_distribution<std::size_t> pick(values.begin(), values.end());
        return static_cast<Edit>(pick(rng));
    }

    friend bool operator==(const MutationWeights&, const MutationWeights&) = default;
};

/// Multiplicative bandit step used by offline reflection: the weight of the
/// edit class that produced a child moves by +-20% depending on whether the
/// child improved on its parent, clamped to [0.25, 4].
inline double bandit_update(double weight, double improvement) noexcept
{
    const double sign = improvement > 0.0 ? 1.0 : (improvement < 0.0 ? -1.0 : 0.0);
    return std::clamp(weight * (1.0 + 0.2 * sign), 0.25, 4.0);
}

/// +-30% perturbation of a real parameter. Values near zero move by 30% of a
/// floor of 5% of the admissible range, so zero-valued parameters can move.
inline double perturb_real(double v, double lo, double hi, Rng& rng)
{
    const double magnitude = 0.3 * std::max(std::abs(v), 0.05 * (hi - lo));
    return std::clamp(v + magnitude * uniform(rng, -1.0, 1.0), lo, hi);
}

inline constexpr int max_mutation_attempts = 16;

} // namespace ealg
