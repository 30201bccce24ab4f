#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ealg {

struct SeedValue {
    std::uint64_t value = 0;

    friend auto operator<=>(const SeedValue&, const SeedValue&) = default;
};

using Rng = std::mt19937_64;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Records every seed derivation and every generator construction while
/// installed. Tests use it to prove that all randomness in a run descends from
/// the master seed (or from an explicitly declared fixed seed).
class RngAudit {
public:
    struct Derivation {
        std::uint64_t parent;
        std::string label;
        std::uint64_t child;
    };

    void on_derive(std::uint64_t parent, std::string_view label, std::uint64_t child)
    {
        std::lock_guard lock(mutex_);
        derivations_.push_back({parent, std::string(label), child});
    }

    void on_root(std::uint64_t seed, std::string_view label)
    {
        std::lock_guard lock(mutex_);
        roots_.push_back({0, std::string(label), seed});
    }

    void on_engine(std::uint64_t seed)
    {
        std::lock_guard lock(mutex_);
        engines_.push_back(seed);
    }

    std::vector<Derivation> derivations() const
    {
        std::lock_guard lock(mutex_);
        return derivations_;
    }
    std::vector<Derivation> roots() const
    {
        std::lock_guard lock(mutex_);
        return roots_;
    }
    std::vector<std::uint64_t> engines() const
    {
        std::lock_guard lock(mutex_);
        return engines_;
    }

    static std::atomic<RngAudit*>& current() noexcept
    {
        static std::atomic<RngAudit*> instance{nullptr};
        return instance;
    }

private:
    mutable std::mutex mutex_;
    std::vector<Derivation> derivations_;
    std::vector<Derivation> roots_;
    std::vector<std::uint64_t> engines_;
};

/// Installs an audit for the lifetime of the guard.
class ScopedRngAudit {
public:
    explicit ScopedRngAudit(RngAudit& audit) : previous_(RngAudit::current().exchange(&audit)) {}
    ~ScopedRngAudit() { RngAudit::current().store(previous_); }
    ScopedRngAudit(const ScopedRngAudit&) = delete;
    ScopedRngAudit& operator=(const ScopedRngAudit&) = delete;

private:
    RngAudit* previous_;
};

/// Child seed for a labelled sub-stream. Pure function of (parent, label).
inline SeedValue derive_seed(SeedValue parent, std::string_view label)
{
    const std::uint64_t child = splitmix64(parent.value ^ splitmix64(fnv1a64(label)));
    if (auto* audit = RngAudit::current().load()) {
        audit->on_derive(parent.value, label, child);
    }
    return {child};
}

/// `base + offset`, recorded as a derivation so batch seeds stay auditable.
inline SeedValue offset_seed(SeedValue base, std::uint64_t offset)
{
    const SeedValue child{base.value + offset};
    if (auto* audit = RngAudit::current().load()) {
        audit->on_derive(base.value, "+" + std::to_string(offset), child.value);
    }
    return child;
}

/// Declares a constant seed as a legitimate root (e.g. the reference solver's
/// fixed restart seeds, or a user-supplied master seed).
inline SeedValue root_seed(std::uint64_t value, std::string_view label)
{
    if (auto* audit = RngAudit::current().load()) {
        audit->on_root(value, label);
    }
    return {value};
}

inline Rng make_rng(SeedValue seed)
{
    if (auto* audit = RngAudit::current().load()) {
        audit->on_engine(seed.value);
    }
    return Rng(seed.value);
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

} // namespace ealg
