#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/heuristic_dsl.hpp"
#include "ealg/solvers/exact.hpp"
#include "ealg/solvers/result.hpp"

namespace ealg {

struct GlsParams {
    std::size_t budget_ls_iters = 20000;  // node-neighbourhood scans, summed over all local searches
    double lambda_alpha = 0.1;
    SeedValue seed{};
    std::size_t candidates = 10;          // nearest-neighbour list length for move generation
};

namespace detail {

/// Don't-look-bit local search over an array tour, driven by an augmented
/// cost d + lambda * penalty.
class GlsSearch {
public:
    GlsSearch(const DistanceMatrix& d, const SquareMatrix& guide, std::size_t k)
        : d_(d), guide_(guide), n_(d.size()), aug_(d.matrix()), util_(guide), pos_(n_), pen_(n_ * n_, 0), in_queue_(n_, 0), cand_(n_)
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n_; ++i) {
            idx.resize(n_);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
            const std::size_t m = std::min(k, idx.size());
            std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                              [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b) || (d(i, a) == d(i, b) && a < b); });
            cand_[i].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
        }
    }

    void set_tour(std::vector<std::size_t> t)
    {
        tour_ = std::move(t);
        reindex();
    }
    const std::vector<std::size_t>& tour() const { return tour_; }
    std::size_t steps() const { return steps_; }

    void set_eps(double e) { eps_ = e; }

    void set_lambda(double l)
    {
        lambda_ = l;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) aug_(i, j) = d_(i, j) + lambda_ * pen_[i * n_ + j];
    }

    /// Raw length, maintained incrementally from applied move deltas.
    double raw_length() const { return raw_len_; }
    void set_raw_length(double v) { raw_len_ = v; }

    void push(std::size_t v)
    {
        if (!in_queue_[v]) {
            in_queue_[v] = 1;
            queue_.push_back(v);
        }
    }

    void run(std::size_t budget)
    {
        while (!queue_.empty() && steps_ < budget) {
            const std::size_t a = queue_.front();
            queue_.pop_front();
            in_queue_[a] = 0;
            ++steps_;
            if (improve(a)) push(a);
        }
    }

    /// Penalises the tour edge of maximum utility and re-activates its ends.
    void penalize()
    {
        std::size_t bi = 0, bj = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n_; ++k) {
            std::size_t i = tour_[k], j = tour_[next_pos(k)];
            if (j < i) std::swap(i, j);
            const double u = util_(i, j);
            if (u > best || (u == best && (i < bi || (i == bi && j < bj)))) {
                best = u;
                bi = i;
                bj = j;
            }
        }
        ++pen_[bi * n_ + bj];
        ++pen_[bj * n_ + bi];
        aug_(bi, bj) = d_(bi, bj) + lambda_ * pen_[bi * n_ + bj];
        aug_(bj, bi) = aug_(bi, bj);
        util_(bi, bj) = guide_(bi, bj) / (1.0 + pen_[bi * n_ + bj]);
        push(bi);
        push(bj);
    }

    std::uint32_t penalty(std::size_t i, std::size_t j) const { return pen_[i * n_ + j]; }

private:
    double cost(std::size_t i, std::size_t j) const { return aug_(i, j); }
    std::size_t next_pos(std::size_t k) const { return k + 1 == n_ ? 0 : k + 1; }
    std::size_t prev_pos(std::size_t k) const { return k == 0 ? n_ - 1 : k - 1; }
    std::size_t wrap(std::size_t k) const { return k >= n_ ? k - n_ : k; }
    std::size_t succ(std::size_t v) const { return tour_[next_pos(pos_[v])]; }
    std::size_t pred(std::size_t v) const { return tour_[prev_pos(pos_[v])]; }

    void reindex()
    {
        for (std::size_t k = 0; k < n_; ++k) pos_[tour_[k]] = k;
    }

    // Reverses the cyclic stretch of positions [i..j], or the complementary
    // stretch when that is shorter (same cycle, opposite orientation).
    void reverse_positions(std::size_t i, std::size_t j)
    {
        std::size_t len = wrap(j + n_ - i) + 1;
        if (2 * len > n_) {
            const std::size_t ni = next_pos(j);
            j = prev_pos(i);
            i = ni;
            len = n_ - len;
        }
        for (std::size_t s = 0; s < len / 2; ++s) {
            const std::size_t a = i, b = j;
            std::swap(tour_[a], tour_[b]);
            pos_[tour_[a]] = a;
            pos_[tour_[b]] = b;
            i = next_pos(i);
            j = prev_pos(j);
        }
    }

    bool in_segment(std::size_t v, std::size_t first_pos, std::size_t len) const
    {
        const std::size_t p = pos_[v];
        return (p >= first_pos ? p - first_pos : p + n_ - first_pos) < len;
    }

    bool improve(std::size_t a) { return two_opt(a) || or_opt(a); }

    bool two_opt(std::size_t a)
    {
        if (n_ < 4) return false;
        for (int dir = 0; dir < 2; ++dir) {
            const std::size_t b = dir == 0 ? succ(a) : pred(a);
            const double dab = cost(a, b);
            for (std::size_t c : cand_[a]) {
                if (c == b || dab - cost(a, c) <= eps_) continue;
                const std::size_t dd = dir == 0 ? succ(c) : pred(c);
                if (dd == a) continue;
                const double delta = cost(a, c) + cost(b, dd) - dab - cost(c, dd);
                if (delta < -eps_) {
                    raw_len_ += d_(a, c) + d_(b, dd) - d_(a, b) - d_(c, dd);
                    if (dir == 0) reverse_positions(pos_[b], pos_[c]);
                    else reverse_positions(pos_[c], pos_[b]);
                    push(b);
                    push(c);
                    push(dd);
                    return true;
                }
            }
        }
        return false;
    }

    bool or_opt(std::size_t a)
    {
        for (std::size_t len = 1; len <= 3; ++len) {
            if (n_ < len + 3) break;
            // segments starting at `a`; both insertion orientations are tried
            if (try_move_segment(pos_[a], len)) return true;
        }
        return false;
    }

    bool try_move_segment(std::size_t first_pos, std::size_t len)
    {
        const std::size_t s1 = tour_[first_pos];
        const std::size_t s2 = tour_[wrap(first_pos + len - 1)];
        const std::size_t p = tour_[prev_pos(first_pos)], q = tour_[wrap(first_pos + len)];
        const double removal = cost(p, s1) + cost(s2, q) - cost(p, q);
        if (removal <= eps_) return false;
        for (std::size_t end = 0; end < (len == 1 ? 1U : 2U); ++end) {
            const std::size_t x = end == 0 ? s1 : s2;
            for (std::size_t c : cand_[x]) {
                if (removal - cost(x, c) <= eps_ || in_segment(c, first_pos, len)) continue;
                // the two insertions that make x adjacent to c
                for (int side = 0; side < 2; ++side) {
                    const std::size_t u = side == 0 ? c : pred(c);
                    const std::size_t v = side == 0 ? succ(c) : c;
                    if (in_segment(u, first_pos, len) || in_segment(v, first_pos, len)) continue;
                    const bool reversed = (side == 0) == (end == 1);
                    const std::size_t head = reversed ? s2 : s1, tail = reversed ? s1 : s2;
                    const double delta = cost(u, head) + cost(tail, v) - cost(u, v) - removal;
                    if (delta < -eps_) {
                        raw_len_ += d_(u, head) + d_(tail, v) - d_(u, v) - (d_(p, s1) + d_(s2, q) - d_(p, q));
                        move_segment(first_pos, len, u, reversed);
                        for (std::size_t w : {p, q, s1, s2, u, v}) push(w);
                        return true;
                    }
                }
            }
        }
        return false;
    }

    void move_segment(std::size_t first_pos, std::size_t len, std::size_t u, bool reversed)
    {
        std::size_t seg[3];
        for (std::size_t k = 0; k < len; ++k) seg[k] = tour_[wrap(first_pos + k)];
        if (reversed) std::reverse(seg, seg + len);
        // shift the stretch between the segment and u, then drop the segment in
        const std::size_t pu = pos_[u];
        const std::size_t after = wrap(first_pos + len);
        const std::size_t before = prev_pos(first_pos);
        if (wrap(pu + n_ - after) < wrap(before + n_ - pu)) {
            // u lies ahead: pull nodes (after..u) back by len
            std::size_t src = after, dst = first_pos;
            for (;;) {
                const std::size_t w = tour_[src];
                tour_[dst] = w;
                pos_[w] = dst;
                dst = next_pos(dst);
                if (w == u) break;
                src = next_pos(src);
            }
            for (std::size_t k = 0; k < len; ++k) {
                tour_[dst] = seg[k];
                pos_[seg[k]] = dst;
                dst = next_pos(dst);
            }
        } else {
            // u lies behind: push nodes (succ(u)..before) forward by len
            std::size_t src = before, dst = wrap(first_pos + len - 1);
            const std::size_t stop = tour_[next_pos(pu)];
            for (;;) {
                const std::size_t w = tour_[src];
                tour_[dst] = w;
                pos_[w] = dst;
                dst = prev_pos(dst);
                if (w == stop) break;
                src = prev_pos(src);
            }
            for (std::size_t k = len; k-- > 0;) {
                tour_[dst] = seg[k];
                pos_[seg[k]] = dst;
                dst = prev_pos(dst);
            }
        }
    }

    const DistanceMatrix& d_;
    const SquareMatrix& guide_;
    std::size_t n_;
    SquareMatrix aug_;
    SquareMatrix util_;  // guide / (1 + penalty), read on the upper triangle only
    std::vector<std::size_t> tour_;
    std::vector<std::size_t> pos_;
    std::vector<std::uint32_t> pen_;
    std::vector<std::uint8_t> in_queue_;
    std::deque<std::size_t> queue_;
    std::vector<std::vector<std::size_t>> cand_;
    double lambda_ = 0.0;
    double eps_ = 0.0;
    double raw_len_ = 0.0;
    std::size_t steps_ = 0;
};

/// First-improvement 2-opt over all pairs on raw distances, until no move
/// improves by more than eps.
inline void full_two_opt(const DistanceMatrix& d, std::vector<std::size_t>& t, double eps)
{
    const std::size_t n = t.size();
    if (n < 4) return;
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 2 < n; ++i) {
            for (std::size_t j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;
                const std::size_t a = t[i], b = t[i + 1], c = t[j], e = t[(j + 1) % n];
                const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if (delta < -eps) {
                    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i + 1), t.begin() + static_cast<std::ptrdiff_t>(j + 1));
                    improved = true;
                }
            }
        }
    }
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// Guided local search with a precomputed guide matrix.
inline SolveResult solve_gls(const Instance& inst, const DistanceMatrix& d, const SquareMatrix& guide, const GlsParams& params)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("solve_gls requires a TSP instance");
    if (!(params.lambda_alpha > 0.0) || params.candidates == 0) throw InstanceError("GLS parameters must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = inst.size();
    Rng rng = make_rng(params.seed);
    std::vector<std::size_t> start = nearest_neighbor_order(d, uniform_index(rng, n));
    const double nn_cost = tour_cost(d, start);

    SolveResult res;
    if (params.budget_ls_iters == 0 || n < 4) {
        res.best = Tour{start, nn_cost};
        res.cost_or_prize = nn_cost;
        res.trace = {nn_cost};
        res.wall_ms = detail::elapsed_ms(t0);
        return res;
    }

    detail::GlsSearch ls(d, guide, params.candidates);
    // scale-relative tolerance keeps the search invariant under uniform scaling
    const double eps = 1e-12 * nn_cost;
    ls.set_eps(eps);
    ls.set_tour(start);
    ls.set_raw_length(nn_cost);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t v : order) ls.push(v);

    ls.run(params.budget_ls_iters);
    std::vector<std::size_t> best = ls.tour();
    double best_cost = tour_cost(d, best);
    res.trace.push_back(best_cost);
    ls.set_lambda(params.lambda_alpha * best_cost / static_cast<double>(n));

    ls.set_raw_length(best_cost);
    while (ls.steps() < params.budget_ls_iters) {
        ls.penalize();
        ls.run(params.budget_ls_iters);
        // the tracked length only screens candidates; the exact cost decides
        if (ls.raw_length() < best_cost * (1.0 + 1e-9)) {
            const double c = tour_cost(d, ls.tour());
            ls.set_raw_length(c);
            if (c < best_cost) {
                best_cost = c;
                best = ls.tour();
            }
        }
        res.trace.push_back(best_cost);
    }

    detail::full_two_opt(d, best, eps);
    const double final_cost = tour_cost(d, best);
    if (final_cost < res.trace.back()) res.trace.push_back(final_cost);
    res.best = Tour{std::move(best), final_cost};
    res.cost_or_prize = final_cost;
    res.evaluations = ls.steps();
    res.wall_ms = detail::elapsed_ms(t0);
    return res;
}

inline SolveResult solve_gls(const Instance& inst, const HeuristicProgram& guide, const GlsParams& params)
{
    if (guide.target != HeuristicTarget::gls_guide) throw TypeError("solve_gls requires a gls_guide program");
    const DistanceMatrix d = distance_matrix(inst);
    return solve_gls(inst, d, interpret(guide, inst, d), params);
}

} // namespace ealg
