#pragma once

// Internal helpers shared by the translation units; not installed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "lipfilter/grid.hpp"

namespace lipfilter::detail {

/// Multi-indices of every node, laid out node-major (dim ints per node).
class IndexTable {
public:
    explicit IndexTable(const GridSpec& g)
        : dim_(g.dim()), m_(g.points_per_axis()), torus_(g.is_torus()), h_(g.spacing()) {
        idx_.resize(g.node_count() * static_cast<std::size_t>(dim_));
        for (std::size_t t = 0; t < g.node_count(); ++t) {
            const auto mi = g.multi_index(t);
            std::copy(mi.begin(), mi.end(), idx_.begin() + static_cast<long>(t * dim_));
        }
    }

    /// Squared integer length of the (minimal-image) offset between nodes.
    long sq_steps(std::size_t a, std::size_t b) const {
        const int* ia = &idx_[a * dim_];
        const int* ib = &idx_[b * dim_];
        long sq = 0;
        for (int k = 0; k < dim_; ++k) {
            int d = ib[k] - ia[k];
            if (torus_) {
                if (d < 0) d = -d;
                if (d > m_ - d) d = m_ - d;
            }
            sq += static_cast<long>(d) * d;
        }
        return sq;
    }

    double distance(std::size_t a, std::size_t b) const {
        return h_ * std::sqrt(static_cast<double>(sq_steps(a, b)));
    }

    int index(std::size_t node, int axis) const { return idx_[node * dim_ + axis]; }

private:
    int dim_;
    int m_;
    bool torus_;
    double h_;
    std::vector<int> idx_;
};

/// Sum of values in ascending order, so that the result only depends on the
/// multiset of summands.
inline double canonical_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double v : terms) s += v;
    return s;
}

/// Static partition of [0, count) across hardware threads.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(hw, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace lipfilter::detail
