#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "kf/error.hpp"

namespace kf {

/// Ranking/unranking of multi-indices m in n variables with |m| <= order,
/// in graded lexicographic order: degrees ascend, and within a degree the
/// first variable's exponent descends (so for n=2: (0,0); (1,0),(0,1);
/// (2,0),(1,1),(0,2); ...).  Shared immutable tables are cached per (n, order)
/// because every Jet of the same shape reuses the same layout.
class MultiIndexTable {
public:
    MultiIndexTable(int n, int order) : n_(n), order_(order) {
        if (n < 1 || order < 0)
            throw Error(ErrKind::invalid_input, "multi-index table: need n >= 1, order >= 0");
        build_binomials();
        offsets_.resize(order_ + 2);
        for (int d = 0; d <= order_ + 1; ++d)
            offsets_[d] = static_cast<std::uint32_t>(count_upto(d - 1));
        size_ = count_upto(order_);
        exps_.resize(size_ * n_);
        parent_.resize(size_);
        parent_var_.resize(size_);
        std::vector<int> m(n_, 0);
        enumerate(m, 0, order_);
        maybe_build_product_table();
    }

    int dim() const { return n_; }
    int order() const { return order_; }
    std::size_t size() const { return size_; }

    /// First rank of degree d.
    std::size_t degree_offset(int d) const { return offsets_[d]; }
    /// Number of multi-indices of degree exactly d.
    std::size_t degree_count(int d) const { return offsets_[d + 1] - offsets_[d]; }

    std::span<const std::uint16_t> exponents(std::size_t rank) const {
        return {exps_.data() + rank * n_, static_cast<std::size_t>(n_)};
    }

    int degree_of(std::size_t rank) const {
        int d = 0;
        auto e = exponents(rank);
        for (int i = 0; i < n_; ++i) d += e[i];
        return d;
    }

    /// Rank of m-with-one-exponent-removed (first nonzero variable), used for
    /// incremental monomial evaluation.  parent(0) == 0.
    std::size_t parent(std::size_t rank) const { return parent_[rank]; }
    int parent_var(std::size_t rank) const { return parent_var_[rank]; }

    std::size_t rank(std::span<const int> m) const {
        int d = 0;
        for (int v : m) d += v;
        std::size_t r = offsets_[d];
        int rem = d;
        for (int i = 0; i + 1 < n_; ++i) {
            // entries with exponent(i) > m[i] precede m within this block
            for (int v = rem; v > m[i]; --v)
                r += choose(n_ - 2 - i + (rem - v), rem - v);
            rem -= m[i];
        }
        return r;
    }

    /// Rank of the sum of two multi-indices given by rank; the caller must
    /// ensure deg(a)+deg(b) <= order.
    std::size_t rank_of_sum(std::size_t a, std::size_t b) const {
        if (!prod_.empty()) return prod_[a * size_ + b];
        return rank_sum_direct(a, b);
    }

    std::uint64_t choose(int a, int b) const {
        if (b < 0 || b > a) return 0;
        return binom_[static_cast<std::size_t>(a) * (max_b_ + 1) + b];
    }

    /// Shared cache keyed by (n, order); thread-safe.
    static std::shared_ptr<const MultiIndexTable> get(int n, int order) {
        static std::mutex mu;
        static std::map<std::pair<int, int>, std::shared_ptr<const MultiIndexTable>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto key = std::make_pair(n, order);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto tab = std::make_shared<const MultiIndexTable>(n, order);
        cache.emplace(key, tab);
        return tab;
    }

private:
    void build_binomials() {
        max_a_ = n_ + order_ + 2;
        max_b_ = max_a_;
        binom_.assign(static_cast<std::size_t>(max_a_ + 1) * (max_b_ + 1), 0);
        for (int a = 0; a <= max_a_; ++a) {
            binom_[static_cast<std::size_t>(a) * (max_b_ + 1)] = 1;
            for (int b = 1; b <= a; ++b)
                binom_[static_cast<std::size_t>(a) * (max_b_ + 1) + b] =
                    binom_[static_cast<std::size_t>(a - 1) * (max_b_ + 1) + b - 1] +
                    (b <= a - 1 ? binom_[static_cast<std::size_t>(a - 1) * (max_b_ + 1) + b] : 0);
        }
    }

    std::size_t count_upto(int d) const {
        if (d < 0) return 0;
        return static_cast<std::size_t>(choose(n_ + d, d));
    }

    void enumerate(std::vector<int>& m, int pos, int left) {
        if (pos == n_ - 1) {
            for (int v = 0; v <= left; ++v) {
                m[pos] = v;
                emit(m);
            }
            m[pos] = 0;
            return;
        }
        for (int v = 0; v <= left; ++v) {
            m[pos] = v;
            enumerate(m, pos + 1, left - v);
        }
        m[pos] = 0;
    }

    void emit(const std::vector<int>& m) {
        std::size_t r = rank(std::span<const int>(m.data(), m.size()));
        for (int i = 0; i < n_; ++i)
            exps_[r * n_ + i] = static_cast<std::uint16_t>(m[i]);
        int pv = 0;
        while (pv < n_ && m[pv] == 0) ++pv;
        if (pv == n_) {
            parent_[r] = 0;
            parent_var_[r] = 0;
        } else {
            std::vector<int> p(m);
            p[pv] -= 1;
            parent_[r] = static_cast<std::uint32_t>(rank(std::span<const int>(p.data(), p.size())));
            parent_var_[r] = static_cast<std::uint8_t>(pv);
        }
    }

    std::size_t rank_sum_direct(std::size_t a, std::size_t b) const {
        auto ea = exponents(a), eb = exponents(b);
        std::vector<int> s(n_);
        for (int i = 0; i < n_; ++i) s[i] = ea[i] + eb[i];
        return rank(std::span<const int>(s.data(), s.size()));
    }

    void maybe_build_product_table() {
        if (size_ > 1500) return;  // avoid O(size^2) memory for large shapes
        prod_.assign(size_ * size_, 0);
        for (std::size_t a = 0; a < size_; ++a) {
            int da = degree_of(a);
            for (std::size_t b = 0; b < size_; ++b) {
                if (da + degree_of(b) > order_) break;  // graded order: degrees ascend
                prod_[a * size_ + b] = static_cast<std::uint32_t>(rank_sum_direct(a, b));
            }
        }
    }

    int n_, order_;
    int max_a_ = 0, max_b_ = 0;
    std::size_t size_ = 0;
    std::vector<std::uint64_t> binom_;
    std::vector<std::uint32_t> offsets_;
    std::vector<std::uint16_t> exps_;
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint8_t> parent_var_;
    std::vector<std::uint32_t> prod_;
};

/// Enumerate all multi-indices in n variables with degree bounds
/// lo <= |m| <= hi, graded lexicographic, invoking fn(m).
template <typename Fn>
void for_each_multi_index(int n, int lo, int hi, Fn&& fn) {
    auto tab = MultiIndexTable::get(n, hi);
    std::vector<int> m(n);
    for (std::size_t r = tab->degree_offset(lo); r < tab->size(); ++r) {
        auto e = tab->exponents(r);
        for (int i = 0; i < n; ++i) m[i] = e[i];
        fn(std::span<const int>(m.data(), m.size()));
    }
}

}  // namespace kf
