#include <algorithm>
#include <numeric>

#include "kprobe/codec.hpp"

namespace kprobe::codec {

namespace {

// Stable counting sort of `order` by key(order[i]); keys lie in [0, range).
template <class Key>
void counting_sort(std::vector<std::uint32_t>& order, std::vector<std::uint32_t>& scratch,
                   std::vector<std::uint32_t>& buckets, std::size_t range, Key key) {
    buckets.assign(range + 1, 0);
    for (auto i : order) ++buckets[key(i) + 1];
    for (std::size_t r = 1; r <= range; ++r) buckets[r] += buckets[r - 1];
    scratch.resize(order.size());
    for (auto i : order) scratch[buckets[key(i)]++] = i;
    order.swap(scratch);
}

} // namespace

std::vector<std::uint32_t> sort_rotations(std::span<const std::uint32_t> symbols) {
    const std::size_t n = symbols.size();
    std::vector<std::uint32_t> order(n);
    if (n == 0) return order;
    std::iota(order.begin(), order.end(), 0u);

    // Initial ranks: dense relabelling of the symbol values.
    std::vector<std::uint32_t> rank(n);
    {
        std::vector<std::uint32_t> values(symbols.begin(), symbols.end());
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t i = 0; i < n; ++i)
            rank[i] = static_cast<std::uint32_t>(std::lower_bound(values.begin(), values.end(), symbols[i]) - values.begin());
    }

    std::vector<std::uint32_t> scratch, buckets, next_rank(n);
    std::size_t classes = *std::max_element(rank.begin(), rank.end()) + 1;
    counting_sort(order, scratch, buckets, classes, [&](std::uint32_t i) { return rank[i]; });

    for (std::size_t k = 1; classes < n && k < n; k <<= 1) {
        // Sort by (rank[i], rank[i+k]): second key first, then stable by first.
        counting_sort(order, scratch, buckets, classes, [&](std::uint32_t i) { return rank[(i + k) % n]; });
        counting_sort(order, scratch, buckets, classes, [&](std::uint32_t i) { return rank[i]; });

        std::uint32_t c = 0;
        next_rank[order[0]] = 0;
        for (std::size_t r = 1; r < n; ++r) {
            const auto a = order[r - 1], b = order[r];
            if (rank[a] != rank[b] || rank[(a + k) % n] != rank[(b + k) % n]) ++c;
            next_rank[b] = c;
        }
        rank.swap(next_rank);
        classes = std::size_t{c} + 1;
    }
    return order;
}

std::vector<std::uint32_t> suffix_array(std::span<const std::uint8_t> text) {
    // A unique smallest sentinel turns rotation order into suffix order.
    std::vector<std::uint32_t> symbols(text.size() + 1);
    for (std::size_t i = 0; i < text.size(); ++i) symbols[i] = std::uint32_t{text[i]} + 1;
    symbols.back() = 0;
    auto order = sort_rotations(symbols);
    order.erase(order.begin()); // the sentinel rotation sorts first
    return order;
}

std::vector<std::uint32_t> longest_previous_factor(std::span<const std::uint8_t> text) {
    const std::size_t n = text.size();
    std::vector<std::uint32_t> lpf(n, 0);
    if (n == 0) return lpf;

    const auto sa = suffix_array(text);
    std::vector<std::uint32_t> inv(n);
    for (std::size_t r = 0; r < n; ++r) inv[sa[r]] = static_cast<std::uint32_t>(r);

    // Kasai: lcp[r] = lcp(sa[r-1], sa[r]).
    std::vector<std::uint32_t> lcp(n, 0);
    for (std::size_t i = 0, h = 0; i < n; ++i) {
        if (inv[i] == 0) {
            h = 0;
            continue;
        }
        const std::size_t j = sa[inv[i] - 1];
        while (i + h < n && j + h < n && text[i + h] == text[j + h]) ++h;
        lcp[inv[i]] = static_cast<std::uint32_t>(h);
        if (h > 0) --h;
    }

    // The best earlier occurrence of suffix i is its nearest neighbour in
    // suffix order with a smaller text position, on either side. A stack of
    // ranks with increasing positions yields both neighbours in one sweep;
    // each entry carries the lcp with the entry directly above it.
    struct Entry {
        std::uint32_t rank;
        std::uint32_t lcp_above;
    };
    std::vector<Entry> stack;
    stack.reserve(n);
    std::vector<std::uint32_t> prev_lcp(n, 0), next_lcp(n, 0);
    constexpr std::uint32_t kInf = ~std::uint32_t{0};
    for (std::size_t r = 0; r < n; ++r) {
        if (!stack.empty()) stack.back().lcp_above = lcp[r];
        std::uint32_t m = kInf;
        while (!stack.empty() && sa[stack.back().rank] > sa[r]) {
            m = std::min(m, stack.back().lcp_above);
            next_lcp[sa[stack.back().rank]] = m;
            stack.pop_back();
        }
        if (!stack.empty()) {
            m = std::min(m, stack.back().lcp_above);
            prev_lcp[sa[r]] = m;
            stack.back().lcp_above = m;
        }
        stack.push_back({static_cast<std::uint32_t>(r), 0});
    }
    for (std::size_t i = 0; i < n; ++i) lpf[i] = std::max(prev_lcp[i], next_lcp[i]);
    return lpf;
}

} // namespace kprobe::codec
