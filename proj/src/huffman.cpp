#include "huffman.hpp"

#include <algorithm>
#include <queue>

namespace kprobe::codec::detail {

namespace {

std::vector<std::uint8_t> unlimited_lengths(std::span<const std::uint32_t> freqs) {
    struct Node {
        std::uint64_t weight;
        int index; // tie-break keeps construction deterministic
    };
    auto heavier = [](const Node& a, const Node& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.index > b.index;
    };

    const int n = static_cast<int>(freqs.size());
    std::vector<int> parent;
    parent.reserve(2 * freqs.size());
    std::priority_queue<Node, std::vector<Node>, decltype(heavier)> heap(heavier);
    std::vector<int> leaf_node(freqs.size(), -1);
    for (int s = 0; s < n; ++s) {
        if (freqs[s] == 0) continue;
        leaf_node[s] = static_cast<int>(parent.size());
        heap.push({freqs[s], static_cast<int>(parent.size())});
        parent.push_back(-1);
    }

    std::vector<std::uint8_t> lengths(freqs.size(), 0);
    if (heap.empty()) return lengths;
    if (heap.size() == 1) {
        for (int s = 0; s < n; ++s)
            if (freqs[s] != 0) lengths[s] = 1;
        return lengths;
    }

    while (heap.size() > 1) {
        const Node a = heap.top();
        heap.pop();
        const Node b = heap.top();
        heap.pop();
        const int joined = static_cast<int>(parent.size());
        parent.push_back(-1);
        parent[a.index] = joined;
        parent[b.index] = joined;
        heap.push({a.weight + b.weight, joined});
    }

    for (int s = 0; s < n; ++s) {
        if (leaf_node[s] < 0) continue;
        unsigned depth = 0;
        for (int v = leaf_node[s]; parent[v] >= 0; v = parent[v]) ++depth;
        lengths[s] = static_cast<std::uint8_t>(depth);
    }
    return lengths;
}

} // namespace

std::vector<std::uint8_t> huffman_lengths(std::span<const std::uint32_t> freqs, unsigned max_len) {
    std::vector<std::uint32_t> scaled(freqs.begin(), freqs.end());
    for (;;) {
        auto lengths = unlimited_lengths(scaled);
        if (*std::max_element(lengths.begin(), lengths.end()) <= max_len) return lengths;
        // Flatten the distribution and retry; converges because all used
        // symbols eventually share frequency 1.
        for (auto& f : scaled)
            if (f != 0) f = (f >> 1) | 1u;
    }
}

std::vector<std::uint32_t> canonical_codes(std::span<const std::uint8_t> lengths) {
    unsigned max_len = 0;
    for (auto l : lengths) max_len = std::max<unsigned>(max_len, l);
    std::vector<std::uint32_t> bl_count(max_len + 1, 0);
    for (auto l : lengths)
        if (l) ++bl_count[l];
    std::vector<std::uint32_t> next(max_len + 2, 0);
    std::uint32_t code = 0;
    for (unsigned bits = 1; bits <= max_len; ++bits) {
        code = (code + bl_count[bits - 1]) << 1;
        next[bits] = code;
    }
    std::vector<std::uint32_t> codes(lengths.size(), 0);
    for (std::size_t s = 0; s < lengths.size(); ++s) {
        const unsigned len = lengths[s];
        if (!len) continue;
        std::uint32_t c = next[len]++;
        std::uint32_t rev = 0;
        for (unsigned i = 0; i < len; ++i) {
            rev = (rev << 1) | (c & 1u);
            c >>= 1;
        }
        codes[s] = rev;
    }
    return codes;
}

HuffmanDecoder::HuffmanDecoder(std::span<const std::uint8_t> lengths) {
    unsigned max_len = 0;
    for (auto l : lengths) max_len = std::max<unsigned>(max_len, l);
    count_.assign(max_len + 1, 0);
    for (auto l : lengths) ++count_[l];
    count_[0] = 0;

    int left = 1;
    for (unsigned len = 1; len <= max_len; ++len) {
        left <<= 1;
        left -= count_[len];
        if (left < 0) throw Error(ErrorCode::CorruptData, "over-subscribed Huffman code");
    }

    std::vector<std::uint16_t> offs(max_len + 2, 0);
    for (unsigned len = 1; len <= max_len; ++len) offs[len + 1] = offs[len] + count_[len];
    symbol_.assign(lengths.size(), 0);
    for (std::size_t s = 0; s < lengths.size(); ++s)
        if (lengths[s]) symbol_[offs[lengths[s]]++] = static_cast<std::uint16_t>(s);
}

int HuffmanDecoder::decode(BitReader& in) const {
    int code = 0, first = 0, index = 0;
    for (std::size_t len = 1; len < count_.size(); ++len) {
        code |= static_cast<int>(in.bit());
        const int count = count_[len];
        if (code - count < first) return symbol_[index + (code - first)];
        index += count;
        first += count;
        first <<= 1;
        code <<= 1;
    }
    throw Error(ErrorCode::CorruptData, "invalid Huffman code");
}

} // namespace kprobe::codec::detail
