#include <algorithm>
#include <array>
#include <cstring>

#include "bitio.hpp"
#include "huffman.hpp"
#include "kprobe/codec.hpp"

namespace kprobe::codec {

using detail::BitReader;
using detail::BitWriter;
using detail::HuffmanDecoder;

namespace {

constexpr std::size_t kWindow = 32768;
constexpr unsigned kMinMatch = 3;
constexpr unsigned kMaxMatch = 258;
constexpr unsigned kHashBits = 15;
constexpr std::size_t kMaxBlockTokens = 16384;
constexpr unsigned kEndOfBlock = 256;
constexpr unsigned kLitLenSymbols = 286;
constexpr unsigned kDistSymbols = 30;

constexpr std::array<std::uint16_t, 29> kLengthBase{
    3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31,
    35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr std::array<std::uint8_t, 29> kLengthExtra{
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr std::array<std::uint16_t, 30> kDistBase{
    1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193,
    257, 385, 513, 769, 1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577};
constexpr std::array<std::uint8_t, 30> kDistExtra{
    0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
constexpr std::array<std::uint8_t, 19> kCodeLengthOrder{
    16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15};

// Match search parameters per effort level, after zlib's configuration table.
struct SearchConfig {
    unsigned good;  // shorten the chain once a match this long is in hand
    unsigned lazy;  // do not look ahead once a match this long is found
    unsigned nice;  // stop searching at this length
    unsigned chain; // maximum chain links followed
    bool lazy_eval;
};

constexpr std::array<SearchConfig, 10> kSearch{{
    {0, 0, 0, 0, false},
    {4, 4, 8, 4, false},
    {4, 5, 16, 8, false},
    {4, 6, 32, 32, false},
    {4, 4, 16, 16, true},
    {8, 16, 32, 32, true},
    {8, 16, 128, 128, true},
    {8, 32, 128, 256, true},
    {32, 128, 258, 1024, true},
    {32, 258, 258, 4096, true},
}};

struct Token {
    std::uint16_t value; // literal byte, or match length when dist > 0
    std::uint16_t dist;
};

unsigned length_symbol(unsigned len) {
    unsigned code = 0;
    while (code + 1 < kLengthBase.size() && kLengthBase[code + 1] <= len) ++code;
    return code;
}

unsigned dist_symbol(unsigned dist) {
    unsigned code = 0;
    while (code + 1 < kDistBase.size() && kDistBase[code + 1] <= dist) ++code;
    return code;
}

struct SymbolTables {
    std::array<std::uint8_t, kMaxMatch + 1> len_code{};
    SymbolTables() {
        for (unsigned l = kMinMatch; l <= kMaxMatch; ++l) len_code[l] = static_cast<std::uint8_t>(length_symbol(l));
    }
};

const SymbolTables& tables() {
    static const SymbolTables t;
    return t;
}

class Matcher {
public:
    Matcher(std::span<const std::uint8_t> in, const SearchConfig& cfg)
        : in_(in), cfg_(cfg), head_(std::size_t{1} << kHashBits, -1), prev_(in.size(), -1) {}

    void insert(std::size_t pos) {
        if (pos + kMinMatch > in_.size()) return;
        const std::uint32_t h = hash(pos);
        prev_[pos] = head_[h];
        head_[h] = static_cast<std::int32_t>(pos);
    }

    // Longest match at `pos` against earlier positions. Requires pos already inserted.
    std::pair<unsigned, unsigned> longest(std::size_t pos, unsigned prev_len) const {
        const std::size_t avail = std::min<std::size_t>(kMaxMatch, in_.size() - pos);
        if (avail < kMinMatch) return {0, 0};
        unsigned chain = cfg_.chain;
        if (prev_len >= cfg_.good) chain >>= 2;
        unsigned best_len = 0, best_dist = 0;
        const std::uint8_t* cur = in_.data() + pos;
        for (std::int32_t cand = prev_[pos]; cand >= 0 && chain-- > 0; cand = prev_[cand]) {
            const std::size_t dist = pos - static_cast<std::size_t>(cand);
            if (dist > kWindow) break;
            const std::uint8_t* ref = in_.data() + cand;
            if (ref[best_len] != cur[best_len] || ref[0] != cur[0]) continue;
            unsigned len = 0;
            while (len < avail && ref[len] == cur[len]) ++len;
            if (len > best_len) {
                best_len = len;
                best_dist = static_cast<unsigned>(dist);
                if (len >= cfg_.nice || len == avail) break;
            }
        }
        if (best_len < kMinMatch) return {0, 0};
        return {best_len, best_dist};
    }

private:
    std::uint32_t hash(std::size_t pos) const {
        const std::uint32_t v = (std::uint32_t{in_[pos]} << 16) | (std::uint32_t{in_[pos + 1]} << 8) | in_[pos + 2];
        return (v * 2654435761u) >> (32 - kHashBits);
    }

    std::span<const std::uint8_t> in_;
    SearchConfig cfg_;
    std::vector<std::int32_t> head_;
    std::vector<std::int32_t> prev_;
};

std::vector<Token> tokenize(std::span<const std::uint8_t> in, int effort) {
    std::vector<Token> tokens;
    tokens.reserve(in.size() / 2 + 16);
    if (effort == 0) {
        for (auto b : in) tokens.push_back({b, 0});
        return tokens;
    }
    const SearchConfig& cfg = kSearch[static_cast<std::size_t>(effort)];
    Matcher m(in, cfg);
    std::size_t pos = 0;
    const std::size_t n = in.size();

    if (!cfg.lazy_eval) {
        while (pos < n) {
            m.insert(pos);
            auto [len, dist] = m.longest(pos, 0);
            if (len >= kMinMatch) {
                tokens.push_back({static_cast<std::uint16_t>(len), static_cast<std::uint16_t>(dist)});
                for (std::size_t k = 1; k < len; ++k) m.insert(pos + k);
                pos += len;
            } else {
                tokens.push_back({in[pos], 0});
                ++pos;
            }
        }
        return tokens;
    }

    // Lazy evaluation: defer a match by one byte when the next position
    // yields a strictly longer one.
    m.insert(0);
    auto cur = m.longest(0, 0);
    while (pos < n) {
        if (cur.first >= kMinMatch && cur.first < cfg.lazy && pos + 1 < n) {
            m.insert(pos + 1);
            auto next = m.longest(pos + 1, cur.first);
            if (next.first > cur.first) {
                tokens.push_back({in[pos], 0});
                ++pos;
                cur = next;
                continue;
            }
            // pos+1 already inserted; insert the rest of the match below.
            tokens.push_back({static_cast<std::uint16_t>(cur.first), static_cast<std::uint16_t>(cur.second)});
            for (std::size_t k = 2; k < cur.first; ++k) m.insert(pos + k);
            pos += cur.first;
        } else if (cur.first >= kMinMatch) {
            tokens.push_back({static_cast<std::uint16_t>(cur.first), static_cast<std::uint16_t>(cur.second)});
            for (std::size_t k = 1; k < cur.first; ++k) m.insert(pos + k);
            pos += cur.first;
        } else {
            tokens.push_back({in[pos], 0});
            ++pos;
        }
        if (pos < n) {
            m.insert(pos);
            cur = m.longest(pos, 0);
        }
    }
    return tokens;
}

struct CodeSet {
    std::vector<std::uint8_t> lit_len;
    std::vector<std::uint8_t> dist;
};

const CodeSet& fixed_codes() {
    static const CodeSet c = [] {
        CodeSet s;
        s.lit_len.assign(288, 8);
        for (int i = 144; i < 256; ++i) s.lit_len[i] = 9;
        for (int i = 256; i < 280; ++i) s.lit_len[i] = 7;
        s.dist.assign(30, 5);
        return s;
    }();
    return c;
}

struct Frequencies {
    std::vector<std::uint32_t> lit_len = std::vector<std::uint32_t>(kLitLenSymbols, 0);
    std::vector<std::uint32_t> dist = std::vector<std::uint32_t>(kDistSymbols, 0);
};

Frequencies count(std::span<const Token> tokens) {
    Frequencies f;
    const auto& t = tables();
    for (const auto& tok : tokens) {
        if (tok.dist == 0) {
            ++f.lit_len[tok.value];
        } else {
            ++f.lit_len[257 + t.len_code[tok.value]];
            ++f.dist[dist_symbol(tok.dist)];
        }
    }
    ++f.lit_len[kEndOfBlock];
    return f;
}

std::uint64_t token_bits(const Frequencies& f, const CodeSet& c) {
    std::uint64_t bits = 0;
    for (unsigned s = 0; s < kLitLenSymbols; ++s) {
        if (!f.lit_len[s]) continue;
        bits += std::uint64_t{f.lit_len[s]} * c.lit_len[s];
        if (s > 256) bits += std::uint64_t{f.lit_len[s]} * kLengthExtra[s - 257];
    }
    for (unsigned s = 0; s < kDistSymbols; ++s)
        bits += std::uint64_t{f.dist[s]} * (c.dist[s] + kDistExtra[s]);
    return bits;
}

struct DynamicHeader {
    CodeSet codes;
    unsigned nlit = 257, ndist = 1, nclen = 4;
    std::vector<std::uint8_t> clen_lengths; // 19 entries
    std::vector<std::pair<std::uint8_t, std::uint8_t>> rle; // (symbol, extra value)
    std::uint64_t bits = 0;
};

DynamicHeader build_dynamic(Frequencies f) {
    DynamicHeader h;
    // Keep at least two distance codes so every inflater accepts the tree.
    unsigned used_dist = 0;
    for (auto v : f.dist) used_dist += v != 0;
    if (used_dist < 2) {
        if (!f.dist[0]) f.dist[0] = 1;
        if (!f.dist[1]) f.dist[1] = 1;
    }
    h.codes.lit_len = detail::huffman_lengths(f.lit_len, 15);
    h.codes.dist = detail::huffman_lengths(f.dist, 15);

    h.nlit = kLitLenSymbols;
    while (h.nlit > 257 && h.codes.lit_len[h.nlit - 1] == 0) --h.nlit;
    h.ndist = kDistSymbols;
    while (h.ndist > 1 && h.codes.dist[h.ndist - 1] == 0) --h.ndist;

    std::vector<std::uint8_t> all(h.codes.lit_len.begin(), h.codes.lit_len.begin() + h.nlit);
    all.insert(all.end(), h.codes.dist.begin(), h.codes.dist.begin() + h.ndist);

    std::vector<std::uint32_t> clen_freq(19, 0);
    for (std::size_t i = 0; i < all.size();) {
        const std::uint8_t v = all[i];
        std::size_t run = 1;
        while (i + run < all.size() && all[i + run] == v) ++run;
        if (v == 0) {
            std::size_t left = run;
            while (left >= 11) {
                const auto r = std::min<std::size_t>(left, 138);
                h.rle.push_back({18, static_cast<std::uint8_t>(r - 11)});
                left -= r;
            }
            if (left >= 3) {
                h.rle.push_back({17, static_cast<std::uint8_t>(left - 3)});
                left = 0;
            }
            while (left-- > 0) h.rle.push_back({0, 0});
        } else {
            h.rle.push_back({v, 0});
            std::size_t left = run - 1;
            while (left >= 3) {
                const auto r = std::min<std::size_t>(left, 6);
                h.rle.push_back({16, static_cast<std::uint8_t>(r - 3)});
                left -= r;
            }
            while (left-- > 0) h.rle.push_back({v, 0});
        }
        i += run;
    }
    for (auto [sym, extra] : h.rle) ++clen_freq[sym];
    h.clen_lengths = detail::huffman_lengths(clen_freq, 7);
    h.nclen = 19;
    while (h.nclen > 4 && h.clen_lengths[kCodeLengthOrder[h.nclen - 1]] == 0) --h.nclen;

    h.bits = 5 + 5 + 4 + 3ull * h.nclen;
    for (auto [sym, extra] : h.rle) {
        h.bits += h.clen_lengths[sym];
        h.bits += sym == 16 ? 2 : sym == 17 ? 3 : sym == 18 ? 7 : 0;
    }
    return h;
}

void write_tokens(BitWriter& out, std::span<const Token> tokens, const CodeSet& c) {
    const auto lit_codes = detail::canonical_codes(c.lit_len);
    const auto dist_codes = detail::canonical_codes(c.dist);
    const auto& t = tables();
    for (const auto& tok : tokens) {
        if (tok.dist == 0) {
            out.put(lit_codes[tok.value], c.lit_len[tok.value]);
            continue;
        }
        const unsigned lc = t.len_code[tok.value];
        out.put(lit_codes[257 + lc], c.lit_len[257 + lc]);
        if (kLengthExtra[lc]) out.put(tok.value - kLengthBase[lc], kLengthExtra[lc]);
        const unsigned dc = dist_symbol(tok.dist);
        out.put(dist_codes[dc], c.dist[dc]);
        if (kDistExtra[dc]) out.put(tok.dist - kDistBase[dc], kDistExtra[dc]);
    }
    out.put(lit_codes[kEndOfBlock], c.lit_len[kEndOfBlock]);
}

void write_stored(BitWriter& out, std::span<const std::uint8_t> raw, bool final) {
    std::size_t pos = 0;
    do {
        const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
        const bool last = final && pos + len == raw.size();
        out.put(last ? 1 : 0, 1);
        out.put(0, 2);
        out.align_to_byte();
        out.put(static_cast<std::uint32_t>(len), 16);
        out.put(static_cast<std::uint32_t>(~len & 0xFFFF), 16);
        out.put_byte_aligned(raw.subspan(pos, len));
        pos += len;
    } while (pos < raw.size());
}

void write_block(BitWriter& out, std::span<const Token> tokens, std::span<const std::uint8_t> raw, bool final) {
    const Frequencies f = count(tokens);
    const DynamicHeader dyn = build_dynamic(f);
    const std::uint64_t dynamic_bits = 3 + dyn.bits + token_bits(f, dyn.codes);
    const std::uint64_t fixed_bits = 3 + token_bits(f, fixed_codes());
    const std::uint64_t chunks = std::max<std::uint64_t>(1, (raw.size() + 65534) / 65535);
    const std::uint64_t stored_bits = chunks * (3 + 7 + 32) + 8ull * raw.size();

    if (stored_bits <= dynamic_bits && stored_bits <= fixed_bits) {
        write_stored(out, raw, final);
        return;
    }
    out.put(final ? 1 : 0, 1);
    if (fixed_bits <= dynamic_bits) {
        out.put(1, 2);
        write_tokens(out, tokens, fixed_codes());
        return;
    }
    out.put(2, 2);
    out.put(dyn.nlit - 257, 5);
    out.put(dyn.ndist - 1, 5);
    out.put(dyn.nclen - 4, 4);
    for (unsigned i = 0; i < dyn.nclen; ++i) out.put(dyn.clen_lengths[kCodeLengthOrder[i]], 3);
    const auto clen_codes = detail::canonical_codes(dyn.clen_lengths);
    for (auto [sym, extra] : dyn.rle) {
        out.put(clen_codes[sym], dyn.clen_lengths[sym]);
        if (sym == 16) out.put(extra, 2);
        else if (sym == 17) out.put(extra, 3);
        else if (sym == 18) out.put(extra, 7);
    }
    write_tokens(out, tokens, dyn.codes);
}

} // namespace

Bytes deflate_compress(std::span<const std::uint8_t> input, int effort) {
    effort = std::clamp(effort, kDeflateMinEffort, kDeflateMaxEffort);
    BitWriter out;
    if (input.empty()) {
        out.put(1, 1);
        out.put(1, 2);
        out.put(0, 7); // end-of-block in the fixed code is seven zero bits
        return out.finish();
    }
    const std::vector<Token> tokens = tokenize(input, effort);
    std::size_t tok_begin = 0, raw_begin = 0;
    while (tok_begin < tokens.size()) {
        const std::size_t tok_end = std::min(tokens.size(), tok_begin + kMaxBlockTokens);
        std::size_t raw_len = 0;
        for (std::size_t i = tok_begin; i < tok_end; ++i) raw_len += tokens[i].dist ? tokens[i].value : 1;
        write_block(out, std::span(tokens).subspan(tok_begin, tok_end - tok_begin),
                    input.subspan(raw_begin, raw_len), tok_end == tokens.size());
        tok_begin = tok_end;
        raw_begin += raw_len;
    }
    return out.finish();
}

namespace {

void inflate_codes(BitReader& in, Bytes& out, const HuffmanDecoder& lit, const HuffmanDecoder& dist) {
    for (;;) {
        const int sym = lit.decode(in);
        if (sym < 256) {
            out.push_back(static_cast<std::uint8_t>(sym));
            continue;
        }
        if (sym == 256) return;
        const int lc = sym - 257;
        if (lc >= 29) throw Error(ErrorCode::CorruptData, "invalid length symbol");
        const unsigned len = kLengthBase[lc] + in.get(kLengthExtra[lc]);
        const int dc = dist.decode(in);
        if (dc >= 30) throw Error(ErrorCode::CorruptData, "invalid distance symbol");
        const std::size_t d = kDistBase[dc] + in.get(kDistExtra[dc]);
        if (d > out.size()) throw Error(ErrorCode::CorruptData, "distance beyond output start");
        const std::size_t from = out.size() - d;
        for (unsigned k = 0; k < len; ++k) out.push_back(out[from + k]);
    }
}

} // namespace

Bytes deflate_decompress(std::span<const std::uint8_t> stream) {
    BitReader in(stream);
    Bytes out;
    bool last = false;
    while (!last) {
        last = in.bit() != 0;
        const unsigned type = in.get(2);
        if (type == 0) {
            in.align_to_byte();
            const unsigned len = in.get(16);
            const unsigned nlen = in.get(16);
            if ((len ^ 0xFFFFu) != nlen) throw Error(ErrorCode::CorruptData, "stored length mismatch");
            const std::size_t at = in.byte_position();
            if (at + len > stream.size()) throw Error(ErrorCode::CorruptData, "stored block truncated");
            out.insert(out.end(), stream.begin() + at, stream.begin() + at + len);
            in.skip_bytes(len);
        } else if (type == 1) {
            static const HuffmanDecoder lit(fixed_codes().lit_len);
            static const HuffmanDecoder dist(fixed_codes().dist);
            inflate_codes(in, out, lit, dist);
        } else if (type == 2) {
            const unsigned nlit = in.get(5) + 257;
            const unsigned ndist = in.get(5) + 1;
            const unsigned nclen = in.get(4) + 4;
            if (nlit > 286 || ndist > 30) throw Error(ErrorCode::CorruptData, "bad code counts");
            std::vector<std::uint8_t> clen(19, 0);
            for (unsigned i = 0; i < nclen; ++i) clen[kCodeLengthOrder[i]] = static_cast<std::uint8_t>(in.get(3));
            const HuffmanDecoder clen_dec(clen);
            std::vector<std::uint8_t> lengths;
            while (lengths.size() < nlit + ndist) {
                const int sym = clen_dec.decode(in);
                if (sym < 16) {
                    lengths.push_back(static_cast<std::uint8_t>(sym));
                    continue;
                }
                std::uint8_t value = 0;
                unsigned repeat = 0;
                if (sym == 16) {
                    if (lengths.empty()) throw Error(ErrorCode::CorruptData, "repeat with no previous length");
                    value = lengths.back();
                    repeat = 3 + in.get(2);
                } else if (sym == 17) {
                    repeat = 3 + in.get(3);
                } else {
                    repeat = 11 + in.get(7);
                }
                if (lengths.size() + repeat > nlit + ndist) throw Error(ErrorCode::CorruptData, "too many lengths");
                lengths.insert(lengths.end(), repeat, value);
            }
            const HuffmanDecoder lit(std::span<const std::uint8_t>(lengths).first(nlit));
            const HuffmanDecoder dist(std::span<const std::uint8_t>(lengths).subspan(nlit));
            inflate_codes(in, out, lit, dist);
        } else {
            throw Error(ErrorCode::CorruptData, "reserved block type");
        }
    }
    return out;
}

} // namespace kprobe::codec
