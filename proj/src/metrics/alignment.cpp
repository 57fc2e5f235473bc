#include <algorithm>
#include <cctype>
#include <cstdint>

#include "coevolve/metrics.hpp"

namespace coevolve {

namespace {

// Beyond this many DP cells the LCS falls back to prefix/suffix plus in-order pairing.
constexpr std::size_t kMaxLcsCells = 25'000'000;
constexpr std::size_t kMaxGapCells = 2'500;
constexpr std::size_t kMaxSimilarityChars = 200;

double similarity(const std::string& x, const std::string& y) {
    if (x.empty() && y.empty()) return 1.0;
    const std::size_t n = std::min(x.size(), kMaxSimilarityChars);
    const std::size_t m = std::min(y.size(), kMaxSimilarityChars);
    std::vector<std::uint16_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j)
            cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return 2.0 * prev[m] / static_cast<double>(n + m);
}

// Pairs the lines of one gap, keeping order, maximizing summed similarity.
void pair_gap(const std::vector<KeyedLine>& a, std::size_t a0, std::size_t a1, const std::vector<KeyedLine>& b,
              std::size_t b0, std::size_t b1, LineAlignment& out) {
    const std::size_t n = a1 - a0;
    const std::size_t m = b1 - b0;
    if (n == 0 || m == 0 || n * m > kMaxGapCells) {
        std::size_t k = 0;
        for (; k < std::min(n, m); ++k) out.pairs.push_back({a[a0 + k].line, b[b0 + k].line, false});
        for (std::size_t i = a0 + k; i < a1; ++i) out.dropped.push_back(a[i].line);
        for (std::size_t j = b0 + k; j < b1; ++j) out.inserted.push_back(b[j].line);
        return;
    }
    std::vector<std::vector<double>> s(n + 1, std::vector<double>(m + 1, 0.0));
    for (std::size_t i = n; i-- > 0;)
        for (std::size_t j = m; j-- > 0;)
            s[i][j] = std::max({s[i + 1][j], s[i][j + 1], s[i + 1][j + 1] + similarity(a[a0 + i].key, b[b0 + j].key)});
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double take = s[i + 1][j + 1] + similarity(a[a0 + i].key, b[b0 + j].key);
        if (take >= s[i][j]) {
            out.pairs.push_back({a[a0 + i].line, b[b0 + j].line, false});
            ++i;
            ++j;
        } else if (s[i + 1][j] >= s[i][j + 1]) {
            out.dropped.push_back(a[a0 + i].line);
            ++i;
        } else {
            out.inserted.push_back(b[b0 + j].line);
            ++j;
        }
    }
    for (; i < n; ++i) out.dropped.push_back(a[a0 + i].line);
    for (; j < m; ++j) out.inserted.push_back(b[b0 + j].line);
}

}  // namespace

std::string strip_whitespace(std::string_view text) {
    std::string out;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) out += c;
    return out;
}

std::optional<std::size_t> LineAlignment::partner_of(std::size_t a_line) const {
    for (const auto& p : pairs)
        if (p.a == a_line) return p.b;
    return std::nullopt;
}

LineAlignment align_lines(const std::vector<KeyedLine>& a, const std::vector<KeyedLine>& b) {
    LineAlignment out;
    // Common prefix and suffix first; the LCS runs on what is left.
    std::size_t pre = 0;
    while (pre < a.size() && pre < b.size() && a[pre].key == b[pre].key) ++pre;
    std::size_t suf = 0;
    while (suf < a.size() - pre && suf < b.size() - pre && a[a.size() - 1 - suf].key == b[b.size() - 1 - suf].key)
        ++suf;
    for (std::size_t k = 0; k < pre; ++k) out.pairs.push_back({a[k].line, b[k].line, true});

    const std::size_t a0 = pre, a1 = a.size() - suf;
    const std::size_t b0 = pre, b1 = b.size() - suf;
    const std::size_t n = a1 - a0, m = b1 - b0;
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // absolute indices
    if (n > 0 && m > 0 && (n + 1) * (m + 1) <= kMaxLcsCells) {
        std::vector<std::uint32_t> L((n + 1) * (m + 1), 0);
        auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return L[i * (m + 1) + j]; };
        for (std::size_t i = n; i-- > 0;)
            for (std::size_t j = m; j-- > 0;)
                at(i, j) = a[a0 + i].key == b[b0 + j].key ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
        std::size_t i = 0, j = 0;
        while (i < n && j < m) {
            if (a[a0 + i].key == b[b0 + j].key) {
                matches.emplace_back(a0 + i, b0 + j);
                ++i;
                ++j;
            } else if (at(i + 1, j) >= at(i, j + 1)) {
                ++i;
            } else {
                ++j;
            }
        }
    }
    std::size_t ai = a0, bi = b0;
    for (const auto& [ma, mb] : matches) {
        pair_gap(a, ai, ma, b, bi, mb, out);
        out.pairs.push_back({a[ma].line, b[mb].line, true});
        ai = ma + 1;
        bi = mb + 1;
    }
    pair_gap(a, ai, a1, b, bi, b1, out);
    for (std::size_t k = 0; k < suf; ++k) out.pairs.push_back({a[a1 + k].line, b[b1 + k].line, true});

    std::sort(out.pairs.begin(), out.pairs.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
    return out;
}

}  // namespace coevolve
