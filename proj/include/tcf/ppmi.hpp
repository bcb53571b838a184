#pragma once

// Item-item positive pointwise mutual information from user click histories.
//
// The context of an item clicked by user u is every other item u clicked.
// #(i) counts the users who clicked i, #(i,j) the users who clicked both, and
// |D| is the number of co-clicked pairs summed over users, sum_u c_u(c_u-1)/2.

#include "tcf/common.hpp"
#include "tcf/corpus.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace tcf {

struct PairCount {
    Index first;   // first < second
    Index second;
    std::int64_t count;
};

struct CoCounts {
    Index n_items = 0;
    std::vector<std::int64_t> item_counts;
    /// Sorted by (first, second); only pairs with a nonzero count.
    std::vector<PairCount> pair_counts;
    std::int64_t total_pairs = 0;
};

inline CoCounts cooccurrence_counts(const ClickDataset& clicks) {
    CoCounts counts;
    counts.n_items = clicks.n_items;
    counts.item_counts.assign(static_cast<std::size_t>(clicks.n_items), 0);

    // Group by user; entries are sorted by (user, item) after normalize().
    ClickDataset sorted = clicks;
    sorted.normalize();
    std::unordered_map<std::uint64_t, std::int64_t> pairs;
    std::size_t begin = 0;
    const auto& e = sorted.entries;
    while (begin < e.size()) {
        std::size_t end = begin;
        while (end < e.size() && e[end].user == e[begin].user) ++end;
        const auto c = static_cast<std::int64_t>(end - begin);
        counts.total_pairs += c * (c - 1) / 2;
        for (std::size_t a = begin; a < end; ++a) {
            ++counts.item_counts[static_cast<std::size_t>(e[a].item)];
            for (std::size_t b = a + 1; b < end; ++b) ++pairs[detail::pair_key(e[a].item, e[b].item)];
        }
        begin = end;
    }
    counts.pair_counts.reserve(pairs.size());
    for (const auto& [key, n] : pairs)
        counts.pair_counts.push_back({static_cast<Index>(key >> 32), static_cast<Index>(key & 0xFFFFFFFFULL), n});
    std::sort(counts.pair_counts.begin(), counts.pair_counts.end(), [](const PairCount& a, const PairCount& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
    return counts;
}

/// One stored value s_ij > 0 with i < j.
struct PpmiEntry {
    Index first;
    Index second;
    double value;
};

/// Sparse symmetric PPMI matrix S. Only strictly positive values are stored;
/// the diagonal is always empty.
class PpmiMatrix {
public:
    PpmiMatrix() = default;

    /// Builds from upper-triangle entries (i < j, value > 0), sorted or not.
    PpmiMatrix(Index n_items, std::vector<PpmiEntry> upper) : n_items_(n_items), upper_(std::move(upper)) {
        std::sort(upper_.begin(), upper_.end(), [](const PpmiEntry& a, const PpmiEntry& b) {
            return a.first != b.first ? a.first < b.first : a.second < b.second;
        });
        for (std::size_t k = 0; k < upper_.size(); ++k) {
            const auto& p = upper_[k];
            if (p.first < 0 || p.second >= n_items_ || !(p.first < p.second))
                throw ValidationError("ppmi: entries must satisfy 0 <= i < j < n_items");
            if (!(p.value > 0.0) || !std::isfinite(p.value))
                throw ValidationError("ppmi: stored values must be finite and positive");
            if (k > 0 && upper_[k - 1].first == p.first && upper_[k - 1].second == p.second)
                throw ValidationError("ppmi: duplicate entry");
        }
        rows_.offsets.assign(static_cast<std::size_t>(n_items_) + 1, 0);
        for (const auto& p : upper_) {
            ++rows_.offsets[static_cast<std::size_t>(p.first) + 1];
            ++rows_.offsets[static_cast<std::size_t>(p.second) + 1];
        }
        std::partial_sum(rows_.offsets.begin(), rows_.offsets.end(), rows_.offsets.begin());
        rows_.entries.resize(2 * upper_.size());
        std::vector<std::size_t> cursor(rows_.offsets.begin(), rows_.offsets.end() - 1);
        for (const auto& p : upper_) {
            rows_.entries[cursor[static_cast<std::size_t>(p.first)]++] = Entry{p.second, p.value};
            rows_.entries[cursor[static_cast<std::size_t>(p.second)]++] = Entry{p.first, p.value};
        }
        for (Index i = 0; i < n_items_; ++i) {
            auto b = rows_.entries.begin() + static_cast<std::ptrdiff_t>(rows_.offsets[static_cast<std::size_t>(i)]);
            auto e = rows_.entries.begin() + static_cast<std::ptrdiff_t>(rows_.offsets[static_cast<std::size_t>(i) + 1]);
            std::sort(b, e, [](const Entry& x, const Entry& y) { return x.index < y.index; });
        }
    }

    static PpmiMatrix empty(Index n_items) { return PpmiMatrix(n_items, {}); }

    Index n_items() const noexcept { return n_items_; }
    /// Number of stored (i, j) pairs with i < j.
    std::size_t n_pairs() const noexcept { return upper_.size(); }
    const std::vector<PpmiEntry>& upper() const noexcept { return upper_; }

    /// S_i = {(j, s_ij) : s_ij > 0}, sorted by j. S is symmetric, so this is also column i.
    std::span<const Entry> neighbors(Index i) const { return rows_.row(i); }

    double at(Index i, Index j) const {
        for (const auto& e : neighbors(i))
            if (e.index == j) return e.value;
        return 0.0;
    }

private:
    Index n_items_ = 0;
    std::vector<PpmiEntry> upper_;
    CompressedRows rows_{{0}, {}};
};

/// s_ij = max(ln(#(i,j) |D| / (#(i) #(j))), 0); zeros are not stored.
inline PpmiMatrix build_ppmi(const CoCounts& counts) {
    if (counts.total_pairs <= 0) throw ValidationError("ppmi: no co-click signal (|D| = 0)");
    const double total = static_cast<double>(counts.total_pairs);
    std::vector<PpmiEntry> upper;
    for (const auto& p : counts.pair_counts) {
        if (p.count <= 0) continue;
        const double ci = static_cast<double>(counts.item_counts[static_cast<std::size_t>(p.first)]);
        const double cj = static_cast<double>(counts.item_counts[static_cast<std::size_t>(p.second)]);
        const double pmi = std::log(static_cast<double>(p.count) * total / (ci * cj));
        if (pmi > 0.0) upper.push_back({p.first, p.second, pmi});
    }
    return PpmiMatrix(counts.n_items, std::move(upper));
}

inline PpmiMatrix build_ppmi(const ClickDataset& clicks) { return build_ppmi(cooccurrence_counts(clicks)); }

/// Writes `i j s_ij` lines (i < j) with 17 significant digits.
inline void write_ppmi(std::ostream& out, const PpmiMatrix& s) {
    out << "# ppmi n_items=" << s.n_items() << '\n';
    char buf[64];
    for (const auto& e : s.upper()) {
        std::snprintf(buf, sizeof buf, "%.17g", e.value);
        out << e.first << ' ' << e.second << ' ' << buf << '\n';
    }
}

inline PpmiMatrix read_ppmi(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    Index n_items = -1;
    std::vector<PpmiEntry> upper;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("# ppmi n_items=", 0) == 0) {
            n_items = std::stoll(line.substr(15));
            continue;
        }
        if (detail::skippable(line)) continue;
        const auto f = detail::split_fields(line, RatingFileFormat::whitespace);
        if (f.size() != 3) throw ParseError("expected 'i j s_ij'", line_no);
        const auto i = static_cast<Index>(detail::parse_double(f[0], line_no));
        const auto j = static_cast<Index>(detail::parse_double(f[1], line_no));
        upper.push_back({i, j, detail::parse_double(f[2], line_no)});
    }
    if (n_items < 0) throw ParseError("missing '# ppmi n_items=' header", 1);
    return PpmiMatrix(n_items, std::move(upper));
}

}  // namespace tcf
