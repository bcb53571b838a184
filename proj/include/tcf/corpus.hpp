#pragma once

// Data ingestion, index maps, evaluation splits and the synthetic generator.

#include "tcf/common.hpp"
#include "tcf/model.hpp"

#include <charconv>
#include <cctype>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tcf {

/// External id <-> dense index, in first-seen order.
class IndexMap {
public:
    Index intern(std::string_view id) {
        auto [it, inserted] = lookup_.try_emplace(std::string(id), static_cast<Index>(ids_.size()));
        if (inserted) ids_.emplace_back(id);
        return it->second;
    }

    std::optional<Index> find(std::string_view id) const {
        auto it = lookup_.find(std::string(id));
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& id(Index index) const { return ids_.at(static_cast<std::size_t>(index)); }
    Index size() const noexcept { return static_cast<Index>(ids_.size()); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    static IndexMap from_ids(const std::vector<std::string>& ids) {
        IndexMap map;
        for (const auto& id : ids)
            if (map.intern(id) != map.size() - 1)
                throw ValidationError("index map: duplicate id '" + id + "'");
        return map;
    }

    bool operator==(const IndexMap& other) const { return ids_ == other.ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, Index> lookup_;
};

struct Rating {
    Index user;
    Index item;
    double value;
    bool operator==(const Rating&) const = default;
};

struct Click {
    Index user;
    Index item;
    bool operator==(const Click&) const = default;
    auto operator<=>(const Click&) const = default;
};

namespace detail {
inline std::uint64_t pair_key(Index a, Index b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}
}  // namespace detail

/// The rating matrix R as triplets over dense indices.
struct RatingDataset {
    Index n_users = 0;
    Index n_items = 0;
    std::vector<Rating> entries;
    IndexMap users;
    IndexMap items;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    /// Same dimensions and index maps, no entries.
    RatingDataset empty_like() const {
        RatingDataset out;
        out.n_users = n_users;
        out.n_items = n_items;
        out.users = users;
        out.items = items;
        return out;
    }

    /// Checks the dataset invariants. Ingested data must be strictly positive
    /// (zero means "unobserved" in rating files); synthetic Gaussian ratings
    /// are only required to be finite.
    void validate(bool require_positive = true) const {
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(entries.size());
        for (const auto& r : entries) {
            if (r.user < 0 || r.user >= n_users || r.item < 0 || r.item >= n_items)
                throw ValidationError("rating index out of range");
            if (!std::isfinite(r.value)) throw ValidationError("non-finite rating");
            if (require_positive && !(r.value > 0.0))
                throw ValidationError("ratings must be strictly positive");
            if (!seen.insert(detail::pair_key(r.user, r.item)).second)
                throw ValidationError("duplicate (user, item) pair");
        }
    }

    double mean() const {
        if (entries.empty()) return 0.0;
        CompensatedSum s;
        for (const auto& r : entries) s.add(r.value);
        return s.value() / static_cast<double>(entries.size());
    }
};

/// The click matrix P as a sorted set of (user, item) pairs.
struct ClickDataset {
    Index n_users = 0;
    Index n_items = 0;
    std::vector<Click> entries;

    std::size_t size() const noexcept { return entries.size(); }

    /// Sorts and removes duplicate pairs.
    void normalize() {
        std::sort(entries.begin(), entries.end());
        entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    }
};

/// One clean bag-of-words row per item, values in [0, 1].
struct DocTermMatrix {
    Index n_items = 0;
    std::vector<std::string> vocab;
    Matrix rows;  // n_items x V
    /// 1 when the item had a document line, 0 for the all-zero placeholder rows.
    std::vector<char> has_text;

    Index vocab_size() const noexcept { return static_cast<Index>(vocab.size()); }
};

enum class SplitMode { in_matrix, out_of_matrix };

inline const char* to_string(SplitMode mode) {
    return mode == SplitMode::in_matrix ? "in_matrix" : "out_of_matrix";
}

inline SplitMode parse_split_mode(std::string_view s) {
    if (s == "in" || s == "in_matrix") return SplitMode::in_matrix;
    if (s == "out" || s == "out_of_matrix") return SplitMode::out_of_matrix;
    throw ConfigError("unknown split mode '" + std::string(s) + "' (expected in|out)");
}

struct EvalSplit {
    RatingDataset train;
    RatingDataset validation;
    RatingDataset test;
    SplitMode mode = SplitMode::in_matrix;
    std::uint64_t seed = 0;
};

/// Per-row adjacency of a sparse matrix: row r owns entries[offsets[r], offsets[r+1]).
struct CompressedRows {
    std::vector<std::size_t> offsets;
    std::vector<Entry> entries;

    Index rows() const noexcept { return static_cast<Index>(offsets.size()) - 1; }
    std::span<const Entry> row(Index r) const {
        const auto b = offsets[static_cast<std::size_t>(r)];
        const auto e = offsets[static_cast<std::size_t>(r) + 1];
        return {entries.data() + b, e - b};
    }
};

/// Groups R by user (entries are (item, rating)) or by item (entries are (user, rating)),
/// preserving the dataset order within each row.
inline CompressedRows compress_ratings(const RatingDataset& data, bool by_user) {
    const Index n = by_user ? data.n_users : data.n_items;
    CompressedRows out;
    out.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& r : data.entries) ++out.offsets[static_cast<std::size_t>(by_user ? r.user : r.item) + 1];
    std::partial_sum(out.offsets.begin(), out.offsets.end(), out.offsets.begin());
    out.entries.resize(data.entries.size());
    std::vector<std::size_t> cursor(out.offsets.begin(), out.offsets.end() - 1);
    for (const auto& r : data.entries) {
        const auto row = static_cast<std::size_t>(by_user ? r.user : r.item);
        out.entries[cursor[row]++] = Entry{by_user ? r.item : r.user, r.value};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

enum class RatingFileFormat {
    whitespace,    // user item rating, separated by spaces or tabs
    double_colon,  // user::item::rating[::timestamp]
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, RatingFileFormat fmt) {
    std::vector<std::string_view> fields;
    if (fmt == RatingFileFormat::double_colon) {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find("::", start);
            fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 2;
        }
        for (auto& f : fields) {
            while (!f.empty() && std::isspace(static_cast<unsigned char>(f.front()))) f.remove_prefix(1);
            while (!f.empty() && std::isspace(static_cast<unsigned char>(f.back()))) f.remove_suffix(1);
        }
        return fields;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

inline bool skippable(std::string_view line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value))
        throw ParseError("invalid number '" + std::string(field) + "'", line_no);
    return value;
}

}  // namespace detail

/// Reads `user item rating` records. Blank lines and lines starting with '#'
/// are skipped. Ids are mapped to dense indices in first-seen order.
inline RatingDataset parse_ratings(std::istream& in, RatingFileFormat format = RatingFileFormat::whitespace) {
    RatingDataset data;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::skippable(line)) continue;
        const auto fields = detail::split_fields(line, format);
        const bool ok = format == RatingFileFormat::whitespace
                            ? fields.size() == 3
                            : (fields.size() == 3 || fields.size() == 4);
        if (!ok || fields[0].empty() || fields[1].empty())
            throw ParseError("expected 'user item rating', got '" + line + "'", line_no);
        const double value = detail::parse_double(fields[2], line_no);
        if (!(value > 0.0))
            throw ValidationError("line " + std::to_string(line_no) + ": rating must be positive");
        const Index u = data.users.intern(fields[0]);
        const Index i = data.items.intern(fields[1]);
        if (!seen.insert(detail::pair_key(u, i)).second)
            throw ValidationError("line " + std::to_string(line_no) + ": duplicate pair (" +
                                  std::string(fields[0]) + ", " + std::string(fields[1]) + ")");
        data.entries.push_back({u, i, value});
    }
    data.n_users = data.users.size();
    data.n_items = data.items.size();
    return data;
}

/// Reads `user item` click records against shared index maps; unseen ids are
/// appended to the maps. Repeated clicks collapse to one pair.
inline ClickDataset parse_clicks(std::istream& in, IndexMap& users, IndexMap& items) {
    ClickDataset clicks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::skippable(line)) continue;
        const auto fields = detail::split_fields(line, RatingFileFormat::whitespace);
        if (fields.size() != 2) throw ParseError("expected 'user item', got '" + line + "'", line_no);
        clicks.entries.push_back({users.intern(fields[0]), items.intern(fields[1])});
    }
    clicks.n_users = users.size();
    clicks.n_items = items.size();
    clicks.normalize();
    return clicks;
}

// ---------------------------------------------------------------------------
// Dataset transforms

inline ClickDataset binarize_ratings(const RatingDataset& ratings) {
    ClickDataset clicks;
    clicks.n_users = ratings.n_users;
    clicks.n_items = ratings.n_items;
    clicks.entries.reserve(ratings.size());
    for (const auto& r : ratings.entries) clicks.entries.push_back({r.user, r.item});
    clicks.normalize();
    return clicks;
}

/// Uniform sample of round(fraction * n) entries without replacement. The
/// kept entries retain their input order. For a fixed seed, samples at
/// increasing fractions are nested.
inline RatingDataset subsample_ratings(const RatingDataset& ratings, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("subsample fraction must lie in (0, 1]");
    const std::size_t n = ratings.size();
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    RatingDataset out = ratings.empty_like();
    out.entries.reserve(keep);
    for (auto idx : order) out.entries.push_back(ratings.entries[idx]);
    return out;
}

namespace detail {
inline void sort_entries(RatingDataset& d) {
    std::sort(d.entries.begin(), d.entries.end(), [](const Rating& a, const Rating& b) {
        return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
}
}  // namespace detail

/// Train/validation/test split. Fractions are of the whole dataset.
///
/// in_matrix: entries are split individually; the first entry of every item
/// and every user (in shuffled order) is pinned to train, so every held-out
/// item and user has at least one training rating.
/// out_of_matrix: rated items are split; all ratings of a held-out item go to
/// its partition, so test items never appear in train or validation.
inline EvalSplit make_split(const RatingDataset& ratings, SplitMode mode, double test_fraction,
                            double validation_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0) || !(validation_fraction >= 0.0) ||
        !(test_fraction + validation_fraction < 1.0))
        throw ConfigError("split fractions must satisfy test > 0, validation >= 0, test + validation < 1");

    EvalSplit split;
    split.mode = mode;
    split.seed = seed;
    split.train = ratings.empty_like();
    split.validation = ratings.empty_like();
    split.test = ratings.empty_like();
    Rng rng(seed);

    if (mode == SplitMode::in_matrix) {
        const std::size_t n = ratings.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<char> item_pinned(static_cast<std::size_t>(ratings.n_items), 0);
        std::vector<char> user_pinned(static_cast<std::size_t>(ratings.n_users), 0);
        std::vector<std::size_t> pinned, candidates;
        for (auto idx : order) {
            const auto& r = ratings.entries[idx];
            const bool first_item = !item_pinned[static_cast<std::size_t>(r.item)];
            const bool first_user = !user_pinned[static_cast<std::size_t>(r.user)];
            item_pinned[static_cast<std::size_t>(r.item)] = 1;
            user_pinned[static_cast<std::size_t>(r.user)] = 1;
            (first_item || first_user ? pinned : candidates).push_back(idx);
        }
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
        const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
        if (n_test == 0 || n_test + n_val > candidates.size())
            throw ConfigError("infeasible in_matrix split: " + std::to_string(candidates.size()) +
                              " movable ratings, need " + std::to_string(n_test + n_val));
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            auto& dst = k < n_test ? split.test : (k < n_test + n_val ? split.validation : split.train);
            dst.entries.push_back(ratings.entries[candidates[k]]);
        }
        for (auto idx : pinned) split.train.entries.push_back(ratings.entries[idx]);
    } else {
        std::vector<char> rated(static_cast<std::size_t>(ratings.n_items), 0);
        for (const auto& r : ratings.entries) rated[static_cast<std::size_t>(r.item)] = 1;
        std::vector<Index> items;
        for (Index i = 0; i < ratings.n_items; ++i)
            if (rated[static_cast<std::size_t>(i)]) items.push_back(i);
        std::shuffle(items.begin(), items.end(), rng);
        const double m = static_cast<double>(items.size());
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * m));
        const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * m));
        if (n_test == 0 || n_test + n_val >= items.size() || (validation_fraction > 0.0 && n_val == 0))
            throw ConfigError("infeasible out_of_matrix split: " + std::to_string(items.size()) +
                              " rated items cannot hold out " + std::to_string(n_test) + " test and " +
                              std::to_string(n_val) + " validation items");
        // 0 train, 1 validation, 2 test
        std::vector<char> part(static_cast<std::size_t>(ratings.n_items), 0);
        for (std::size_t k = 0; k < n_test + n_val; ++k)
            part[static_cast<std::size_t>(items[k])] = k < n_test ? 2 : 1;
        for (const auto& r : ratings.entries) {
            const char p = part[static_cast<std::size_t>(r.item)];
            (p == 2 ? split.test : p == 1 ? split.validation : split.train).entries.push_back(r);
        }
    }
    detail::sort_entries(split.train);
    detail::sort_entries(split.validation);
    detail::sort_entries(split.test);
    return split;
}

// ---------------------------------------------------------------------------
// Bag of words

enum class VocabScoring {
    tfidf,      // sum over documents of count * ln(D / df)
    frequency,  // total count
};

struct BowScheme {
    Index vocab_size = 8000;
    VocabScoring scoring = VocabScoring::tfidf;
};

/// Lowercases ASCII, turns ASCII punctuation into separators and splits on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || (c < 0x80 && std::ispunct(c))) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Projects raw text onto a vocabulary: per-term counts divided by the row's max count.
inline RowVector bow_row(std::string_view text, const std::unordered_map<std::string, Index>& vocab_index,
                         Index vocab_size) {
    RowVector row = RowVector::Zero(vocab_size);
    for (const auto& tok : tokenize(text)) {
        auto it = vocab_index.find(tok);
        if (it != vocab_index.end()) row[it->second] += 1.0;
    }
    const double peak = row.size() > 0 ? row.maxCoeff() : 0.0;
    if (peak > 0.0) row /= peak;
    return row;
}

inline std::unordered_map<std::string, Index> vocab_lookup(const std::vector<std::string>& vocab) {
    std::unordered_map<std::string, Index> index;
    for (std::size_t v = 0; v < vocab.size(); ++v) index.emplace(vocab[v], static_cast<Index>(v));
    return index;
}

/// Reads `item_id<TAB>text` lines. Items without a line get an all-zero row.
inline DocTermMatrix parse_documents(std::istream& in, const IndexMap& items, BowScheme scheme = {}) {
    if (scheme.vocab_size < 1) throw ConfigError("vocab_size must be positive");
    std::vector<std::pair<Index, std::string>> docs;
    std::vector<char> seen(static_cast<std::size_t>(items.size()), 0);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError("expected 'item_id<TAB>text'", line_no);
        const std::string id = line.substr(0, tab);
        const auto index = items.find(id);
        if (!index)
            throw ValidationError("line " + std::to_string(line_no) + ": unknown item id '" + id + "'");
        if (seen[static_cast<std::size_t>(*index)]++)
            throw ValidationError("line " + std::to_string(line_no) + ": second document for item '" + id + "'");
        docs.emplace_back(*index, line.substr(tab + 1));
    }
    if (docs.empty()) throw ValidationError("document corpus is empty");

    std::map<std::string, std::pair<double, double>> stats;  // term -> (total count, document frequency)
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(docs.size());
    for (const auto& [item, text] : docs) {
        tokens.push_back(tokenize(text));
        std::map<std::string, int> counts;
        for (const auto& t : tokens.back()) ++counts[t];
        for (const auto& [t, c] : counts) {
            auto& s = stats[t];
            s.first += c;
            s.second += 1.0;
        }
    }
    const double n_docs = static_cast<double>(docs.size());
    struct Scored {
        std::string term;
        double score;
        double count;
    };
    std::vector<Scored> scored;
    scored.reserve(stats.size());
    for (const auto& [term, s] : stats) {
        const double score = scheme.scoring == VocabScoring::tfidf ? s.first * std::log(n_docs / s.second) : s.first;
        scored.push_back({term, score, s.first});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.count > b.count;  // terms are already in lexical order
    });
    if (static_cast<Index>(scored.size()) > scheme.vocab_size) scored.resize(static_cast<std::size_t>(scheme.vocab_size));

    DocTermMatrix out;
    out.n_items = items.size();
    for (auto& s : scored) out.vocab.push_back(std::move(s.term));
    const auto lookup = vocab_lookup(out.vocab);
    out.rows = Matrix::Zero(out.n_items, out.vocab_size());
    out.has_text.assign(static_cast<std::size_t>(out.n_items), 0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const Index item = docs[d].first;
        out.has_text[static_cast<std::size_t>(item)] = 1;
        RowVector row = RowVector::Zero(out.vocab_size());
        for (const auto& t : tokens[d]) {
            auto it = lookup.find(t);
            if (it != lookup.end()) row[it->second] += 1.0;
        }
        const double peak = row.size() > 0 ? row.maxCoeff() : 0.0;
        if (peak > 0.0) row /= peak;
        out.rows.row(item) = row;
    }
    return out;
}

/// All-zero document matrix for `n_items` items (no text available).
inline DocTermMatrix empty_documents(Index n_items) {
    DocTermMatrix out;
    out.n_items = n_items;
    out.rows = Matrix::Zero(n_items, 0);
    out.has_text.assign(static_cast<std::size_t>(n_items), 0);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Parameters of the synthetic generator. Items carry a latent text topic
/// z_i ~ N(0, I); their text embedding is mu_i = sigmoid(text_spread * z_i),
/// their documents are bags of `doc_length` words drawn from
/// softmax(z_i A) with A ~ N(0, word_sharpness^2).
struct SyntheticConfig {
    Index n_users = 200;
    Index n_items = 300;
    Index latent_dim = 16;
    Index vocab_size = 200;
    double density = 0.02;
    double sigma_r = 0.1;
    double sigma_theta = 1.0;
    double sigma_beta = 0.3;
    double sigma_alpha = 1.0;
    double text_spread = 1.0;
    Index doc_length = 80;
    double word_sharpness = 1.0;
    /// Mean click probability; each click is Bernoulli(sigmoid(logit(click_density) + click_affinity * a))
    /// where a is the standardized affinity theta_u . beta_i.
    double click_density = 0.1;
    double click_affinity = 1.5;

    void validate() const {
        if (n_users < 1 || n_items < 1 || latent_dim < 1 || vocab_size < 1 || doc_length < 0)
            throw ConfigError("synthetic: dimensions must be positive");
        if (!(density > 0.0 && density <= 1.0) || !(click_density >= 0.0 && click_density < 1.0))
            throw ConfigError("synthetic: densities must lie in (0, 1]");
        if (!(sigma_r >= 0.0) || !(sigma_theta > 0.0) || !(sigma_beta >= 0.0) || !(sigma_alpha > 0.0) ||
            !(text_spread > 0.0) || !(word_sharpness >= 0.0))
            throw ConfigError("synthetic: standard deviations must be nonnegative (theta, alpha positive)");
    }
};

struct SyntheticData {
    RatingDataset ratings;
    ClickDataset clicks;
    DocTermMatrix docs;
    /// Ground-truth theta, beta, alpha. No network generated the text, so `sdae` is empty.
    ModelState truth;
    /// The text embedding mu_i each beta_i was drawn around (M x K).
    Matrix text_embedding;
    /// Raw word counts behind `docs.rows` (M x V).
    Matrix doc_counts;
};

/// Samples the joint generative process. Each component draws from its own
/// derived random stream, so e.g. changing click settings leaves ratings unchanged.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Index N = cfg.n_users, M = cfg.n_items, K = cfg.latent_dim, V = cfg.vocab_size;
    SyntheticData out;
    std::normal_distribution<double> std_normal(0.0, 1.0);

    // Text topics, embeddings and documents.
    Rng text_rng(derive_seed(seed, 1));
    Matrix z(M, K);
    fill_normal(z, 1.0, text_rng);
    Matrix words(K, V);
    fill_normal(words, cfg.word_sharpness, text_rng);
    out.text_embedding = (cfg.text_spread * z).unaryExpr([](double v) { return sigmoid(v); });

    out.docs.n_items = M;
    for (Index v = 0; v < V; ++v) out.docs.vocab.push_back("w" + std::to_string(v));
    out.docs.rows = Matrix::Zero(M, V);
    out.doc_counts = Matrix::Zero(M, V);
    out.docs.has_text.assign(static_cast<std::size_t>(M), 1);
    Rng doc_rng(derive_seed(seed, 2));
    for (Index i = 0; i < M; ++i) {
        RowVector logits = z.row(i) * words;
        logits.array() -= logits.maxCoeff();
        RowVector p = logits.array().exp().matrix();
        std::discrete_distribution<Index> pick(p.data(), p.data() + p.size());
        RowVector counts = RowVector::Zero(V);
        for (Index w = 0; w < cfg.doc_length; ++w) counts[pick(doc_rng)] += 1.0;
        out.doc_counts.row(i) = counts;
        const double peak = counts.maxCoeff();
        if (peak > 0.0) counts /= peak;
        out.docs.rows.row(i) = counts;
    }

    // Latent factors.
    Rng factor_rng(derive_seed(seed, 3));
    out.truth.beta = Matrix(M, K);
    fill_normal(out.truth.beta, 1.0, factor_rng);
    out.truth.beta = out.text_embedding + cfg.sigma_beta * out.truth.beta;
    out.truth.theta = Matrix(N, K);
    fill_normal(out.truth.theta, cfg.sigma_theta, factor_rng);
    out.truth.alpha = Matrix(M, K);
    fill_normal(out.truth.alpha, cfg.sigma_alpha, factor_rng);

    // Ratings on a uniform Bernoulli(density) mask.
    out.ratings.n_users = N;
    out.ratings.n_items = M;
    for (Index u = 0; u < N; ++u) out.ratings.users.intern("u" + std::to_string(u));
    for (Index i = 0; i < M; ++i) out.ratings.items.intern("i" + std::to_string(i));
    Rng rating_rng(derive_seed(seed, 4));
    std::bernoulli_distribution observed(cfg.density);
    const Matrix affinity = out.truth.theta * out.truth.beta.transpose();
    for (Index u = 0; u < N; ++u)
        for (Index i = 0; i < M; ++i) {
            if (!observed(rating_rng)) continue;
            const double noise = std_normal(rating_rng);
            out.ratings.entries.push_back({u, i, affinity(u, i) + cfg.sigma_r * noise});
        }

    // Clicks: users click items they have high affinity for more often.
    out.clicks.n_users = N;
    out.clicks.n_items = M;
    if (cfg.click_density > 0.0) {
        const double mean = affinity.mean();
        const double sd = std::sqrt(std::max((affinity.array() - mean).square().mean(), 1e-300));
        const double base = std::log(cfg.click_density / (1.0 - cfg.click_density));
        Rng click_rng(derive_seed(seed, 5));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Index u = 0; u < N; ++u)
            for (Index i = 0; i < M; ++i) {
                const double p = sigmoid(base + cfg.click_affinity * (affinity(u, i) - mean) / sd);
                if (unit(click_rng) < p) out.clicks.entries.push_back({u, i});
            }
    }
    return out;
}

}  // namespace tcf
