#include "tcf/corpus.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace tcf;

namespace {

RatingDataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_ratings(in);
}

RatingDataset grid_ratings(Index users, Index items, std::size_t n) {
    RatingDataset d;
    d.n_users = users;
    d.n_items = items;
    for (std::size_t k = 0; k < n; ++k)
        d.entries.push_back({static_cast<Index>(k % users), static_cast<Index>(k / users), 1.0 + double(k % 9)});
    return d;
}

std::set<std::pair<Index, Index>> pairs_of(const ClickDataset& c) {
    std::set<std::pair<Index, Index>> s;
    for (const auto& e : c.entries) s.insert({e.user, e.item});
    return s;
}

}  // namespace

TEST(ParseRatings, EmptyStream) {
    const auto d = parse("");
    EXPECT_EQ(d.size(), 0u);
    EXPECT_EQ(d.n_users, 0);
    EXPECT_EQ(d.n_items, 0);
}

TEST(ParseRatings, ThreeLines) {
    const auto d = parse("u1 i1 4\nu1 i2 7\nu2 i1 9\n");
    EXPECT_EQ(d.n_users, 2);
    EXPECT_EQ(d.n_items, 2);
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.entries[2].user, 1);
    EXPECT_EQ(d.entries[2].item, 0);
    EXPECT_DOUBLE_EQ(d.entries[2].value, 9.0);
}

TEST(ParseRatings, DuplicatePairRejected) { EXPECT_THROW(parse("u1 i1 4\nu1 i1 4\n"), ValidationError); }

TEST(ParseRatings, MalformedLineReportsLineNumber) {
    try {
        parse("u1 i1 4\nu2 i2 notanumber\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ParseRatings, NonPositiveRejected) { EXPECT_THROW(parse("u1 i1 0\n"), ValidationError); }

TEST(ParseRatings, DoubleColonFormat) {
    std::istringstream in("7::100::8\n7::101::3\n");
    const auto d = parse_ratings(in, RatingFileFormat::double_colon);
    EXPECT_EQ(d.size(), 2u);
    EXPECT_EQ(d.items.id(1), "101");
}

TEST(ParseRatings, ReindexRoundTrip) {
    const auto d = parse("alice m1 3\nbob m2 5\ncarol m1 2\nalice m3 1\n");
    for (const auto& id : d.users.ids()) EXPECT_EQ(d.users.id(*d.users.find(id)), id);
    for (Index i = 0; i < d.items.size(); ++i) EXPECT_EQ(*d.items.find(d.items.id(i)), i);
}

TEST(Binarize, Empty) { EXPECT_EQ(binarize_ratings(RatingDataset{}).size(), 0u); }

TEST(Binarize, Definition) {
    const auto d = parse("u1 i1 4\nu2 i3 9\n");
    const auto c = binarize_ratings(d);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.entries[0], (Click{0, 0}));
    EXPECT_EQ(c.entries[1], (Click{1, 1}));
}

TEST(Binarize, CardinalityPreserved) {
    const auto d = grid_ratings(1000, 700, 630000);
    EXPECT_EQ(binarize_ratings(d).size(), 630000u);
}

TEST(Subsample, IdentityAtOne) {
    const auto d = grid_ratings(20, 30, 300);
    EXPECT_EQ(subsample_ratings(d, 1.0, 5).entries, d.entries);
}

TEST(Subsample, HalfCardinalityAndDeterminism) {
    const auto d = grid_ratings(1000, 700, 630000);
    const auto a = subsample_ratings(d, 0.5, 42);
    const auto b = subsample_ratings(d, 0.5, 42);
    EXPECT_EQ(a.size(), 315000u);
    EXPECT_EQ(a.entries, b.entries);
}

TEST(Subsample, ClicksOfSubsetAreSubset) {
    const auto d = grid_ratings(40, 50, 1500);
    const auto all = pairs_of(binarize_ratings(d));
    for (double f : {0.1, 0.37, 0.8}) {
        for (const auto& p : pairs_of(binarize_ratings(subsample_ratings(d, f, 9)))) EXPECT_TRUE(all.count(p));
    }
}

TEST(Subsample, NestedAcrossFractions) {
    const auto d = grid_ratings(40, 50, 1500);
    const auto small = binarize_ratings(subsample_ratings(d, 0.2, 3));
    const auto large = pairs_of(binarize_ratings(subsample_ratings(d, 0.5, 3)));
    for (const auto& p : pairs_of(small)) EXPECT_TRUE(large.count(p));
}

TEST(MakeSplit, OutOfMatrixHoldsOutTwoOfTenItems) {
    const auto d = grid_ratings(12, 10, 120);
    const auto s = make_split(d, SplitMode::out_of_matrix, 0.2, 0.0, 17);
    // independent scan
    std::set<Index> train_items, test_items;
    for (const auto& r : s.train.entries) train_items.insert(r.item);
    for (const auto& r : s.test.entries) test_items.insert(r.item);
    EXPECT_EQ(test_items.size(), 2u);
    EXPECT_EQ(train_items.size(), 8u);
    for (Index i : test_items) EXPECT_EQ(train_items.count(i), 0u);
    std::size_t expected = 0;
    for (const auto& r : d.entries) expected += test_items.count(r.item);
    EXPECT_EQ(s.test.size(), expected);
}

TEST(MakeSplit, InMatrixEveryTestItemAndUserHasTrainRatings) {
    const auto d = grid_ratings(30, 40, 700);
    const auto s = make_split(d, SplitMode::in_matrix, 0.2, 0.1, 4);
    std::set<Index> train_items, train_users;
    for (const auto& r : s.train.entries) {
        train_items.insert(r.item);
        train_users.insert(r.user);
    }
    for (const auto& r : s.test.entries) {
        EXPECT_TRUE(train_items.count(r.item));
        EXPECT_TRUE(train_users.count(r.user));
    }
}

TEST(MakeSplit, PartitionAndDeterminism) {
    const auto d = grid_ratings(30, 40, 700);
    for (auto mode : {SplitMode::in_matrix, SplitMode::out_of_matrix}) {
        const auto a = make_split(d, mode, 0.2, 0.1, 8);
        const auto b = make_split(d, mode, 0.2, 0.1, 8);
        EXPECT_EQ(a.train.entries, b.train.entries);
        EXPECT_EQ(a.test.entries, b.test.entries);
        std::multiset<std::pair<Index, Index>> got, want;
        for (const auto* part : {&a.train, &a.validation, &a.test})
            for (const auto& r : part->entries) got.insert({r.user, r.item});
        for (const auto& r : d.entries) want.insert({r.user, r.item});
        EXPECT_EQ(got, want);
        if (mode == SplitMode::out_of_matrix) {
            std::set<Index> seen;
            for (const auto* part : {&a.train, &a.validation})
                for (const auto& r : part->entries) seen.insert(r.item);
            for (const auto& r : a.test.entries) EXPECT_EQ(seen.count(r.item), 0u);
        }
    }
}

TEST(MakeSplit, InfeasibleIsStructuredError) {
    const auto d = grid_ratings(3, 2, 6);
    EXPECT_THROW(make_split(d, SplitMode::out_of_matrix, 0.2, 0.0, 1), ConfigError);
}

TEST(ParseDocuments, CountOverMax) {
    IndexMap items;
    items.intern("i1");
    std::istringstream in("i1\ta a b\n");
    const auto docs = parse_documents(in, items, BowScheme{2, VocabScoring::frequency});
    ASSERT_EQ(docs.vocab, (std::vector<std::string>{"a", "b"}));
    EXPECT_DOUBLE_EQ(docs.rows(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(docs.rows(0, 1), 0.5);
}

TEST(ParseDocuments, NoVocabularyTermsGivesZeroRow) {
    IndexMap items;
    items.intern("i1");
    items.intern("i2");
    std::istringstream in("i1\tx x x y\ni2\tz\n");
    const auto docs = parse_documents(in, items, BowScheme{2, VocabScoring::frequency});
    EXPECT_EQ(docs.rows.row(1).squaredNorm(), 0.0);
}

TEST(ParseDocuments, IdenticalDocumentsIdenticalRows) {
    IndexMap items;
    for (auto id : {"a", "b", "c"}) items.intern(id);
    std::istringstream in("a\tThe cat, the hat!\nb\tThe cat, the hat!\nc\tThe cat, the hat!\n");
    const auto docs = parse_documents(in, items);
    EXPECT_EQ(docs.rows.row(0), docs.rows.row(1));
    EXPECT_EQ(docs.rows.row(1), docs.rows.row(2));
}

TEST(ParseDocuments, UnknownItemAndEmptyCorpus) {
    IndexMap items;
    items.intern("a");
    std::istringstream unknown("zzz\tsome words\n");
    EXPECT_THROW(parse_documents(unknown, items), ValidationError);
    std::istringstream empty("");
    EXPECT_THROW(parse_documents(empty, items), Error);
}

TEST(ParseDocuments, TokenizerLowercasesAndStripsPunctuation) {
    EXPECT_EQ(tokenize("Hello, WORLD!it's"), (std::vector<std::string>{"hello", "world", "it", "s"}));
}

TEST(Synthetic, ZeroNoiseRatingsAreExactDotProducts) {
    SyntheticConfig cfg;
    cfg.sigma_r = 0.0;
    const auto s = generate_synthetic(cfg, 3);
    for (const auto& r : s.ratings.entries)
        EXPECT_NEAR(r.value, s.truth.theta.row(r.user).dot(s.truth.beta.row(r.item)), 1e-12);
}

TEST(Synthetic, Deterministic) {
    SyntheticConfig cfg;
    const auto a = generate_synthetic(cfg, 5), b = generate_synthetic(cfg, 5);
    EXPECT_EQ(a.ratings.entries, b.ratings.entries);
    EXPECT_EQ(a.clicks.entries, b.clicks.entries);
    EXPECT_EQ(a.docs.rows, b.docs.rows);
    EXPECT_EQ(a.truth.theta, b.truth.theta);
}

TEST(Synthetic, RatingCountWithinThreeSigma) {
    SyntheticConfig cfg;  // N=200, M=300, K=16, density 0.02
    const double n = 200.0 * 300.0, p = 0.02;
    const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto s = generate_synthetic(cfg, seed);
        EXPECT_NEAR(static_cast<double>(s.ratings.size()), mean, 3 * sd);
    }
}
