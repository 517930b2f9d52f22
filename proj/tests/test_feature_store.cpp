#include "cargait/feature_store.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

using namespace cargait;

namespace {

FeatureSet small_set() {
    FeatureSet set{2, 2, Partition::probe, {}};
    set.entries.push_back({"seq_a", "alice", 2, 2, {1.0f, -2.5f, 3.25f, 0.0f}});
    set.entries.push_back({"seq_b", "bob", 2, 2, {0.1f, 0.2f, 0.3f, 0.4f}});
    set.entries.push_back({"seq_c", "alice", 2, 2, {-1e-30f, 1e30f, 7.0f, 8.0f}});
    return set;
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no cargait::Error thrown";
    return ErrorKind::io;
}

} // namespace

TEST(FeatureStore, EmptySetIsHeaderOnly) {
    TempDir dir;
    const FeatureSet set{4, 8, Partition::gallery, {}};
    save_feature_set(set, dir.file("e.gfm"));
    EXPECT_EQ(read_bytes(dir.file("e.gfm")).size(), 16u);
    EXPECT_EQ(load_feature_set(dir.file("e.gfm")), set);
}

TEST(FeatureStore, FileSizeFollowsLayout) {
    TempDir dir;
    const auto set = small_set();
    save_feature_set(set, dir.file("s.gfm"));
    std::size_t expected = 4 + 3 * 4;
    for (const auto& e : set.entries) {
        expected += 2 + e.sequence_id.size() + 2 + e.identity_id.size() + 2 * 2 * 4;
    }
    EXPECT_EQ(read_bytes(dir.file("s.gfm")).size(), expected);
}

TEST(FeatureStore, RoundTripIsBitwise) {
    TempDir dir;
    Rng rng(3);
    auto set = random_set(rng, 5, 3, 4, 6);
    set.entries[0].values[0] = std::numeric_limits<float>::denorm_min();
    set.entries[0].values[1] = -0.0f;
    save_feature_set(set, dir.file("r.gfm"));
    const auto back = load_feature_set(dir.file("r.gfm"));
    ASSERT_EQ(back.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(std::memcmp(back.entries[i].values.data(), set.entries[i].values.data(),
                              set.entries[i].values.size() * sizeof(float)),
                  0);
    }
    EXPECT_EQ(back, set);
}

TEST(FeatureStore, ManifestCarriesPartitionAndIdentities) {
    TempDir dir;
    save_feature_set(small_set(), dir.file("m.gfm"));
    EXPECT_EQ(load_feature_set(dir.file("m.gfm")).partition, Partition::probe);
    const auto ids = load_manifest_identities(manifest_path(dir.file("m.gfm")));
    EXPECT_EQ(ids.at("seq_a"), "alice");
    EXPECT_EQ(ids.at("seq_b"), "bob");
    EXPECT_EQ(ids.size(), 3u);
}

TEST(FeatureStore, WrongMagicIsFormatError) {
    TempDir dir;
    save_feature_set(small_set(), dir.file("m.gfm"));
    auto bytes = read_bytes(dir.file("m.gfm"));
    bytes[3] = '2';
    write_bytes(dir.file("m.gfm"), bytes);
    EXPECT_EQ(kind_of([&] { load_feature_set(dir.file("m.gfm")); }), ErrorKind::format);
}

TEST(FeatureStore, TruncatedPayloadIsDetected) {
    TempDir dir;
    save_feature_set(small_set(), dir.file("t.gfm"));
    auto bytes = read_bytes(dir.file("t.gfm"));
    bytes.resize(bytes.size() - 3);
    write_bytes(dir.file("t.gfm"), bytes);
    EXPECT_EQ(kind_of([&] { load_feature_set(dir.file("t.gfm")); }), ErrorKind::truncated);
}

TEST(FeatureStore, NaNNamesSequenceIndex) {
    TempDir dir;
    save_feature_set(small_set(), dir.file("n.gfm"));
    auto bytes = read_bytes(dir.file("n.gfm"));
    // Second entry: header 16, entry 0 = 2+5+2+5+16 bytes, then entry 1 ids = 2+5+2+3.
    const std::size_t offset = 16 + (2 + 5 + 2 + 5 + 16) + (2 + 5 + 2 + 3) + 4;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + offset, &nan, 4);
    write_bytes(dir.file("n.gfm"), bytes);
    try {
        load_feature_set(dir.file("n.gfm"));
        FAIL() << "expected non_finite";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::non_finite);
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
    }
}

TEST(FeatureStore, DuplicateIdOnLoad) {
    TempDir dir;
    auto set = small_set();
    set.entries[2].sequence_id = "seq_x";
    save_feature_set(set, dir.file("d.gfm"));
    std::filesystem::remove(manifest_path(dir.file("d.gfm")));
    auto bytes = read_bytes(dir.file("d.gfm"));
    // Rename seq_x to seq_a in place (same length).
    const std::string needle = "seq_x";
    auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
    ASSERT_NE(it, bytes.end());
    *(it + 4) = 'a';
    write_bytes(dir.file("d.gfm"), bytes);
    EXPECT_EQ(kind_of([&] { load_feature_set(dir.file("d.gfm")); }), ErrorKind::duplicate_id);
}

TEST(FeatureStore, TrailingBytesAreFormatError) {
    TempDir dir;
    save_feature_set(small_set(), dir.file("x.gfm"));
    auto bytes = read_bytes(dir.file("x.gfm"));
    bytes.push_back(0);
    write_bytes(dir.file("x.gfm"), bytes);
    EXPECT_EQ(kind_of([&] { load_feature_set(dir.file("x.gfm")); }), ErrorKind::format);
}

TEST(FeatureStore, MissingFileIsIoError) {
    EXPECT_EQ(kind_of([] { load_feature_set("/nonexistent/dir/none.gfm"); }), ErrorKind::io);
}

TEST(FeatureStore, ValidateReportsEachRule) {
    EXPECT_TRUE(validate(small_set()).empty());

    auto dup = small_set();
    dup.entries[1].sequence_id = "seq_a";
    const auto v1 = validate(dup);
    ASSERT_EQ(v1.size(), 1u);
    EXPECT_NE(v1[0].find("duplicate"), std::string::npos);

    auto shape = small_set();
    shape.entries[2].d = 3;
    shape.entries[2].values.resize(6);
    const auto v2 = validate(shape);
    ASSERT_EQ(v2.size(), 1u);
    EXPECT_NE(v2[0].find("shape"), std::string::npos);
    EXPECT_NE(v2[0].find("seq_c"), std::string::npos);
}

TEST(FeatureStore, SaveRejectsInconsistentShapeNamingSequence) {
    TempDir dir;
    auto set = small_set();
    set.entries[1].s = 1;
    set.entries[1].values.resize(2);
    try {
        save_feature_set(set, dir.file("bad.gfm"));
        FAIL() << "expected shape error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
        EXPECT_NE(std::string(e.what()).find("seq_b"), std::string::npos);
    }
}

TEST(FeatureStore, SaveRejectsNonFinite) {
    TempDir dir;
    auto set = small_set();
    set.entries[0].values[2] = std::numeric_limits<float>::infinity();
    EXPECT_EQ(kind_of([&] { save_feature_set(set, dir.file("inf.gfm")); }), ErrorKind::invalid_argument);
}

// validate() is empty exactly when the saved form loads.
TEST(FeatureStore, ValidateAgreesWithLoadability) {
    TempDir dir;
    Rng rng(9);
    for (int trial = 0; trial < 40; ++trial) {
        auto set = random_set(rng, 3, 2, 2, 3);
        const int mutation = trial % 4;
        if (mutation == 1) set.entries[1].sequence_id = set.entries[0].sequence_id;
        if (mutation == 2) set.entries[2].values[1] = std::nanf("");
        const bool valid = validate(set).empty();
        EXPECT_EQ(valid, mutation == 0 || mutation == 3);
        if (!valid) {
            EXPECT_THROW(save_feature_set(set, dir.file("v.gfm")), Error);
            continue;
        }
        save_feature_set(set, dir.file("v.gfm"));
        EXPECT_EQ(load_feature_set(dir.file("v.gfm")), set);
    }
}

TEST(FeatureStore, IndexLookupAndMissingFeature) {
    const auto set = small_set();
    FeatureIndex index(set);
    EXPECT_EQ(index.at("seq_b").identity_id, "bob");
    EXPECT_TRUE(index.contains("seq_c"));
    EXPECT_EQ(kind_of([&] { index.at("nope"); }), ErrorKind::missing_feature);
}
