#include <doctest.h>

#include <fstream>
#include <sstream>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"
#include "test_support.hpp"

using namespace incgate;
using test::fixture;
using test::vectors_for;

namespace {

const DiscretizationConfig kConfig{};

FeatureVector individual(const std::string& host) {
    return individual_features(fixture().host(host), kConfig);
}

}  // namespace

// Expected values below were frozen from an independent oracle script
// (entropy/ratio computations run outside this codebase) before the
// extractor was written.
TEST_CASE("string features match the frozen oracle values") {
    FeatureVector aaaa = individual("aaaa.com");
    // H("aaaa.com") = 2 bits over 8 chars, H_max = log2(8) = 3.
    CHECK(continuous_values(fixture().host("aaaa.com")).entropy ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(aaaa.entropy_bin == 6);
    CHECK(aaaa.non_alpha_bin == 1);     // 1/8
    CHECK(aaaa.unique_chars_bin == 1);  // 5/38
    CHECK(aaaa.char_freq_bin == 2);     // 1/5 distinct
    CHECK(aaaa.length_bin == 0);        // 8/253

    FeatureVector google = individual("google.com");
    CHECK(continuous_values(fixture().host("google.com")).entropy ==
          doctest::Approx(0.7966576245).epsilon(1e-9));
    CHECK(google.entropy_bin == 7);
    CHECK(google.non_alpha_bin == 1);
    CHECK(google.unique_chars_bin == 1);
    CHECK(google.char_freq_bin == 1);
    CHECK(google.length_bin == 0);

    FeatureVector deep = individual("a.b.dyndns.org");
    CHECK(continuous_values(fixture().host("a.b.dyndns.org")).entropy ==
          doctest::Approx(0.8357523477).epsilon(1e-9));
    CHECK(deep.entropy_bin == 8);
    CHECK(deep.non_alpha_bin == 2);
    CHECK(deep.unique_chars_bin == 2);

    FeatureVector www = individual("www.google.com");
    CHECK(www.entropy_bin == 7);
    CHECK(www.unique_chars_bin == 2);
}

TEST_CASE("IP and extension hosts take the top string bin") {
    for (const char* raw : {"4.2.2.4", "192.168.0.1", "2607:f0d0::4", "ext:abcdefgh"}) {
        FeatureVector f = individual(raw);
        CAPTURE(raw);
        CHECK(f.non_alpha_bin == kConfig.bins - 1);
        CHECK(f.unique_chars_bin == kConfig.bins - 1);
        CHECK(f.char_freq_bin == kConfig.bins - 1);
        CHECK(f.length_bin == kConfig.bins - 1);
        CHECK(f.entropy_bin == kConfig.bins - 1);
        CHECK_FALSE(f.alexa_bin.has_value());
        CHECK_FALSE(f.role_ad);
        CHECK_FALSE(f.role_cdn);
        CHECK_FALSE(f.role_short);
    }
}

TEST_CASE("alexa rank 1 lands in the lowest bin") {
    FeatureVector f = individual("google.com");
    REQUIRE(f.alexa_bin.has_value());
    CHECK(*f.alexa_bin == 0);
    CHECK_FALSE(individual("nowhere.example").alexa_bin.has_value());
}

TEST_CASE("level feature uses the 126 normalization") {
    CHECK(individual("www.google.com").level_bin == 0);  // 2/126
    std::string deep;
    for (int i = 0; i < 126; ++i) deep += "a.";
    deep += "b";  // level 126 -> normalized 1.0
    CHECK(individual(deep).level_bin == kConfig.bins - 1);
}

TEST_CASE("binning is monotone with pinned endpoints") {
    DiscretizationConfig config;
    CHECK(config.bin(0.0) == 0);
    CHECK(config.bin(1.0) == config.bins - 1);
    CHECK(config.bin(-0.5) == 0);
    CHECK(config.bin(1.5) == config.bins - 1);
    hmm::detail::Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        double x = rng.next_double();
        double y = rng.next_double();
        if (x > y) std::swap(x, y);
        CHECK(config.bin(x) <= config.bin(y));
    }
    DiscretizationConfig bad;
    bad.bins = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("relative TLD transitions cover all fifteen values") {
    auto rel_tld_of = [](const std::string& parent, const std::string& child) {
        return vectors_for({parent, child})[1].rel_tld;
    };
    CHECK(vectors_for({"a.com"})[0].rel_tld == RelTld::none);
    CHECK(rel_tld_of("ext:abcdefgh", "x.de") == RelTld::got_tld);
    CHECK(rel_tld_of("x.us", "4.2.2.4") == RelTld::lost_tld);
    CHECK(rel_tld_of("x.org", "y.de") == RelTld::gen_to_cc);
    CHECK(rel_tld_of("x.org", "y.info") == RelTld::gen_to_other);
    CHECK(rel_tld_of("x.uk", "y.com") == RelTld::cc_to_gen);
    CHECK(rel_tld_of("x.uk", "y.biz") == RelTld::cc_to_other);
    CHECK(rel_tld_of("x.info", "y.net") == RelTld::other_to_gen);
    CHECK(rel_tld_of("x.info", "y.uk") == RelTld::other_to_cc);
    CHECK(rel_tld_of("x.com", "y.com") == RelTld::same_gen);
    CHECK(rel_tld_of("x.de", "y.de") == RelTld::same_cc);
    CHECK(rel_tld_of("x.info", "y.info") == RelTld::same_other);
    CHECK(rel_tld_of("x.com", "y.org") == RelTld::diff_gen);
    CHECK(rel_tld_of("x.de", "y.cn") == RelTld::diff_cc);
    CHECK(rel_tld_of("x.info", "y.biz") == RelTld::diff_other);
}

TEST_CASE("subdomain and punycode categories fold before comparison") {
    auto rel_tld_of = [](const std::string& parent, const std::string& child) {
        return vectors_for({parent, child})[1].rel_tld;
    };
    // gen-subdomain folds to gen, cc-subdomain and cc-int fold to cc.
    CHECK(rel_tld_of("shop.us.com", "y.org") == RelTld::diff_gen);
    CHECK(rel_tld_of("x.co.uk", "y.de") == RelTld::diff_cc);
    CHECK(rel_tld_of("x.co.uk", "y.ac.uk") == RelTld::same_cc);
    CHECK(rel_tld_of("x.xn--p1ai", "y.de") == RelTld::diff_cc);
    // Two hosts with no TLD information at all.
    CHECK(rel_tld_of("4.2.2.4", "8.8.8.8") == RelTld::none);
}

TEST_CASE("relative type transitions cover all seven values") {
    auto rel_type_of = [](const std::string& parent, const std::string& child) {
        return vectors_for({parent, child})[1].rel_type;
    };
    CHECK(vectors_for({"a.com"})[0].rel_type == RelType::none);
    CHECK(rel_type_of("w.google.com", "ad.google.com") == RelType::same_site);
    CHECK(rel_type_of("1.dyndns.org", "2.dyndns.org") == RelType::same_sld);
    CHECK(rel_type_of("ad.google.com", "www.google.de") == RelType::same_company);
    CHECK(rel_type_of("bbc.co.uk", "london.co.uk") == RelType::same_eff_tld);
    CHECK(rel_type_of("bbc.co.uk", "london.uk") == RelType::same_tld);
    CHECK(rel_type_of("google.com", "facebook.net") == RelType::different);
    // Cross-kind pairs have nothing in common.
    CHECK(rel_type_of("google.com", "4.2.2.4") == RelType::different);
    CHECK(rel_type_of("ext:abcdefgh", "g.com") == RelType::different);
}

TEST_CASE("relative continuous comparisons satisfy trichotomy") {
    hmm::detail::Rng rng(11);
    const std::vector<std::string> hosts = {"aaaa.com",  "google.com",    "a.b.dyndns.org",
                                            "bbc.co.uk", "x1-x2.info",    "4.2.2.4",
                                            "ext:abcdefgh", "tracker.adtech.de"};
    for (int i = 0; i < 200; ++i) {
        const auto& parent = hosts[rng.next_u64() % hosts.size()];
        const auto& child = hosts[rng.next_u64() % hosts.size()];
        FeatureVector f = vectors_for({parent, child})[1];
        for (RelCmp value : {f.rel_level, f.rel_alexa, f.rel_non_alpha, f.rel_unique,
                             f.rel_char_freq, f.rel_length, f.rel_entropy}) {
            CAPTURE(parent);
            CAPTURE(child);
            CHECK(value != RelCmp::none);
        }
    }
}

TEST_CASE("bin-index equality drives the relative comparison") {
    // aaaa.com entropy bin 6, google.com bin 7.
    auto vectors = vectors_for({"aaaa.com", "google.com"});
    CHECK(vectors[1].rel_entropy == RelCmp::more);
    auto reversed = vectors_for({"google.com", "aaaa.com"});
    CHECK(reversed[1].rel_entropy == RelCmp::less);
    // Same host twice: every continuous comparison is equal.
    auto same = vectors_for({"google.com", "google.com"});
    CHECK(same[1].rel_level == RelCmp::equal);
    CHECK(same[1].rel_entropy == RelCmp::equal);
    CHECK(same[1].rel_alexa == RelCmp::equal);
}

TEST_CASE("unranked hosts compare as beyond the top million") {
    auto vectors = vectors_for({"google.com", "nowhere.example"});
    CHECK(vectors[1].rel_alexa == RelCmp::more);
    auto reversed = vectors_for({"nowhere.example", "google.com"});
    CHECK(reversed[1].rel_alexa == RelCmp::less);
    auto both = vectors_for({"nowhere.example", "elsewhere.example"});
    CHECK(both[1].rel_alexa == RelCmp::equal);

    DiscretizationConfig equal_mode;
    equal_mode.unranked = DiscretizationConfig::UnrankedCompare::always_equal;
    auto alt = vectors_for({"google.com", "nowhere.example"}, equal_mode);
    CHECK(alt[1].rel_alexa == RelCmp::equal);
}

TEST_CASE("ancestor role flags are monotone along the sequence") {
    // doubleclick.net is an ad network; once seen, every descendant keeps yes.
    auto vectors = vectors_for(
        {"a.com", "static.doubleclick.net", "benign.example.com", "deeper.example.org"});
    CHECK(vectors[0].rel_role_ad == RelRole::none);
    CHECK(vectors[1].rel_role_ad == RelRole::no);  // ancestors of the ad host are clean
    CHECK(vectors[1].role_ad);
    CHECK(vectors[2].rel_role_ad == RelRole::yes);
    CHECK(vectors[3].rel_role_ad == RelRole::yes);
    CHECK(vectors[3].rel_role_cdn == RelRole::no);
}

TEST_CASE("extension chain relative values") {
    auto vectors = vectors_for({"a.com", "ext:abcdefgh", "g.com", "h.org"});
    CHECK(vectors[1].rel_tld == RelTld::lost_tld);  // gen -> none
    CHECK(vectors[2].rel_tld == RelTld::got_tld);   // none -> gen
    CHECK(vectors[2].rel_type == RelType::different);
    CHECK(vectors[3].rel_tld == RelTld::diff_gen);  // com -> org
}

TEST_CASE("root resources carry none for every relative feature") {
    auto vectors = vectors_for({"www.google.com"});
    const FeatureVector& root = vectors[0];
    CHECK(root.rel_tld == RelTld::none);
    CHECK(root.rel_type == RelType::none);
    CHECK(root.rel_level == RelCmp::none);
    CHECK(root.rel_alexa == RelCmp::none);
    CHECK(root.rel_non_alpha == RelCmp::none);
    CHECK(root.rel_unique == RelCmp::none);
    CHECK(root.rel_char_freq == RelCmp::none);
    CHECK(root.rel_length == RelCmp::none);
    CHECK(root.rel_entropy == RelCmp::none);
    CHECK(root.rel_role_ad == RelRole::none);
    CHECK(root.rel_role_cdn == RelRole::none);
    CHECK(root.rel_role_short == RelRole::none);
    // All-none encodes as zeros in the relative half.
    auto row = root.encode(kConfig);
    for (int i = 12; i < 24; ++i) CHECK(row[static_cast<std::size_t>(i)] == 0);
}

TEST_CASE("reversing a sequence changes its relative features") {
    auto forward = vectors_for({"a.com", "b.co.uk", "4.2.2.4"});
    auto reversed = vectors_for({"4.2.2.4", "b.co.uk", "a.com"});
    CHECK(forward[1].rel_tld == RelTld::gen_to_cc);
    CHECK(forward[2].rel_tld == RelTld::lost_tld);
    CHECK(reversed[1].rel_tld == RelTld::got_tld);
    CHECK(reversed[2].rel_tld == RelTld::cc_to_gen);
}

TEST_CASE("encoded vectors respect the schema arities") {
    auto arities = FeatureSchema::arities(kConfig);
    REQUIRE(arities.size() == 24);
    const std::vector<std::string> hosts = {"a.com",        "static.doubleclick.net",
                                            "bit.ly",       "4.2.2.4",
                                            "ext:abcdefgh", "a.b.dyndns.org",
                                            "bbc.co.uk",    "x.xn--p1ai"};
    test::Chain chain({"a.com", "static.doubleclick.net", "bit.ly", "4.2.2.4"});
    ObservationSequence obs = vectorize_sequence(chain.sequence(), kConfig);
    REQUIRE(obs.symbols.size() == 4);
    for (const auto& row : obs.symbols) {
        REQUIRE(row.size() == 24);
        for (std::size_t f = 0; f < row.size(); ++f) {
            CHECK(row[f] >= 0);
            CHECK(row[f] < arities[f]);
        }
    }
    CHECK(obs.hosts ==
          std::vector<std::string>{"a.com", "static.doubleclick.net", "bit.ly", "4.2.2.4"});
    CHECK(obs.terminal_host == "4.2.2.4");

    for (const auto& host : hosts) {
        auto row = individual_features(fixture().host(host), kConfig).encode(kConfig);
        for (std::size_t f = 0; f < row.size(); ++f) {
            CAPTURE(host);
            CHECK(row[f] < arities[f]);
        }
    }
}

TEST_CASE("extraction is a pure function of its inputs") {
    test::Chain chain({"a.com", "tracker.adtech.de", "shady.dyndns.org"});
    ObservationSequence first = vectorize_sequence(chain.sequence(), kConfig);
    ObservationSequence second = vectorize_sequence(chain.sequence(), kConfig);
    CHECK(observation_to_json(first).dump() == observation_to_json(second).dump());
}

TEST_CASE("length-1 sequences produce a single all-none vector") {
    test::Chain chain({"a.com"});
    ObservationSequence obs = vectorize_sequence(chain.sequence(), kConfig);
    REQUIRE(obs.symbols.size() == 1);
    for (int i = 12; i < 24; ++i) CHECK(obs.symbols[0][static_cast<std::size_t>(i)] == 0);
}

TEST_CASE("feature categories partition the schema") {
    auto dns = FeatureSchema::indices_for({FeatureCategory::dns});
    auto str = FeatureSchema::indices_for({FeatureCategory::string_based});
    auto role = FeatureSchema::indices_for({FeatureCategory::role});
    CHECK(dns.size() == 8);    // 4 types, individual + relative
    CHECK(str.size() == 10);   // 5 types
    CHECK(role.size() == 6);   // 3 types
    CHECK(dns.size() + str.size() + role.size() == 24);
    CHECK_THROWS_AS(FeatureSchema::indices_for({}), EmptySubset);
}

TEST_CASE("shipped schema file matches the extractor") {
    std::ifstream in(INCGATE_SCHEMA_PATH);
    REQUIRE(in.good());
    nlohmann::json shipped = nlohmann::json::parse(in);
    CHECK(shipped == FeatureSchema::describe(DiscretizationConfig{}));
}

TEST_CASE("observation files round-trip") {
    test::Chain chain({"a.com", "static.doubleclick.net", "evil.example.info"});
    ObservationSequence obs = vectorize_sequence(chain.sequence(), kConfig);
    obs.label = Label::malicious;
    obs.page = "p9";
    obs.ts_ms = 1433116800000;

    std::ostringstream out;
    write_observations(out, {obs}, FeatureSchema::arities(kConfig));
    std::istringstream in(out.str());
    ObservationFile file = read_observations(in);
    REQUIRE(file.sequences.size() == 1);
    CHECK(file.arities == FeatureSchema::arities(kConfig));
    CHECK(file.sequences[0].label == Label::malicious);
    CHECK(file.sequences[0].symbols == obs.symbols);
    CHECK(file.sequences[0].hosts == obs.hosts);
    CHECK(file.sequences[0].page == "p9");
    CHECK(file.sequences[0].ts_ms == 1433116800000);

    std::ostringstream out2;
    write_observations(out2, file.sequences, file.arities);
    CHECK(out.str() == out2.str());
}
