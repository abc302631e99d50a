#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace incgate {

// The eight host kinds of the type feature. IPs and extensions have no
// labels; DNS hosts are split on whether they sit at, or below, their
// registrable domain and whether that registrable is a plain second-level
// domain (google.com) or a deeper privately-registered name (abc.dyndns.org).
enum class HostKind {
    ipv6,
    ipv4_private,
    ipv4_public,
    extension,
    dns_sld,
    dns_sld_sub,
    dns_non_sld,
    dns_non_sld_sub,
};

enum class TldCategory {
    none,           // IPs, extensions
    gen,            // *.com, *.org
    gen_subdomain,  // *.us.com
    cc,             // *.us, *.de, *.cn
    cc_subdomain,   // *.co.uk, *.com.cn
    cc_int,         // punycode TLDs, *.xn--p1ai
    other,          // *.biz, *.info
};

std::string_view to_string(HostKind kind);
std::string_view to_string(TldCategory category);
HostKind host_kind_from_string(std::string_view name);
TldCategory tld_category_from_string(std::string_view name);

using Labels = std::vector<std::string>;

std::string join_labels(const Labels& labels);

// Public-suffix rules in the standard publicsuffix.org text format:
// '//' comments, section markers, one rule per line, '*.'' wildcards and
// '!' exceptions. Immutable after load; lookups are longest-match.
class SuffixTable {
public:
    struct Options {
        bool include_private = true;  // keep the PRIVATE DOMAINS section
    };

    struct Match {
        Labels suffix;
        bool icann = false;  // rule came from the ICANN section (or the implicit default rule)
    };

    static SuffixTable parse(std::istream& in, Options options);
    static SuffixTable load(const std::string& path, Options options);
    static SuffixTable parse(std::istream& in) { return parse(in, Options{}); }
    static SuffixTable load(const std::string& path) { return load(path, Options{}); }

    // Longest matching public suffix; the implicit '*' default rule makes
    // this total (a lone unknown label is its own suffix).
    Match public_suffix(const Labels& host) const;

    // Public suffix plus one label, absent when the host is itself a suffix.
    std::optional<Labels> registrable_domain(const Labels& host) const;

    // Whether `candidate` is exactly a public suffix under the table's
    // ICANN-section rules. Used to tell registry suffixes (co.uk) apart from
    // privately registered SLD-like names (dyndns.org).
    bool is_icann_suffix(const Labels& candidate) const;

    const std::string& version() const { return version_; }
    std::size_t rule_count() const { return rules_.size(); }

private:
    // One key can hold several rule forms at once: kawasaki.jp appears as
    // both an exact rule and the base of *.kawasaki.jp.
    struct Rule {
        bool exact = false;
        bool wildcard = false;
        bool exception = false;
        bool icann = true;
    };

    std::unordered_map<std::string, Rule> rules_;
    std::string version_;
};

// Host -> rank map loaded from "rank,host" CSV, ranks in [1, 1000000].
class RankTable {
public:
    static RankTable parse(std::istream& in);
    static RankTable load(const std::string& path);

    void insert(const std::string& host, std::uint32_t rank);
    std::optional<std::uint32_t> rank(const std::string& host) const;
    std::size_t size() const { return ranks_.size(); }

private:
    std::unordered_map<std::string, std::uint32_t> ranks_;
};

enum class Role { ad_network, cdn, url_shortener };

// Three host-pattern sets; membership is by exact host or registrable-domain
// match. A host may hold several roles at once.
class RoleTable {
public:
    static RoleTable load(const std::string& ad_networks_path,
                          const std::string& cdns_path,
                          const std::string& shorteners_path);

    void add(Role role, std::string host);
    void parse(Role role, std::istream& in);

    bool has_role(Role role, const std::string& host,
                  const std::optional<std::string>& registrable) const;
    std::size_t size(Role role) const { return set_for(role).size(); }

private:
    const std::unordered_set<std::string>& set_for(Role role) const;
    std::unordered_set<std::string>& set_for(Role role);

    std::unordered_set<std::string> ad_networks_;
    std::unordered_set<std::string> cdns_;
    std::unordered_set<std::string> shorteners_;
};

struct HostConfig {
    // TLDs treated as generic; everything non-cc, non-punycode, non-subdomain
    // outside this set is `other`.
    std::set<std::string> generic_tlds = {"com", "org", "net", "edu", "gov", "mil"};
};

struct Host {
    std::string raw;  // lowercased, trailing dot stripped
    HostKind kind = HostKind::dns_sld;
    Labels labels;  // empty for IP/extension hosts
    std::optional<Labels> public_suffix;
    std::optional<Labels> registrable_domain;
    bool suffix_is_icann = false;
    // Whether the trailing two labels are themselves an ICANN registry
    // suffix (co.uk yes, dyndns.org no); feeds the relative type feature.
    bool sld_is_registry_suffix = false;
    TldCategory tld_category = TldCategory::none;
    int level = 1;
    std::optional<std::uint32_t> alexa_rank;
    bool role_ad = false;
    bool role_cdn = false;
    bool role_short = false;

    bool is_dns() const {
        return kind == HostKind::dns_sld || kind == HostKind::dns_sld_sub ||
               kind == HostKind::dns_non_sld || kind == HostKind::dns_non_sld_sub;
    }
    std::optional<std::string> registrable_string() const {
        if (!registrable_domain) return std::nullopt;
        return join_labels(*registrable_domain);
    }
    // Trailing two labels ("SLD"); absent for IP/extension or 1-label hosts.
    std::optional<Labels> sld() const {
        if (labels.size() < 2) return std::nullopt;
        return Labels(labels.end() - 2, labels.end());
    }
};

// View bundle of the immutable lookup tables every parse needs.
struct HostTables {
    const SuffixTable& suffixes;
    const RankTable& ranks;
    const RoleTable& roles;
    HostConfig config{};
};

TldCategory classify_tld(HostKind kind, const Labels& labels,
                         const std::optional<Labels>& public_suffix,
                         const HostConfig& config);

// Parses and annotates a resource host. Extension hosts are expected in the
// canonical `ext:<extension-id>` form. Throws MalformedHost.
Host parse_host(std::string_view raw, const HostTables& tables);

TldCategory tld_category(const Host& host);

// Level normalized by the maximum DNS depth of 126, clamped to 1.
double host_level(const Host& host);

// Extracts the host part of a resource URL (scheme, userinfo, port and path
// stripped; `ext:<id>/...` URLs map to `ext:<id>`).
std::string host_of_url(std::string_view url);

}  // namespace incgate
