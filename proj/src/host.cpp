#include "incgate/host.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate {

namespace {

constexpr std::array<std::pair<HostKind, std::string_view>, 8> kHostKindNames{{
    {HostKind::ipv6, "ipv6"},
    {HostKind::ipv4_private, "ipv4-private"},
    {HostKind::ipv4_public, "ipv4-public"},
    {HostKind::extension, "extension"},
    {HostKind::dns_sld, "dns-sld"},
    {HostKind::dns_sld_sub, "dns-sld-sub"},
    {HostKind::dns_non_sld, "dns-non-sld"},
    {HostKind::dns_non_sld_sub, "dns-non-sld-sub"},
}};

constexpr std::array<std::pair<TldCategory, std::string_view>, 7> kTldCategoryNames{{
    {TldCategory::none, "none"},
    {TldCategory::gen, "gen"},
    {TldCategory::gen_subdomain, "gen-subdomain"},
    {TldCategory::cc, "cc"},
    {TldCategory::cc_subdomain, "cc-subdomain"},
    {TldCategory::cc_int, "cc-int"},
    {TldCategory::other, "other"},
}};

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

bool parse_octet(std::string_view s, int& value) {
    if (!all_digits(s) || s.size() > 3) return false;
    value = 0;
    for (char c : s) value = value * 10 + (c - '0');
    return value <= 255;
}

bool looks_like_ipv6(std::string_view s) {
    if (s.find(':') == std::string_view::npos) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isxdigit(c) || c == ':' || c == '.';
    });
}

bool valid_label(std::string_view label) {
    if (label.empty() || label.size() > 63) return false;
    return std::all_of(label.begin(), label.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_';
    });
}

Labels split_labels(std::string_view host) {
    Labels labels;
    std::size_t start = 0;
    while (start <= host.size()) {
        std::size_t dot = host.find('.', start);
        if (dot == std::string_view::npos) {
            labels.emplace_back(host.substr(start));
            break;
        }
        labels.emplace_back(host.substr(start, dot - start));
        start = dot + 1;
    }
    return labels;
}

bool is_private_ipv4(int a, int b, int, int) {
    if (a == 10) return true;                       // 10/8
    if (a == 172 && b >= 16 && b <= 31) return true;  // 172.16/12
    if (a == 192 && b == 168) return true;          // 192.168/16
    if (a == 127) return true;                      // loopback
    if (a == 169 && b == 254) return true;          // link-local
    return false;
}

}  // namespace

std::string_view to_string(HostKind kind) {
    for (const auto& [k, name] : kHostKindNames)
        if (k == kind) return name;
    return "dns-sld";
}

std::string_view to_string(TldCategory category) {
    for (const auto& [c, name] : kTldCategoryNames)
        if (c == category) return name;
    return "none";
}

HostKind host_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kHostKindNames)
        if (n == name) return k;
    throw ParseError("unknown host kind '" + std::string(name) + "'");
}

TldCategory tld_category_from_string(std::string_view name) {
    for (const auto& [c, n] : kTldCategoryNames)
        if (n == name) return c;
    throw ParseError("unknown TLD category '" + std::string(name) + "'");
}

std::string join_labels(const Labels& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += '.';
        out += labels[i];
    }
    return out;
}

SuffixTable SuffixTable::parse(std::istream& in, Options options) {
    SuffixTable table;
    std::string line;
    bool in_private = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        auto end = line.find_last_not_of(" \t");
        std::string entry = line.substr(begin, end - begin + 1);
        if (entry.rfind("//", 0) == 0) {
            if (entry.find("===BEGIN PRIVATE DOMAINS===") != std::string::npos) in_private = true;
            if (entry.find("===END PRIVATE DOMAINS===") != std::string::npos) in_private = false;
            auto v = entry.find("VERSION:");
            if (v != std::string::npos) table.version_ = entry.substr(v + 8);
            continue;
        }
        if (in_private && !options.include_private) continue;

        bool exception = false, wildcard = false;
        if (entry[0] == '!') {
            exception = true;
            entry.erase(0, 1);
        }
        if (entry.rfind("*.", 0) == 0) {
            wildcard = true;
            entry.erase(0, 2);
        }
        Rule& rule = table.rules_[to_lower(entry)];
        rule.icann = !in_private;
        if (exception)
            rule.exception = true;
        else if (wildcard)
            rule.wildcard = true;
        else
            rule.exact = true;
    }
    return table;
}

SuffixTable SuffixTable::load(const std::string& path, Options options) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open suffix list: " + path);
    return parse(in, options);
}

SuffixTable::Match SuffixTable::public_suffix(const Labels& host) const {
    // Longest match wins; exceptions beat wildcards at the same candidate.
    for (std::size_t i = 0; i < host.size(); ++i) {
        Labels candidate(host.begin() + static_cast<std::ptrdiff_t>(i), host.end());
        std::string key = join_labels(candidate);
        auto it = rules_.find(key);
        if (it != rules_.end() && it->second.exception) {
            // The exception's suffix is the rule minus its leftmost label.
            return {Labels(candidate.begin() + 1, candidate.end()), it->second.icann};
        }
        if (it != rules_.end() && it->second.exact) {
            return {candidate, it->second.icann};
        }
        // Wildcard rule '*.base' matches 'label.base'.
        if (candidate.size() >= 2) {
            std::string base = join_labels(Labels(candidate.begin() + 1, candidate.end()));
            auto wit = rules_.find(base);
            if (wit != rules_.end() && wit->second.wildcard) {
                return {candidate, wit->second.icann};
            }
        }
    }
    // Implicit default rule '*': the last label is the suffix.
    return {Labels(host.end() - 1, host.end()), true};
}

std::optional<Labels> SuffixTable::registrable_domain(const Labels& host) const {
    Match match = public_suffix(host);
    if (match.suffix.size() >= host.size()) return std::nullopt;
    return Labels(host.end() - static_cast<std::ptrdiff_t>(match.suffix.size()) - 1, host.end());
}

bool SuffixTable::is_icann_suffix(const Labels& candidate) const {
    if (candidate.empty()) return false;
    auto it = rules_.find(join_labels(candidate));
    if (it != rules_.end() && it->second.exception) return false;
    if (it != rules_.end() && it->second.exact) return it->second.icann;
    if (candidate.size() >= 2) {
        auto wit = rules_.find(join_labels(Labels(candidate.begin() + 1, candidate.end())));
        if (wit != rules_.end() && wit->second.wildcard) return wit->second.icann;
    }
    return false;
}

RankTable RankTable::parse(std::istream& in) {
    RankTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line == "rank,host") continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError("rank table line " + std::to_string(line_no) + ": expected 'rank,host'");
        std::uint32_t rank = 0;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + comma, rank);
        if (ec != std::errc() || ptr != line.data() + comma || rank < 1 || rank > 1000000)
            throw ParseError("rank table line " + std::to_string(line_no) +
                             ": rank must be an integer in [1, 1000000]");
        table.insert(to_lower(std::string_view(line).substr(comma + 1)), rank);
    }
    return table;
}

RankTable RankTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open rank table: " + path);
    return parse(in);
}

void RankTable::insert(const std::string& host, std::uint32_t rank) {
    auto [it, inserted] = ranks_.emplace(host, rank);
    if (!inserted) throw ParseError("duplicate rank entry for host '" + host + "'");
}

std::optional<std::uint32_t> RankTable::rank(const std::string& host) const {
    auto it = ranks_.find(host);
    if (it == ranks_.end()) return std::nullopt;
    return it->second;
}

RoleTable RoleTable::load(const std::string& ad_networks_path, const std::string& cdns_path,
                          const std::string& shorteners_path) {
    RoleTable table;
    auto load_one = [&table](Role role, const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open role list: " + path);
        table.parse(role, in);
    };
    load_one(Role::ad_network, ad_networks_path);
    load_one(Role::cdn, cdns_path);
    load_one(Role::url_shortener, shorteners_path);
    return table;
}

void RoleTable::add(Role role, std::string host) {
    set_for(role).insert(to_lower(host));
}

void RoleTable::parse(Role role, std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        auto end = line.find_last_not_of(" \t");
        std::string entry = line.substr(begin, end - begin + 1);
        if (entry[0] == '#') continue;
        add(role, entry);
    }
}

bool RoleTable::has_role(Role role, const std::string& host,
                         const std::optional<std::string>& registrable) const {
    const auto& set = set_for(role);
    if (set.count(host)) return true;
    return registrable && set.count(*registrable) > 0;
}

const std::unordered_set<std::string>& RoleTable::set_for(Role role) const {
    switch (role) {
        case Role::ad_network: return ad_networks_;
        case Role::cdn: return cdns_;
        case Role::url_shortener: return shorteners_;
    }
    return ad_networks_;
}

std::unordered_set<std::string>& RoleTable::set_for(Role role) {
    return const_cast<std::unordered_set<std::string>&>(
        static_cast<const RoleTable*>(this)->set_for(role));
}

TldCategory classify_tld(HostKind kind, const Labels& labels,
                         const std::optional<Labels>& public_suffix,
                         const HostConfig& config) {
    if (kind == HostKind::extension || kind == HostKind::ipv4_private ||
        kind == HostKind::ipv4_public || kind == HostKind::ipv6)
        return TldCategory::none;
    const std::string& tld = labels.back();
    if (tld.rfind("xn--", 0) == 0) return TldCategory::cc_int;
    bool is_gen = config.generic_tlds.count(tld) > 0;
    bool is_cc = tld.size() == 2 &&
                 std::all_of(tld.begin(), tld.end(),
                             [](unsigned char c) { return std::isalpha(c) != 0; });
    if (public_suffix && public_suffix->size() > 1) {
        if (is_gen) return TldCategory::gen_subdomain;
        if (is_cc) return TldCategory::cc_subdomain;
    }
    if (is_gen) return TldCategory::gen;
    if (is_cc) return TldCategory::cc;
    return TldCategory::other;
}

Host parse_host(std::string_view raw, const HostTables& tables) {
    if (raw.empty()) throw MalformedHost("empty host");

    Host host;
    std::string text = to_lower(raw);
    if (!text.empty() && text.back() == '.') text.pop_back();
    if (text.empty()) throw MalformedHost("host is only a dot");

    if (text.rfind("ext:", 0) == 0) {
        std::string id = text.substr(4);
        if (id.empty()) throw MalformedHost("extension host with empty id");
        if (!std::all_of(id.begin(), id.end(), [](unsigned char c) {
                return std::isalnum(c) || c == '-' || c == '_';
            }))
            throw MalformedHost("illegal character in extension id '" + id + "'");
        host.raw = text;
        host.kind = HostKind::extension;
        host.level = 1;
        host.tld_category = TldCategory::none;
        return host;  // extensions never match suffix, rank, or role tables
    }

    // Bracketed IPv6 literals as they appear in URLs.
    if (text.size() >= 2 && text.front() == '[' && text.back() == ']')
        text = text.substr(1, text.size() - 2);
    if (text.find(':') != std::string_view::npos) {
        if (!looks_like_ipv6(text)) throw MalformedHost("illegal character in '" + text + "'");
        host.raw = text;
        host.kind = HostKind::ipv6;
        host.level = 1;
        host.tld_category = TldCategory::none;
        return host;
    }

    if (text.size() > 253) throw MalformedHost("host exceeds 253 characters");

    Labels labels = split_labels(text);
    for (const auto& label : labels) {
        if (label.empty()) throw MalformedHost("empty label in '" + text + "'");
        if (label.size() > 63) throw MalformedHost("label exceeds 63 characters in '" + text + "'");
        if (!valid_label(label)) throw MalformedHost("illegal character in '" + text + "'");
    }

    // IPv4 literal: exactly four all-digit labels in octet range.
    if (labels.size() == 4) {
        int octets[4];
        bool numeric = true;
        for (int i = 0; i < 4 && numeric; ++i) numeric = parse_octet(labels[i], octets[i]);
        if (numeric) {
            host.raw = text;
            host.kind = is_private_ipv4(octets[0], octets[1], octets[2], octets[3])
                            ? HostKind::ipv4_private
                            : HostKind::ipv4_public;
            host.level = 1;
            host.tld_category = TldCategory::none;
            host.alexa_rank = std::nullopt;
            return host;
        }
    }
    if (std::all_of(labels.begin(), labels.end(),
                    [](const std::string& l) { return all_digits(l); }))
        throw MalformedHost("all-numeric labels do not form a valid IPv4 address: '" + text + "'");

    host.raw = text;
    host.labels = std::move(labels);
    host.level = std::max(1, static_cast<int>(host.labels.size()) - 1);

    SuffixTable::Match match = tables.suffixes.public_suffix(host.labels);
    host.public_suffix = match.suffix;
    host.suffix_is_icann = match.icann;
    host.registrable_domain = tables.suffixes.registrable_domain(host.labels);
    if (auto sld = host.sld()) host.sld_is_registry_suffix = tables.suffixes.is_icann_suffix(*sld);

    if (host.registrable_domain) {
        bool at_registrable = host.labels == *host.registrable_domain;
        bool plain_sld = host.registrable_domain->size() == 2;
        if (at_registrable)
            host.kind = plain_sld ? HostKind::dns_sld : HostKind::dns_non_sld;
        else
            host.kind = plain_sld ? HostKind::dns_sld_sub : HostKind::dns_non_sld_sub;
    } else {
        // The host is itself a public suffix (or a lone label); treat it as
        // SLD-like at or below two labels, deeper as non-SLD.
        host.kind = host.labels.size() <= 2 ? HostKind::dns_sld : HostKind::dns_non_sld;
    }

    host.tld_category = classify_tld(host.kind, host.labels, host.public_suffix, tables.config);

    host.alexa_rank = tables.ranks.rank(host.raw);
    auto registrable = host.registrable_string();
    if (!host.alexa_rank && registrable) host.alexa_rank = tables.ranks.rank(*registrable);

    host.role_ad = tables.roles.has_role(Role::ad_network, host.raw, registrable);
    host.role_cdn = tables.roles.has_role(Role::cdn, host.raw, registrable);
    host.role_short = tables.roles.has_role(Role::url_shortener, host.raw, registrable);
    return host;
}

TldCategory tld_category(const Host& host) { return host.tld_category; }

double host_level(const Host& host) {
    return std::min(1.0, static_cast<double>(host.level) / 126.0);
}

std::string host_of_url(std::string_view url) {
    if (url.rfind("ext:", 0) == 0) {
        auto slash = url.find('/');
        return std::string(slash == std::string_view::npos ? url : url.substr(0, slash));
    }
    std::string_view rest = url;
    auto scheme = rest.find("://");
    if (scheme != std::string_view::npos) rest = rest.substr(scheme + 3);
    auto path = rest.find_first_of("/?#");
    if (path != std::string_view::npos) rest = rest.substr(0, path);
    auto userinfo = rest.rfind('@');
    if (userinfo != std::string_view::npos) rest = rest.substr(userinfo + 1);
    if (!rest.empty() && rest.front() == '[') {
        auto close = rest.find(']');
        if (close != std::string_view::npos) return std::string(rest.substr(0, close + 1));
    }
    auto port = rest.rfind(':');
    if (port != std::string_view::npos &&
        all_digits(rest.substr(port + 1)))
        rest = rest.substr(0, port);
    return std::string(rest);
}

}  // namespace incgate
