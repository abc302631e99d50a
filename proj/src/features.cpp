#include "incgate/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate {

namespace {

constexpr std::array<std::string_view, 15> kRelTldNames{
    "none",        "got-tld",     "lost-tld",  "gen-to-cc", "gen-to-other",
    "cc-to-gen",   "cc-to-other", "other-to-gen", "other-to-cc", "same-gen",
    "same-cc",     "same-other",  "diff-gen",  "diff-cc",   "diff-other",
};

constexpr std::array<std::string_view, 7> kRelTypeNames{
    "none", "same-site", "same-sld", "same-company", "same-eff-tld", "same-tld", "different",
};

constexpr std::array<std::string_view, 4> kRelCmpNames{"none", "less", "equal", "more"};

constexpr std::array<std::string_view, 3> kRelRoleNames{"none", "yes", "no"};

constexpr std::array<std::string_view, 3> kLabelNames{"benign", "malicious", "unlabeled"};

// Folds the subdomain/punycode categories onto their base for Table-2 style
// transition classification.
enum class TldBase { none, gen, cc, other };

TldBase fold_tld(TldCategory category) {
    switch (category) {
        case TldCategory::none: return TldBase::none;
        case TldCategory::gen:
        case TldCategory::gen_subdomain: return TldBase::gen;
        case TldCategory::cc:
        case TldCategory::cc_subdomain:
        case TldCategory::cc_int: return TldBase::cc;
        case TldCategory::other: return TldBase::other;
    }
    return TldBase::other;
}

RelTld same_or_diff(TldBase base, bool same_tld_string) {
    switch (base) {
        case TldBase::gen: return same_tld_string ? RelTld::same_gen : RelTld::diff_gen;
        case TldBase::cc: return same_tld_string ? RelTld::same_cc : RelTld::diff_cc;
        default: return same_tld_string ? RelTld::same_other : RelTld::diff_other;
    }
}

RelTld cross_category(TldBase parent, TldBase child) {
    if (parent == TldBase::gen)
        return child == TldBase::cc ? RelTld::gen_to_cc : RelTld::gen_to_other;
    if (parent == TldBase::cc)
        return child == TldBase::gen ? RelTld::cc_to_gen : RelTld::cc_to_other;
    return child == TldBase::gen ? RelTld::other_to_gen : RelTld::other_to_cc;
}

RelTld classify_rel_tld(const Host& parent, const Host& child) {
    TldBase p = fold_tld(parent.tld_category);
    TldBase c = fold_tld(child.tld_category);
    if (p == TldBase::none && c == TldBase::none) return RelTld::none;
    if (p == TldBase::none) return RelTld::got_tld;
    if (c == TldBase::none) return RelTld::lost_tld;
    if (p == c) return same_or_diff(p, parent.labels.back() == child.labels.back());
    return cross_category(p, c);
}

RelType classify_rel_type(const Host& parent, const Host& child) {
    if (parent.registrable_domain && child.registrable_domain &&
        *parent.registrable_domain == *child.registrable_domain)
        return RelType::same_site;

    auto psld = parent.sld();
    auto csld = child.sld();
    // Equal trailing pair counts as same-sld only when that pair is a
    // registered name rather than a registry suffix like co.uk.
    if (psld && csld && *psld == *csld && !parent.sld_is_registry_suffix)
        return RelType::same_sld;

    if (parent.registrable_domain && child.registrable_domain &&
        parent.registrable_domain->front() == child.registrable_domain->front() &&
        *parent.public_suffix != *child.public_suffix)
        return RelType::same_company;

    if (parent.public_suffix && child.public_suffix && parent.public_suffix->size() > 1 &&
        *parent.public_suffix == *child.public_suffix)
        return RelType::same_eff_tld;

    if (parent.is_dns() && child.is_dns() && parent.labels.back() == child.labels.back())
        return RelType::same_tld;

    return RelType::different;
}

RelCmp compare_bins(int parent, int child) {
    if (child < parent) return RelCmp::less;
    if (child > parent) return RelCmp::more;
    return RelCmp::equal;
}

RelCmp compare_raw(double parent, double child) {
    if (child < parent) return RelCmp::less;
    if (child > parent) return RelCmp::more;
    return RelCmp::equal;
}

RelCmp compare_alexa(const std::optional<int>& parent, const std::optional<int>& child,
                     const DiscretizationConfig& config) {
    if (config.unranked == DiscretizationConfig::UnrankedCompare::always_equal) {
        if (!parent || !child) return RelCmp::equal;
        return compare_bins(*parent, *child);
    }
    // Unranked sits beyond the top bin.
    if (!parent && !child) return RelCmp::equal;
    if (!parent) return RelCmp::less;
    if (!child) return RelCmp::more;
    return compare_bins(*parent, *child);
}

double shannon_entropy(std::string_view s) {
    std::map<char, int> counts;
    for (char c : s) ++counts[c];
    double n = static_cast<double>(s.size());
    double h = 0;
    for (const auto& [c, count] : counts) {
        double p = count / n;
        h -= p * std::log2(p);
    }
    return h;
}

template <typename Enum, std::size_t N>
Enum enum_from_string(const std::array<std::string_view, N>& names, std::string_view name,
                      const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == name) return static_cast<Enum>(i);
    throw ParseError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(RelTld value) { return kRelTldNames[static_cast<int>(value)]; }
std::string_view to_string(RelType value) { return kRelTypeNames[static_cast<int>(value)]; }
std::string_view to_string(RelCmp value) { return kRelCmpNames[static_cast<int>(value)]; }
std::string_view to_string(RelRole value) { return kRelRoleNames[static_cast<int>(value)]; }
std::string_view to_string(Label label) { return kLabelNames[static_cast<int>(label)]; }

RelTld rel_tld_from_string(std::string_view name) {
    return enum_from_string<RelTld>(kRelTldNames, name, "relative TLD value");
}

RelType rel_type_from_string(std::string_view name) {
    return enum_from_string<RelType>(kRelTypeNames, name, "relative type value");
}

Label label_from_string(std::string_view name) {
    return enum_from_string<Label>(kLabelNames, name, "label");
}

void DiscretizationConfig::validate() const {
    if (bins < 2) throw InvalidConfig("bins must be >= 2");
}

int DiscretizationConfig::bin(double normalized) const {
    if (normalized <= 0) return 0;
    if (normalized >= 1) return bins - 1;
    return std::min(static_cast<int>(normalized * bins), bins - 1);
}

const std::array<std::string_view, FeatureSchema::kFeatureCount>& FeatureSchema::names() {
    static const std::array<std::string_view, kFeatureCount> names{
        "tld",          "type",          "level",        "alexa",
        "non_alpha",    "unique_chars",  "char_freq",    "length",
        "entropy",      "role_ad",       "role_cdn",     "role_short",
        "rel_tld",      "rel_type",      "rel_level",    "rel_alexa",
        "rel_non_alpha", "rel_unique",   "rel_char_freq", "rel_length",
        "rel_entropy",  "rel_role_ad",   "rel_role_cdn", "rel_role_short",
    };
    return names;
}

std::vector<int> FeatureSchema::arities(const DiscretizationConfig& config) {
    config.validate();
    const int b = config.bins;
    return {7,     8, b, b + 1, b, b, b, b, b, 2, 2, 2,
            15,    7, 4, 4,     4, 4, 4, 4, 4, 3, 3, 3};
}

FeatureCategory FeatureSchema::category(int index) {
    switch (index) {
        case 0: case 1: case 2: case 3:
        case 12: case 13: case 14: case 15:
            return FeatureCategory::dns;
        case 4: case 5: case 6: case 7: case 8:
        case 16: case 17: case 18: case 19: case 20:
            return FeatureCategory::string_based;
        default:
            return FeatureCategory::role;
    }
}

std::vector<int> FeatureSchema::indices_for(const std::set<FeatureCategory>& categories) {
    if (categories.empty()) throw EmptySubset("feature category subset is empty");
    std::vector<int> indices;
    for (int i = 0; i < kFeatureCount; ++i)
        if (categories.count(category(i))) indices.push_back(i);
    return indices;
}

nlohmann::json FeatureSchema::describe(const DiscretizationConfig& config) {
    nlohmann::json features = nlohmann::json::array();
    auto arity = arities(config);
    static const std::array<std::string_view, 3> category_names{"dns", "string", "role"};
    for (int i = 0; i < kFeatureCount; ++i) {
        features.push_back({{"index", i},
                            {"name", std::string(names()[i])},
                            {"arity", arity[i]},
                            {"category", std::string(category_names[static_cast<int>(category(i))])}});
    }
    return nlohmann::json{{"format", "incgate-feature-schema"},
                          {"version", 1},
                          {"bins", config.bins},
                          {"features", std::move(features)}};
}

ContinuousValues continuous_values(const Host& host) {
    ContinuousValues v;
    v.level = host_level(host);
    if (host.alexa_rank) v.alexa = static_cast<double>(*host.alexa_rank) / 1000000.0;

    if (!host.is_dns()) {
        // String properties of IP and extension hosts carry the value 1.
        v.non_alpha = v.unique_chars = v.char_freq = v.length = v.entropy = 1.0;
        return v;
    }

    const std::string& name = host.raw;
    const double len = static_cast<double>(name.size());
    double non_alpha = 0;
    for (char c : name)
        if (!std::isalpha(static_cast<unsigned char>(c))) non_alpha += 1;
    std::set<char> distinct(name.begin(), name.end());

    v.non_alpha = non_alpha / len;
    v.unique_chars = std::min(1.0, static_cast<double>(distinct.size()) / 38.0);
    // Mean per-character count over length; equals 1 / #distinct.
    v.char_freq = (len / static_cast<double>(distinct.size())) / len;
    v.length = std::min(1.0, len / 253.0);
    v.entropy = name.size() >= 2 ? shannon_entropy(name) / std::log2(len) : 0.0;
    return v;
}

FeatureVector individual_features(const Host& host, const DiscretizationConfig& config) {
    config.validate();
    FeatureVector f;
    f.tld = host.tld_category;
    f.type = host.kind;

    ContinuousValues v = continuous_values(host);
    f.level_bin = config.bin(v.level);
    if (v.alexa) f.alexa_bin = config.bin(*v.alexa);
    f.non_alpha_bin = config.bin(v.non_alpha);
    f.unique_chars_bin = config.bin(v.unique_chars);
    f.char_freq_bin = config.bin(v.char_freq);
    f.length_bin = config.bin(v.length);
    f.entropy_bin = config.bin(v.entropy);

    if (host.kind != HostKind::extension) {
        f.role_ad = host.role_ad;
        f.role_cdn = host.role_cdn;
        f.role_short = host.role_short;
    }
    return f;
}

void relative_features(FeatureVector& current, const Host& current_host,
                       const FeatureVector* parent, const Host* parent_host,
                       bool ancestor_ad, bool ancestor_cdn, bool ancestor_short,
                       const DiscretizationConfig& config) {
    if (parent == nullptr) return;  // root keeps all-none relatives

    current.rel_tld = classify_rel_tld(*parent_host, current_host);
    current.rel_type = classify_rel_type(*parent_host, current_host);

    if (config.equality == DiscretizationConfig::Equality::raw_value) {
        ContinuousValues pv = continuous_values(*parent_host);
        ContinuousValues cv = continuous_values(current_host);
        current.rel_level = compare_raw(pv.level, cv.level);
        current.rel_non_alpha = compare_raw(pv.non_alpha, cv.non_alpha);
        current.rel_unique = compare_raw(pv.unique_chars, cv.unique_chars);
        current.rel_char_freq = compare_raw(pv.char_freq, cv.char_freq);
        current.rel_length = compare_raw(pv.length, cv.length);
        current.rel_entropy = compare_raw(pv.entropy, cv.entropy);
    } else {
        current.rel_level = compare_bins(parent->level_bin, current.level_bin);
        current.rel_non_alpha = compare_bins(parent->non_alpha_bin, current.non_alpha_bin);
        current.rel_unique = compare_bins(parent->unique_chars_bin, current.unique_chars_bin);
        current.rel_char_freq = compare_bins(parent->char_freq_bin, current.char_freq_bin);
        current.rel_length = compare_bins(parent->length_bin, current.length_bin);
        current.rel_entropy = compare_bins(parent->entropy_bin, current.entropy_bin);
    }
    current.rel_alexa = compare_alexa(parent->alexa_bin, current.alexa_bin, config);

    current.rel_role_ad = ancestor_ad ? RelRole::yes : RelRole::no;
    current.rel_role_cdn = ancestor_cdn ? RelRole::yes : RelRole::no;
    current.rel_role_short = ancestor_short ? RelRole::yes : RelRole::no;
}

std::array<int, 24> FeatureVector::encode(const DiscretizationConfig& config) const {
    std::array<int, 24> out{};
    out[0] = static_cast<int>(tld);
    out[1] = static_cast<int>(type);
    out[2] = level_bin;
    out[3] = alexa_bin ? *alexa_bin : config.bins;  // sentinel `none` = last index
    out[4] = non_alpha_bin;
    out[5] = unique_chars_bin;
    out[6] = char_freq_bin;
    out[7] = length_bin;
    out[8] = entropy_bin;
    out[9] = role_ad ? 1 : 0;
    out[10] = role_cdn ? 1 : 0;
    out[11] = role_short ? 1 : 0;
    out[12] = static_cast<int>(rel_tld);
    out[13] = static_cast<int>(rel_type);
    out[14] = static_cast<int>(rel_level);
    out[15] = static_cast<int>(rel_alexa);
    out[16] = static_cast<int>(rel_non_alpha);
    out[17] = static_cast<int>(rel_unique);
    out[18] = static_cast<int>(rel_char_freq);
    out[19] = static_cast<int>(rel_length);
    out[20] = static_cast<int>(rel_entropy);
    out[21] = static_cast<int>(rel_role_ad);
    out[22] = static_cast<int>(rel_role_cdn);
    out[23] = static_cast<int>(rel_role_short);
    return out;
}

std::vector<FeatureVector> vectorize(const InclusionSequence& sequence,
                                     const DiscretizationConfig& config) {
    std::vector<FeatureVector> out;
    out.reserve(sequence.size());
    bool anc_ad = false, anc_cdn = false, anc_short = false;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        const Host& host = sequence[i]->host;
        FeatureVector f = individual_features(host, config);
        if (i == 0) {
            relative_features(f, host, nullptr, nullptr, false, false, false, config);
        } else {
            relative_features(f, host, &out[i - 1], &sequence[i - 1]->host, anc_ad, anc_cdn,
                              anc_short, config);
        }
        anc_ad = anc_ad || host.role_ad;
        anc_cdn = anc_cdn || host.role_cdn;
        anc_short = anc_short || host.role_short;
        out.push_back(f);
    }
    return out;
}

ObservationSequence vectorize_sequence(const InclusionSequence& sequence,
                                       const DiscretizationConfig& config) {
    ObservationSequence obs;
    auto vectors = vectorize(sequence, config);
    obs.symbols.reserve(vectors.size());
    for (const auto& v : vectors) {
        auto row = v.encode(config);
        obs.symbols.emplace_back(row.begin(), row.end());
    }
    for (const auto* node : sequence) obs.hosts.push_back(node->host.raw);
    if (!sequence.empty()) {
        obs.terminal_url = sequence.back()->url;
        obs.terminal_host = sequence.back()->host.raw;
    }
    return obs;
}

nlohmann::json observation_to_json(const ObservationSequence& obs) {
    nlohmann::json j{{"label", std::string(to_string(obs.label))},
                     {"features", obs.symbols}};
    if (!obs.page.empty()) j["page"] = obs.page;
    if (!obs.hosts.empty()) j["hosts"] = obs.hosts;
    if (!obs.terminal_url.empty()) j["terminal_url"] = obs.terminal_url;
    if (!obs.terminal_host.empty()) j["terminal_host"] = obs.terminal_host;
    if (obs.ts_ms != 0) j["ts"] = obs.ts_ms;
    return j;
}

ObservationSequence observation_from_json(const nlohmann::json& j) {
    try {
        ObservationSequence obs;
        obs.label = label_from_string(j.at("label").get<std::string>());
        obs.symbols = j.at("features").get<std::vector<std::vector<int>>>();
        if (j.contains("page")) obs.page = j.at("page").get<std::string>();
        if (j.contains("hosts")) obs.hosts = j.at("hosts").get<std::vector<std::string>>();
        if (j.contains("terminal_url")) obs.terminal_url = j.at("terminal_url").get<std::string>();
        if (j.contains("terminal_host"))
            obs.terminal_host = j.at("terminal_host").get<std::string>();
        if (j.contains("ts")) obs.ts_ms = j.at("ts").get<std::int64_t>();
        return obs;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad observation record: ") + e.what());
    }
}

void write_observations(std::ostream& out, const std::vector<ObservationSequence>& dataset,
                        const std::vector<int>& arities) {
    nlohmann::json header = make_stream_header(kObservationStreamFormat);
    header["arities"] = arities;
    out << header.dump() << '\n';
    for (const auto& obs : dataset) out << observation_to_json(obs).dump() << '\n';
}

ObservationFile read_observations(std::istream& in) {
    ObservationFile file;
    nlohmann::json header = read_stream_header(in, kObservationStreamFormat);
    if (header.contains("arities")) file.arities = header.at("arities").get<std::vector<int>>();
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        file.sequences.push_back(observation_from_json(parse_json_line(line, line_no)));
    }
    return file;
}

}  // namespace incgate
