#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "incgate/host.hpp"
#include "incgate/inclusion.hpp"

namespace incgate {

// Relative TLD transitions; `none`/`gen`/`cc`/`other` after folding the
// subdomain and punycode categories onto their base category.
enum class RelTld {
    none,
    got_tld,
    lost_tld,
    gen_to_cc,
    gen_to_other,
    cc_to_gen,
    cc_to_other,
    other_to_gen,
    other_to_cc,
    same_gen,
    same_cc,
    same_other,
    diff_gen,
    diff_cc,
    diff_other,
};

enum class RelType {
    none,
    same_site,     // equal registrable domains
    same_sld,      // equal trailing two labels that are not a registry suffix
    same_company,  // registrables share their leftmost label under different suffixes
    same_eff_tld,  // equal multi-label public suffix
    same_tld,      // equal final label
    different,
};

enum class RelCmp { none, less, equal, more };

enum class RelRole { none, yes, no };

std::string_view to_string(RelTld value);
std::string_view to_string(RelType value);
std::string_view to_string(RelCmp value);
std::string_view to_string(RelRole value);
RelTld rel_tld_from_string(std::string_view name);
RelType rel_type_from_string(std::string_view name);

struct DiscretizationConfig {
    int bins = 10;

    // How "equal" is decided for relative continuous comparisons.
    enum class Equality { bin_index, raw_value } equality = Equality::bin_index;

    // How an absent Alexa rank compares against a ranked parent/child. The
    // default treats unranked as beyond the top million (worse than any bin).
    enum class UnrankedCompare { beyond_top, always_equal } unranked =
        UnrankedCompare::beyond_top;

    void validate() const;  // throws InvalidConfig

    int bin(double normalized) const;  // monotone, bin(0)=0, bin(1)=bins-1
};

struct FeatureVector {
    // individual
    TldCategory tld = TldCategory::none;
    HostKind type = HostKind::dns_sld;
    int level_bin = 0;
    std::optional<int> alexa_bin;  // nullopt encodes the `none` sentinel
    int non_alpha_bin = 0;
    int unique_chars_bin = 0;
    int char_freq_bin = 0;
    int length_bin = 0;
    int entropy_bin = 0;
    bool role_ad = false;
    bool role_cdn = false;
    bool role_short = false;
    // relative (all `none` for the root resource)
    RelTld rel_tld = RelTld::none;
    RelType rel_type = RelType::none;
    RelCmp rel_level = RelCmp::none;
    RelCmp rel_alexa = RelCmp::none;
    RelCmp rel_non_alpha = RelCmp::none;
    RelCmp rel_unique = RelCmp::none;
    RelCmp rel_char_freq = RelCmp::none;
    RelCmp rel_length = RelCmp::none;
    RelCmp rel_entropy = RelCmp::none;
    RelRole rel_role_ad = RelRole::none;
    RelRole rel_role_cdn = RelRole::none;
    RelRole rel_role_short = RelRole::none;

    // Encoded symbols in schema order; arity per slot from FeatureSchema.
    std::array<int, 24> encode(const DiscretizationConfig& config) const;
};

// The raw normalized values behind the continuous bins; kept for the
// raw-value equality mode of relative comparisons.
struct ContinuousValues {
    double level = 0;
    std::optional<double> alexa;
    double non_alpha = 0;
    double unique_chars = 0;
    double char_freq = 0;
    double length = 0;
    double entropy = 0;
};

enum class FeatureCategory { dns, string_based, role };

// Stable 24-slot feature ordering shared by the extractor, the observation
// files, and the model files (see schema/observation_schema.json).
struct FeatureSchema {
    static constexpr int kFeatureCount = 24;

    static const std::array<std::string_view, kFeatureCount>& names();
    static std::vector<int> arities(const DiscretizationConfig& config);
    static FeatureCategory category(int index);
    static std::vector<int> indices_for(const std::set<FeatureCategory>& categories);
    static nlohmann::json describe(const DiscretizationConfig& config);
};

enum class Label { benign, malicious, unlabeled };

std::string_view to_string(Label label);
Label label_from_string(std::string_view name);

// Encoded per-resource feature tuples for one inclusion sequence, plus the
// provenance the evaluation pipeline needs (host chain for labeling,
// terminal URL and timestamp for reporting). Rows are 24 symbols wide when
// they come from the extractor, narrower after category masking.
struct ObservationSequence {
    std::vector<std::vector<int>> symbols;
    Label label = Label::unlabeled;

    std::string page;
    std::vector<std::string> hosts;  // chain r0..rn, empty for synthetic data
    std::string terminal_url;
    std::string terminal_host;
    std::int64_t ts_ms = 0;

    std::size_t length() const { return symbols.size(); }
};

FeatureVector individual_features(const Host& host, const DiscretizationConfig& config);
ContinuousValues continuous_values(const Host& host);

// Fills the relative half of `current`. `parent` is absent exactly for the
// root; ancestor flags are ORs over all strict ancestors.
void relative_features(FeatureVector& current, const Host& current_host,
                       const FeatureVector* parent, const Host* parent_host,
                       bool ancestor_ad, bool ancestor_cdn, bool ancestor_short,
                       const DiscretizationConfig& config);

std::vector<FeatureVector> vectorize(const InclusionSequence& sequence,
                                     const DiscretizationConfig& config);

ObservationSequence vectorize_sequence(const InclusionSequence& sequence,
                                       const DiscretizationConfig& config);

inline constexpr std::string_view kObservationStreamFormat = "incgate-observations";

nlohmann::json observation_to_json(const ObservationSequence& obs);
ObservationSequence observation_from_json(const nlohmann::json& j);

void write_observations(std::ostream& out, const std::vector<ObservationSequence>& dataset,
                        const std::vector<int>& arities);

struct ObservationFile {
    std::vector<ObservationSequence> sequences;
    std::vector<int> arities;
};

ObservationFile read_observations(std::istream& in);

}  // namespace incgate
