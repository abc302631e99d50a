#include "incgate/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

int parse_int(const std::string& s, const char* what) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("bad " + std::string(what) + " '" + s + "'");
    return value;
}

// Seeded Fisher-Yates; uses the library RNG so shuffles are stable across
// platforms.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, hmm::detail::Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

CivilDays days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned mp = static_cast<unsigned>(m + (m > 2 ? -3 : 9));
    const unsigned doy = (153 * mp + 2) / 5 + static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<CivilDays>(era) * 146097 + static_cast<CivilDays>(doe) - 719468;
}

CivilDays parse_iso_date(std::string_view text) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw ParseError("bad ISO-8601 date '" + std::string(text) + "'");
    auto num = [&](std::string_view part, int& out) {
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        if (ec != std::errc() || ptr != part.data() + part.size())
            throw ParseError("bad ISO-8601 date '" + std::string(text) + "'");
    };
    num(text.substr(0, 4), y);
    num(text.substr(5, 2), m);
    num(text.substr(8, 2), d);
    if (m < 1 || m > 12 || d < 1 || d > 31)
        throw ParseError("bad ISO-8601 date '" + std::string(text) + "'");
    return days_from_civil(y, m, d);
}

std::string format_iso_date(CivilDays days) {
    // Inverse of days_from_civil.
    CivilDays z = days + 719468;
    const CivilDays era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const CivilDays y = static_cast<CivilDays>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    const long long year = y + (m <= 2);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", year, m, d);
    return buf;
}

ScannerReportTable ScannerReportTable::parse(std::istream& in) {
    ScannerReportTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line.rfind("host,", 0) == 0) continue;
        auto fields = split_csv(line);
        if (fields.size() != 4)
            throw ParseError("scanner report line " + std::to_string(line_no) +
                             ": expected host,flagged,total,first_reported");
        ScannerReport report;
        report.host = fields[0];
        std::transform(report.host.begin(), report.host.end(), report.host.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        report.flagged = parse_int(fields[1], "flagged count");
        report.total = parse_int(fields[2], "scanner total");
        if (report.flagged < 0 || report.flagged > report.total)
            throw ParseError("scanner report line " + std::to_string(line_no) +
                             ": flagged must be in [0, total]");
        if (!fields[3].empty()) report.first_reported = parse_iso_date(fields[3]);
        table.insert(std::move(report));
    }
    return table;
}

ScannerReportTable ScannerReportTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scanner report file: " + path);
    return parse(in);
}

void ScannerReportTable::insert(ScannerReport report) {
    reports_[report.host] = std::move(report);
}

const ScannerReport* ScannerReportTable::find(const std::string& host) const {
    auto it = reports_.find(host);
    return it == reports_.end() ? nullptr : &it->second;
}

int ScannerReportTable::flagged(const std::string& host) const {
    const ScannerReport* report = find(host);
    return report ? report->flagged : 0;
}

void LabelingConfig::validate() const {
    if (malicious_threshold < 1) throw InvalidConfig("malicious_threshold must be >= 1");
}

std::size_t LabeledDataset::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(sequences.begin(), sequences.end(),
                      [label](const ObservationSequence& s) { return s.label == label; }));
}

LabeledDataset label_sequences(std::vector<ObservationSequence> sequences,
                               const ScannerReportTable& reports, const LabelingConfig& config,
                               const SuffixTable* suffixes) {
    config.validate();
    LabeledDataset dataset;
    auto whitelisted = [&](const std::string& host) {
        if (config.reputable_whitelist.count(host)) return true;
        if (!suffixes) return false;
        Labels labels;
        std::size_t start = 0;
        while (start <= host.size()) {
            auto dot = host.find('.', start);
            if (dot == std::string::npos) {
                labels.push_back(host.substr(start));
                break;
            }
            labels.push_back(host.substr(start, dot - start));
            start = dot + 1;
        }
        auto registrable = suffixes->registrable_domain(labels);
        return registrable && config.reputable_whitelist.count(join_labels(*registrable)) > 0;
    };

    for (auto& seq : sequences) {
        if (seq.hosts.empty() && !seq.terminal_host.empty()) seq.hosts = {seq.terminal_host};
        const std::vector<std::string>& chain = seq.hosts;
        if (chain.empty()) {
            seq.label = Label::unlabeled;
            dataset.gray.push_back(std::move(seq));
            continue;
        }
        const std::string& terminal = chain.back();

        bool terminal_whitelisted = whitelisted(terminal);
        if (reports.flagged(terminal) >= config.malicious_threshold && !terminal_whitelisted) {
            seq.label = Label::malicious;
            dataset.sequences.push_back(std::move(seq));
            continue;
        }
        bool all_clean = true;
        for (const auto& host : chain)
            all_clean = all_clean && (reports.flagged(host) == 0 || whitelisted(host));
        if (all_clean) {
            seq.label = Label::benign;
            dataset.sequences.push_back(std::move(seq));
        } else {
            seq.label = Label::unlabeled;
            dataset.gray.push_back(std::move(seq));
        }
    }
    return dataset;
}

ExtractionResult extract_observations(std::istream& events, const HostTables& tables,
                                      const DiscretizationConfig& features) {
    EventReader reader(events);
    ForestBuilder builder(tables);
    while (auto event = reader.next()) builder.apply(*event);

    ExtractionResult result;
    result.pages = builder.pages().size();
    result.accepted_events = builder.accepted();
    result.quarantined_events = builder.quarantined();
    result.diagnostics = builder.diagnostics();

    std::set<std::string> seen_chains;
    for (const auto& [page_id, tree] : builder.pages()) {
        for (const auto& node : tree.nodes()) {
            if (node.inline_resource) continue;
            ObservationSequence obs = vectorize_sequence(extract_sequence(tree, node.id), features);
            obs.page = page_id;
            obs.ts_ms = node.ts_ms;
            std::string chain;
            for (const auto& host : obs.hosts) {
                chain += host;
                chain += '\n';
            }
            if (seen_chains.insert(chain).second)
                result.sequences.push_back(std::move(obs));
            else
                ++result.duplicate_sequences;
        }
    }
    return result;
}

double Metrics::accuracy() const {
    long total = tp + fp + tn + fn;
    return total == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
}

nlohmann::json Metrics::to_json() const {
    nlohmann::json folds_json = nlohmann::json::array();
    for (const auto& f : folds) {
        nlohmann::json fj{{"fold", f.fold}, {"tp", f.tp}, {"fp", f.fp},
                          {"tn", f.tn},    {"fn", f.fn}};
        if (f.fpr) fj["fpr"] = *f.fpr;
        if (f.fnr) fj["fnr"] = *f.fnr;
        folds_json.push_back(std::move(fj));
    }
    return nlohmann::json{{"false_positive_rate", false_positive_rate},
                          {"false_negative_rate", false_negative_rate},
                          {"detection_rate", detection_rate},
                          {"accuracy", accuracy()},
                          {"confusion", {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}},
                          {"folds", std::move(folds_json)}};
}

std::vector<std::size_t> stratified_fold_assignment(const LabeledDataset& dataset, int k,
                                                    std::uint64_t seed) {
    const auto n = dataset.sequences.size();
    std::vector<std::size_t> assignment(n, 0);

    // Length decile boundaries over the whole dataset.
    std::vector<std::size_t> lengths(n);
    for (std::size_t i = 0; i < n; ++i) lengths[i] = dataset.sequences[i].length();
    std::vector<std::size_t> sorted = lengths;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> boundaries;
    for (int d = 1; d < 10; ++d) boundaries.push_back(sorted[n * static_cast<std::size_t>(d) / 10]);
    auto stratum = [&boundaries](std::size_t length) {
        return static_cast<std::size_t>(
            std::upper_bound(boundaries.begin(), boundaries.end(), length) - boundaries.begin());
    };

    hmm::detail::Rng rng(seed);
    for (Label label : {Label::benign, Label::malicious}) {
        // Group this class by stratum, shuffle within, then deal round-robin
        // with a running counter so per-fold class counts stay within one.
        std::vector<std::vector<std::size_t>> strata(10);
        for (std::size_t i = 0; i < n; ++i)
            if (dataset.sequences[i].label == label) strata[stratum(lengths[i])].push_back(i);
        std::size_t dealt = 0;
        for (auto& group : strata) {
            deterministic_shuffle(group, rng);
            for (std::size_t index : group)
                assignment[index] = dealt++ % static_cast<std::size_t>(k);
        }
    }
    return assignment;
}

Metrics kfold_evaluate(const LabeledDataset& dataset, int k, const hmm::HmmConfig& hmm_config,
                       std::uint64_t seed) {
    if (dataset.sequences.empty()) throw EmptyDataset("no labeled sequences to evaluate");
    if (k < 2 || static_cast<std::size_t>(k) > dataset.sequences.size())
        throw InvalidConfig("fold count must be in [2, dataset size]");

    hmm::HmmConfig config = hmm_config;
    if (config.feature_arities.empty()) config.feature_arities = dataset.arities;

    auto assignment = stratified_fold_assignment(dataset, k, seed);

    std::size_t n_benign = dataset.count(Label::benign);
    std::size_t n_malicious = dataset.count(Label::malicious);
    for (int fold = 0; fold < k; ++fold) {
        std::size_t held_benign = 0, held_malicious = 0;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (assignment[i] != static_cast<std::size_t>(fold)) continue;
            (dataset.sequences[i].label == Label::benign ? held_benign : held_malicious) += 1;
        }
        if (n_benign - held_benign == 0 || n_malicious - held_malicious == 0)
            throw InsufficientData("fold " + std::to_string(fold) +
                                   " leaves a class without training data");
    }

    Metrics metrics;
    double fpr_sum = 0, fnr_sum = 0;
    int fpr_folds = 0, fnr_folds = 0;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<ObservationSequence> train_benign, train_malicious;
        std::vector<const ObservationSequence*> held;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            const auto& seq = dataset.sequences[i];
            if (assignment[i] == static_cast<std::size_t>(fold)) {
                held.push_back(&seq);
            } else if (seq.label == Label::benign) {
                train_benign.push_back(seq);
            } else {
                train_malicious.push_back(seq);
            }
        }

        hmm::HmmConfig benign_config = config;
        benign_config.seed = seed + static_cast<std::uint64_t>(2 * fold);
        hmm::HmmConfig malicious_config = config;
        malicious_config.seed = seed + static_cast<std::uint64_t>(2 * fold + 1);

        ModelPair pair{hmm::train_new(benign_config, train_benign).first,
                       hmm::train_new(malicious_config, train_malicious).first, 0.0};

        FoldMetrics fm;
        fm.fold = fold;
        for (const auto* seq : held) {
            Decision decision = classify(pair, *seq);
            bool predicted_malicious = decision.label == Label::malicious;
            if (seq->label == Label::malicious) {
                (predicted_malicious ? fm.tp : fm.fn) += 1;
            } else {
                (predicted_malicious ? fm.fp : fm.tn) += 1;
            }
        }
        if (fm.fp + fm.tn > 0) {
            fm.fpr = static_cast<double>(fm.fp) / static_cast<double>(fm.fp + fm.tn);
            fpr_sum += *fm.fpr;
            ++fpr_folds;
        }
        if (fm.fn + fm.tp > 0) {
            fm.fnr = static_cast<double>(fm.fn) / static_cast<double>(fm.fn + fm.tp);
            fnr_sum += *fm.fnr;
            ++fnr_folds;
        }
        metrics.tp += fm.tp;
        metrics.fp += fm.fp;
        metrics.tn += fm.tn;
        metrics.fn += fm.fn;
        metrics.folds.push_back(fm);
    }

    metrics.false_positive_rate = fpr_folds ? fpr_sum / fpr_folds : 0.0;
    metrics.false_negative_rate = fnr_folds ? fnr_sum / fnr_folds : 0.0;
    metrics.detection_rate = 1.0 - metrics.false_negative_rate;
    return metrics;
}

std::string subset_name(const std::set<FeatureCategory>& categories) {
    std::string name;
    if (categories.count(FeatureCategory::dns)) name += "DNS";
    if (categories.count(FeatureCategory::string_based)) name += name.empty() ? "String" : "+String";
    if (categories.count(FeatureCategory::role)) name += name.empty() ? "Role" : "+Role";
    return name;
}

LabeledDataset mask_dataset(const LabeledDataset& dataset,
                            const std::set<FeatureCategory>& categories,
                            const DiscretizationConfig& config) {
    auto schema_arities = FeatureSchema::arities(config);
    if (dataset.arities != schema_arities)
        throw InvalidConfig("feature masking requires the 24-feature extractor schema");
    auto indices = FeatureSchema::indices_for(categories);

    LabeledDataset masked;
    for (int index : indices) masked.arities.push_back(schema_arities[static_cast<std::size_t>(index)]);
    auto project = [&indices](const ObservationSequence& seq) {
        ObservationSequence out = seq;
        out.symbols.clear();
        for (const auto& row : seq.symbols) {
            std::vector<int> kept;
            kept.reserve(indices.size());
            for (int index : indices) kept.push_back(row[static_cast<std::size_t>(index)]);
            out.symbols.push_back(std::move(kept));
        }
        return out;
    };
    for (const auto& seq : dataset.sequences) masked.sequences.push_back(project(seq));
    for (const auto& seq : dataset.gray) masked.gray.push_back(project(seq));
    return masked;
}

std::map<std::string, Metrics> feature_ablation(
    const LabeledDataset& dataset, const std::vector<std::set<FeatureCategory>>& subsets, int k,
    const hmm::HmmConfig& hmm_config, std::uint64_t seed,
    const DiscretizationConfig& discretization) {
    std::map<std::string, Metrics> results;
    for (const auto& subset : subsets) {
        if (subset.empty()) throw EmptySubset("ablation subset is empty");
        LabeledDataset masked = mask_dataset(dataset, subset, discretization);
        hmm::HmmConfig config = hmm_config;
        config.feature_arities = masked.arities;
        results[subset_name(subset)] = kfold_evaluate(masked, k, config, seed);
    }
    return results;
}

nlohmann::json EarlyDetectionReport::to_json() const {
    auto frac = [this](long count) {
        return total() == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total());
    };
    return nlohmann::json{
        {"counts",
         {{"same_day", same_day},
          {"within_week", within_week},
          {"within_month", within_month},
          {"later", later},
          {"never", never}}},
        {"fractions",
         {{"same_day", frac(same_day)},
          {"within_week", frac(within_week)},
          {"within_month", frac(within_month)},
          {"later", frac(later)},
          {"never", frac(never)}}},
        {"total", total()}};
}

EarlyDetectionReport early_detection_report(const std::vector<DetectionRecord>& detections,
                                            const ScannerReportTable& reports) {
    // One bucket entry per host, keyed on its earliest detection.
    std::map<std::string, CivilDays> earliest;
    for (const auto& d : detections) {
        auto it = earliest.find(d.host);
        if (it == earliest.end() || d.detected < it->second) earliest[d.host] = d.detected;
    }

    EarlyDetectionReport report;
    for (const auto& [host, detected] : earliest) {
        const ScannerReport* sr = reports.find(host);
        if (!sr || !sr->first_reported) {
            ++report.never;
            continue;
        }
        CivilDays delay = *sr->first_reported - detected;
        if (delay <= 0)
            ++report.same_day;
        else if (delay <= 7)
            ++report.within_week;
        else if (delay <= 31)
            ++report.within_month;
        else
            ++report.later;
    }
    return report;
}

void SyntheticSpec::validate() const {
    if (n_benign < 0 || n_malicious < 0) throw InvalidSpec("sequence counts must be >= 0");
    if (n_benign + n_malicious == 0) throw InvalidSpec("at least one sequence required");
    if (min_length < 1 || max_length < min_length)
        throw InvalidSpec("lengths must satisfy 1 <= min_length <= max_length");
    if (separation < 0 || separation > 1) throw InvalidSpec("separation must be in [0, 1]");
    if (generator_states < 1) throw InvalidSpec("generator_states must be >= 1");
    for (int a : feature_arities)
        if (a < 2) throw InvalidSpec("feature arities must be >= 2");
}

nlohmann::json SyntheticSpec::to_json() const {
    return nlohmann::json{{"format", "incgate-synthetic-spec"},
                          {"version", 1},
                          {"n_benign", n_benign},
                          {"n_malicious", n_malicious},
                          {"min_length", min_length},
                          {"max_length", max_length},
                          {"separation", separation},
                          {"generator_states", generator_states},
                          {"feature_arities", feature_arities}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
    try {
        SyntheticSpec spec;
        spec.n_benign = j.at("n_benign").get<int>();
        spec.n_malicious = j.at("n_malicious").get<int>();
        spec.min_length = j.at("min_length").get<int>();
        spec.max_length = j.at("max_length").get<int>();
        spec.separation = j.at("separation").get<double>();
        if (j.contains("generator_states"))
            spec.generator_states = j.at("generator_states").get<int>();
        if (j.contains("feature_arities"))
            spec.feature_arities = j.at("feature_arities").get<std::vector<int>>();
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(std::string("bad synthetic spec: ") + e.what());
    }
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw InvalidSpec("synthetic spec is not valid JSON: " + path);
    return from_json(j);
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<int> arities = spec.feature_arities;
    if (arities.empty()) arities = FeatureSchema::arities(DiscretizationConfig{});

    hmm::HmmConfig generator_config;
    generator_config.num_states = spec.generator_states;
    generator_config.feature_arities = arities;
    generator_config.seed = seed;

    // Shared base plus class-specific components; `separation` interpolates
    // between identical classes and disjoint emission supports.
    auto with_seed = [&generator_config](std::uint64_t s) {
        hmm::HmmConfig c = generator_config;
        c.seed = s;
        return c;
    };
    hmm::CategoricalHmm shared = hmm::init_model(with_seed(seed));
    hmm::CategoricalHmm other = hmm::init_model(with_seed(seed ^ 0x9e3779b97f4a7c15ull));

    hmm::detail::Rng rng(seed ^ 0xda3e39cb94b95bdbull);
    auto half_support = [&rng](int states, int arity, bool lower) {
        hmm::Matrix b = hmm::Matrix::Zero(states, arity);
        int split = std::max(1, arity / 2);
        int begin = lower ? 0 : split;
        int end = lower ? split : arity;
        for (int s = 0; s < states; ++s) {
            double sum = 0;
            for (int v = begin; v < end; ++v) {
                b(s, v) = -std::log1p(-rng.next_double());
                sum += b(s, v);
            }
            if (sum > 0)
                b.row(s) /= sum;
            else
                b(s, begin) = 1.0;
        }
        return b;
    };

    const double s = spec.separation;
    hmm::CategoricalHmm benign = shared;
    hmm::CategoricalHmm malicious = shared;
    malicious.transition = (1 - s) * shared.transition + s * other.transition;
    malicious.initial = (1 - s) * shared.initial + s * other.initial;
    for (std::size_t f = 0; f < arities.size(); ++f) {
        hmm::Matrix benign_part = half_support(spec.generator_states, arities[f], true);
        hmm::Matrix malicious_part = half_support(spec.generator_states, arities[f], false);
        benign.emissions[f] = (1 - s) * shared.emissions[f] + s * benign_part;
        malicious.emissions[f] = (1 - s) * shared.emissions[f] + s * malicious_part;
    }

    SyntheticResult result;
    result.dataset.arities = arities;
    hmm::detail::Rng driver(seed);
    auto emit = [&](const hmm::CategoricalHmm& model, Label label, int count,
                    const char* prefix) {
        for (int i = 0; i < count; ++i) {
            int length = spec.min_length +
                         static_cast<int>(driver.next_u64() %
                                          static_cast<std::uint64_t>(spec.max_length -
                                                                     spec.min_length + 1));
            ObservationSequence obs = hmm::sample(model, length, driver.next_u64());
            obs.label = label;
            obs.page = std::string("synthetic:") + prefix + ":" + std::to_string(i);
            result.dataset.sequences.push_back(std::move(obs));
        }
    };
    emit(benign, Label::benign, spec.n_benign, "benign");
    emit(malicious, Label::malicious, spec.n_malicious, "malicious");

    result.generators = ModelPair{std::move(benign), std::move(malicious), 0.0};
    return result;
}

nlohmann::json metrics_document(const Metrics& metrics,
                                const std::map<std::string, Metrics>& ablations,
                                const nlohmann::json& config_echo,
                                const nlohmann::json& input_digests) {
    nlohmann::json doc{{"format", "incgate-metrics"},
                       {"version", 1},
                       {"config", config_echo},
                       {"inputs", input_digests},
                       {"metrics", metrics.to_json()}};
    if (!ablations.empty()) {
        nlohmann::json ab = nlohmann::json::object();
        for (const auto& [name, m] : ablations) ab[name] = m.to_json();
        doc["ablations"] = std::move(ab);
    }
    return doc;
}

}  // namespace incgate
