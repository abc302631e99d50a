#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "incgate/classifier.hpp"
#include "incgate/features.hpp"
#include "incgate/hmm.hpp"

namespace incgate {

// Calendar dates as days since 1970-01-01; ISO-8601 on the wire.
using CivilDays = std::int64_t;

CivilDays days_from_civil(int year, int month, int day);
CivilDays parse_iso_date(std::string_view text);
std::string format_iso_date(CivilDays days);

struct ScannerReport {
    std::string host;
    int flagged = 0;
    int total = 62;
    std::optional<CivilDays> first_reported;
};

// Offline snapshot of per-host URL-scanner verdicts, loaded from
// "host,flagged,total,first_reported" CSV.
class ScannerReportTable {
public:
    static ScannerReportTable parse(std::istream& in);
    static ScannerReportTable load(const std::string& path);

    void insert(ScannerReport report);
    const ScannerReport* find(const std::string& host) const;
    int flagged(const std::string& host) const;  // 0 for unknown hosts
    std::size_t size() const { return reports_.size(); }

private:
    std::map<std::string, ScannerReport> reports_;
};

struct LabelingConfig {
    int malicious_threshold = 3;
    std::set<std::string> reputable_whitelist;

    void validate() const;  // throws InvalidConfig
};

struct LabeledDataset {
    std::vector<ObservationSequence> sequences;  // benign + malicious only
    std::vector<ObservationSequence> gray;       // excluded from both classes
    std::vector<int> arities;

    std::size_t gray_count() const { return gray.size(); }
    std::size_t count(Label label) const;
};

// Terminal host flagged by >= threshold scanners => malicious; every host in
// the chain clean or whitelisted => benign; anything else is gray. The
// whitelist wins over scanner verdicts. `suffixes` (optional) enables
// registrable-domain whitelist matching.
LabeledDataset label_sequences(std::vector<ObservationSequence> sequences,
                               const ScannerReportTable& reports, const LabelingConfig& config,
                               const SuffixTable* suffixes = nullptr);

struct ExtractionResult {
    std::vector<ObservationSequence> sequences;
    std::uint64_t pages = 0;
    std::uint64_t accepted_events = 0;
    std::uint64_t quarantined_events = 0;
    std::uint64_t duplicate_sequences = 0;
    std::vector<std::string> diagnostics;
};

// Replays an event stream into inclusion trees and emits one observation
// sequence per non-inline node, deduplicated on the host chain.
ExtractionResult extract_observations(std::istream& events, const HostTables& tables,
                                      const DiscretizationConfig& features);

struct FoldMetrics {
    int fold = 0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    std::optional<double> fpr;  // absent when the fold held no benign items
    std::optional<double> fnr;  // absent when the fold held no malicious items
};

struct Metrics {
    double false_positive_rate = 0;
    double false_negative_rate = 0;
    double detection_rate = 1;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    std::vector<FoldMetrics> folds;

    double accuracy() const;
    nlohmann::json to_json() const;
};

// Stratified k-fold cross-validation: per class, sequences are grouped into
// length deciles, shuffled, and dealt round-robin, so every fold sees the
// global class ratio (within one sequence) and the full length range.
Metrics kfold_evaluate(const LabeledDataset& dataset, int k, const hmm::HmmConfig& hmm_config,
                       std::uint64_t seed);

std::vector<std::size_t> stratified_fold_assignment(const LabeledDataset& dataset, int k,
                                                    std::uint64_t seed);

// Keeps only the features of the given categories; arities follow.
LabeledDataset mask_dataset(const LabeledDataset& dataset,
                            const std::set<FeatureCategory>& categories,
                            const DiscretizationConfig& config);

std::string subset_name(const std::set<FeatureCategory>& categories);

// Retrains and evaluates per category subset; requires 24-feature data.
std::map<std::string, Metrics> feature_ablation(
    const LabeledDataset& dataset, const std::vector<std::set<FeatureCategory>>& subsets, int k,
    const hmm::HmmConfig& hmm_config, std::uint64_t seed,
    const DiscretizationConfig& discretization);

struct DetectionRecord {
    std::string host;
    CivilDays detected = 0;
};

inline constexpr std::string_view kDetectionStreamFormat = "incgate-detections";

// Delay histogram between our detection of a host and its first
// URL-scanner report: same day, within a week, within a month, later, never.
struct EarlyDetectionReport {
    long same_day = 0;
    long within_week = 0;
    long within_month = 0;
    long later = 0;
    long never = 0;

    long total() const { return same_day + within_week + within_month + later + never; }
    nlohmann::json to_json() const;
};

EarlyDetectionReport early_detection_report(const std::vector<DetectionRecord>& detections,
                                            const ScannerReportTable& reports);

// Two generator HMMs at a configurable separation: 0 makes the classes
// statistically identical, 1 gives them disjoint per-feature emission
// supports.
struct SyntheticSpec {
    int n_benign = 5000;
    int n_malicious = 5000;
    int min_length = 2;
    int max_length = 8;
    double separation = 1.0;
    int generator_states = 2;
    std::vector<int> feature_arities;  // empty selects the 24-feature schema

    void validate() const;  // throws InvalidSpec
    nlohmann::json to_json() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
    static SyntheticSpec load(const std::string& path);
};

struct SyntheticResult {
    LabeledDataset dataset;
    ModelPair generators;
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Self-describing metrics document: rates at full precision plus the config
// echo and input digests that make the run reproducible.
nlohmann::json metrics_document(const Metrics& metrics,
                                const std::map<std::string, Metrics>& ablations,
                                const nlohmann::json& config_echo,
                                const nlohmann::json& input_digests);

}  // namespace incgate
