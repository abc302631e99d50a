// incgate: reconstructs web-resource inclusion trees from load-event logs,
// trains benign/malicious sequence models, and classifies or gates
// third-party inclusion sequences.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "incgate/classifier.hpp"
#include "incgate/errors.hpp"
#include "incgate/eval.hpp"
#include "incgate/features.hpp"
#include "incgate/gate.hpp"
#include "incgate/hmm.hpp"
#include "incgate/inclusion.hpp"
#include "incgate/io.hpp"

namespace {

using namespace incgate;

struct CliSettings {
    DiscretizationConfig features{};
    HostConfig host_config{};
    bool psl_include_private = true;
    hmm::HmmConfig hmm_config{};
    LabelingConfig labeling{};
    double bias = 0.0;
};

void apply_config_file(CliSettings& settings, const std::string& path) {
    json config = json::parse(read_file(path), nullptr, false);
    if (config.is_discarded()) throw ParseError("config file is not valid JSON: " + path);
    if (config.contains("bins")) settings.features.bins = config.at("bins").get<int>();
    if (config.contains("generic_tlds")) {
        settings.host_config.generic_tlds.clear();
        for (const auto& tld : config.at("generic_tlds"))
            settings.host_config.generic_tlds.insert(tld.get<std::string>());
    }
    if (config.contains("psl_include_private"))
        settings.psl_include_private = config.at("psl_include_private").get<bool>();
    if (config.contains("hmm")) {
        const auto& h = config.at("hmm");
        if (h.contains("num_states")) settings.hmm_config.num_states = h.at("num_states").get<int>();
        if (h.contains("max_iterations"))
            settings.hmm_config.max_iterations = h.at("max_iterations").get<int>();
        if (h.contains("log_likelihood_tolerance"))
            settings.hmm_config.log_likelihood_tolerance =
                h.at("log_likelihood_tolerance").get<double>();
        if (h.contains("smoothing_alpha"))
            settings.hmm_config.smoothing_alpha = h.at("smoothing_alpha").get<double>();
        if (h.contains("restarts")) settings.hmm_config.restarts = h.at("restarts").get<int>();
        if (h.contains("seed")) settings.hmm_config.seed = h.at("seed").get<std::uint64_t>();
    }
    if (config.contains("labeling")) {
        const auto& l = config.at("labeling");
        if (l.contains("malicious_threshold"))
            settings.labeling.malicious_threshold = l.at("malicious_threshold").get<int>();
        if (l.contains("whitelist_hosts"))
            for (const auto& host : l.at("whitelist_hosts"))
                settings.labeling.reputable_whitelist.insert(host.get<std::string>());
    }
    if (config.contains("bias")) settings.bias = config.at("bias").get<double>();
}

struct TableFiles {
    std::string suffixes;
    std::string ranks;
    std::vector<std::string> roles;  // ad-networks, cdns, shorteners
};

struct LoadedTables {
    SuffixTable suffixes;
    RankTable ranks;
    RoleTable roles;
};

LoadedTables load_tables(const TableFiles& files, const CliSettings& settings) {
    LoadedTables tables;
    if (files.suffixes.empty()) throw ParseError("--suffixes is required for host parsing");
    tables.suffixes =
        SuffixTable::load(files.suffixes, SuffixTable::Options{settings.psl_include_private});
    if (!files.ranks.empty()) tables.ranks = RankTable::load(files.ranks);
    if (!files.roles.empty()) {
        if (files.roles.size() != 3)
            throw ParseError("--roles expects three files: ad-networks, CDNs, URL shorteners");
        tables.roles = RoleTable::load(files.roles[0], files.roles[1], files.roles[2]);
    }
    return tables;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::binary | std::ios::trunc);
    if (!file) throw ParseError("cannot open output file: " + path);
    return file;
}

std::istream& open_input(std::ifstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cin;
    file.open(path, std::ios::binary);
    if (!file) throw ParseError("cannot open input file: " + path);
    return file;
}

ModelPair load_model_pair(const std::vector<std::string>& paths, double bias) {
    if (paths.size() != 2)
        throw ParseError("--models expects two files: benign model, malicious model");
    ModelPair pair{hmm::CategoricalHmm::load(paths[0]), hmm::CategoricalHmm::load(paths[1]), bias};
    pair.validate();
    return pair;
}

std::set<FeatureCategory> parse_subset(std::string spec) {
    std::set<FeatureCategory> subset;
    std::replace(spec.begin(), spec.end(), '+', ',');
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::transform(part.begin(), part.end(), part.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (part == "dns" || part == "d")
            subset.insert(FeatureCategory::dns);
        else if (part == "string" || part == "s")
            subset.insert(FeatureCategory::string_based);
        else if (part == "role" || part == "r")
            subset.insert(FeatureCategory::role);
        else if (!part.empty())
            throw ParseError("unknown feature category '" + part + "' (use DNS, String, Role)");
    }
    if (subset.empty()) throw EmptySubset("ablation subset '" + spec + "' names no category");
    return subset;
}

int run_train(CliSettings settings, const std::string& observations_path,
              const std::string& events_path, const std::string& reports_path,
              const TableFiles& table_files, const std::string& label_whitelist_path,
              const std::string& out_benign, const std::string& out_malicious,
              const std::string& export_observations, const std::string& export_gray) {
    if (!label_whitelist_path.empty()) {
        std::ifstream in(label_whitelist_path);
        if (!in) throw ParseError("cannot open label whitelist: " + label_whitelist_path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::istringstream fields(line);
            std::string host;  // first token; gate-style kind lists are ignored here
            if (!(fields >> host) || host[0] == '#') continue;
            std::transform(host.begin(), host.end(), host.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            settings.labeling.reputable_whitelist.insert(host);
        }
    }
    std::vector<ObservationSequence> labeled;
    std::vector<int> arities;
    std::size_t gray_count = 0;

    if (!observations_path.empty()) {
        std::ifstream file;
        ObservationFile obs = read_observations(open_input(file, observations_path));
        labeled = std::move(obs.sequences);
        arities = obs.arities;
    } else {
        if (events_path.empty() || reports_path.empty())
            throw ParseError("train needs either --observations or --events plus --reports");
        LoadedTables tables = load_tables(table_files, settings);
        HostTables host_tables{tables.suffixes, tables.ranks, tables.roles,
                               settings.host_config};
        std::ifstream file;
        ExtractionResult extracted =
            extract_observations(open_input(file, events_path), host_tables, settings.features);
        if (extracted.quarantined_events > 0)
            log_warn(std::to_string(extracted.quarantined_events) + " events quarantined");
        for (const auto& diagnostic : extracted.diagnostics) log_debug(diagnostic);
        log_info(std::to_string(extracted.pages) + " pages, " +
                 std::to_string(extracted.sequences.size()) + " unique sequences, " +
                 std::to_string(extracted.duplicate_sequences) + " duplicates");
        ScannerReportTable reports = ScannerReportTable::load(reports_path);
        LabeledDataset dataset = label_sequences(std::move(extracted.sequences), reports,
                                                 settings.labeling, &tables.suffixes);
        gray_count = dataset.gray_count();
        log_info(std::to_string(dataset.count(Label::benign)) + " benign, " +
                 std::to_string(dataset.count(Label::malicious)) + " malicious, " +
                 std::to_string(gray_count) + " gray sequences");
        if (!export_gray.empty()) {
            std::ofstream gray_file;
            write_observations(open_output(gray_file, export_gray), dataset.gray,
                               FeatureSchema::arities(settings.features));
        }
        labeled = std::move(dataset.sequences);
        arities = FeatureSchema::arities(settings.features);
    }

    if (arities.empty()) throw ParseError("observation file carries no arity schema");
    if (!export_observations.empty()) {
        std::ofstream obs_file;
        write_observations(open_output(obs_file, export_observations), labeled, arities);
    }

    std::vector<ObservationSequence> benign, malicious;
    for (auto& seq : labeled) {
        if (seq.label == Label::benign)
            benign.push_back(std::move(seq));
        else if (seq.label == Label::malicious)
            malicious.push_back(std::move(seq));
    }
    if (benign.empty()) throw EmptyDataset("no benign sequences to train on");
    if (malicious.empty()) throw EmptyDataset("no malicious sequences to train on");

    hmm::HmmConfig config = settings.hmm_config;
    config.feature_arities = arities;
    hmm::HmmConfig malicious_config = config;
    malicious_config.seed = config.seed + 1;

    auto [benign_model, benign_trace] = hmm::train_new(config, benign);
    log_info("benign model: " + std::to_string(benign_trace.iterations) + " iterations, " +
             (benign_trace.converged ? "converged" : "hit max iterations"));
    auto [malicious_model, malicious_trace] = hmm::train_new(malicious_config, malicious);
    log_info("malicious model: " + std::to_string(malicious_trace.iterations) + " iterations, " +
             (malicious_trace.converged ? "converged" : "hit max iterations"));

    benign_model.save(out_benign);
    malicious_model.save(out_malicious);
    return 0;
}

int run_classify(const CliSettings& settings, const std::vector<std::string>& model_paths,
                 const std::string& observations_path, const std::string& out_path) {
    ModelPair pair = load_model_pair(model_paths, settings.bias);
    std::ifstream in_file;
    ObservationFile obs = read_observations(open_input(in_file, observations_path));
    if (!obs.arities.empty() && obs.arities != pair.benign.config.feature_arities)
        throw ArityMismatch("observation file arities do not match the model pair");

    std::ofstream out_file;
    std::ostream& out = open_output(out_file, out_path);
    out << make_stream_header("incgate-decisions").dump() << '\n';
    for (const auto& seq : obs.sequences) {
        Decision decision = classify(pair, seq);
        json record = decision_to_json(decision);
        if (!seq.terminal_url.empty()) record["url"] = seq.terminal_url;
        if (!seq.terminal_host.empty()) record["host"] = seq.terminal_host;
        if (seq.ts_ms != 0) record["detected"] = format_iso_date(seq.ts_ms / 86400000);
        out << record.dump() << '\n';
    }
    return 0;
}

int run_evaluate(const CliSettings& settings, const std::string& observations_path, int folds,
                 std::uint64_t seed, const std::vector<std::string>& ablate_specs,
                 const std::string& out_path) {
    std::string raw = read_file(observations_path);
    std::istringstream stream(raw);
    ObservationFile obs = read_observations(stream);

    LabeledDataset dataset;
    dataset.arities = obs.arities;
    for (auto& seq : obs.sequences) {
        if (seq.label == Label::unlabeled)
            throw ParseError("evaluate requires labeled observations");
        dataset.sequences.push_back(std::move(seq));
    }
    if (dataset.arities.empty()) throw ParseError("observation file carries no arity schema");

    hmm::HmmConfig config = settings.hmm_config;
    config.feature_arities = dataset.arities;
    Metrics metrics = kfold_evaluate(dataset, folds, config, seed);

    std::map<std::string, Metrics> ablations;
    if (!ablate_specs.empty()) {
        std::vector<std::set<FeatureCategory>> subsets;
        for (const auto& spec : ablate_specs) subsets.push_back(parse_subset(spec));
        ablations = feature_ablation(dataset, subsets, folds, config, seed, settings.features);
    }

    json config_echo{{"folds", folds},
                     {"seed", seed},
                     {"hmm", config.to_json()},
                     {"bins", settings.features.bins}};
    json digests{{"observations", fnv1a64_hex(raw)}};
    json doc = metrics_document(metrics, ablations, config_echo, digests);

    std::ofstream out_file;
    std::ostream& out = open_output(out_file, out_path);
    out << doc.dump(2) << '\n';
    return 0;
}

int run_gate(const CliSettings& settings, const std::vector<std::string>& model_paths,
             const std::string& whitelist_path, const TableFiles& table_files,
             const std::string& events_path, const std::string& out_path) {
    ModelPair pair = load_model_pair(model_paths, settings.bias);
    Whitelist whitelist;
    if (!whitelist_path.empty()) whitelist = Whitelist::load(whitelist_path);
    LoadedTables tables = load_tables(table_files, settings);
    HostTables host_tables{tables.suffixes, tables.ranks, tables.roles, settings.host_config};

    std::ifstream in_file;
    std::ofstream out_file;
    std::istream& in = open_input(in_file, events_path);
    std::ostream& out = open_output(out_file, out_path);
    std::uint64_t quarantined =
        gate_stream(in, out, pair, whitelist, host_tables, GateConfig{settings.features});
    if (quarantined > 0) log_warn(std::to_string(quarantined) + " events quarantined");
    return 0;
}

int run_gen_synthetic(const std::string& spec_path, std::uint64_t seed,
                      const std::string& out_path, const std::string& truth_benign,
                      const std::string& truth_malicious) {
    SyntheticSpec spec = SyntheticSpec::load(spec_path);
    SyntheticResult result = generate_synthetic(spec, seed);

    std::ofstream out_file;
    write_observations(open_output(out_file, out_path), result.dataset.sequences,
                       result.dataset.arities);
    if (!truth_benign.empty()) result.generators.benign.save(truth_benign);
    if (!truth_malicious.empty()) result.generators.malicious.save(truth_malicious);
    log_info("wrote " + std::to_string(result.dataset.sequences.size()) + " sequences");
    return 0;
}

int run_early_report(const std::string& decisions_path, const std::string& reports_path,
                     const std::string& out_path) {
    std::ifstream in_file;
    std::istream& in = open_input(in_file, decisions_path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty decisions stream");
    json header = parse_json_line(line, 1);
    std::string format = header.value("format", "");
    if (format != "incgate-decisions" && format != std::string(kDetectionStreamFormat))
        throw ParseError("expected an incgate-decisions or incgate-detections stream");

    std::vector<DetectionRecord> detections;
    std::size_t line_no = 1;
    std::size_t skipped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record = parse_json_line(line, line_no);
        if (record.value("label", "malicious") != "malicious") continue;
        if (!record.contains("host") || !record.contains("detected")) {
            ++skipped;
            continue;
        }
        detections.push_back(DetectionRecord{
            record.at("host").get<std::string>(),
            parse_iso_date(record.at("detected").get<std::string>())});
    }
    if (skipped > 0)
        log_warn(std::to_string(skipped) + " records lacked host/detected fields");

    ScannerReportTable reports = ScannerReportTable::load(reports_path);
    EarlyDetectionReport report = early_detection_report(detections, reports);

    std::ofstream out_file;
    std::ostream& out = open_output(out_file, out_path);
    json doc = report.to_json();
    doc["format"] = "incgate-early-detection";
    doc["version"] = 1;
    out << doc.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"inclusion-sequence reconstruction, training, and gating"};
    app.require_subcommand(1);

    std::string config_path;
    std::string log_level_name = "warn";
    app.add_option("--config", config_path, "JSON config file with defaults");
    app.add_option("--log-level", log_level_name, "error|warn|info|debug");

    CliSettings settings;
    // Config-file values act as defaults, so load them before the flag
    // bindings are parsed; explicit flags then override.
    try {
        for (int i = 1; i < argc; ++i) {
            std::string_view arg(argv[i]);
            if (arg == "--config" && i + 1 < argc)
                apply_config_file(settings, argv[i + 1]);
            else if (arg.rfind("--config=", 0) == 0)
                apply_config_file(settings, std::string(arg.substr(9)));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    }

    // train
    auto* train = app.add_subcommand("train", "train a benign/malicious model pair");
    train->fallthrough();
    std::string train_observations, train_events, train_reports;
    TableFiles train_tables;
    std::string out_benign, out_malicious, export_observations, export_gray;
    train->add_option("--observations", train_observations, "labeled observations file");
    train->add_option("--events", train_events, "raw load-event stream");
    train->add_option("--reports", train_reports, "scanner report CSV");
    train->add_option("--suffixes", train_tables.suffixes, "public suffix list");
    train->add_option("--ranks", train_tables.ranks, "rank CSV");
    train->add_option("--roles", train_tables.roles, "role lists: ad-networks cdns shorteners")
        ->expected(3);
    std::string label_whitelist;
    train->add_option("--label-whitelist", label_whitelist,
                      "reputable hosts treated as benign regardless of scanner verdicts");
    train->add_option("--out-benign", out_benign, "benign model output")->required();
    train->add_option("--out-malicious", out_malicious, "malicious model output")->required();
    train->add_option("--export-observations", export_observations,
                      "also write the labeled dataset");
    train->add_option("--export-gray", export_gray, "write excluded gray sequences");
    train->add_option("--states", settings.hmm_config.num_states, "HMM states");
    train->add_option("--seed", settings.hmm_config.seed, "training seed");
    train->add_option("--iterations", settings.hmm_config.max_iterations, "max EM iterations");
    train->add_option("--restarts", settings.hmm_config.restarts, "EM restarts");
    train->add_option("--threshold", settings.labeling.malicious_threshold,
                      "scanner count for malicious");

    // classify
    auto* classify_cmd = app.add_subcommand("classify", "score observation sequences");
    classify_cmd->fallthrough();
    std::vector<std::string> classify_models;
    std::string classify_observations, classify_out;
    classify_cmd->add_option("--models", classify_models, "benign and malicious model files")
        ->expected(2)
        ->required();
    classify_cmd->add_option("--observations", classify_observations, "observations file")
        ->required();
    classify_cmd->add_option("--out", classify_out, "output file (default stdout)");
    classify_cmd->add_option("--bias", settings.bias, "log-likelihood bias");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validation metrics");
    evaluate->fallthrough();
    std::string eval_observations, eval_out;
    int folds = 10;
    std::uint64_t eval_seed = 0;
    std::vector<std::string> ablate_specs;
    evaluate->add_option("--observations", eval_observations, "labeled observations file")
        ->required();
    evaluate->add_option("--folds", folds, "fold count");
    evaluate->add_option("--seed", eval_seed, "fold/shuffle seed");
    evaluate->add_option("--ablate", ablate_specs,
                         "feature category subset, e.g. DNS or DNS+String (repeatable)");
    evaluate->add_option("--out", eval_out, "metrics output file (default stdout)");
    evaluate->add_option("--states", settings.hmm_config.num_states, "HMM states");
    evaluate->add_option("--iterations", settings.hmm_config.max_iterations, "max EM iterations");
    evaluate->add_option("--restarts", settings.hmm_config.restarts, "EM restarts");

    // gate
    auto* gate = app.add_subcommand("gate", "stream allow/block decisions for load events");
    gate->fallthrough();
    std::vector<std::string> gate_models;
    std::string gate_whitelist, gate_events, gate_out;
    TableFiles gate_tables;
    gate->add_option("--models", gate_models, "benign and malicious model files")
        ->expected(2)
        ->required();
    gate->add_option("--whitelist", gate_whitelist, "whitelist rules file");
    gate->add_option("--suffixes", gate_tables.suffixes, "public suffix list")->required();
    gate->add_option("--ranks", gate_tables.ranks, "rank CSV");
    gate->add_option("--roles", gate_tables.roles, "role lists: ad-networks cdns shorteners")
        ->expected(3);
    gate->add_option("--events", gate_events, "event stream (default stdin)");
    gate->add_option("--out", gate_out, "decision stream (default stdout)");
    gate->add_option("--bias", settings.bias, "log-likelihood bias");

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate a labeled synthetic dataset");
    gen->fallthrough();
    std::string gen_spec, gen_out, gen_truth_benign, gen_truth_malicious;
    std::uint64_t gen_seed = 0;
    gen->add_option("--spec", gen_spec, "synthetic spec JSON")->required();
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "observations output")->required();
    gen->add_option("--truth-benign", gen_truth_benign, "write benign generator model");
    gen->add_option("--truth-malicious", gen_truth_malicious, "write malicious generator model");

    // early-report
    auto* early = app.add_subcommand("early-report", "scanner-delay histogram for detections");
    early->fallthrough();
    std::string early_decisions, early_reports, early_out;
    early->add_option("--decisions", early_decisions, "decision stream with dates")->required();
    early->add_option("--reports", early_reports, "scanner report CSV")->required();
    early->add_option("--out", early_out, "report output (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        log_level() = log_level_from_string(log_level_name);

        if (train->parsed())
            return run_train(settings, train_observations, train_events, train_reports,
                             train_tables, label_whitelist, out_benign, out_malicious,
                             export_observations, export_gray);
        if (classify_cmd->parsed())
            return run_classify(settings, classify_models, classify_observations, classify_out);
        if (evaluate->parsed())
            return run_evaluate(settings, eval_observations, folds, eval_seed, ablate_specs,
                                eval_out);
        if (gate->parsed())
            return run_gate(settings, gate_models, gate_whitelist, gate_tables, gate_events,
                            gate_out);
        if (gen->parsed())
            return run_gen_synthetic(gen_spec, gen_seed, gen_out, gen_truth_benign,
                                     gen_truth_malicious);
        if (early->parsed()) return run_early_report(early_decisions, early_reports, early_out);
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
