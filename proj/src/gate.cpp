#include "incgate/gate.hpp"

#include <algorithm>
#include <fstream>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate {

Whitelist Whitelist::parse(std::istream& in) {
    Whitelist whitelist;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        auto end = line.find_last_not_of(" \t");
        std::string entry = line.substr(begin, end - begin + 1);
        if (entry[0] == '#') continue;

        WhitelistRule rule;
        auto space = entry.find_first_of(" \t");
        if (space == std::string::npos) {
            rule.origin = entry;
        } else {
            rule.origin = entry.substr(0, space);
            std::string kinds = entry.substr(entry.find_first_not_of(" \t", space));
            std::size_t start = 0;
            while (start <= kinds.size()) {
                auto comma = kinds.find(',', start);
                std::string kind = comma == std::string::npos ? kinds.substr(start)
                                                              : kinds.substr(start, comma - start);
                if (!kind.empty()) rule.kinds.insert(resource_kind_from_string(kind));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        if (rule.origin.empty())
            throw ParseError("whitelist line " + std::to_string(line_no) + ": empty origin");
        std::transform(rule.origin.begin(), rule.origin.end(), rule.origin.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        whitelist.add(std::move(rule));
    }
    return whitelist;
}

Whitelist Whitelist::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open whitelist: " + path);
    return parse(in);
}

void Whitelist::add(WhitelistRule rule) {
    by_origin_[rule.origin].push_back(rules_.size());
    rules_.push_back(std::move(rule));
}

bool Whitelist::matches(const Host& host, ResourceKind kind) const {
    auto check = [this, kind](const std::string& origin) {
        auto it = by_origin_.find(origin);
        if (it == by_origin_.end()) return false;
        for (std::size_t index : it->second) {
            const WhitelistRule& rule = rules_[index];
            if (rule.kinds.empty() || rule.kinds.count(kind)) return true;
        }
        return false;
    };
    if (check(host.raw)) return true;
    auto registrable = host.registrable_string();
    return registrable && check(*registrable);
}

std::string_view to_string(GateAction action) {
    switch (action) {
        case GateAction::allow: return "allow";
        case GateAction::block: return "block";
        case GateAction::allow_whitelisted: return "allow-whitelisted";
    }
    return "allow";
}

nlohmann::json gate_record_to_json(const GateDecisionRecord& record) {
    nlohmann::json j{{"page", record.page},
                     {"node", record.node},
                     {"url", record.url},
                     {"action", std::string(to_string(record.action))},
                     {"reason", record.reason}};
    if (record.decision) {
        nlohmann::json d = decision_to_json(*record.decision);
        d["url"] = record.url;
        j["decision"] = std::move(d);
    }
    return j;
}

Gate::Gate(const ModelPair& pair, const Whitelist& whitelist, const HostTables& tables,
           GateConfig config)
    : pair_(pair), whitelist_(whitelist), tables_(tables), config_(config) {
    pair_.validate();
    config_.features.validate();
    if (pair_.benign.config.feature_arities != FeatureSchema::arities(config_.features))
        throw ArityMismatch("model feature arities do not match the extractor schema");
}

GateDecisionRecord Gate::process(const LoadEvent& event) {
    ++processed_;
    auto it = pages_.find(event.page);
    if (it == pages_.end())
        it = pages_.emplace(event.page, PageState{InclusionTree(event.page), {}}).first;
    PageState& page = it->second;

    // A blocked initiator means the resource would never have loaded;
    // refuse its whole subtree before anything else.
    bool ancestor_blocked = false;
    switch (event.initiator.type) {
        case InitiatorRef::Type::parser:
        case InitiatorRef::Type::script:
        case InitiatorRef::Type::redirect:
        case InitiatorRef::Type::timer_or_event:
            ancestor_blocked = page.blocked_nodes.count(event.initiator.node) > 0;
            break;
        case InitiatorRef::Type::root:
        case InitiatorRef::Type::extension:
            // Static and extension inclusions hang off the page root.
            ancestor_blocked = page.tree.has_root() && page.blocked_nodes.count(0) > 0;
            break;
    }

    std::uint64_t node_id = page.tree.apply_event(event, tables_);

    GateDecisionRecord record;
    record.page = event.page;
    record.node = node_id;
    record.url = event.url;

    if (ancestor_blocked) {
        page.blocked_nodes.insert(node_id);
        ++blocked_;
        record.action = GateAction::block;
        record.reason = "ancestor-blocked";
        return record;
    }

    const ResourceNode& node = page.tree.node(node_id);
    if (node.inline_resource) {
        // Inline scripts are tree nodes for attribution but are not remote
        // loads; nothing to gate.
        record.action = GateAction::allow;
        record.reason = "inline-resource";
        return record;
    }

    if (whitelist_.matches(node.host, node.kind)) {
        record.action = GateAction::allow_whitelisted;
        record.reason = "whitelisted";
        return record;
    }

    ObservationSequence obs =
        vectorize_sequence(extract_sequence(page.tree, node_id), config_.features);
    Decision decision = classify(pair_, obs);
    record.decision = decision;
    record.reason = "classified";
    if (decision.label == Label::malicious) {
        record.action = GateAction::block;
        page.blocked_nodes.insert(node_id);
        ++blocked_;
    } else {
        record.action = GateAction::allow;
    }
    return record;
}

std::uint64_t gate_stream(std::istream& events, std::ostream& out, const ModelPair& pair,
                          const Whitelist& whitelist, const HostTables& tables,
                          const GateConfig& config) {
    read_stream_header(events, kEventStreamFormat);
    out << make_stream_header(kGateStreamFormat).dump() << '\n';

    Gate gate(pair, whitelist, tables, config);
    std::uint64_t quarantined = 0;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(events, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            LoadEvent event = event_from_json(parse_json_line(line, line_no));
            out << gate_record_to_json(gate.process(event)).dump() << '\n';
        } catch (const Error& e) {
            ++quarantined;
            out << nlohmann::json{{"quarantine", true},
                                  {"line", line_no},
                                  {"reason", e.what()}}
                       .dump()
                << '\n';
        }
    }
    log_info("gated " + std::to_string(gate.processed()) + " events, blocked " +
             std::to_string(gate.blocked()) + ", quarantined " + std::to_string(quarantined));
    return quarantined;
}

}  // namespace incgate
