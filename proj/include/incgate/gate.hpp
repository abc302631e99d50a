#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "incgate/classifier.hpp"
#include "incgate/inclusion.hpp"

namespace incgate {

// Whitelisted origin (host or registrable domain) with an optional
// resource-kind restriction; an empty kind set matches every kind.
struct WhitelistRule {
    std::string origin;
    std::set<ResourceKind> kinds;
};

class Whitelist {
public:
    static Whitelist parse(std::istream& in);
    static Whitelist load(const std::string& path);

    void add(WhitelistRule rule);
    bool matches(const Host& host, ResourceKind kind) const;
    std::size_t size() const { return rules_.size(); }

private:
    std::vector<WhitelistRule> rules_;
    std::map<std::string, std::vector<std::size_t>> by_origin_;
};

enum class GateAction { allow, block, allow_whitelisted };

std::string_view to_string(GateAction action);

struct GateDecisionRecord {
    std::string page;
    std::uint64_t node = 0;
    std::string url;
    GateAction action = GateAction::allow;
    std::string reason;  // classified | whitelisted | ancestor-blocked | inline-resource
    std::optional<Decision> decision;  // absent for whitelisted / inline / ancestor blocks
};

nlohmann::json gate_record_to_json(const GateDecisionRecord& record);

struct GateConfig {
    DiscretizationConfig features{};
};

// Streaming allow/block gate: whitelist check first, then sequence
// classification; blocked subtrees never admit descendants. One gate owns
// one event stream; trees are single-writer.
class Gate {
public:
    Gate(const ModelPair& pair, const Whitelist& whitelist, const HostTables& tables,
         GateConfig config = {});

    GateDecisionRecord process(const LoadEvent& event);

    std::uint64_t processed() const { return processed_; }
    std::uint64_t blocked() const { return blocked_; }

private:
    struct PageState {
        InclusionTree tree;
        std::set<std::uint64_t> blocked_nodes;
    };

    const ModelPair& pair_;
    const Whitelist& whitelist_;
    const HostTables& tables_;
    GateConfig config_;
    std::map<std::string, PageState> pages_;
    std::uint64_t processed_ = 0;
    std::uint64_t blocked_ = 0;
};

inline constexpr std::string_view kGateStreamFormat = "incgate-gate-decisions";

// Reads an event stream, writes one decision or quarantine record per input
// line. Malformed lines are quarantined with a diagnostic and the stream
// continues. Returns the number of quarantined lines.
std::uint64_t gate_stream(std::istream& events, std::ostream& out, const ModelPair& pair,
                          const Whitelist& whitelist, const HostTables& tables,
                          const GateConfig& config = {});

}  // namespace incgate
