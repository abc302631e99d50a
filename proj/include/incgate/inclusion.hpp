#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "incgate/host.hpp"

namespace incgate {

enum class ResourceKind {
    document,
    script,
    inline_script,
    frame,
    image,
    stylesheet,
    object,
    xhr,
    other,
};

std::string_view to_string(ResourceKind kind);
ResourceKind resource_kind_from_string(std::string_view name);

struct InitiatorRef {
    enum class Type { root, parser, script, extension, redirect, timer_or_event };

    Type type = Type::root;
    std::uint64_t node = 0;    // parser / script / redirect / timer_or_event
    std::string extension_id;  // extension

    static InitiatorRef make_root() { return {}; }
    static InitiatorRef parser(std::uint64_t parent) { return {Type::parser, parent, {}}; }
    static InitiatorRef script(std::uint64_t node) { return {Type::script, node, {}}; }
    static InitiatorRef extension(std::string id) { return {Type::extension, 0, std::move(id)}; }
    static InitiatorRef redirect(std::uint64_t source) { return {Type::redirect, source, {}}; }
    static InitiatorRef timer_or_event(std::uint64_t node) {
        return {Type::timer_or_event, node, {}};
    }
};

std::string_view to_string(InitiatorRef::Type type);
InitiatorRef::Type initiator_type_from_string(std::string_view name);

struct LoadEvent {
    std::uint64_t seq = 0;
    std::string page;
    std::string url;
    ResourceKind kind = ResourceKind::other;
    InitiatorRef initiator;
    std::int64_t ts_ms = 0;
};

inline constexpr std::string_view kEventStreamFormat = "incgate-events";

nlohmann::json event_to_json(const LoadEvent& event);
LoadEvent event_from_json(const nlohmann::json& j);

struct ResourceNode {
    std::uint64_t id = 0;
    std::string url;
    Host host;
    ResourceKind kind = ResourceKind::other;
    bool inline_resource = false;
    std::uint64_t parent = 0;  // equals id for the root
    std::vector<std::uint64_t> children;  // ordered by event seq
    std::uint64_t seq = 0;
    std::int64_t ts_ms = 0;
};

// Per-page tree of resource inclusions. Single root, acyclic by
// construction, single-writer; freeze it (stop applying events) before
// sharing across threads.
class InclusionTree {
public:
    explicit InclusionTree(std::string page_id) : page_(std::move(page_id)) {}

    // Inserts the event's resource under the node its initiator designates
    // and returns the new node id. Throws UnknownInitiator / DuplicateRoot /
    // MalformedHost; the tree is unchanged on error.
    std::uint64_t apply_event(const LoadEvent& event, const HostTables& tables);

    bool has_root() const { return !nodes_.empty(); }
    const ResourceNode& root() const { return nodes_.front(); }
    const ResourceNode& node(std::uint64_t id) const;
    bool contains(std::uint64_t id) const { return id < nodes_.size(); }
    std::size_t size() const { return nodes_.size(); }
    const std::string& page() const { return page_; }
    const std::vector<ResourceNode>& nodes() const { return nodes_; }

    nlohmann::json to_json() const;

private:
    std::string page_;
    std::vector<ResourceNode> nodes_;  // node id == index
};

// Root-to-resource path with inline nodes removed.
using InclusionSequence = std::vector<const ResourceNode*>;

InclusionSequence extract_sequence(const InclusionTree& tree, std::uint64_t node_id);

// Builds one tree per page from a mixed event stream; dangling-initiator and
// malformed events are quarantined with a diagnostic, never silently dropped.
class ForestBuilder {
public:
    explicit ForestBuilder(const HostTables& tables) : tables_(tables) {}

    // Returns the node id on success, nullopt if the event was quarantined.
    std::optional<std::uint64_t> apply(const LoadEvent& event);

    const std::map<std::string, InclusionTree>& pages() const { return pages_; }
    std::uint64_t accepted() const { return accepted_; }
    std::uint64_t quarantined() const { return quarantined_; }
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
    const HostTables& tables_;
    std::map<std::string, InclusionTree> pages_;
    std::uint64_t accepted_ = 0;
    std::uint64_t quarantined_ = 0;
    std::vector<std::string> diagnostics_;
};

// Strict reader for the newline-delimited event format (header required).
class EventReader {
public:
    explicit EventReader(std::istream& in);

    std::optional<LoadEvent> next();

private:
    std::istream& in_;
    std::size_t line_no_ = 1;
};

}  // namespace incgate
