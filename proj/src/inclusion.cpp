#include "incgate/inclusion.hpp"

#include <array>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate {

namespace {

constexpr std::array<std::pair<ResourceKind, std::string_view>, 9> kResourceKindNames{{
    {ResourceKind::document, "document"},
    {ResourceKind::script, "script"},
    {ResourceKind::inline_script, "inline-script"},
    {ResourceKind::frame, "frame"},
    {ResourceKind::image, "image"},
    {ResourceKind::stylesheet, "stylesheet"},
    {ResourceKind::object, "object"},
    {ResourceKind::xhr, "xhr"},
    {ResourceKind::other, "other"},
}};

constexpr std::array<std::pair<InitiatorRef::Type, std::string_view>, 6> kInitiatorNames{{
    {InitiatorRef::Type::root, "root"},
    {InitiatorRef::Type::parser, "parser"},
    {InitiatorRef::Type::script, "script"},
    {InitiatorRef::Type::extension, "extension"},
    {InitiatorRef::Type::redirect, "redirect"},
    {InitiatorRef::Type::timer_or_event, "timer-or-event"},
}};

}  // namespace

std::string_view to_string(ResourceKind kind) {
    for (const auto& [k, name] : kResourceKindNames)
        if (k == kind) return name;
    return "other";
}

ResourceKind resource_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kResourceKindNames)
        if (n == name) return k;
    throw ParseError("unknown resource kind '" + std::string(name) + "'");
}

std::string_view to_string(InitiatorRef::Type type) {
    for (const auto& [t, name] : kInitiatorNames)
        if (t == type) return name;
    return "root";
}

InitiatorRef::Type initiator_type_from_string(std::string_view name) {
    for (const auto& [t, n] : kInitiatorNames)
        if (n == name) return t;
    throw ParseError("unknown initiator type '" + std::string(name) + "'");
}

nlohmann::json event_to_json(const LoadEvent& event) {
    nlohmann::json initiator{{"type", std::string(to_string(event.initiator.type))}};
    switch (event.initiator.type) {
        case InitiatorRef::Type::parser:
        case InitiatorRef::Type::script:
        case InitiatorRef::Type::redirect:
        case InitiatorRef::Type::timer_or_event:
            initiator["node"] = event.initiator.node;
            break;
        case InitiatorRef::Type::extension:
            initiator["id"] = event.initiator.extension_id;
            break;
        case InitiatorRef::Type::root:
            break;
    }
    return nlohmann::json{{"seq", event.seq},
                          {"page", event.page},
                          {"url", event.url},
                          {"kind", std::string(to_string(event.kind))},
                          {"initiator", std::move(initiator)},
                          {"ts", event.ts_ms}};
}

LoadEvent event_from_json(const nlohmann::json& j) {
    try {
        LoadEvent event;
        event.seq = j.at("seq").get<std::uint64_t>();
        event.page = j.at("page").get<std::string>();
        event.url = j.at("url").get<std::string>();
        event.kind = resource_kind_from_string(j.at("kind").get<std::string>());
        const auto& initiator = j.at("initiator");
        event.initiator.type =
            initiator_type_from_string(initiator.at("type").get<std::string>());
        switch (event.initiator.type) {
            case InitiatorRef::Type::parser:
            case InitiatorRef::Type::script:
            case InitiatorRef::Type::redirect:
            case InitiatorRef::Type::timer_or_event:
                event.initiator.node = initiator.at("node").get<std::uint64_t>();
                break;
            case InitiatorRef::Type::extension:
                event.initiator.extension_id = initiator.at("id").get<std::string>();
                break;
            case InitiatorRef::Type::root:
                break;
        }
        event.ts_ms = j.at("ts").get<std::int64_t>();
        return event;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad event record: ") + e.what());
    }
}

std::uint64_t InclusionTree::apply_event(const LoadEvent& event, const HostTables& tables) {
    bool creates_root =
        event.initiator.type == InitiatorRef::Type::root && event.kind == ResourceKind::document;
    if (creates_root && has_root()) throw DuplicateRoot("page '" + page_ + "' already has a root");
    if (!creates_root && !has_root())
        throw UnknownInitiator("page '" + page_ + "' has no root yet");

    std::uint64_t parent_id = 0;
    switch (event.initiator.type) {
        case InitiatorRef::Type::root:
        case InitiatorRef::Type::extension:
            // Extension-injected resources hang directly off the page root.
            parent_id = 0;
            break;
        case InitiatorRef::Type::parser:
        case InitiatorRef::Type::script:
        case InitiatorRef::Type::redirect:
        case InitiatorRef::Type::timer_or_event:
            if (!contains(event.initiator.node))
                throw UnknownInitiator("initiator node " + std::to_string(event.initiator.node) +
                                       " does not exist in page '" + page_ + "'");
            parent_id = event.initiator.node;
            break;
    }

    ResourceNode node;
    node.url = event.url;
    node.host = parse_host(host_of_url(event.url), tables);
    node.kind = event.kind;
    node.inline_resource = event.kind == ResourceKind::inline_script;
    node.seq = event.seq;
    node.ts_ms = event.ts_ms;

    node.id = nodes_.size();
    node.parent = creates_root ? node.id : parent_id;
    nodes_.push_back(std::move(node));
    if (!creates_root) nodes_[parent_id].children.push_back(nodes_.back().id);
    return nodes_.back().id;
}

const ResourceNode& InclusionTree::node(std::uint64_t id) const {
    if (!contains(id))
        throw UnknownInitiator("node " + std::to_string(id) + " does not exist in page '" +
                               page_ + "'");
    return nodes_[id];
}

nlohmann::json InclusionTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nodes.push_back({{"id", n.id},
                         {"url", n.url},
                         {"host", n.host.raw},
                         {"kind", std::string(to_string(n.kind))},
                         {"inline", n.inline_resource},
                         {"parent", n.parent},
                         {"children", n.children},
                         {"seq", n.seq}});
    }
    return nlohmann::json{{"page", page_}, {"nodes", std::move(nodes)}};
}

InclusionSequence extract_sequence(const InclusionTree& tree, std::uint64_t node_id) {
    const ResourceNode& terminal = tree.node(node_id);
    if (terminal.inline_resource)
        throw InlineTerminal("node " + std::to_string(node_id) +
                             " is an inline resource and cannot terminate a sequence");

    InclusionSequence path;
    std::uint64_t id = node_id;
    for (;;) {
        const ResourceNode& n = tree.node(id);
        if (!n.inline_resource) path.push_back(&n);
        if (n.parent == n.id) break;
        id = n.parent;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::optional<std::uint64_t> ForestBuilder::apply(const LoadEvent& event) {
    auto it = pages_.find(event.page);
    if (it == pages_.end())
        it = pages_.emplace(event.page, InclusionTree(event.page)).first;
    try {
        std::uint64_t id = it->second.apply_event(event, tables_);
        ++accepted_;
        return id;
    } catch (const Error& e) {
        ++quarantined_;
        diagnostics_.push_back("page '" + event.page + "' seq " + std::to_string(event.seq) +
                               ": " + e.what());
        return std::nullopt;
    }
}

EventReader::EventReader(std::istream& in) : in_(in) {
    read_stream_header(in_, kEventStreamFormat);
}

std::optional<LoadEvent> EventReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.empty()) continue;
        return event_from_json(parse_json_line(line, line_no_));
    }
    return std::nullopt;
}

}  // namespace incgate
