#include <doctest.h>

#include <fstream>
#include <sstream>

#include "incgate/errors.hpp"
#include "test_support.hpp"

using namespace incgate;
using test::fixture;

namespace {

LoadEvent make_event(std::uint64_t seq, const std::string& url, ResourceKind kind,
                     InitiatorRef initiator) {
    LoadEvent event;
    event.seq = seq;
    event.page = "p1";
    event.url = url;
    event.kind = kind;
    event.initiator = initiator;
    event.ts_ms = 1000 + static_cast<std::int64_t>(seq);
    return event;
}

std::vector<LoadEvent> sample_page_events() {
    std::ifstream in(test::data_path("events_sample_page.ndjson"));
    REQUIRE(in.good());
    EventReader reader(in);
    std::vector<LoadEvent> events;
    while (auto event = reader.next()) events.push_back(*event);
    return events;
}

std::vector<std::string> sequence_hosts(const InclusionSequence& seq) {
    std::vector<std::string> hosts;
    for (const auto* node : seq) hosts.push_back(node->host.raw);
    return hosts;
}

}  // namespace

TEST_CASE("the sample page event stream reconstructs its inclusion tree") {
    InclusionTree tree("p1");
    for (const auto& event : sample_page_events()) tree.apply_event(event, fixture().tables);

    REQUIRE(tree.size() == 9);
    CHECK(tree.root().host.raw == "a.com");
    // Root children: parser-included img and script, extension-injected script.
    CHECK(tree.root().children == std::vector<std::uint64_t>{1, 2, 6});
    CHECK(tree.node(2).children == std::vector<std::uint64_t>{3});  // c.net -> d.org
    CHECK(tree.node(3).children == std::vector<std::uint64_t>{4});  // d.org -> inline
    CHECK(tree.node(4).inline_resource);
    CHECK(tree.node(4).children == std::vector<std::uint64_t>{5});  // inline -> flash
    CHECK(tree.node(6).host.kind == HostKind::extension);
    CHECK(tree.node(6).children == std::vector<std::uint64_t>{7});  // ext -> g.com
    CHECK(tree.node(7).children == std::vector<std::uint64_t>{8});  // g.com -> h.org

    // flash.swf path: the inline hop is removed, leaving length 4.
    InclusionSequence flash = extract_sequence(tree, 5);
    CHECK(flash.size() == 4);
    CHECK(sequence_hosts(flash) ==
          std::vector<std::string>{"a.com", "c.net", "d.org", "f.org"});

    InclusionSequence img = extract_sequence(tree, 8);
    CHECK(sequence_hosts(img) ==
          std::vector<std::string>{"a.com", "ext:abcdefgh", "g.com", "h.org"});

    // Root alone is a length-1 sequence.
    CHECK(extract_sequence(tree, 0).size() == 1);
}

TEST_CASE("inline nodes cannot terminate a sequence") {
    InclusionTree tree("p1");
    for (const auto& event : sample_page_events()) tree.apply_event(event, fixture().tables);
    CHECK_THROWS_AS(extract_sequence(tree, 4), InlineTerminal);
}

TEST_CASE("unknown initiators leave the tree unchanged") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    std::size_t before = tree.size();
    CHECK_THROWS_AS(tree.apply_event(make_event(2, "http://b.com/x.js", ResourceKind::script,
                                                InitiatorRef::script(99)),
                                     fixture().tables),
                    UnknownInitiator);
    CHECK(tree.size() == before);
}

TEST_CASE("second root event is rejected") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    CHECK_THROWS_AS(tree.apply_event(make_event(2, "http://other.com/", ResourceKind::document,
                                                InitiatorRef::make_root()),
                                     fixture().tables),
                    DuplicateRoot);
}

TEST_CASE("events before the root are rejected") {
    InclusionTree tree("p1");
    CHECK_THROWS_AS(tree.apply_event(make_event(1, "http://b.com/x.js", ResourceKind::script,
                                                InitiatorRef::parser(0)),
                                     fixture().tables),
                    UnknownInitiator);
}

TEST_CASE("redirect hops chain under the redirect source") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    std::uint64_t shortener = tree.apply_event(
        make_event(2, "http://bit.ly/abc", ResourceKind::script, InitiatorRef::parser(0)),
        fixture().tables);
    std::uint64_t target = tree.apply_event(
        make_event(3, "http://landing.example.com/x.js", ResourceKind::script,
                   InitiatorRef::redirect(shortener)),
        fixture().tables);
    CHECK(tree.node(target).parent == shortener);
    CHECK(sequence_hosts(extract_sequence(tree, target)) ==
          std::vector<std::string>{"a.com", "bit.ly", "landing.example.com"});
}

TEST_CASE("static inclusions attach to the root") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    std::uint64_t id = tree.apply_event(
        make_event(2, "http://static.example.com/s.css", ResourceKind::stylesheet,
                   InitiatorRef::make_root()),
        fixture().tables);
    CHECK(tree.node(id).parent == 0);
}

TEST_CASE("timer callbacks attribute to the registering script") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    std::uint64_t script = tree.apply_event(
        make_event(2, "http://b.com/x.js", ResourceKind::script, InitiatorRef::parser(0)),
        fixture().tables);
    std::uint64_t delayed = tree.apply_event(
        make_event(3, "http://c.net/late.js", ResourceKind::script,
                   InitiatorRef::timer_or_event(script)),
        fixture().tables);
    CHECK(tree.node(delayed).parent == script);
}

TEST_CASE("tree construction is deterministic") {
    auto build = [] {
        InclusionTree tree("p1");
        for (const auto& event : sample_page_events()) tree.apply_event(event, fixture().tables);
        return tree.to_json().dump();
    };
    CHECK(build() == build());
}

TEST_CASE("event-by-event and batch replay agree") {
    ForestBuilder batch(fixture().tables);
    InclusionTree incremental("p1");
    for (const auto& event : sample_page_events()) {
        batch.apply(event);
        incremental.apply_event(event, fixture().tables);
    }
    REQUIRE(batch.pages().count("p1") == 1);
    CHECK(batch.pages().at("p1").to_json().dump() == incremental.to_json().dump());
}

TEST_CASE("forest builder quarantines dangling events and keeps counting") {
    ForestBuilder builder(fixture().tables);
    for (const auto& event : sample_page_events()) builder.apply(event);
    std::uint64_t accepted = builder.accepted();

    CHECK_FALSE(builder.apply(make_event(100, "http://x.com/a.js", ResourceKind::script,
                                         InitiatorRef::script(999)))
                    .has_value());
    CHECK_FALSE(builder
                    .apply(make_event(101, "http://bad host/. ", ResourceKind::script,
                                      InitiatorRef::parser(0)))
                    .has_value());
    CHECK(builder.quarantined() == 2);
    CHECK(builder.diagnostics().size() == 2);
    CHECK(builder.accepted() == accepted);
    // Accepted events map one-to-one onto tree nodes.
    std::size_t node_count = 0;
    for (const auto& [page, tree] : builder.pages()) node_count += tree.size();
    CHECK(node_count == builder.accepted());
}

TEST_CASE("sequence length never exceeds depth plus one") {
    InclusionTree tree("p1");
    for (const auto& event : sample_page_events()) tree.apply_event(event, fixture().tables);
    for (const auto& node : tree.nodes()) {
        if (node.inline_resource) continue;
        std::size_t depth = 0;
        for (std::uint64_t id = node.id; tree.node(id).parent != id; id = tree.node(id).parent)
            ++depth;
        InclusionSequence seq = extract_sequence(tree, node.id);
        CHECK(seq.size() <= depth + 1);
        bool has_inline_ancestor = false;
        for (std::uint64_t id = node.id; tree.node(id).parent != id; id = tree.node(id).parent)
            has_inline_ancestor = has_inline_ancestor || tree.node(tree.node(id).parent).inline_resource;
        CHECK((seq.size() == depth + 1) == !has_inline_ancestor);
    }
}

TEST_CASE("load events round-trip through their wire format") {
    std::vector<LoadEvent> events = {
        make_event(1, "http://a.com/", ResourceKind::document, InitiatorRef::make_root()),
        make_event(2, "http://b.com/i.png", ResourceKind::image, InitiatorRef::parser(0)),
        make_event(3, "http://c.net/s.js", ResourceKind::script, InitiatorRef::script(1)),
        make_event(4, "ext:abcdefgh/cs.js", ResourceKind::script,
                   InitiatorRef::extension("abcdefgh")),
        make_event(5, "http://d.org/r.js", ResourceKind::script, InitiatorRef::redirect(3)),
        make_event(6, "http://e.com/t.js", ResourceKind::xhr, InitiatorRef::timer_or_event(3)),
    };
    for (const auto& event : events) {
        LoadEvent back = event_from_json(event_to_json(event));
        CHECK(back.seq == event.seq);
        CHECK(back.page == event.page);
        CHECK(back.url == event.url);
        CHECK(back.kind == event.kind);
        CHECK(back.initiator.type == event.initiator.type);
        CHECK(back.initiator.node == event.initiator.node);
        CHECK(back.initiator.extension_id == event.initiator.extension_id);
        CHECK(back.ts_ms == event.ts_ms);
    }
}

TEST_CASE("event reader demands the versioned header") {
    std::istringstream missing("{\"seq\":1}\n");
    CHECK_THROWS_AS(EventReader reader(missing), ParseError);
    std::istringstream wrong("{\"format\":\"other\",\"version\":1}\n");
    CHECK_THROWS_AS(EventReader reader(wrong), ParseError);
}

TEST_CASE("duplicate URLs create distinct nodes") {
    InclusionTree tree("p1");
    tree.apply_event(make_event(1, "http://a.com/", ResourceKind::document,
                                InitiatorRef::make_root()),
                     fixture().tables);
    std::uint64_t first = tree.apply_event(
        make_event(2, "http://b.com/x.js", ResourceKind::script, InitiatorRef::parser(0)),
        fixture().tables);
    std::uint64_t second = tree.apply_event(
        make_event(3, "http://b.com/x.js", ResourceKind::script, InitiatorRef::parser(0)),
        fixture().tables);
    CHECK(first != second);
    CHECK(tree.size() == 3);
}
