#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "lanesurvey/errors.hpp"
#include "lanesurvey/osm_network.hpp"
#include "test_support.hpp"

using namespace lanesurvey;
using lanesurvey::testing::OsmBuilder;
namespace oracle = lanesurvey::testing::oracle;

namespace {

const char* kHumphries = R"(<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="30204322" version="18" lat="-38.1655191" lon="145.1016428"/>
  <node id="30204323" version="21" lat="-38.1667063" lon="145.1017474">
    <tag k="highway" v="traffic_signals"/>
  </node>
  <node id="30204324" version="18" lat="-38.1674697" lon="145.101785"/>
  <way id="26662301" version="32" timestamp="2020-08-27T04:26:02Z">
    <nd ref="30204322"/>
    <nd ref="30204323"/>
    <nd ref="30204324"/>
    <tag k="cycleway:left" v="shared_lane"/>
    <tag k="highway" v="tertiary"/>
    <tag k="maxspeed" v="60"/>
    <tag k="name" v="Humphries Road"/>
    <tag k="sidewalk" v="right"/>
    <tag k="surface" v="asphalt"/>
  </way>
</osm>
)";

std::multiset<std::pair<NodeId, NodeId>> chain_edges(const NamedChain& c) {
  std::multiset<std::pair<NodeId, NodeId>> out;
  for (std::size_t e = 0; e < c.edge_count(); ++e) out.insert(std::minmax(c.edge_from(e), c.edge_to(e)));
  return out;
}

void expect_matches_oracles(const RoadNetwork& net) {
  EXPECT_EQ(net.intersections, oracle::intersections(net));

  std::set<std::set<WayId>> partition;
  for (const NamedChain& c : net.chains) {
    partition.insert(std::set<WayId>(c.way_ids.begin(), c.way_ids.end()));
    EXPECT_EQ(c.way_ids.size(), std::set<WayId>(c.way_ids.begin(), c.way_ids.end()).size());
    EXPECT_EQ(chain_edges(c), oracle::way_edges(net, {c.way_ids.begin(), c.way_ids.end()}));
    EXPECT_EQ(c.edge_count(), c.closed ? c.node_path.size() : c.node_path.size() - 1);
    for (std::size_t e = 0; e < c.edge_count(); ++e) {
      const auto& refs = net.way(c.edge_ways[e]).node_refs;
      bool found = false;
      for (std::size_t k = 0; k + 1 < refs.size(); ++k) {
        found |= std::minmax(refs[k], refs[k + 1]) == std::minmax(c.edge_from(e), c.edge_to(e));
      }
      EXPECT_TRUE(found) << "edge " << e << " not on way " << c.edge_ways[e];
    }
  }
  EXPECT_EQ(partition, oracle::chain_partition(net));
}

}  // namespace

TEST(ParseExtract, SampleWay) {
  const RoadNetwork net = load_network(kHumphries);
  ASSERT_EQ(net.ways.size(), 1u);
  const OsmWay& w = net.way(26662301);
  ASSERT_TRUE(w.name);
  EXPECT_EQ(*w.name, "Humphries Road");
  EXPECT_TRUE(w.is_road);
  EXPECT_TRUE(w.has_cycleway);
  EXPECT_EQ(w.node_refs, (std::vector<NodeId>{30204322, 30204323, 30204324}));
  ASSERT_NE(w.tag("maxspeed"), nullptr);
  EXPECT_EQ(*w.tag("maxspeed"), "60");
  EXPECT_EQ(net.node(30204323).tags.size(), 1u);
  EXPECT_DOUBLE_EQ(net.point(30204322).lat, -38.1655191);
}

TEST(ParseExtract, EmptyExtract) {
  const RoadNetwork net = load_network("<?xml version=\"1.0\"?><osm version=\"0.6\"></osm>");
  EXPECT_TRUE(net.ways.empty());
  EXPECT_TRUE(net.intersections.empty());
  EXPECT_TRUE(net.chains.empty());
}

TEST(ParseExtract, MembershipsMatchExhaustiveScan) {
  OsmBuilder b;
  b.node(1, -38.0, 145.0).node(2, -38.0, 145.001).node(3, -38.0, 145.002).node(4, -38.001, 145.001).node(5, -37.999,
                                                                                                          145.001);
  b.way(10, {1, 2, 3}, {{"highway", "primary"}, {"name", "A Road"}});
  b.way(11, {4, 2, 5}, {{"highway", "residential"}, {"name", "B Street"}});
  const std::string xml = b.xml();
  const RoadNetwork net = load_network(xml);

  // scan the XML text directly: way id then its nd refs in order
  std::map<NodeId, std::set<std::pair<WayId, std::size_t>>> expected;
  const std::regex way_re(R"re(<way id="(\d+)">([\s\S]*?)</way>)re");
  const std::regex nd_re(R"re(<nd ref="(\d+)"/>)re");
  for (auto it = std::sregex_iterator(xml.begin(), xml.end(), way_re); it != std::sregex_iterator(); ++it) {
    const WayId way = std::stoll((*it)[1]);
    const std::string body = (*it)[2];
    std::size_t idx = 0;
    for (auto nd = std::sregex_iterator(body.begin(), body.end(), nd_re); nd != std::sregex_iterator(); ++nd) {
      expected[std::stoll((*nd)[1])].insert({way, idx++});
    }
  }
  ASSERT_EQ(net.node_memberships.size(), expected.size());
  for (const auto& [node, members] : net.node_memberships) {
    std::set<std::pair<WayId, std::size_t>> got;
    for (const WayPosition& m : members) got.insert({m.way, m.index});
    EXPECT_EQ(got, expected[node]) << "node " << node;
  }
  EXPECT_EQ(net.intersections, (std::set<NodeId>{2}));
}

TEST(ParseExtract, MalformedXmlReportsOffset) {
  const std::string xml = "<osm><node id=\"1\" lat=\"0\" lon=\"0\"><tag k=\"a\" v=\"b\"></node></osm>";
  try {
    parse_extract(xml);
    FAIL() << "expected XmlParseError";
  } catch (const XmlParseError& e) {
    EXPECT_GT(e.offset(), 0u);
    EXPECT_LE(e.offset(), xml.size());
  }
  EXPECT_THROW(parse_extract("<osm><node id=\"x\" lat=\"0\" lon=\"0\"/></osm>"), InputError);
  EXPECT_THROW(parse_extract("<osm><node id=\"1\" lat=\"95\" lon=\"0\"/></osm>"), InputError);
}

TEST(ParseExtract, DanglingRefsAreDiagnosed) {
  OsmBuilder b;
  b.node(1, 0.0, 0.0).node(2, 0.0, 0.001);
  b.way(5, {1, 2, 99}, {{"highway", "residential"}, {"name", "X"}});
  const RoadNetwork net = load_network(b.xml());
  EXPECT_EQ(net.way(5).node_refs, (std::vector<NodeId>{1, 2}));
  EXPECT_FALSE(net.diagnostics.empty());
}

TEST(RoadTags, PedestrianWaysAreNotRoads) {
  EXPECT_TRUE(is_road_way({{"highway", "residential"}}));
  EXPECT_FALSE(is_road_way({{"highway", "footway"}}));
  EXPECT_FALSE(is_road_way({{"highway", "pedestrian"}}));
  EXPECT_FALSE(is_road_way({{"highway", "steps"}}));
  EXPECT_FALSE(is_road_way({{"waterway", "stream"}}));
  EXPECT_TRUE(has_cycleway_tag({{"cycleway:both", "lane"}}));
  EXPECT_TRUE(has_cycleway_tag({{"cycleway", "track"}}));
  EXPECT_FALSE(has_cycleway_tag({{"bicycle", "yes"}}));
  EXPECT_FALSE(has_cycleway_tag({{"Cycleway", "lane"}}));
}

TEST(RoadTags, NameNormalization) {
  EXPECT_EQ(normalize_name("  Nepean   Highway "), "nepean highway");
  EXPECT_EQ(normalize_name("NEPEAN\tHighway"), "nepean highway");
}

TEST(FindIntersections, DistinctNamesMeet) {
  OsmBuilder b;
  b.node(1, 0, 0).node(2, 0, 0.001).node(3, 0, 0.002).node(4, 0.001, 0.001);
  b.way(1, {1, 2, 3}, {{"highway", "tertiary"}, {"name", "Humphries Road"}});
  b.way(2, {2, 4}, {{"highway", "secondary"}, {"name", "Baden Powell Drive"}});
  EXPECT_EQ(load_network(b.xml()).intersections, (std::set<NodeId>{2}));
}

TEST(FindIntersections, SpeedLimitSplitIsNotAnIntersection) {
  OsmBuilder b;
  b.node(1, 0, 0).node(2, 0, 0.001).node(3, 0, 0.002);
  b.way(1, {1, 2}, {{"highway", "primary"}, {"name", "Nepean Highway"}, {"maxspeed", "80"}});
  b.way(2, {2, 3}, {{"highway", "primary"}, {"name", "Nepean  highway"}, {"maxspeed", "60"}});
  const RoadNetwork net = load_network(b.xml());
  EXPECT_TRUE(net.intersections.empty());
  ASSERT_EQ(net.chains.size(), 1u);
}

TEST(FindIntersections, FootwayCrossingIsIgnored) {
  OsmBuilder b;
  b.node(1, 0, 0).node(2, 0, 0.001).node(3, 0.001, 0.001);
  b.way(1, {1, 2}, {{"highway", "primary"}, {"name", "A"}});
  b.way(2, {2, 3}, {{"highway", "footway"}, {"name", "B"}});
  EXPECT_TRUE(load_network(b.xml()).intersections.empty());
}

TEST(FindIntersections, RandomFixturesMatchPairwiseOracle) {
  for (std::uint32_t seed = 1; seed <= 20; ++seed) {
    const RoadNetwork net = load_network(lanesurvey::testing::random_grid_extract(seed, 6, 20));
    EXPECT_EQ(net.intersections, oracle::intersections(net)) << "seed " << seed;
  }
}

TEST(BuildChains, SpeedLimitSplitsJoin) {
  OsmBuilder b;
  for (int i = 1; i <= 6; ++i) b.node(i, 0, 0.001 * i);
  b.way(7, {1, 2, 3}, {{"highway", "primary"}, {"name", "Nepean Highway"}, {"maxspeed", "80"}});
  b.way(8, {5, 4, 3}, {{"highway", "primary"}, {"name", "Nepean Highway"}, {"maxspeed", "70"}});
  b.way(9, {5, 6}, {{"highway", "primary"}, {"name", "Nepean Highway"}, {"maxspeed", "60"}});
  const RoadNetwork net = load_network(b.xml());
  ASSERT_EQ(net.chains.size(), 1u);
  const NamedChain& c = net.chains[0];
  EXPECT_EQ(c.way_ids.size(), 3u);
  EXPECT_EQ(c.node_path, (std::vector<NodeId>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(c.edge_ways, (std::vector<WayId>{7, 7, 8, 8, 9}));
  EXPECT_FALSE(c.closed);
}

TEST(BuildChains, SameNameInDifferentTownsStaysSeparate) {
  OsmBuilder b;
  b.node(1, -38.0, 145.0).node(2, -38.0, 145.001).node(3, -37.5, 144.0).node(4, -37.5, 144.001);
  b.way(1, {1, 2}, {{"highway", "residential"}, {"name", "Station Street"}});
  b.way(2, {3, 4}, {{"highway", "residential"}, {"name", "Station Street"}});
  EXPECT_EQ(load_network(b.xml()).chains.size(), 2u);
}

TEST(BuildChains, ClosedLoop) {
  OsmBuilder b;
  b.node(1, 0, 0).node(2, 0, 0.001).node(3, 0.001, 0.001).node(4, 0.001, 0);
  b.way(1, {1, 2, 3}, {{"highway", "service"}, {"name", "Ring"}});
  b.way(2, {3, 4, 1}, {{"highway", "service"}, {"name", "Ring"}});
  const RoadNetwork net = load_network(b.xml());
  ASSERT_EQ(net.chains.size(), 1u);
  EXPECT_TRUE(net.chains[0].closed);
  EXPECT_EQ(net.chains[0].node_path.size(), 4u);
  EXPECT_EQ(net.chains[0].edge_count(), 4u);
  expect_matches_oracles(net);
}

TEST(BuildChains, RandomFixturesMatchComponentWalk) {
  for (std::uint32_t seed = 100; seed < 130; ++seed) {
    const RoadNetwork net = load_network(lanesurvey::testing::random_grid_extract(seed, 7, 30));
    SCOPED_TRACE(seed);
    expect_matches_oracles(net);
  }
}

TEST(CyclewayLayer, NoTagsGivesEmptyLayer) {
  OsmBuilder b;
  b.node(1, 0, 0).node(2, 0, 0.001);
  b.way(1, {1, 2}, {{"highway", "residential"}, {"name", "A"}});
  const RouteLayer layer = cycleway_layer(load_network(b.xml()));
  EXPECT_TRUE(layer.empty());
  EXPECT_EQ(layer.length_m(), 0.0);
}

TEST(CyclewayLayer, SampleWaySpansNodePath) {
  const RoadNetwork net = load_network(kHumphries);
  const RouteLayer layer = cycleway_layer(net);
  ASSERT_EQ(layer.polylines.size(), 1u);
  EXPECT_EQ(layer.polylines[0].node_ids, (std::vector<NodeId>{30204322, 30204323, 30204324}));
  EXPECT_NEAR(layer.length_m(), polyline_length_m(net.way_points(26662301)), 1e-9);
}

TEST(CyclewayLayer, AlternatingTagsMatchTagScan) {
  OsmBuilder b;
  for (int i = 0; i <= 8; ++i) b.node(i + 1, 0, 0.001 * i);
  for (int w = 0; w < 8; ++w) {
    OsmBuilder::Tags tags{{"highway", "primary"}, {"name", "Long Road"}, {"maxspeed", std::to_string(40 + 10 * w)}};
    if (w % 3 != 1) tags.push_back({"cycleway:right", "lane"});
    b.way(100 + w, {w + 1, w + 2}, tags);
  }
  const RoadNetwork net = load_network(b.xml());
  // tag scan: ways 100, 102-103, 105-106 -> 3 runs, 5 tagged ways
  double tagged = 0.0;
  int runs = 0;
  bool prev = false;
  for (int w = 0; w < 8; ++w) {
    const bool t = net.way(100 + w).has_cycleway;
    if (t) tagged += polyline_length_m(net.way_points(100 + w));
    runs += t && !prev;
    prev = t;
  }
  const RouteLayer layer = cycleway_layer(net);
  EXPECT_EQ(static_cast<int>(layer.polylines.size()), runs);
  EXPECT_NEAR(layer.length_m(), tagged, 1e-6);
}

TEST(CyclewayLayer, RandomFixturesMatchTagScan) {
  for (std::uint32_t seed = 300; seed < 320; ++seed) {
    const RoadNetwork net = load_network(lanesurvey::testing::random_grid_extract(seed, 6, 25));
    double tagged = 0.0;
    for (const NamedChain& c : net.chains) {
      for (std::size_t e = 0; e < c.edge_count(); ++e) {
        if (net.way(c.edge_ways[e]).has_cycleway) tagged += distance_m(net.point(c.edge_from(e)), net.point(c.edge_to(e)));
      }
    }
    EXPECT_NEAR(cycleway_layer(net).length_m(), tagged, 1e-6) << "seed " << seed;
  }
}

TEST(OsmXml, RoundTrip) {
  const RoadNetwork net = load_network(lanesurvey::testing::random_grid_extract(7, 5, 15));
  const RoadNetwork again = load_network(to_osm_xml(net));
  EXPECT_EQ(again.intersections, net.intersections);
  EXPECT_EQ(again.chains.size(), net.chains.size());
  EXPECT_EQ(again.sorted_way_ids(), net.sorted_way_ids());
}
