#include <gtest/gtest.h>

#include "floatpop/geojson.hpp"
#include "floatpop/ingest.hpp"
#include "support.hpp"

using namespace floatpop;
using fptest::rect_zone;
using fptest::scratch_dir;
using fptest::write_text;

namespace {

RejectionReport read_events(const std::filesystem::path& p, std::vector<NetworkEvent>& out) {
  return parse_events(p, [&](const NetworkEvent& e) { out.push_back(e); });
}

}  // namespace

TEST(Config, LaunchDateImpliesWeekEitherSide) {
  const auto cfg = parse_study_config_text("launch_date = 2016-08-03\n# comment\ngrid_start = 06:00\n");
  EXPECT_EQ(cfg.calendar.pre_dates().size(), 7u);
  EXPECT_EQ(cfg.calendar.post_dates().size(), 7u);
  EXPECT_EQ(cfg.calendar.excluded_dates().size(), 1u);
  EXPECT_EQ(cfg.grid.start, 360);
  EXPECT_EQ(cfg.grid.end, 1439);
  EXPECT_EQ(cfg.lowess_bandwidth_min, 30);
  EXPECT_DOUBLE_EQ(cfg.max_zone_area_km2, 20.0);
  EXPECT_TRUE(cfg.category_allowlist.empty());
}

TEST(Config, ExplicitListsRangesAndPaths) {
  const auto cfg = parse_study_config_text(
      "pre_dates = 2016-07-27..2016-07-29, 2016-08-01\n"
      "post_dates = 2016-08-04\n"
      "category_allowlist = prepaid, contract\n"
      "events = data/events.csv\n"
      "max_zone_area_km2 = 15\n",
      "/base");
  EXPECT_EQ(cfg.calendar.pre_dates().size(), 4u);
  EXPECT_EQ(cfg.calendar.post_dates().size(), 1u);
  EXPECT_EQ(cfg.category_allowlist, (std::vector<std::string>{"prepaid", "contract"}));
  EXPECT_EQ(cfg.events_path, std::filesystem::path("/base/data/events.csv"));
  EXPECT_DOUBLE_EQ(cfg.max_zone_area_km2, 15.0);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_study_config_text("colour = blue\n"), ConfigError);
  EXPECT_THROW(parse_study_config_text("grid_start\n"), ConfigError);
  EXPECT_THROW(parse_study_config_text("grid_start = 23:00\ngrid_end = 06:00\n"), ConfigError);
  EXPECT_THROW(parse_study_config_text("lowess_bandwidth_min = 2\n"), ConfigError);
  EXPECT_THROW(parse_study_config_text("launch_date = 2016-08-03\npre_dates = 2016-08-05\n"), ConfigError);
  EXPECT_THROW(parse_study_config_text("min_mib = 10\nmax_mib = 5\n"), ConfigError);
}

TEST(Events, RowMapsFields) {
  NetworkEvent e;
  EXPECT_TRUE(detail::parse_event_row("2016-07-27T08:15,abc,T1,12.5,prepaid", e).empty());
  EXPECT_EQ(format_date(e.date), "2016-07-27");
  EXPECT_EQ(e.minute, 495);
  EXPECT_EQ(e.device_id, "abc");
  EXPECT_EQ(e.tower_id, "T1");
  EXPECT_DOUBLE_EQ(e.kib, 12.5);
  EXPECT_EQ(e.category, "prepaid");
}

TEST(Events, RejectionReasons) {
  NetworkEvent e;
  EXPECT_EQ(detail::parse_event_row("2016-07-27T08:15,abc,T1,-1,prepaid", e), "negative_kib");
  EXPECT_EQ(detail::parse_event_row("2016-07-27T08:15,abc,T1,x,prepaid", e), "bad_kib");
  EXPECT_EQ(detail::parse_event_row("2016-07-27T25:15,abc,T1,1,prepaid", e), "bad_timestamp");
  EXPECT_EQ(detail::parse_event_row("2016-07-27T08:15,,T1,1,prepaid", e), "empty_device_id");
  EXPECT_EQ(detail::parse_event_row("2016-07-27T08:15,abc,,1,prepaid", e), "empty_tower_id");
  EXPECT_EQ(detail::parse_event_row("2016-07-27T08:15,abc,T1,1", e), "field_count");
}

TEST(Events, FileStreamingCountsRejects) {
  const auto dir = scratch_dir("ingest_events");
  write_text(dir / "events.csv",
             "timestamp,device_id,tower_id,kib,category\n"
             "2016-07-27T08:15,abc,T1,12.5,prepaid\n"
             "2016-07-27T08:16,abc,T1,-1,prepaid\n"
             "garbage\n"
             "2016-07-27T08:17,def,T2,0,contract\n");
  std::vector<NetworkEvent> events;
  const auto r = read_events(dir / "events.csv", events);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[1].device_id, "def");
  EXPECT_EQ(r.accepted, 2u);
  EXPECT_EQ(r.rejected.at("negative_kib"), 1u);
  EXPECT_EQ(r.rejected.at("field_count"), 1u);
  EXPECT_EQ(r.total_rejected(), 2u);
}

TEST(Events, EmptyFileWithHeader) {
  const auto dir = scratch_dir("ingest_empty");
  write_text(dir / "events.csv", "timestamp,device_id,tower_id,kib,category\n");
  std::vector<NetworkEvent> events;
  const auto r = read_events(dir / "events.csv", events);
  EXPECT_TRUE(events.empty());
  EXPECT_EQ(r.total_rejected(), 0u);
}

TEST(Events, MissingFileOrHeaderIsFatal) {
  const auto dir = scratch_dir("ingest_missing");
  std::vector<NetworkEvent> events;
  EXPECT_THROW(read_events(dir / "nope.csv", events), InputError);
  write_text(dir / "bad.csv", "2016-07-27T08:15,abc,T1,12.5,prepaid\n");
  EXPECT_THROW(read_events(dir / "bad.csv", events), InputError);
  write_text(dir / "blank.csv", "");
  EXPECT_THROW(read_events(dir / "blank.csv", events), InputError);
}

TEST(Towers, ParseAndValidate) {
  const auto dir = scratch_dir("ingest_towers");
  write_text(dir / "t.csv", "tower_id,lon,lat\nT1,-70.6,-33.4\nT2,-70.5,-33.5\n");
  const auto towers = parse_towers(dir / "t.csv");
  ASSERT_EQ(towers.size(), 2u);
  EXPECT_DOUBLE_EQ(towers[1].location.lat, -33.5);
  write_text(dir / "dup.csv", "tower_id,lon,lat\nT1,0,0\nT1,1,1\n");
  EXPECT_THROW(parse_towers(dir / "dup.csv"), InputError);
  write_text(dir / "range.csv", "tower_id,lon,lat\nT1,200,0\n");
  EXPECT_THROW(parse_towers(dir / "range.csv"), InputError);
}

TEST(Zones, GeoJsonRoundTrip) {
  std::vector<ZoneRecord> zones{rect_zone("Z1", 0, 0, 0.01, 0.01, 1.2, LandUse::business_only, 4),
                                rect_zone("Z2", 0.01, 0, 0.02, 0.01, 1.2, LandUse::mixed_activities, 0)};
  const auto back = parse_zones_geojson(zones_to_geojson(zones, true));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].land_use, LandUse::business_only);
  EXPECT_EQ(back[0].pokepoint_count, 4);
  EXPECT_DOUBLE_EQ(back[1].area_km2, 1.2);
  EXPECT_EQ(back[1].polygons[0].outer, zones[1].polygons[0].outer);
  EXPECT_EQ(parse_zones_geojson(zones_to_geojson(zones)).at(0).pokepoint_count, 0);
}

TEST(Zones, AreaMismatchWarnsAndMissingAreaIsComputed) {
  auto doc = zones_to_geojson({rect_zone("Z1", 0, 0, 0.01, 0.01, 5.0)});
  ZoneLoadReport report;
  parse_zones_geojson(doc, &report);
  EXPECT_EQ(report.warnings.size(), 1u);
  doc["features"][0]["properties"].erase("area_km2");
  const auto z = parse_zones_geojson(doc);
  EXPECT_NEAR(z[0].area_km2, 1.2364, 2e-3);
}

TEST(Zones, BadDocuments) {
  auto doc = zones_to_geojson({rect_zone("Z1", 0, 0, 1, 1), rect_zone("Z1", 1, 0, 2, 1)});
  EXPECT_THROW(parse_zones_geojson(doc), InputError);
  doc = zones_to_geojson({rect_zone("Z1", 0, 0, 1, 1)});
  doc["features"][0]["properties"]["land_use"] = "farm";
  EXPECT_THROW(parse_zones_geojson(doc), InputError);
  EXPECT_THROW(parse_zones_geojson(json::array()), InputError);
}

TEST(SelectZones, AreaTowerAndPokepointRules) {
  const std::vector<ZoneRecord> zones{
      rect_zone("Zc", 0, 0, 1, 1, 18.37, LandUse::residential, 3),
      rect_zone("Zb", 1, 0, 2, 1, 25.0, LandUse::residential, 3),
      rect_zone("Za", 2, 0, 3, 1, 1.0, LandUse::residential, 3),
      rect_zone("Zd", 3, 0, 4, 1, 1.0, LandUse::residential, 0)};
  const std::vector<Tower> towers{{"T1", {0.3, 0.5}}, {"T2", {0.6, 0.5}}, {"T3", {1.5, 0.5}}, {"T4", {3.5, 0.5}}};
  const auto kept = select_zones(zones, towers, 20.0);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].zone_id, "Zc");
}

TEST(SelectZones, IdempotentAndSortedById) {
  std::vector<ZoneRecord> zones;
  std::vector<Tower> towers;
  for (int i = 9; i >= 0; --i) {
    zones.push_back(rect_zone("Z" + std::to_string(i), i, 0, i + 1, 1, 1.0 + 3 * i, LandUse::residential, i % 3));
    if (i % 4) towers.push_back({"T" + std::to_string(i), {i + 0.5, 0.5}});
  }
  const auto once = select_zones(zones, towers);
  const auto twice = select_zones(once, towers);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].zone_id, twice[i].zone_id);
  EXPECT_TRUE(std::is_sorted(once.begin(), once.end(),
                             [](const auto& a, const auto& b) { return a.zone_id < b.zone_id; }));
}

TEST(Pokepoints, CountsInsideAndSharedBoundaryOnce) {
  const std::vector<ZoneRecord> zones{rect_zone("Z", 0, 0, 1, 1), rect_zone("W", 1, 0, 2, 1)};
  std::vector<GeoPoint> pois{{0.2, 0.2}, {0.5, 0.5}, {0.8, 0.1}, {3, 3}};
  auto out = attach_pokepoints(zones, pois);
  EXPECT_EQ(out[0].pokepoint_count, 3);
  EXPECT_EQ(out[1].pokepoint_count, 0);
  pois.push_back({1.0, 0.5});
  out = attach_pokepoints(zones, pois);
  EXPECT_EQ(out[0].pokepoint_count, 4);
  EXPECT_EQ(out[1].pokepoint_count, 0);
  out = attach_pokepoints(zones, {});
  EXPECT_EQ(out[0].pokepoint_count + out[1].pokepoint_count, 0);
}

TEST(Pokepoints, NeverDoubleCounted) {
  std::vector<ZoneRecord> zones;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      zones.push_back(rect_zone("Z" + std::to_string(4 * i + j), i, j, i + 1, j + 1));
  std::vector<GeoPoint> pois;
  for (int k = 0; k <= 40; ++k) pois.push_back({k * 0.125, (k * 7 % 41) * 0.125});
  const auto out = attach_pokepoints(zones, pois);
  int total = 0;
  for (const auto& z : out) total += z.pokepoint_count;
  EXPECT_LE(total, static_cast<int>(pois.size()));
  int oracle = 0;
  for (const auto& p : pois) oracle += point_in_zone(p, zones).has_value();
  EXPECT_EQ(total, oracle);
}
