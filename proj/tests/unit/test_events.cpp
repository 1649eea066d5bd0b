#include <gtest/gtest.h>

#include "saferoad/error.hpp"
#include "saferoad/events.hpp"

using namespace saferoad;
using namespace saferoad::events;

namespace {
const std::string kHeader = "CRASH DATE,CRASH TIME,LATITUDE,LONGITUDE,COLLISION_ID\n";
}

TEST(ParseEvents, HeaderOnlyIsEmpty) {
  const auto r = parse_events(kHeader);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.skipped_count, 0u);
}

TEST(ParseEvents, BlankLatitudeRowsAreSkipped) {
  const std::string csv = kHeader +
                          "01/02/2022,8:15,40.70,-73.90,1\n"
                          "01/02/2022,8:16,,-73.91,2\n"
                          "01/03/2022,9:00,40.71,-73.92,3\n"
                          "01/04/2022,10:30,,-73.93,4\n"
                          "01/05/2022,11:45,40.72,-73.94,5\n";
  const auto r = parse_events(csv);
  ASSERT_EQ(r.events.size(), 3u);
  EXPECT_EQ(r.skipped_count, 2u);
  EXPECT_EQ(r.row_count, 5u);
  EXPECT_EQ(r.events[0].event_id, "1");
  EXPECT_EQ(r.events[2].event_id, "5");
  EXPECT_DOUBLE_EQ(r.events[1].latitude, 40.71);
  ASSERT_TRUE(r.events[0].timestamp);
  EXPECT_EQ(format_timestamp(*r.events[0].timestamp), "2022-01-02T08:15:00Z");
}

TEST(ParseEvents, OutOfRangeLatitudeIsSkipped) {
  const auto r = parse_events(kHeader + "01/02/2022,8:15,91.0,-73.90,1\n01/02/2022,8:15,40.0,-181,2\n"
                                        "01/02/2022,8:15,40.0,-73.0,3\n");
  EXPECT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.skipped_count, 2u);
}

TEST(ParseEvents, DuplicateIdsAndGarbageSkipped) {
  const auto r = parse_events(kHeader + "01/02/2022,8:15,40.0,-73.0,1\n01/02/2022,8:15,40.1,-73.1,1\n"
                                        "01/02/2022,8:15,abc,-73.0,2\n");
  EXPECT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.skipped_count, 2u);
}

TEST(ParseEvents, QuotedFieldsAndCrlf) {
  const std::string csv =
      "LATITUDE,LONGITUDE,COLLISION_ID,CRASH DATE,CRASH TIME,ON STREET NAME\r\n"
      "40.5,-74.1,7,2021-03-04,12:00,\"BROADWAY, \"\"UPPER\"\"\"\r\n";
  const auto r = parse_events(csv);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].attributes.at("ON STREET NAME"), "BROADWAY, \"UPPER\"");
}

TEST(ParseEvents, SchemaMismatchAndMalformed) {
  try {
    parse_events("A,B\n1,2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
  }
  try {
    parse_events(kHeader + "01/02/2022,8:15,\"40.0,-73.0,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedCsv);
  }
}

TEST(ParseEvents, CustomSchemaSynthesizesIds) {
  EventSchema s;
  s.latitude = "lat";
  s.longitude = "lng";
  s.time = {};
  s.id = "";
  const auto r = parse_events("lat,lng\n1.0,2.0\n3.0,4.0\n", s);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_NE(r.events[0].event_id, r.events[1].event_id);
  EXPECT_FALSE(r.events[0].timestamp);

  const auto j = nlohmann::json{{"lat", "lat"}, {"lon", "lng"}, {"time", nlohmann::json::array()}, {"id", ""}};
  EXPECT_EQ(schema_from_json(j).latitude, "lat");
}

TEST(Timestamps, Formats) {
  EXPECT_EQ(format_timestamp(*parse_timestamp("12/31/2020 23:59")), "2020-12-31T23:59:00Z");
  EXPECT_EQ(format_timestamp(*parse_timestamp("2020-02-29T01:02:03Z")), "2020-02-29T01:02:03Z");
  EXPECT_EQ(format_timestamp(*parse_timestamp("2020-02-29")), "2020-02-29T00:00:00Z");
  EXPECT_FALSE(parse_timestamp("yesterday"));
  EXPECT_FALSE(parse_timestamp("13/40/2020"));
}

TEST(EventJson, RoundTrip) {
  const auto r = parse_events(kHeader + "01/02/2022,8:15,40.7,-73.9,42\n");
  const auto back = event_from_json(to_json(r.events[0]));
  EXPECT_EQ(back, r.events[0]);
}
