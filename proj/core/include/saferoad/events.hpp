#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/geo.hpp"

namespace saferoad::events {

struct AccidentEvent {
  std::string event_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<std::chrono::sys_seconds> timestamp;
  std::map<std::string, std::string> attributes;

  LatLon location() const noexcept { return {latitude, longitude}; }
  friend bool operator==(const AccidentEvent&, const AccidentEvent&) = default;
};

// Maps logical fields onto CSV column names. `time` may name several columns
// (e.g. a date and a time column); their values are joined with a space.
// An empty `id` column means ids are synthesized from the row number.
struct EventSchema {
  std::string latitude = "LATITUDE";
  std::string longitude = "LONGITUDE";
  std::vector<std::string> time = {"CRASH DATE", "CRASH TIME"};
  std::string id = "COLLISION_ID";

  // NYC Motor Vehicle Collisions column names.
  static EventSchema nyc() { return {}; }
};

struct ParseResult {
  std::vector<AccidentEvent> events;
  std::size_t skipped_count = 0;
  std::size_t row_count = 0;
};

// Parses a UTF-8 CSV with a header row. Rows whose coordinates are missing,
// unparsable or out of range (and rows repeating an earlier event id) are
// skipped and counted. Throws MalformedCsv or SchemaMismatch.
ParseResult parse_events(std::string_view csv, const EventSchema& schema = EventSchema::nyc());

// Splits CSV text into records (RFC 4180 quoting, CRLF or LF line ends).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// Accepts "MM/DD/YYYY[ H:MM[:SS]]" and "YYYY-MM-DD[(T| )HH:MM[:SS][Z]]".
std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text);
std::string format_timestamp(std::chrono::sys_seconds t);

EventSchema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AccidentEvent& e);
AccidentEvent event_from_json(const nlohmann::json& j);

}  // namespace saferoad::events
