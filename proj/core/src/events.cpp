#include "saferoad/events.hpp"

#include <charconv>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "saferoad/error.hpp"

namespace saferoad::events {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  // Skip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // A blank line is not a record.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::MalformedCsv, "unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::size_t column_index(const std::unordered_map<std::string, std::size_t>& header,
                         const std::string& name) {
  const auto it = header.find(name);
  if (it == header.end()) throw Error(ErrorCode::SchemaMismatch, "column not found: " + name);
  return it->second;
}

}  // namespace

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const std::string s(trim(text));
  if (s.empty()) return std::nullopt;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char tail[8] = {};
  int consumed = 0;
  bool ok = false;
  if (std::sscanf(s.c_str(), "%d/%d/%d%n", &mo, &d, &y, &consumed) == 3) {
    ok = true;
    const char* rest = s.c_str() + consumed;
    if (*rest != '\0') {
      const int n = std::sscanf(rest, " %d:%d:%d", &h, &mi, &sec);
      if (n < 2) return std::nullopt;
    }
  } else if (std::sscanf(s.c_str(), "%d-%d-%d%n", &y, &mo, &d, &consumed) == 3) {
    ok = true;
    const char* rest = s.c_str() + consumed;
    if (*rest == 'T' || *rest == ' ') {
      const int n = std::sscanf(rest + 1, "%d:%d:%d%7s", &h, &mi, &sec, tail);
      if (n < 2) return std::nullopt;
    } else if (*rest != '\0') {
      return std::nullopt;
    }
  }
  if (!ok) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

std::string format_timestamp(std::chrono::sys_seconds t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

ParseResult parse_events(std::string_view csv, const EventSchema& schema) {
  const auto rows = parse_csv(csv);
  if (rows.empty()) throw Error(ErrorCode::MalformedCsv, "missing header row");

  const auto& header_row = rows.front();
  std::unordered_map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < header_row.size(); ++i) header.emplace(std::string(trim(header_row[i])), i);

  const std::size_t lat_col = column_index(header, schema.latitude);
  const std::size_t lon_col = column_index(header, schema.longitude);
  std::vector<std::size_t> time_cols;
  for (const auto& name : schema.time) time_cols.push_back(column_index(header, name));
  std::optional<std::size_t> id_col;
  if (!schema.id.empty()) id_col = column_index(header, schema.id);

  std::set<std::size_t> reserved{lat_col, lon_col};
  reserved.insert(time_cols.begin(), time_cols.end());
  if (id_col) reserved.insert(*id_col);

  ParseResult result;
  result.row_count = rows.size() - 1;
  std::set<std::string> seen_ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header_row.size()) {
      throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r + 1) + " has " +
                                               std::to_string(row.size()) + " columns, header has " +
                                               std::to_string(header_row.size()));
    }
    const auto lat = parse_double(row[lat_col]);
    const auto lon = parse_double(row[lon_col]);
    if (!lat || !lon || !valid_latlon({*lat, *lon})) {
      ++result.skipped_count;
      continue;
    }
    AccidentEvent ev;
    ev.event_id = id_col ? std::string(trim(row[*id_col])) : "row-" + std::to_string(r);
    if (ev.event_id.empty() || !seen_ids.insert(ev.event_id).second) {
      ++result.skipped_count;
      continue;
    }
    ev.latitude = *lat;
    ev.longitude = *lon;
    if (!time_cols.empty()) {
      std::string joined;
      for (const auto c : time_cols) {
        if (!joined.empty()) joined.push_back(' ');
        joined += trim(row[c]);
      }
      ev.timestamp = parse_timestamp(joined);
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!reserved.contains(c)) ev.attributes.emplace(std::string(trim(header_row[c])), row[c]);
    }
    result.events.push_back(std::move(ev));
  }
  return result;
}

EventSchema schema_from_json(const nlohmann::json& j) {
  EventSchema s;
  if (j.contains("lat")) s.latitude = j.at("lat").get<std::string>();
  if (j.contains("lon")) s.longitude = j.at("lon").get<std::string>();
  if (j.contains("id")) s.id = j.at("id").get<std::string>();
  if (j.contains("time")) {
    const auto& t = j.at("time");
    s.time = t.is_array() ? t.get<std::vector<std::string>>() : std::vector<std::string>{t.get<std::string>()};
    if (s.time.size() == 1 && s.time[0].empty()) s.time.clear();
  }
  return s;
}

nlohmann::json to_json(const AccidentEvent& e) {
  nlohmann::json j{{"event_id", e.event_id}, {"latitude", e.latitude}, {"longitude", e.longitude},
                   {"attributes", e.attributes}};
  j["timestamp"] = e.timestamp ? nlohmann::json(format_timestamp(*e.timestamp)) : nlohmann::json(nullptr);
  return j;
}

AccidentEvent event_from_json(const nlohmann::json& j) {
  AccidentEvent e;
  e.event_id = j.at("event_id").get<std::string>();
  e.latitude = j.at("latitude").get<double>();
  e.longitude = j.at("longitude").get<double>();
  if (j.contains("attributes")) e.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  if (j.contains("timestamp") && j.at("timestamp").is_string()) {
    e.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
  }
  return e;
}

}  // namespace saferoad::events
