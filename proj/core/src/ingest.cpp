#include "mtlink/ingest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtlink {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool to_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool to_int64(const std::string& s, std::int64_t& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

void validate_point(const CheckinPoint& p, const std::string& origin) {
  if (p.platform != 'A' && p.platform != 'B')
    throw ValidationError(origin + ": platform must be A or B, got '" + std::string(1, p.platform) +
                          "'");
  if (p.has_coords()) {
    if (!(*p.lat >= -90.0 && *p.lat <= 90.0))
      throw ValidationError(origin + ": latitude " + std::to_string(*p.lat) + " out of range");
    if (!(*p.lon >= -180.0 && *p.lon <= 180.0))
      throw ValidationError(origin + ": longitude " + std::to_string(*p.lon) + " out of range");
  } else if (!p.poi_id.has_value()) {
    throw ValidationError(origin + ": point needs either lat+lon or poi_id");
  }
  if (p.poi_id.has_value() && *p.poi_id < 0)
    throw ValidationError(origin + ": poi_id must be non-negative");
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) throw ValidationError("parse_timestamp: empty timestamp");

  std::int64_t epoch = 0;
  if (to_int64(s, epoch)) return epoch;

  // ISO-8601: YYYY-MM-DD[Thh:mm:ss][Z|±hh:mm|±hhmm]
  auto bad = [&] { return ValidationError("parse_timestamp: cannot parse '" + s + "'"); };
  auto digits = [&](std::size_t pos, std::size_t len) -> int {
    if (pos + len > s.size()) throw bad();
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) throw bad();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw bad();
  const int y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  int hh = 0, mi = 0, ss = 0, offset_min = 0;
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    if (s.size() < pos + 9 || s[pos + 3] != ':' || s[pos + 6] != ':') throw bad();
    hh = digits(pos + 1, 2);
    mi = digits(pos + 4, 2);
    ss = digits(pos + 7, 2);
    pos += 9;
  }
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      offset_min = 0;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '-' ? -1 : 1;
      const int oh = digits(pos + 1, 2);
      int om = 0;
      if (pos + 3 == s.size()) {
        om = 0;
      } else if (pos + 6 == s.size() && s[pos + 3] == ':') {
        om = digits(pos + 4, 2);
      } else if (pos + 5 == s.size()) {
        om = digits(pos + 3, 2);
      } else {
        throw bad();
      }
      offset_min = sign * (oh * 60 + om);
    } else {
      throw bad();
    }
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mi > 59 || ss > 60)
    throw ValidationError("parse_timestamp: bad calendar date in '" + s + "'");
  const std::int64_t days = days_from_civil(y, mo, d);
  return days * 86400 + hh * 3600 + mi * 60 + ss - static_cast<std::int64_t>(offset_min) * 60;
}

int day_of_month_utc(std::int64_t timestamp_utc) {
  const std::int64_t days =
      (timestamp_utc >= 0 ? timestamp_utc : timestamp_utc - 86399) / 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  return static_cast<int>(d);
}

std::vector<CheckinPoint> read_checkins_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(origin + ": empty file");
  auto header = split_csv_line(line);
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_user = col("user_id"), c_platform = col("platform"), c_ts = col("timestamp");
  const int c_lat = col("lat"), c_lon = col("lon"), c_poi = col("poi_id");
  if (c_user < 0 || c_platform < 0 || c_ts < 0)
    throw ValidationError(origin + ": header must name user_id, platform, timestamp");
  if ((c_lat < 0 || c_lon < 0) && c_poi < 0)
    throw ValidationError(origin + ": header must name lat+lon or poi_id");

  std::vector<CheckinPoint> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() < header.size())
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields");
    CheckinPoint p;
    p.user_id = fields[c_user];
    const std::string plat = fields[c_platform];
    p.platform = plat.empty() ? '?' : plat[0];
    p.timestamp_utc = parse_timestamp(fields[c_ts]);
    if (c_lat >= 0 && c_lon >= 0 && !fields[c_lat].empty() && !fields[c_lon].empty()) {
      double lat = 0.0, lon = 0.0;
      if (!to_double(fields[c_lat], lat) || !to_double(fields[c_lon], lon))
        throw ValidationError(where + ": bad coordinates");
      p.lat = lat;
      p.lon = lon;
    }
    if (c_poi >= 0 && !fields[c_poi].empty()) {
      std::int64_t poi = 0;
      if (!to_int64(fields[c_poi], poi)) throw ValidationError(where + ": bad poi_id");
      p.poi_id = poi;
    }
    validate_point(p, where);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<CheckinPoint> read_checkins_jsonl(std::istream& in, const std::string& origin) {
  std::vector<CheckinPoint> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(where + ": bad JSON: " + e.what());
    }
    CheckinPoint p;
    if (!j.contains("user_id") || !j.contains("platform") || !j.contains("timestamp"))
      throw ValidationError(where + ": need user_id, platform, timestamp");
    p.user_id = j["user_id"].get<std::string>();
    const std::string plat = j["platform"].get<std::string>();
    p.platform = plat.empty() ? '?' : plat[0];
    if (j["timestamp"].is_number_integer())
      p.timestamp_utc = j["timestamp"].get<std::int64_t>();
    else
      p.timestamp_utc = parse_timestamp(j["timestamp"].get<std::string>());
    if (j.contains("lat") && j.contains("lon") && !j["lat"].is_null()) {
      p.lat = j["lat"].get<double>();
      p.lon = j["lon"].get<double>();
    }
    if (j.contains("poi_id") && !j["poi_id"].is_null()) p.poi_id = j["poi_id"].get<std::int64_t>();
    validate_point(p, where);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<CheckinPoint> read_checkins(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const bool is_jsonl = path.ends_with(".jsonl") || path.ends_with(".ndjson") ||
                        path.ends_with(".json");
  return is_jsonl ? read_checkins_jsonl(in, path) : read_checkins_csv(in, path);
}

IdentityMap read_identity_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  IdentityMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected two columns");
    if (line_no == 1 && (fields[0] == "id_platform_a" || fields[0] == "user_a")) continue;
    map.links.push_back({fields[0], fields[1]});
  }
  return map;
}

void write_checkins_csv(const std::vector<CheckinPoint>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "user_id,platform,timestamp,lat,lon\n";
  char buf[128];
  for (const CheckinPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%s,%c,%lld,%.9f,%.9f\n", p.user_id.c_str(), p.platform,
                  static_cast<long long>(p.timestamp_utc), p.lat.value_or(0.0),
                  p.lon.value_or(0.0));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_identity_map(const IdentityMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "id_platform_a,id_platform_b\n";
  for (const auto& [a, b] : map.links) out << a << ',' << b << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mtlink
