#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mtlink/data_model.hpp"

namespace mtlink {

/// Parse an ISO-8601 timestamp ("2016-04-19T12:34:56Z" or with a ±HH:MM
/// offset) or plain epoch seconds into UTC epoch seconds.
std::int64_t parse_timestamp(const std::string& text);

/// UTC day of month (1..31) of an epoch-seconds timestamp.
int day_of_month_utc(std::int64_t timestamp_utc);

/// Check-in files: UTF-8 CSV with a header naming at least user_id, platform,
/// timestamp and either lat+lon or poi_id; or JSON-lines with the same fields.
/// The format is chosen by file extension (.csv vs .jsonl/.ndjson/.json).
std::vector<CheckinPoint> read_checkins(const std::string& path);
std::vector<CheckinPoint> read_checkins_csv(std::istream& in, const std::string& origin);
std::vector<CheckinPoint> read_checkins_jsonl(std::istream& in, const std::string& origin);

/// Two-column CSV (id_platform_a, id_platform_b), header optional.
IdentityMap read_identity_map(const std::string& path);

void write_checkins_csv(const std::vector<CheckinPoint>& points, const std::string& path);
void write_identity_map(const IdentityMap& map, const std::string& path);

}  // namespace mtlink
