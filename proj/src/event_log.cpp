#include <array>
#include <fstream>
#include <sstream>

#include "sia/store.hpp"

namespace sia {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 8> kEventNames{{
    {EventKind::run_start, "run_start"},
    {EventKind::generation_start, "generation_start"},
    {EventKind::evaluation_done, "evaluation_done"},
    {EventKind::decision, "decision"},
    {EventKind::harness_updated, "harness_updated"},
    {EventKind::weight_update_step, "weight_update_step"},
    {EventKind::generation_end, "generation_end"},
    {EventKind::run_end, "run_end"},
}};

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

EventKind parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kEventNames) {
    if (name == text) return k;
  }
  throw LogError("unknown event kind '" + std::string(text) + "'");
}

void EventLog::append(EventKind kind, json payload) {
  const json record{
      {"schema_version", kEventSchemaVersion},
      {"sequence_no", static_cast<std::int64_t>(lines_.size())},
      {"event_kind", to_string(kind)},
      {"config_hash", config_hash_},
      {"seed", seed_},
      {"payload", std::move(payload)},
  };
  lines_.push_back(record.dump());
}

std::string EventLog::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void EventLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write event log " + path.string());
  out << text();
}

std::vector<RunEvent> parse_event_log(std::string_view text) {
  std::vector<RunEvent> events;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "event log line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogError(where + ": not valid JSON (" + e.what() + ")");
    }
    try {
      if (rec.at("schema_version").get<int>() != kEventSchemaVersion) {
        throw LogError(where + ": unsupported schema version " + rec.at("schema_version").dump());
      }
      RunEvent ev;
      ev.sequence_no = rec.at("sequence_no").get<std::int64_t>();
      ev.kind = parse_event_kind(rec.at("event_kind").get<std::string>());
      ev.config_hash = rec.at("config_hash").get<std::string>();
      ev.seed = rec.at("seed").get<std::uint64_t>();
      ev.payload = rec.at("payload");
      const auto expected = static_cast<std::int64_t>(events.size());
      if (ev.sequence_no != expected) {
        throw LogError("event log gap: missing sequence_no " + std::to_string(expected));
      }
      if (!events.empty() && (ev.config_hash != events.front().config_hash || ev.seed != events.front().seed)) {
        throw LogError(where + ": config hash or seed differs from the first record");
      }
      events.push_back(std::move(ev));
    } catch (const json::exception& e) {
      throw LogError(where + ": malformed record (" + e.what() + ")");
    }
  }
  if (events.empty()) throw LogError("event log is empty");
  return events;
}

std::vector<RunEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogError("cannot read event log " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_event_log(buf.str());
}

}  // namespace sia
