#pragma once

// Persistence: run configuration, policy checkpoints and the event log.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "sia/core.hpp"
#include "sia/policy.hpp"

namespace sia {

// --- configuration --------------------------------------------------------

/// Parses a JSON document with optional "loop" and "algorithm" sections over
/// the defaults. Unknown keys, wrong types and out-of-range values throw
/// ConfigError.
LoopConfig parse_config(std::string_view text);
LoopConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const LoopConfig& config);
/// Hash of the canonical JSON form.
std::uint64_t config_hash(const LoopConfig& config);

// --- checkpoints ----------------------------------------------------------

/// Text checkpoint: shapes, lineage and every parameter as the hex image of
/// its IEEE-754 bits, so a round trip is bit-exact.
std::string serialize_policy(const Policyd& policy);
Policyd deserialize_policy(std::string_view text);

// --- event log ------------------------------------------------------------

inline constexpr int kEventSchemaVersion = 1;

enum class EventKind {
  run_start,
  generation_start,
  evaluation_done,
  decision,
  harness_updated,
  weight_update_step,
  generation_end,
  run_end,
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);


class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-writer canonical log: one JSON object per line, keys sorted, no
/// wall-clock fields.
class EventLog {
 public:
  EventLog(std::string config_hash, std::uint64_t seed)
      : config_hash_(std::move(config_hash)), seed_(seed) {}

  void append(EventKind kind, nlohmann::json payload);
  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string config_hash_;
  std::uint64_t seed_;
  std::vector<std::string> lines_;
};

struct RunEvent {
  std::int64_t sequence_no = 0;
  EventKind kind = EventKind::run_start;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json payload;
};

/// Parses and validates a log: schema version, contiguous sequence numbers
/// from 0, one config hash and seed. Throws LogError naming the first
/// missing sequence number on a gap.
std::vector<RunEvent> parse_event_log(std::string_view text);
std::vector<RunEvent> read_event_log(const std::filesystem::path& path);

}  // namespace sia
