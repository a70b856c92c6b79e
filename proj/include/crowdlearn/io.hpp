#pragma once

#include "crowdlearn/evaluation.hpp"
#include "crowdlearn/event_model.hpp"
#include "crowdlearn/kernel.hpp"
#include "crowdlearn/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace crowdlearn::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Dataset directories hold items.jsonl (catalog) and events.jsonl. The event
// file may start with {"type":"meta","horizon":T}.
inline constexpr const char* kItemsFile = "items.jsonl";
inline constexpr const char* kEventsFile = "events.jsonl";

/// Throws FormatError with file and line on malformed records.
[[nodiscard]] RawEventLog read_event_log(const fs::path& dir);
void write_event_log(const fs::path& dir, const RawEventLog& raw);

/// read_event_log + build_dataset.
[[nodiscard]] Dataset read_dataset(const fs::path& dir);
void write_dataset(const fs::path& dir, const Dataset& d);

/// Held-out events, named through the train tables; events.jsonl only.
void write_test_set(const fs::path& dir, const TestSet& test, const Dataset& train);
[[nodiscard]] TestSet read_test_set(const fs::path& dir, const Dataset& train);

[[nodiscard]] Json to_json(const ParameterSet& p);
/// Throws FormatError.
[[nodiscard]] ParameterSet parameters_from_json(const Json& j);

/// Parameters plus diagnostics. Wall time is left out so the file is a pure
/// function of the inputs.
[[nodiscard]] Json to_json(const FitResult& r);
[[nodiscard]] ParameterSet read_fit_parameters(const fs::path& file);

[[nodiscard]] Json to_json(const ValidationReport& r);
[[nodiscard]] Json to_json(const RecoveryReport& r);
[[nodiscard]] Json to_json(const PredictionTable& t);
[[nodiscard]] Json to_json(const std::vector<SweepPoint>& points);

[[nodiscard]] std::string to_csv(const RecoveryReport& r);
[[nodiscard]] std::string to_csv(const PredictionTable& t);
[[nodiscard]] std::string to_csv(const std::vector<SweepPoint>& points);

/// Throws FormatError when the file cannot be read or parsed.
[[nodiscard]] Json read_json(const fs::path& file);
void write_json(const fs::path& file, const Json& j);
void write_text(const fs::path& file, const std::string& text);
[[nodiscard]] std::string read_text(const fs::path& file);

/// FNV-1a of a file's bytes, as 16 hex digits; directories hash their
/// regular files in name order.
[[nodiscard]] std::string content_hash(const fs::path& path);

} // namespace crowdlearn::io
