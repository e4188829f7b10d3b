#pragma once

#include "selectiv/analysis.hpp"
#include "selectiv/simulation.hpp"

#include <json.hpp>

#include <string>

namespace selectiv {

inline constexpr int report_schema_version = 1;

nlohmann::json to_json(const PretestOutcome& pre);
nlohmann::json to_json(const Interval& ci);
nlohmann::json to_json(const InferenceReport& report);
nlohmann::json to_json(const ExperimentResult& result);

/// Deterministic text: fixed key order, shortest round-trip doubles, and
/// infinite or NaN values written as null.
std::string render(const nlohmann::json& doc);

} // namespace selectiv
