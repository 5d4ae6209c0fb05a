#pragma once

#include <string>

#include "json.hpp"

#include "dtx/pipeline.hpp"

namespace dtx {

nlohmann::json to_json(const PipelineReport& report);
nlohmann::json to_json(const BaselineTable& table);
nlohmann::json to_json(const SweepConfig& config);

/// Comparison table: one row per feature set, one column per method.
std::string table3_csv(const BaselineTable& table);
/// Single-row table holding only the extracted-tree column.
std::string table3_csv(const PipelineReport& report);

}  // namespace dtx
