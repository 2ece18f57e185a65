#pragma once

#include <json.hpp>

#include "relseg/gradcheck.hpp"
#include "relseg/inference.hpp"
#include "relseg/losses.hpp"
#include "relseg/metrics.hpp"
#include "relseg/opsearch.hpp"
#include "relseg/phantom.hpp"

namespace relseg {

// JSON bindings for config and report types. Parsing failures surface as
// config errors with the offending key in the message.

void to_json(nlohmann::json& j, const OperatingPoint& op);
void from_json(const nlohmann::json& j, OperatingPoint& op);

void to_json(nlohmann::json& j, const SearchSpace& s);
void from_json(const nlohmann::json& j, SearchSpace& s);

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

void to_json(nlohmann::json& j, const PerImageMetrics& m);
void to_json(nlohmann::json& j, const CalibrationMetrics& m);
void to_json(nlohmann::json& j, const MetricReport& r);

void to_json(nlohmann::json& j, const StageWeights& w);
void to_json(nlohmann::json& j, const LossBreakdown& b);

void to_json(nlohmann::json& j, const GradCheckEntry& e);
void to_json(nlohmann::json& j, const GradCheckReport& r);

void to_json(nlohmann::json& j, const BootstrapResult& r);

nlohmann::json load_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace relseg
