#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrcp/compress.hpp"
#include "lrcp/spectrum.hpp"

namespace lrcp::io {

using json = nlohmann::json;

enum class Dtype { Float32, Float64 };

// NPY version 1.0, little-endian, C-order. 2-D files hold one token matrix,
// 3-D files hold per-layer stacks with uniform N. Loading rejects non-finite
// payloads, naming the offending entry.
std::vector<Matrix> load_layers(const std::filesystem::path& path);

// Convenience wrapper requiring exactly one layer.
Matrix load_matrix(const std::filesystem::path& path);

void save_matrix(const Eigen::Ref<const Matrix>& x, const std::filesystem::path& path,
                 Dtype dtype = Dtype::Float64);

void save_stack(const std::vector<Matrix>& layers, const std::filesystem::path& path,
                Dtype dtype = Dtype::Float64);

json to_json(const SpectrumReport& report);
json to_json(const StabilityReport& report);
json to_json(const CompressionResult& result);
json to_json(const StagedPlan& plan);

SpectrumReport spectrum_report_from_json(const json& j);
StabilityReport stability_report_from_json(const json& j);

// Canonical report serialization: sorted keys, shortest round-trip floats,
// two-space indent, trailing newline. Identical inputs give identical bytes.
void write_report(const json& report, const std::filesystem::path& path);
json read_report(const std::filesystem::path& path);

// Shortest round-trip decimal formatting.
std::string format_double(double value);

// RFC 4180: header row, CRLF terminators, quoting only where required.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace lrcp::io
