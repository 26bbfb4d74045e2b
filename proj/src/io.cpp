#include "lrcp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lrcp::io {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

struct NpyHeader {
    Dtype dtype = Dtype::Float64;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

std::string path_str(const std::filesystem::path& path) { return path.string(); }

std::string header_dict(Dtype dtype, const std::vector<std::size_t>& shape) {
    std::string shape_str = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        shape_str += std::to_string(shape[i]);
        if (i + 1 < shape.size()) shape_str += ", ";
    }
    if (shape.size() == 1) shape_str += ",";
    shape_str += ")";
    const char* descr = dtype == Dtype::Float64 ? "<f8" : "<f4";
    return std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': " + shape_str + ", }";
}

void write_npy_header(std::ofstream& out, Dtype dtype, const std::vector<std::size_t>& shape) {
    std::string dict = header_dict(dtype, shape);
    // pad with spaces so magic + version + length + dict + '\n' is a
    // multiple of 64 bytes
    const std::size_t unpadded = 6 + 2 + 2 + dict.size() + 1;
    const std::size_t pad = (64 - unpadded % 64) % 64;
    dict.append(pad, ' ');
    dict.push_back('\n');
    const auto header_len = static_cast<std::uint16_t>(dict.size());

    out.write(kMagic, 6);
    out.put('\x01');
    out.put('\x00');
    const char len_bytes[2] = {static_cast<char>(header_len & 0xff), static_cast<char>((header_len >> 8) & 0xff)};
    out.write(len_bytes, 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
}

// Minimal parse of the python dict literal in the header.
NpyHeader parse_header_dict(const std::string& dict, const std::filesystem::path& path) {
    NpyHeader header;

    const auto descr_key = dict.find("'descr'");
    if (descr_key == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "missing 'descr' in " + path_str(path));
    }
    const auto descr_open = dict.find('\'', dict.find(':', descr_key));
    const auto descr_close = dict.find('\'', descr_open + 1);
    if (descr_open == std::string::npos || descr_close == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "unparseable 'descr' in " + path_str(path));
    }
    const std::string descr = dict.substr(descr_open + 1, descr_close - descr_open - 1);
    if (descr == "<f8") {
        header.dtype = Dtype::Float64;
    } else if (descr == "<f4") {
        header.dtype = Dtype::Float32;
    } else {
        throw Error(ErrorCode::MalformedHeader,
                    "unsupported dtype '" + descr + "' in " + path_str(path) + " (need '<f4' or '<f8')");
    }

    const auto order_key = dict.find("'fortran_order'");
    if (order_key == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "missing 'fortran_order' in " + path_str(path));
    }
    if (dict.find("True", order_key) != std::string::npos &&
        dict.find("True", order_key) < dict.find(',', order_key)) {
        header.fortran_order = true;
    }

    const auto shape_key = dict.find("'shape'");
    if (shape_key == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "missing 'shape' in " + path_str(path));
    }
    const auto open = dict.find('(', shape_key);
    const auto close = dict.find(')', open);
    if (open == std::string::npos || close == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "unparseable 'shape' in " + path_str(path));
    }
    std::string inside = dict.substr(open + 1, close - open - 1);
    std::size_t pos = 0;
    while (pos < inside.size()) {
        while (pos < inside.size() && (inside[pos] == ' ' || inside[pos] == ',')) ++pos;
        if (pos >= inside.size()) break;
        std::size_t value = 0;
        const auto [next, ec] = std::from_chars(inside.data() + pos, inside.data() + inside.size(), value);
        if (ec != std::errc{}) {
            throw Error(ErrorCode::MalformedHeader, "bad shape entry in " + path_str(path));
        }
        header.shape.push_back(value);
        pos = static_cast<std::size_t>(next - inside.data());
    }
    return header;
}

NpyHeader read_npy_header(std::ifstream& in, const std::filesystem::path& path) {
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0) {
        throw Error(ErrorCode::MalformedHeader, "not a NPY file: " + path_str(path));
    }
    char version[2];
    if (!in.read(version, 2)) {
        throw Error(ErrorCode::MalformedHeader, "truncated version field in " + path_str(path));
    }
    if (version[0] != 1 || version[1] != 0) {
        throw Error(ErrorCode::MalformedHeader, "unsupported NPY version " + std::to_string(version[0]) + "." +
                                                    std::to_string(version[1]) + " in " + path_str(path));
    }
    unsigned char len_bytes[2];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 2)) {
        throw Error(ErrorCode::MalformedHeader, "truncated header length in " + path_str(path));
    }
    const std::size_t header_len = static_cast<std::size_t>(len_bytes[0]) | (static_cast<std::size_t>(len_bytes[1]) << 8);
    std::string dict(header_len, '\0');
    if (!in.read(dict.data(), static_cast<std::streamsize>(header_len))) {
        throw Error(ErrorCode::MalformedHeader, "truncated header in " + path_str(path));
    }
    return parse_header_dict(dict, path);
}

void scan_finite(const std::vector<double>& values, const std::vector<std::size_t>& shape,
                 const std::filesystem::path& path) {
    for (std::size_t flat = 0; flat < values.size(); ++flat) {
        if (std::isfinite(values[flat])) continue;
        std::string where;
        if (shape.size() == 2) {
            where = "row " + std::to_string(flat / shape[1]) + ", column " + std::to_string(flat % shape[1]);
        } else {
            const std::size_t per_layer = shape[1] * shape[2];
            where = "layer " + std::to_string(flat / per_layer) + ", row " +
                    std::to_string((flat % per_layer) / shape[2]) + ", column " + std::to_string(flat % shape[2]);
        }
        throw Error(ErrorCode::NonFiniteValue, "non-finite value at " + where + " in " + path_str(path));
    }
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
    std::string quoted = "\"";
    for (const char c : value) {
        if (c == '"') quoted += "\"\"";
        else quoted += c;
    }
    quoted += '"';
    return quoted;
}

}  // namespace

std::vector<Matrix> load_layers(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path_str(path));
    }
    const NpyHeader header = read_npy_header(in, path);
    if (header.shape.size() != 2 && header.shape.size() != 3) {
        throw Error(ErrorCode::ShapeMismatch, "expected a 2-D matrix or a 3-D layer stack, got " +
                                                  std::to_string(header.shape.size()) + "-D in " + path_str(path));
    }
    if (header.fortran_order && header.shape.size() != 2) {
        throw Error(ErrorCode::MalformedHeader, "fortran_order stacks are not supported: " + path_str(path));
    }
    std::size_t count = 1;
    for (const std::size_t s : header.shape) {
        if (s == 0) {
            throw Error(ErrorCode::ShapeMismatch, "zero-sized dimension in " + path_str(path));
        }
        count *= s;
    }

    const std::size_t item = header.dtype == Dtype::Float64 ? 8 : 4;
    std::vector<double> values(count);
    if (header.dtype == Dtype::Float64) {
        if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * item))) {
            throw Error(ErrorCode::MalformedHeader, "payload truncated (declared shape needs " +
                                                        std::to_string(count * item) + " bytes): " + path_str(path));
        }
    } else {
        std::vector<float> raw(count);
        if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * item))) {
            throw Error(ErrorCode::MalformedHeader, "payload truncated (declared shape needs " +
                                                        std::to_string(count * item) + " bytes): " + path_str(path));
        }
        for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(raw[i]);
    }
    in.peek();
    if (!in.eof()) {
        throw Error(ErrorCode::ShapeMismatch, "trailing bytes after the declared payload in " + path_str(path));
    }
    scan_finite(values, header.shape, path);

    std::vector<Matrix> layers;
    if (header.shape.size() == 2) {
        const auto rows = static_cast<Index>(header.shape[0]);
        const auto cols = static_cast<Index>(header.shape[1]);
        Matrix m(rows, cols);
        if (header.fortran_order) {
            m = Eigen::Map<const Matrix>(values.data(), rows, cols);
        } else {
            m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                values.data(), rows, cols);
        }
        layers.push_back(std::move(m));
    } else {
        const auto n_layers = static_cast<Index>(header.shape[0]);
        const auto rows = static_cast<Index>(header.shape[1]);
        const auto cols = static_cast<Index>(header.shape[2]);
        layers.reserve(static_cast<std::size_t>(n_layers));
        for (Index l = 0; l < n_layers; ++l) {
            layers.emplace_back(
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                    values.data() + static_cast<std::size_t>(l) * static_cast<std::size_t>(rows * cols), rows, cols));
        }
    }
    return layers;
}

Matrix load_matrix(const std::filesystem::path& path) {
    std::vector<Matrix> layers = load_layers(path);
    if (layers.size() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "expected a single 2-D matrix, " + path_str(path) + " holds " +
                                                  std::to_string(layers.size()) + " layers");
    }
    return std::move(layers.front());
}

void save_matrix(const Eigen::Ref<const Matrix>& x, const std::filesystem::path& path, Dtype dtype) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path_str(path));
    }
    write_npy_header(out, dtype, {static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols())});
    if (dtype == Dtype::Float64) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = x;
        out.write(reinterpret_cast<const char*>(row_major.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(row_major.size())));
    } else {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = x.cast<float>();
        out.write(reinterpret_cast<const char*>(row_major.data()),
                  static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(row_major.size())));
    }
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed for " + path_str(path));
    }
}

void save_stack(const std::vector<Matrix>& layers, const std::filesystem::path& path, Dtype dtype) {
    if (layers.empty()) {
        throw Error(ErrorCode::EmptyInput, "no layers to save");
    }
    const Index rows = layers.front().rows();
    const Index cols = layers.front().cols();
    for (const Matrix& layer : layers) {
        if (layer.rows() != rows || layer.cols() != cols) {
            throw Error(ErrorCode::ShapeMismatch,
                        "stacks need uniform layer shapes; save variable-length layers as one file per layer");
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path_str(path));
    }
    write_npy_header(out, dtype,
                     {layers.size(), static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
    for (const Matrix& layer : layers) {
        if (dtype == Dtype::Float64) {
            const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = layer;
            out.write(reinterpret_cast<const char*>(row_major.data()),
                      static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(row_major.size())));
        } else {
            const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major =
                layer.cast<float>();
            out.write(reinterpret_cast<const char*>(row_major.data()),
                      static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(row_major.size())));
        }
    }
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed for " + path_str(path));
    }
}

json to_json(const SpectrumReport& report) {
    json j;
    j["explained"] = std::vector<double>(report.explained.data(), report.explained.data() + report.explained.size());
    json ranks = json::object();
    for (const auto& [v, rank] : report.rank_at) ranks[std::to_string(v)] = rank;
    j["rank_at"] = ranks;
    j["total_energy"] = report.total_energy;
    return j;
}

json to_json(const StabilityReport& report) {
    json j;
    j["drop_ratio"] = report.drop_ratio;
    j["trials"] = report.trials;
    j["similarities"] = report.similarities;
    j["mean_similarity"] = report.mean_similarity;
    j["min_similarity"] = report.min_similarity;
    j["mode"] = report.mode == StabilityMode::RandomDropout ? "random_dropout" : "importance_pruned";
    return j;
}

json to_json(const CompressionResult& result) {
    json j;
    j["retained_indices"] = result.retained_indices;
    j["scores"] = std::vector<double>(result.scores.data(), result.scores.data() + result.scores.size());
    j["surrogate_loss"] = result.surrogate_loss;
    json assignments = json::array();
    for (const auto& [from, to] : result.assignments) assignments.push_back({from, to});
    j["assignments"] = assignments;
    j["output_shape"] = {result.output.rows(), result.output.cols()};
    return j;
}

json to_json(const StagedPlan& plan) {
    json j;
    j["total_tokens"] = plan.total_tokens;
    json stages = json::array();
    for (const PlanStage& stage : plan.stages) {
        stages.push_back({{"label", stage.label},
                          {"retain_ratio", stage.retain_ratio},
                          {"absolute_keep", stage.absolute_keep}});
    }
    j["stages"] = stages;
    j["final_keep"] = plan.final_keep;
    j["final_retain"] = plan.final_retain;
    j["average_retention"] = plan.average_retention;
    j["llm_layers"] = plan.llm_layers;
    j["compress_layer"] = plan.compress_layer;
    return j;
}

SpectrumReport spectrum_report_from_json(const json& j) {
    SpectrumReport report;
    const auto explained = j.at("explained").get<std::vector<double>>();
    report.explained = Eigen::Map<const Vector>(explained.data(), static_cast<Index>(explained.size()));
    for (const auto& [key, value] : j.at("rank_at").items()) {
        report.rank_at[std::stoi(key)] = value.get<Index>();
    }
    report.total_energy = j.at("total_energy").get<double>();
    return report;
}

StabilityReport stability_report_from_json(const json& j) {
    StabilityReport report;
    report.drop_ratio = j.at("drop_ratio").get<double>();
    report.trials = j.at("trials").get<Index>();
    report.similarities = j.at("similarities").get<std::vector<double>>();
    report.mean_similarity = j.at("mean_similarity").get<double>();
    report.min_similarity = j.at("min_similarity").get<double>();
    report.mode = j.at("mode").get<std::string>() == "importance_pruned" ? StabilityMode::ImportancePruned
                                                                         : StabilityMode::RandomDropout;
    return report;
}

void write_report(const json& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path_str(path));
    }
    out << report.dump(2) << '\n';
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed for " + path_str(path));
    }
}

json read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path_str(path));
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedHeader, "bad JSON in " + path_str(path) + ": " + e.what());
    }
    return j;
}

std::string format_double(double value) {
    char buffer[32];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (ec != std::errc{}) {
        throw Error(ErrorCode::IoFailure, "failed to format a double");
    }
    return std::string(buffer, end);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path_str(path));
    }
    std::ostringstream line;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i > 0) line << ',';
        line << csv_field(header[i]);
    }
    out << line.str() << "\r\n";
    for (const auto& row : rows) {
        std::ostringstream row_line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) row_line << ',';
            row_line << csv_field(row[i]);
        }
        out << row_line.str() << "\r\n";
    }
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed for " + path_str(path));
    }
}

}  // namespace lrcp::io
