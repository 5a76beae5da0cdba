#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoshift/errors.hpp"
#include "protoshift/tensor.hpp"

namespace protoshift {

using json = nlohmann::json;

/// Binary-mode streams that throw IoError when the file cannot be opened.
std::ofstream open_output(const std::filesystem::path& path);
std::ifstream open_input(const std::filesystem::path& path);

/// One-line JSON header. Keys serialize sorted, doubles with the shortest
/// representation that round-trips, so equal headers are byte-equal.
void write_json_line(std::ostream& os, const json& j);
json read_json_line(std::istream& is);

/// Raw IEEE-754 blocks, little-endian byte order regardless of host.
void write_f64_block(std::ostream& os, const std::vector<double>& values);
std::vector<double> read_f64_block(std::istream& is, std::size_t count);
void write_f32_block(std::ostream& os, const std::vector<float>& values);
std::vector<float> read_f32_block(std::istream& is, std::size_t count);

/// Tensor payload helpers: the header carries shapes, these move the bytes.
void write_tensor_values(std::ostream& os, const Tensor& t);
Tensor read_tensor_values(std::istream& is, const Shape& shape);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& text);

} // namespace protoshift
