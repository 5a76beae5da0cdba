#include "protoshift/serialize.hpp"

#include <bit>
#include <charconv>
#include <cstring>

namespace protoshift {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    return is;
}

void write_json_line(std::ostream& os, const json& j) {
    os << j.dump() << '\n';
    if (!os) throw IoError("failed writing JSON header line");
}

json read_json_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("missing JSON header line");
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed JSON header line");
    return j;
}

namespace {

void put_le_bytes(std::ostream& os, std::uint64_t bits, int nbytes) {
    char buf[8];
    for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    os.write(buf, nbytes);
}

std::uint64_t get_le_bytes(std::istream& is, int nbytes) {
    char buf[8];
    is.read(buf, nbytes);
    if (is.gcount() != nbytes) throw IoError("truncated binary block");
    std::uint64_t bits = 0;
    for (int i = 0; i < nbytes; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return bits;
}

} // namespace

void write_f64_block(std::ostream& os, const std::vector<double>& values) {
    for (double v : values) put_le_bytes(os, std::bit_cast<std::uint64_t>(v), 8);
    if (!os) throw IoError("failed writing float64 block");
}

std::vector<double> read_f64_block(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::bit_cast<double>(get_le_bytes(is, 8));
    return out;
}

void write_f32_block(std::ostream& os, const std::vector<float>& values) {
    for (float v : values) put_le_bytes(os, std::bit_cast<std::uint32_t>(v), 4);
    if (!os) throw IoError("failed writing float32 block");
}

std::vector<float> read_f32_block(std::istream& is, std::size_t count) {
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le_bytes(is, 4)));
    return out;
}

void write_tensor_values(std::ostream& os, const Tensor& t) {
    write_f64_block(os, t.values());
}

Tensor read_tensor_values(std::istream& is, const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return Tensor(shape, read_f64_block(is, n));
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw ValueError("cannot format double");
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ValueError("malformed number '" + text + "'");
    return v;
}

} // namespace protoshift
