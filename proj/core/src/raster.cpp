#include "atlas/raster.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atlas/error.hpp"
#include "json.hpp"

namespace atlas {
namespace {

using nlohmann::json;

constexpr std::string_view kFormat = "atlas-raster";
constexpr int kVersion = 1;
constexpr std::size_t kMaxHeaderBytes = 1 << 20;

template <class T>
void append_le(std::vector<std::uint8_t>& out, std::span<const T> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size_bytes());
    std::memcpy(out.data() + start, values.data(), values.size_bytes());
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        for (std::size_t i = start; i < out.size(); i += sizeof(T)) {
            std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
        }
    }
}

template <class T>
std::vector<T> read_le(std::span<const std::uint8_t> bytes) {
    std::vector<T> out(bytes.size() / sizeof(T));
    std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto* raw = reinterpret_cast<std::uint8_t*>(out.data());
        for (std::size_t i = 0; i < out.size() * sizeof(T); i += sizeof(T)) {
            std::reverse(raw + i, raw + i + sizeof(T));
        }
    }
    return out;
}

[[noreturn]] void corrupt(const std::string& source, std::size_t offset, const std::string& what) {
    std::ostringstream msg;
    msg << source << ": " << what << " (at byte offset " << offset << ")";
    throw ValidationError(msg.str());
}

}  // namespace

std::string_view dtype_name(DType t) noexcept {
    switch (t) {
        case DType::F32: return "f32";
        case DType::U8: return "u8";
        case DType::I16: return "i16";
    }
    return "?";
}

std::size_t dtype_size(DType t) noexcept {
    switch (t) {
        case DType::F32: return 4;
        case DType::U8: return 1;
        case DType::I16: return 2;
    }
    return 0;
}

DType parse_dtype(std::string_view name) {
    if (name == "f32") return DType::F32;
    if (name == "u8") return DType::U8;
    if (name == "i16") return DType::I16;
    throw ValidationError("unknown raster dtype '" + std::string(name) + "'");
}

void RasterHeader::validate() const {
    grid().validate();
    if (band_names.empty()) throw ValidationError("raster must have at least one band");
    if (nodata && !std::isnan(*nodata)) {
        const double v = *nodata;
        bool ok = std::isfinite(v);
        if (dtype == DType::U8) ok = ok && v == std::floor(v) && v >= 0 && v <= 255;
        if (dtype == DType::I16) ok = ok && v == std::floor(v) && v >= -32768 && v <= 32767;
        if (!ok) throw ValidationError("nodata value not representable in raster dtype");
    } else if (nodata && dtype != DType::F32) {
        throw ValidationError("NaN nodata is only valid for f32 rasters");
    }
}

RasterHeader RasterHeader::for_grid(const GridSpec& grid, DType dtype,
                                    std::vector<std::string> band_names,
                                    std::optional<double> nodata) {
    RasterHeader h;
    h.width = grid.width;
    h.height = grid.height;
    h.x_min = grid.x_min;
    h.y_min = grid.y_min;
    h.cell_size_m = grid.cell_size;
    h.dtype = dtype;
    h.band_names = std::move(band_names);
    h.nodata = nodata;
    return h;
}

bool same_header(const RasterHeader& a, const RasterHeader& b) noexcept {
    if (a.width != b.width || a.height != b.height || a.x_min != b.x_min || a.y_min != b.y_min ||
        a.cell_size_m != b.cell_size_m || a.dtype != b.dtype || a.band_names != b.band_names) {
        return false;
    }
    if (a.nodata.has_value() != b.nodata.has_value()) return false;
    if (!a.nodata) return true;
    if (std::isnan(*a.nodata) || std::isnan(*b.nodata)) {
        return std::isnan(*a.nodata) && std::isnan(*b.nodata);
    }
    return *a.nodata == *b.nodata;
}

Raster::Raster(RasterHeader header) : header_(std::move(header)) {
    header_.validate();
    const std::size_t n = header_.band_cells() * header_.band_count();
    const double fill = header_.nodata.value_or(0.0);
    switch (header_.dtype) {
        case DType::F32:
            data_ = std::vector<float>(n, static_cast<float>(fill));
            break;
        case DType::U8:
            data_ = std::vector<std::uint8_t>(n, static_cast<std::uint8_t>(fill));
            break;
        case DType::I16:
            data_ = std::vector<std::int16_t>(n, static_cast<std::int16_t>(fill));
            break;
    }
}

double Raster::get(std::size_t b, CellIndex cell) const {
    const std::size_t i = b * header_.band_cells() +
                          static_cast<std::size_t>(cell.row * header_.width + cell.col);
    return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, data_);
}

void Raster::set(std::size_t b, CellIndex cell, double value) {
    const std::size_t i = b * header_.band_cells() +
                          static_cast<std::size_t>(cell.row * header_.width + cell.col);
    std::visit(
        [i, value](auto& v) {
            using T = typename std::decay_t<decltype(v)>::value_type;
            v.at(i) = static_cast<T>(value);
        },
        data_);
}

std::optional<std::size_t> Raster::band_index(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < header_.band_names.size(); ++i) {
        if (header_.band_names[i] == name) return i;
    }
    return std::nullopt;
}

std::vector<std::uint8_t> Raster::payload_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(header_.payload_bytes());
    std::visit(
        [&out](const auto& v) {
            using T = typename std::decay_t<decltype(v)>::value_type;
            append_le<T>(out, std::span<const T>(v));
        },
        data_);
    return out;
}

bool bit_equal(const Raster& a, const Raster& b) noexcept {
    return same_header(a.header_, b.header_) && a.payload_bytes() == b.payload_bytes();
}

std::string encode_header(const RasterHeader& h) {
    h.validate();
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["width"] = h.width;
    j["height"] = h.height;
    j["x_min"] = h.x_min;
    j["y_min"] = h.y_min;
    j["cell_size_m"] = h.cell_size_m;
    j["dtype"] = dtype_name(h.dtype);
    j["band_names"] = h.band_names;
    if (!h.nodata) {
        j["nodata"] = nullptr;
    } else if (std::isnan(*h.nodata)) {
        j["nodata"] = "NaN";
    } else {
        j["nodata"] = *h.nodata;
    }
    return j.dump();
}

RasterHeader decode_header(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("raster header is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormat) {
            throw ValidationError("raster header has unexpected format tag");
        }
        if (j.at("version").get<int>() != kVersion) {
            throw ValidationError("unsupported raster version " +
                                  std::to_string(j.at("version").get<int>()));
        }
        RasterHeader h;
        h.width = j.at("width").get<std::int64_t>();
        h.height = j.at("height").get<std::int64_t>();
        h.x_min = j.at("x_min").get<double>();
        h.y_min = j.at("y_min").get<double>();
        h.cell_size_m = j.at("cell_size_m").get<double>();
        h.dtype = parse_dtype(j.at("dtype").get<std::string>());
        h.band_names = j.at("band_names").get<std::vector<std::string>>();
        const auto& nd = j.at("nodata");
        if (nd.is_null()) {
            h.nodata.reset();
        } else if (nd.is_string()) {
            if (nd.get<std::string>() != "NaN") throw ValidationError("bad nodata string");
            h.nodata = std::nan("");
        } else {
            h.nodata = nd.get<double>();
        }
        h.validate();
        return h;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("raster header missing or mistyped field: ") + e.what());
    }
}

std::vector<std::uint8_t> encode_raster(const Raster& raster) {
    const std::string header = encode_header(raster.header());
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.push_back('\n');
    const auto payload = raster.payload_bytes();
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Raster decode_raster(std::span<const std::uint8_t> bytes, const std::string& source) {
    std::size_t newline = 0;
    const std::size_t scan = std::min(bytes.size(), kMaxHeaderBytes);
    while (newline < scan && bytes[newline] != '\n') ++newline;
    if (newline == scan) {
        corrupt(source, scan, "no header terminator found");
    }
    RasterHeader header;
    try {
        header = decode_header(std::string_view(reinterpret_cast<const char*>(bytes.data()), newline));
    } catch (const ValidationError& e) {
        corrupt(source, 0, e.what());
    }
    const std::size_t offset = newline + 1;
    const std::size_t expected = header.payload_bytes();
    const std::size_t actual = bytes.size() - offset;
    if (actual != expected) {
        std::ostringstream msg;
        msg << "payload size mismatch: expected " << expected << " bytes, found " << actual;
        corrupt(source, offset, msg.str());
    }
    const auto payload = bytes.subspan(offset);
    Raster r;
    r.header_ = std::move(header);
    switch (r.header_.dtype) {
        case DType::F32: r.data_ = read_le<float>(payload); break;
        case DType::U8: r.data_ = read_le<std::uint8_t>(payload); break;
        case DType::I16: r.data_ = read_le<std::int16_t>(payload); break;
    }
    return r;
}

void write_raster(const Raster& raster, const std::filesystem::path& path) {
    const auto bytes = encode_raster(raster);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw RuntimeFailure("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open raster " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

Raster read_raster(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    return decode_raster(bytes, path.string());
}

RasterHeader read_raster_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open raster " + path.string());
    std::string line;
    if (!std::getline(in, line)) corrupt(path.string(), 0, "empty file");
    RasterHeader h;
    try {
        h = decode_header(line);
    } catch (const ValidationError& e) {
        corrupt(path.string(), 0, e.what());
    }
    const auto size = std::filesystem::file_size(path);
    const std::size_t offset = line.size() + 1;
    if (size < offset || size - offset != h.payload_bytes()) {
        std::ostringstream msg;
        msg << "payload size mismatch: expected " << h.payload_bytes() << " bytes, found "
            << (size >= offset ? size - offset : 0);
        corrupt(path.string(), offset, msg.str());
    }
    return h;
}

}  // namespace atlas

namespace atlas {

CellIndex raster_origin_in(const GridSpec& parent, const RasterHeader& header) {
    if (header.cell_size_m != parent.cell_size) {
        throw ValidationError("raster cell size differs from the parent grid");
    }
    const double fc = (header.x_min - parent.x_min) / parent.cell_size;
    const double fr = (header.y_min - parent.y_min) / parent.cell_size;
    const CellIndex origin{static_cast<std::int64_t>(std::llround(fc)), static_cast<std::int64_t>(std::llround(fr))};
    if (std::abs(fc - static_cast<double>(origin.col)) > 1e-6 || std::abs(fr - static_cast<double>(origin.row)) > 1e-6 ||
        origin.col < 0 || origin.row < 0 || origin.col + header.width > parent.width ||
        origin.row + header.height > parent.height) {
        throw ValidationError("raster is not aligned inside the parent grid");
    }
    return origin;
}

}  // namespace atlas

namespace atlas {

void paste_raster(const Raster& src, Raster& dst, CellIndex origin) {
    const auto& sh = src.header_;
    const auto& dh = dst.header_;
    if (sh.dtype != dh.dtype || sh.band_count() != dh.band_count()) {
        throw ValidationError("paste_raster: dtype or band count mismatch");
    }
    if (origin.col < 0 || origin.row < 0 || origin.col + sh.width > dh.width || origin.row + sh.height > dh.height) {
        throw ValidationError("paste_raster: source does not fit inside destination");
    }
    std::visit(
        [&](const auto& sv) {
            using V = std::decay_t<decltype(sv)>;
            auto& dv = std::get<V>(dst.data_);
            for (std::size_t b = 0; b < sh.band_count(); ++b) {
                for (std::int64_t r = 0; r < sh.height; ++r) {
                    const auto s0 = b * sh.band_cells() + static_cast<std::size_t>(r * sh.width);
                    const auto d0 = b * dh.band_cells() +
                                    static_cast<std::size_t>((origin.row + r) * dh.width + origin.col);
                    std::copy_n(sv.begin() + static_cast<std::ptrdiff_t>(s0), sh.width,
                                dv.begin() + static_cast<std::ptrdiff_t>(d0));
                }
            }
        },
        src.data_);
}

}  // namespace atlas
