#pragma once

// Minimal band-sequential raster container.
//
// On disk a raster is one line of JSON (the header) terminated by '\n',
// followed by the payload: width*height*bands little-endian values, band
// after band, each band stored row-major. Header keys:
//
//   {"format":"atlas-raster","version":1,"width":W,"height":H,
//    "x_min":X,"y_min":Y,"cell_size_m":C,"dtype":"f32"|"u8"|"i16",
//    "band_names":[...],"nodata":N}
//
// nodata is a JSON number, the string "NaN", or null when absent.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "atlas/geogrid.hpp"

namespace atlas {

enum class DType : std::uint8_t { F32, U8, I16 };

std::string_view dtype_name(DType t) noexcept;
std::size_t dtype_size(DType t) noexcept;
DType parse_dtype(std::string_view name);

struct RasterHeader {
    std::int64_t width = 0;
    std::int64_t height = 0;
    double x_min = 0.0;
    double y_min = 0.0;
    double cell_size_m = 50.0;
    DType dtype = DType::F32;
    std::vector<std::string> band_names;
    std::optional<double> nodata;

    GridSpec grid() const { return {x_min, y_min, cell_size_m, width, height}; }
    std::size_t band_count() const noexcept { return band_names.size(); }
    std::size_t band_cells() const noexcept { return static_cast<std::size_t>(width * height); }
    std::size_t payload_bytes() const noexcept {
        return band_cells() * band_count() * dtype_size(dtype);
    }
    void validate() const;

    static RasterHeader for_grid(const GridSpec& grid, DType dtype,
                                 std::vector<std::string> band_names,
                                 std::optional<double> nodata = std::nullopt);
};

// Headers compare nodata NaN == NaN.
bool same_header(const RasterHeader& a, const RasterHeader& b) noexcept;

class Raster {
public:
    using Storage = std::variant<std::vector<float>, std::vector<std::uint8_t>,
                                 std::vector<std::int16_t>>;

    Raster() = default;
    // Zero-filled, or nodata-filled when the header carries one.
    explicit Raster(RasterHeader header);

    const RasterHeader& header() const noexcept { return header_; }
    GridSpec grid() const { return header_.grid(); }

    template <class T>
    std::span<T> band(std::size_t b) {
        auto& v = std::get<std::vector<T>>(data_);
        return std::span<T>(v).subspan(b * header_.band_cells(), header_.band_cells());
    }
    template <class T>
    std::span<const T> band(std::size_t b) const {
        const auto& v = std::get<std::vector<T>>(data_);
        return std::span<const T>(v).subspan(b * header_.band_cells(), header_.band_cells());
    }
    template <class T>
    std::span<const T> values() const {
        return std::get<std::vector<T>>(data_);
    }
    template <class T>
    std::span<T> values() {
        return std::get<std::vector<T>>(data_);
    }

    // Value as double regardless of dtype.
    double get(std::size_t band_index, CellIndex cell) const;
    void set(std::size_t band_index, CellIndex cell, double value);

    std::optional<std::size_t> band_index(std::string_view name) const noexcept;

    // Payload bytes in on-disk order.
    std::vector<std::uint8_t> payload_bytes() const;

    friend bool bit_equal(const Raster& a, const Raster& b) noexcept;
    friend void paste_raster(const Raster& src, Raster& dst, CellIndex origin);

private:
    friend Raster read_raster(const std::filesystem::path& path);
    friend Raster decode_raster(std::span<const std::uint8_t> bytes, const std::string& source);

    RasterHeader header_;
    Storage data_;
};

std::string encode_header(const RasterHeader& header);
RasterHeader decode_header(std::string_view json_line);

std::vector<std::uint8_t> encode_raster(const Raster& raster);
Raster decode_raster(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

// Offset of a raster's first cell inside a parent grid with the same cell
// size (used for tile-sized rasters).
CellIndex raster_origin_in(const GridSpec& parent, const RasterHeader& header);

// Copies every band of src into dst with src's first cell at origin. Both
// rasters must share dtype and band count; values are copied bit-exactly.
void paste_raster(const Raster& src, Raster& dst, CellIndex origin);

// Writes to a sibling temporary file and renames it into place.
void write_raster(const Raster& raster, const std::filesystem::path& path);
// Throws ValidationError naming the byte offset for corrupt or truncated input.
Raster read_raster(const std::filesystem::path& path);

// Header-only read; the payload size is still checked against the file size.
RasterHeader read_raster_header(const std::filesystem::path& path);

}  // namespace atlas
