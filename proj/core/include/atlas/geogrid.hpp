#pragma once

// Cell lattice, meta-tiling, terrestrial masking and water-cell relocation.
// Coordinates are projected planar meters; no reprojection happens here.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace atlas {

struct GridSpec {
    double x_min = 0.0;
    double y_min = 0.0;
    double cell_size = 50.0;
    std::int64_t width = 1;
    std::int64_t height = 1;

    // Throws ValidationError when the invariants do not hold.
    void validate() const;

    std::int64_t cell_count() const noexcept { return width * height; }
    double extent_x() const noexcept { return static_cast<double>(width) * cell_size; }
    double extent_y() const noexcept { return static_cast<double>(height) * cell_size; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct CellIndex {
    std::int64_t col = 0;
    std::int64_t row = 0;

    friend bool operator==(const CellIndex&, const CellIndex&) = default;
    friend auto operator<=>(const CellIndex& a, const CellIndex& b) noexcept {
        if (auto c = a.row <=> b.row; c != 0) return c;
        return a.col <=> b.col;
    }
};

inline bool contains(const GridSpec& grid, CellIndex cell) noexcept {
    return cell.col >= 0 && cell.row >= 0 && cell.col < grid.width && cell.row < grid.height;
}

// Row-major linear index (row * width + col).
inline std::int64_t linear_index(const GridSpec& grid, CellIndex cell) noexcept {
    return cell.row * grid.width + cell.col;
}

inline CellIndex cell_at(const GridSpec& grid, std::int64_t linear) noexcept {
    return {linear % grid.width, linear / grid.width};
}

struct Point {
    double easting = 0.0;
    double northing = 0.0;
};

// Center of a cell. Rows grow with northing from y_min.
Point cell_center(const GridSpec& grid, CellIndex cell);

// Cell containing a point, or nullopt when it lies outside the extent. Points
// on the max edge belong to no cell (half-open extent).
std::optional<CellIndex> locate_cell(const GridSpec& grid, Point p) noexcept;

// Half-open [begin, end) range of grid columns or rows.
struct CellRange {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t size() const noexcept { return end - begin; }
    friend bool operator==(const CellRange&, const CellRange&) = default;
};

struct MetaTile {
    std::int64_t tile_col = 0;
    std::int64_t tile_row = 0;
    CellRange cols;
    CellRange rows;

    std::int64_t width() const noexcept { return cols.size(); }
    std::int64_t height() const noexcept { return rows.size(); }
    std::int64_t cell_count() const noexcept { return width() * height(); }
    bool contains(CellIndex c) const noexcept {
        return c.col >= cols.begin && c.col < cols.end && c.row >= rows.begin && c.row < rows.end;
    }
    friend bool operator==(const MetaTile&, const MetaTile&) = default;
};

constexpr double kDefaultTileSizeM = 25'000.0;

// Partition the grid into square tiles of tile_size_m (a positive multiple of
// the cell size). Edge tiles are truncated, never padded. Order is row-major
// over (tile_row, tile_col).
std::vector<MetaTile> make_tiling(const GridSpec& grid, double tile_size_m = kDefaultTileSizeM);

// One flag per grid cell in row-major order; true means land.
class TerrestrialMask {
public:
    TerrestrialMask() = default;
    TerrestrialMask(std::int64_t width, std::int64_t height, bool fill = true);
    TerrestrialMask(std::int64_t width, std::int64_t height, std::vector<std::uint8_t> land);

    std::int64_t width() const noexcept { return width_; }
    std::int64_t height() const noexcept { return height_; }

    bool is_land(CellIndex c) const;
    void set_land(CellIndex c, bool land);
    std::int64_t land_count() const noexcept;
    bool matches(const GridSpec& grid) const noexcept {
        return grid.width == width_ && grid.height == height_;
    }
    std::span<const std::uint8_t> data() const noexcept { return land_; }

private:
    std::int64_t width_ = 0;
    std::int64_t height_ = 0;
    std::vector<std::uint8_t> land_;
};

// Nearest land cell by center-to-center Euclidean distance. Land cells are
// returned unchanged; equidistant candidates resolve to the smallest
// row-major index. The search covers the whole mask, not just one tile.
CellIndex relocate_to_terrestrial(CellIndex cell, const TerrestrialMask& mask);

}  // namespace atlas
