#include "atlas/geogrid.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "atlas/error.hpp"

namespace atlas {

void GridSpec::validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw ValidationError("grid cell_size must be positive and finite");
    }
    if (width < 1 || height < 1) {
        std::ostringstream msg;
        msg << "grid dimensions must be at least 1x1, got " << width << "x" << height;
        throw ValidationError(msg.str());
    }
    if (!std::isfinite(x_min) || !std::isfinite(y_min)) {
        throw ValidationError("grid origin must be finite");
    }
}

Point cell_center(const GridSpec& grid, CellIndex cell) {
    if (!contains(grid, cell)) {
        std::ostringstream msg;
        msg << "cell (" << cell.col << "," << cell.row << ") outside " << grid.width << "x"
            << grid.height << " grid";
        throw ValidationError(msg.str());
    }
    return {grid.x_min + (static_cast<double>(cell.col) + 0.5) * grid.cell_size,
            grid.y_min + (static_cast<double>(cell.row) + 0.5) * grid.cell_size};
}

std::optional<CellIndex> locate_cell(const GridSpec& grid, Point p) noexcept {
    const double fx = (p.easting - grid.x_min) / grid.cell_size;
    const double fy = (p.northing - grid.y_min) / grid.cell_size;
    if (!(fx >= 0.0) || !(fy >= 0.0)) return std::nullopt;
    if (fx >= static_cast<double>(grid.width) || fy >= static_cast<double>(grid.height)) {
        return std::nullopt;
    }
    CellIndex c{static_cast<std::int64_t>(std::floor(fx)), static_cast<std::int64_t>(std::floor(fy))};
    if (!contains(grid, c)) return std::nullopt;
    return c;
}

std::vector<MetaTile> make_tiling(const GridSpec& grid, double tile_size_m) {
    grid.validate();
    if (!(tile_size_m > 0.0)) {
        throw ValidationError("tile size must be positive");
    }
    const double ratio = tile_size_m / grid.cell_size;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "tile size " << tile_size_m << " m is not a positive multiple of the cell size "
            << grid.cell_size << " m";
        throw ValidationError(msg.str());
    }
    const auto side = static_cast<std::int64_t>(rounded);
    const std::int64_t tiles_x = (grid.width + side - 1) / side;
    const std::int64_t tiles_y = (grid.height + side - 1) / side;

    std::vector<MetaTile> tiles;
    tiles.reserve(static_cast<std::size_t>(tiles_x * tiles_y));
    for (std::int64_t tr = 0; tr < tiles_y; ++tr) {
        for (std::int64_t tc = 0; tc < tiles_x; ++tc) {
            MetaTile t;
            t.tile_col = tc;
            t.tile_row = tr;
            t.cols = {tc * side, std::min(grid.width, (tc + 1) * side)};
            t.rows = {tr * side, std::min(grid.height, (tr + 1) * side)};
            tiles.push_back(t);
        }
    }
    return tiles;
}

TerrestrialMask::TerrestrialMask(std::int64_t width, std::int64_t height, bool fill)
    : width_(width), height_(height) {
    if (width < 1 || height < 1) throw ValidationError("mask dimensions must be at least 1x1");
    land_.assign(static_cast<std::size_t>(width * height), fill ? 1 : 0);
}

TerrestrialMask::TerrestrialMask(std::int64_t width, std::int64_t height,
                                 std::vector<std::uint8_t> land)
    : width_(width), height_(height), land_(std::move(land)) {
    if (width < 1 || height < 1) throw ValidationError("mask dimensions must be at least 1x1");
    if (land_.size() != static_cast<std::size_t>(width * height)) {
        throw ValidationError("mask data size does not match its dimensions");
    }
    for (auto& v : land_) v = v != 0 ? 1 : 0;
}

bool TerrestrialMask::is_land(CellIndex c) const {
    if (c.col < 0 || c.row < 0 || c.col >= width_ || c.row >= height_) {
        throw ValidationError("mask lookup outside mask extent");
    }
    return land_[static_cast<std::size_t>(c.row * width_ + c.col)] != 0;
}

void TerrestrialMask::set_land(CellIndex c, bool land) {
    if (c.col < 0 || c.row < 0 || c.col >= width_ || c.row >= height_) {
        throw ValidationError("mask update outside mask extent");
    }
    land_[static_cast<std::size_t>(c.row * width_ + c.col)] = land ? 1 : 0;
}

std::int64_t TerrestrialMask::land_count() const noexcept {
    std::int64_t n = 0;
    for (auto v : land_) n += v;
    return n;
}

CellIndex relocate_to_terrestrial(CellIndex cell, const TerrestrialMask& mask) {
    if (cell.col < 0 || cell.row < 0 || cell.col >= mask.width() || cell.row >= mask.height()) {
        throw ValidationError("cell outside mask extent");
    }
    if (mask.is_land(cell)) return cell;

    // All cells share one size, so comparing squared offsets in cell units is
    // exact and ranks candidates identically to metric center distance.
    // Expand Chebyshev rings; any cell on ring r is at least r cells away, so
    // the search stops once r^2 exceeds the best squared distance.
    const std::int64_t max_radius = std::max(mask.width(), mask.height());
    std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
    std::int64_t best_linear = std::numeric_limits<std::int64_t>::max();
    CellIndex best{-1, -1};

    auto consider = [&](std::int64_t col, std::int64_t row) {
        if (col < 0 || row < 0 || col >= mask.width() || row >= mask.height()) return;
        if (!mask.is_land({col, row})) return;
        const std::int64_t dc = col - cell.col;
        const std::int64_t dr = row - cell.row;
        const std::int64_t d2 = dc * dc + dr * dr;
        const std::int64_t lin = row * mask.width() + col;
        if (d2 < best_d2 || (d2 == best_d2 && lin < best_linear)) {
            best_d2 = d2;
            best_linear = lin;
            best = {col, row};
        }
    };

    for (std::int64_t r = 1; r <= max_radius; ++r) {
        if (best_d2 != std::numeric_limits<std::int64_t>::max() && r * r > best_d2) break;
        for (std::int64_t dc = -r; dc <= r; ++dc) {
            consider(cell.col + dc, cell.row - r);
            consider(cell.col + dc, cell.row + r);
        }
        for (std::int64_t dr = -r + 1; dr <= r - 1; ++dr) {
            consider(cell.col - r, cell.row + dr);
            consider(cell.col + r, cell.row + dr);
        }
    }
    if (best.col < 0) throw ValidationError("terrestrial mask contains no land cells");
    return best;
}

}  // namespace atlas
