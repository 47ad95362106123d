#pragma once

// Bounded worker pool over meta-tiles. Tasks may only write to locations
// owned by their tile, which makes results independent of worker count and
// completion order.

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "atlas/error.hpp"
#include "atlas/geogrid.hpp"

namespace atlas {

class TileFailure : public RuntimeFailure {
public:
    TileFailure(std::size_t tile_index, const std::string& what)
        : RuntimeFailure(what), tile_index_(tile_index) {}
    std::size_t tile_index() const noexcept { return tile_index_; }

private:
    std::size_t tile_index_;
};

using TileTask = std::function<void(const MetaTile& tile, std::size_t tile_index)>;

// Runs task once per tile on min(workers, tiles) threads. After the first
// failure no new tiles start; running tiles are drained, then TileFailure is
// thrown for the lowest failing tile index.
void schedule_tiles(std::span<const MetaTile> tiles, std::size_t workers, const TileTask& task);

// Worker count override from ATLAS_WORKERS, if set to a positive integer.
std::size_t workers_from_env(std::size_t fallback);

}  // namespace atlas
