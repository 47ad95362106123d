#pragma once

// Species catalog, presence-only / presence-absence record ingestion, the
// per-cell site occupancy grid, target-group background filtering and
// spatial block fold assignment.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "atlas/geogrid.hpp"

namespace atlas {

// IUCN Red List categories. The numeric value is the threat rank; NA is -1
// and never wins a max.
enum class IucnStatus : std::int8_t { NA = -1, LC = 0, NT = 1, VU = 2, EN = 3, CR = 4, EW = 5, EX = 6 };

IucnStatus parse_iucn(std::string_view s);
std::string_view iucn_name(IucnStatus s) noexcept;
constexpr int iucn_rank(IucnStatus s) noexcept { return static_cast<int>(s); }

struct SpeciesAttributes {
    bool is_tree = false;
    bool is_invasive = false;
    bool eu_directive = false;
    IucnStatus iucn = IucnStatus::NA;

    friend bool operator==(const SpeciesAttributes&, const SpeciesAttributes&) = default;
};

class SpeciesCatalog {
public:
    SpeciesCatalog() = default;
    explicit SpeciesCatalog(const std::vector<std::string>& ids);

    // Returns the new dense index. Duplicate ids are rejected.
    std::size_t add(std::string id, SpeciesAttributes attributes = {});

    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::string& id(std::size_t index) const { return ids_.at(index); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const SpeciesAttributes& attributes(std::size_t index) const { return attributes_.at(index); }
    std::optional<std::size_t> index_of(std::string_view id) const;

    // species_id,is_tree,is_invasive,eu_directive,iucn_status
    static SpeciesCatalog from_csv(std::istream& in, const std::string& source = "<catalog>");
    static SpeciesCatalog read(const std::filesystem::path& path);
    std::string to_csv() const;

private:
    std::vector<std::string> ids_;
    std::vector<SpeciesAttributes> attributes_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class RecordSource : std::uint8_t { PO, PA };

struct OccurrenceRecord {
    // An empty species_id on a PA record marks a surveyed plot with nothing
    // found; it contributes absences only.
    std::string species_id;
    double easting = 0.0;
    double northing = 0.0;
    std::string observed_date;
    RecordSource source = RecordSource::PO;
    std::optional<std::string> plot_id;
};

// species_id,easting,northing,date,source,plot_id
std::vector<OccurrenceRecord> read_occurrences(std::istream& in, const std::string& source = "<occurrences>");
std::vector<OccurrenceRecord> read_occurrences(const std::filesystem::path& path);
std::string occurrences_to_csv(const std::vector<OccurrenceRecord>& records);

struct CellOccupancy {
    // Only species with a record in this cell appear; true = present.
    std::map<std::uint32_t, bool> species;
    bool has_any_record = false;

    friend bool operator==(const CellOccupancy&, const CellOccupancy&) = default;
};

class SiteOccupancy {
public:
    SiteOccupancy() = default;
    explicit SiteOccupancy(GridSpec grid) : grid_(grid) {}

    const GridSpec& grid() const noexcept { return grid_; }
    // Keyed by row-major linear index, so iteration is in row-major order.
    const std::map<std::int64_t, CellOccupancy>& cells() const noexcept { return cells_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }

    const CellOccupancy* find(CellIndex cell) const;

    // Presence-wins join: a presence is never downgraded to an absence.
    void record_presence(CellIndex cell, std::uint32_t species);
    void record_absence(CellIndex cell, std::uint32_t species);
    // Registers a cell as part of the domain without recording anything.
    void touch(CellIndex cell);

    // Dense 0/1 label vector; species without a record in the cell are 0.
    std::vector<std::uint8_t> labels(CellIndex cell, std::size_t species_count) const;

    friend bool operator==(const SiteOccupancy&, const SiteOccupancy&) = default;

private:
    CellOccupancy& slot(CellIndex cell);

    GridSpec grid_;
    std::map<std::int64_t, CellOccupancy> cells_;
};

struct RejectedRecord {
    std::size_t record_index = 0;
    std::string reason;
};

struct AggregationResult {
    SiteOccupancy occupancy;
    std::size_t accepted = 0;
    std::size_t dropped_out_of_extent = 0;
    std::size_t relocated = 0;
    std::vector<RejectedRecord> rejected;
};

// PO records set presence in their cell. Each PA plot sets presence for the
// species it lists and absence for every other catalog species, in each cell
// the plot touches. Cells whose center is water are moved to the nearest land
// cell first when a mask is given.
AggregationResult aggregate_to_grid(const std::vector<OccurrenceRecord>& records, const GridSpec& grid,
                                    const SpeciesCatalog& catalog,
                                    const TerrestrialMask* mask = nullptr);

// Keeps only cells holding at least one record (presence or explicit absence).
SiteOccupancy target_group_filter(const SiteOccupancy& occupancy);

enum class Fold : std::uint8_t { Train = 0, Val = 1, Test = 2 };
std::string_view fold_name(Fold f) noexcept;

struct FoldFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

class SplitAssignment {
public:
    SplitAssignment() = default;
    SplitAssignment(GridSpec grid, double block_size_m, std::int64_t block_side_cells,
                    std::int64_t blocks_x, std::int64_t blocks_y, std::vector<Fold> block_folds);

    const GridSpec& grid() const noexcept { return grid_; }
    double block_size_m() const noexcept { return block_size_m_; }
    std::int64_t block_side_cells() const noexcept { return side_; }
    std::int64_t blocks_x() const noexcept { return blocks_x_; }
    std::int64_t blocks_y() const noexcept { return blocks_y_; }

    Fold block_fold(std::int64_t block_col, std::int64_t block_row) const;
    Fold fold_of(CellIndex cell) const;
    const std::vector<Fold>& block_folds() const noexcept { return block_folds_; }
    // One label per grid cell in row-major order.
    std::vector<Fold> cell_folds() const;

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;

private:
    GridSpec grid_;
    double block_size_m_ = 0.0;
    std::int64_t side_ = 1;
    std::int64_t blocks_x_ = 0;
    std::int64_t blocks_y_ = 0;
    std::vector<Fold> block_folds_;
};

constexpr double kDefaultBlockSizeM = 10'000.0;

// Uniform draw in [0,1) used for a block's fold:
//   h = splitmix64(splitmix64(splitmix64(seed) ^ block_col) ^ block_row)
//   u = (h >> 11) * 2^-53
// u < train -> Train, u < train + val -> Val, otherwise Test.
double block_hash_uniform(std::int64_t block_col, std::int64_t block_row, std::uint64_t seed) noexcept;

SplitAssignment split_spatial_blocks(const GridSpec& grid, double block_size_m,
                                     FoldFractions fractions, std::uint64_t seed);

}  // namespace atlas
