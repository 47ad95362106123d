#include "atlas/occurrence.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/rng.hpp"
#include "csv.hpp"

namespace atlas {

IucnStatus parse_iucn(std::string_view s) {
    s = csv::trim(s);
    if (s == "LC") return IucnStatus::LC;
    if (s == "NT") return IucnStatus::NT;
    if (s == "VU") return IucnStatus::VU;
    if (s == "EN") return IucnStatus::EN;
    if (s == "CR") return IucnStatus::CR;
    if (s == "EW") return IucnStatus::EW;
    if (s == "EX") return IucnStatus::EX;
    if (s == "NA" || s.empty()) return IucnStatus::NA;
    throw ValidationError("unknown IUCN status '" + std::string(s) + "'");
}

std::string_view iucn_name(IucnStatus s) noexcept {
    switch (s) {
        case IucnStatus::NA: return "NA";
        case IucnStatus::LC: return "LC";
        case IucnStatus::NT: return "NT";
        case IucnStatus::VU: return "VU";
        case IucnStatus::EN: return "EN";
        case IucnStatus::CR: return "CR";
        case IucnStatus::EW: return "EW";
        case IucnStatus::EX: return "EX";
    }
    return "NA";
}

SpeciesCatalog::SpeciesCatalog(const std::vector<std::string>& ids) {
    for (const auto& id : ids) add(id);
}

std::size_t SpeciesCatalog::add(std::string id, SpeciesAttributes attributes) {
    if (id.empty()) throw ValidationError("species id must not be empty");
    if (index_.contains(id)) throw ValidationError("duplicate species id '" + id + "'");
    const std::size_t idx = ids_.size();
    index_.emplace(id, idx);
    ids_.push_back(std::move(id));
    attributes_.push_back(attributes);
    return idx;
}

std::optional<std::size_t> SpeciesCatalog::index_of(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

SpeciesCatalog SpeciesCatalog::from_csv(std::istream& in, const std::string& source) {
    const auto table = csv::parse(in, source);
    const auto c_id = table.column("species_id");
    const auto opt = [&](std::string_view name) -> std::optional<std::size_t> {
        if (table.has_column(name)) return table.column(name);
        return std::nullopt;
    };
    const auto c_tree = opt("is_tree");
    const auto c_inv = opt("is_invasive");
    const auto c_eu = opt("eu_directive");
    const auto c_iucn = opt("iucn_status");

    SpeciesCatalog cat;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + ":" + std::to_string(table.line_numbers[r]);
        SpeciesAttributes a;
        if (c_tree) a.is_tree = csv::parse_bool(row[*c_tree], ctx);
        if (c_inv) a.is_invasive = csv::parse_bool(row[*c_inv], ctx);
        if (c_eu) a.eu_directive = csv::parse_bool(row[*c_eu], ctx);
        if (c_iucn) {
            try {
                a.iucn = parse_iucn(row[*c_iucn]);
            } catch (const ValidationError& e) {
                throw ValidationError(ctx + ": " + e.what());
            }
        }
        try {
            cat.add(row[c_id], a);
        } catch (const ValidationError& e) {
            throw ValidationError(ctx + ": " + e.what());
        }
    }
    return cat;
}

SpeciesCatalog SpeciesCatalog::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open catalog " + path.string());
    return from_csv(in, path.string());
}

std::string SpeciesCatalog::to_csv() const {
    std::ostringstream out;
    out << "species_id,is_tree,is_invasive,eu_directive,iucn_status\n";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const auto& a = attributes_[i];
        out << ids_[i] << ',' << int(a.is_tree) << ',' << int(a.is_invasive) << ','
            << int(a.eu_directive) << ',' << iucn_name(a.iucn) << '\n';
    }
    return out.str();
}

std::vector<OccurrenceRecord> read_occurrences(std::istream& in, const std::string& source) {
    const auto table = csv::parse(in, source);
    const auto c_sp = table.column("species_id");
    const auto c_e = table.column("easting");
    const auto c_n = table.column("northing");
    const auto c_d = table.column("date");
    const auto c_src = table.column("source");
    const auto c_plot = table.column("plot_id");

    std::vector<OccurrenceRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + ":" + std::to_string(table.line_numbers[r]);
        OccurrenceRecord rec;
        rec.species_id = row[c_sp];
        rec.easting = csv::parse_double(row[c_e], ctx);
        rec.northing = csv::parse_double(row[c_n], ctx);
        rec.observed_date = row[c_d];
        if (row[c_src] == "PO") {
            rec.source = RecordSource::PO;
        } else if (row[c_src] == "PA") {
            rec.source = RecordSource::PA;
        } else {
            throw ValidationError(ctx + ": source must be PO or PA, got '" + row[c_src] + "'");
        }
        if (!row[c_plot].empty()) rec.plot_id = row[c_plot];
        if (rec.source == RecordSource::PA && !rec.plot_id) {
            throw ValidationError(ctx + ": PA record without plot_id");
        }
        if (rec.source == RecordSource::PO && rec.species_id.empty()) {
            throw ValidationError(ctx + ": PO record without species_id");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<OccurrenceRecord> read_occurrences(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open occurrences " + path.string());
    return read_occurrences(in, path.string());
}

std::string occurrences_to_csv(const std::vector<OccurrenceRecord>& records) {
    std::ostringstream out;
    out << "species_id,easting,northing,date,source,plot_id\n";
    for (const auto& r : records) {
        out << r.species_id << ',' << csv::format_double(r.easting) << ','
            << csv::format_double(r.northing) << ',' << r.observed_date << ','
            << (r.source == RecordSource::PO ? "PO" : "PA") << ',' << r.plot_id.value_or("") << '\n';
    }
    return out.str();
}

const CellOccupancy* SiteOccupancy::find(CellIndex cell) const {
    const auto it = cells_.find(linear_index(grid_, cell));
    return it == cells_.end() ? nullptr : &it->second;
}

CellOccupancy& SiteOccupancy::slot(CellIndex cell) {
    if (!contains(grid_, cell)) throw ValidationError("occupancy cell outside grid");
    return cells_[linear_index(grid_, cell)];
}

void SiteOccupancy::record_presence(CellIndex cell, std::uint32_t species) {
    auto& c = slot(cell);
    c.has_any_record = true;
    c.species[species] = true;
}

void SiteOccupancy::record_absence(CellIndex cell, std::uint32_t species) {
    auto& c = slot(cell);
    c.has_any_record = true;
    c.species.try_emplace(species, false);
}

void SiteOccupancy::touch(CellIndex cell) { slot(cell); }

std::vector<std::uint8_t> SiteOccupancy::labels(CellIndex cell, std::size_t species_count) const {
    std::vector<std::uint8_t> y(species_count, 0);
    if (const auto* c = find(cell)) {
        for (const auto& [sp, present] : c->species) {
            if (present && sp < species_count) y[sp] = 1;
        }
    }
    return y;
}

AggregationResult aggregate_to_grid(const std::vector<OccurrenceRecord>& records, const GridSpec& grid,
                                    const SpeciesCatalog& catalog, const TerrestrialMask* mask) {
    grid.validate();
    if (mask && !mask->matches(grid)) {
        throw ValidationError("terrestrial mask dimensions do not match the grid");
    }
    AggregationResult result;
    result.occupancy = SiteOccupancy(grid);

    struct Plot {
        std::set<std::int64_t> cells;
        std::set<std::uint32_t> listed;
    };
    std::map<std::string, Plot> plots;

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        std::optional<std::uint32_t> species;
        if (!rec.species_id.empty()) {
            const auto idx = catalog.index_of(rec.species_id);
            if (!idx) {
                result.rejected.push_back({i, "unknown species id '" + rec.species_id + "'"});
                continue;
            }
            species = static_cast<std::uint32_t>(*idx);
        } else if (rec.source == RecordSource::PO) {
            result.rejected.push_back({i, "PO record without species id"});
            continue;
        }
        if (rec.source == RecordSource::PA && !rec.plot_id) {
            result.rejected.push_back({i, "PA record without plot id"});
            continue;
        }
        auto cell = locate_cell(grid, {rec.easting, rec.northing});
        if (!cell) {
            ++result.dropped_out_of_extent;
            continue;
        }
        if (mask && !mask->is_land(*cell)) {
            cell = relocate_to_terrestrial(*cell, *mask);
            ++result.relocated;
        }
        ++result.accepted;
        if (rec.source == RecordSource::PO) {
            result.occupancy.record_presence(*cell, *species);
        } else {
            auto& plot = plots[*rec.plot_id];
            plot.cells.insert(linear_index(grid, *cell));
            if (species) plot.listed.insert(*species);
        }
    }

    for (const auto& [id, plot] : plots) {
        for (const auto lin : plot.cells) {
            const auto cell = cell_at(grid, lin);
            for (std::uint32_t sp = 0; sp < catalog.size(); ++sp) {
                if (plot.listed.contains(sp)) {
                    result.occupancy.record_presence(cell, sp);
                } else {
                    result.occupancy.record_absence(cell, sp);
                }
            }
        }
    }
    return result;
}

SiteOccupancy target_group_filter(const SiteOccupancy& occupancy) {
    SiteOccupancy out(occupancy.grid());
    for (const auto& [lin, cell] : occupancy.cells()) {
        if (!cell.has_any_record) continue;
        const auto c = cell_at(occupancy.grid(), lin);
        for (const auto& [sp, present] : cell.species) {
            if (present) {
                out.record_presence(c, sp);
            } else {
                out.record_absence(c, sp);
            }
        }
        if (cell.species.empty()) {
            out.touch(c);
        }
    }
    return out;
}

std::string_view fold_name(Fold f) noexcept {
    switch (f) {
        case Fold::Train: return "train";
        case Fold::Val: return "val";
        case Fold::Test: return "test";
    }
    return "?";
}

SplitAssignment::SplitAssignment(GridSpec grid, double block_size_m, std::int64_t block_side_cells,
                                 std::int64_t blocks_x, std::int64_t blocks_y,
                                 std::vector<Fold> block_folds)
    : grid_(grid),
      block_size_m_(block_size_m),
      side_(block_side_cells),
      blocks_x_(blocks_x),
      blocks_y_(blocks_y),
      block_folds_(std::move(block_folds)) {
    if (block_folds_.size() != static_cast<std::size_t>(blocks_x * blocks_y)) {
        throw ValidationError("block fold table size mismatch");
    }
}

Fold SplitAssignment::block_fold(std::int64_t bc, std::int64_t br) const {
    if (bc < 0 || br < 0 || bc >= blocks_x_ || br >= blocks_y_) {
        throw ValidationError("block index outside split");
    }
    return block_folds_[static_cast<std::size_t>(br * blocks_x_ + bc)];
}

Fold SplitAssignment::fold_of(CellIndex cell) const {
    if (!contains(grid_, cell)) throw ValidationError("cell outside split grid");
    return block_fold(cell.col / side_, cell.row / side_);
}

std::vector<Fold> SplitAssignment::cell_folds() const {
    std::vector<Fold> out(static_cast<std::size_t>(grid_.cell_count()));
    for (std::int64_t r = 0; r < grid_.height; ++r) {
        for (std::int64_t c = 0; c < grid_.width; ++c) {
            out[static_cast<std::size_t>(r * grid_.width + c)] = block_fold(c / side_, r / side_);
        }
    }
    return out;
}

double block_hash_uniform(std::int64_t block_col, std::int64_t block_row, std::uint64_t seed) noexcept {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(block_col));
    h = splitmix64(h ^ static_cast<std::uint64_t>(block_row));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

SplitAssignment split_spatial_blocks(const GridSpec& grid, double block_size_m, FoldFractions f,
                                     std::uint64_t seed) {
    grid.validate();
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "fold fractions must be nonnegative and sum to 1, got (" << f.train << ", " << f.val
            << ", " << f.test << ")";
        throw ValidationError(msg.str());
    }
    const double ratio = block_size_m / grid.cell_size;
    const double rounded = std::round(ratio);
    if (!(block_size_m > 0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw ValidationError("block size must be a positive multiple of the cell size");
    }
    const auto side = static_cast<std::int64_t>(rounded);
    const std::int64_t bx = (grid.width + side - 1) / side;
    const std::int64_t by = (grid.height + side - 1) / side;
    std::vector<Fold> folds(static_cast<std::size_t>(bx * by));
    for (std::int64_t br = 0; br < by; ++br) {
        for (std::int64_t bc = 0; bc < bx; ++bc) {
            const double u = block_hash_uniform(bc, br, seed);
            Fold fold = Fold::Test;
            if (u < f.train) {
                fold = Fold::Train;
            } else if (u < f.train + f.val) {
                fold = Fold::Val;
            }
            folds[static_cast<std::size_t>(br * bx + bc)] = fold;
        }
    }
    return SplitAssignment(grid, block_size_m, side, bx, by, std::move(folds));
}

}  // namespace atlas
