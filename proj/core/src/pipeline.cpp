#include "atlas/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/habitat.hpp"
#include "atlas/indicators.hpp"
#include "atlas/predictor.hpp"
#include "atlas/raster.hpp"
#include "atlas/scheduler.hpp"
#include "csv.hpp"
#include "json.hpp"

namespace atlas {
namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
    grid.validate();
    if (workers < 1) throw ValidationError("worker count must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    if (top_k < 1) throw ValidationError("top_k must be at least 1");
    // Both throw on sizes that are not multiples of the cell size.
    (void)make_tiling(GridSpec{grid.x_min, grid.y_min, grid.cell_size, 1, 1}, tile_size_m);
    (void)split_spatial_blocks(GridSpec{grid.x_min, grid.y_min, grid.cell_size, 1, 1}, block_size_m, fractions, 0);
    if (!(train.learning_rate >= 0.0) || train.epochs < 1 || train.batch_size < 1 || train.embedding_width < 1 ||
        train.layers_per_branch < 1) {
        throw ValidationError("invalid training settings");
    }
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
    }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view text, const fs::path& base, const std::string& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(source + ": not valid JSON: " + e.what());
    }
    PipelineConfig c;
    try {
        reject_unknown(j,
                       {"grid", "tile_size_m", "workers", "seed", "out", "paths", "threshold_mode", "alpha", "top_k",
                        "block_size_m", "fractions", "train", "fail_tile"},
                       source);
        const auto& g = j.at("grid");
        c.grid.x_min = g.value("x_min", 0.0);
        c.grid.y_min = g.value("y_min", 0.0);
        c.grid.cell_size = g.value("cell_size", 50.0);
        c.grid.width = g.at("width").get<std::int64_t>();
        c.grid.height = g.at("height").get<std::int64_t>();
        c.tile_size_m = j.value("tile_size_m", kDefaultTileSizeM);
        c.workers = j.value("workers", std::size_t{1});
        c.seed = j.value("seed", std::uint64_t{0});
        c.out_dir = resolve(base, j.value("out", std::string("out")));
        c.threshold_mode = parse_threshold_mode(j.value("threshold_mode", std::string("conformal")));
        c.alpha = j.value("alpha", 0.1);
        c.top_k = j.value("top_k", std::size_t{100});
        c.block_size_m = j.value("block_size_m", 10'000.0);
        if (j.contains("fractions")) {
            const auto f = j["fractions"].get<std::vector<double>>();
            if (f.size() != 3) throw ValidationError(source + ": fractions must list train, val, test");
            c.fractions = {f[0], f[1], f[2]};
        }
        if (j.contains("fail_tile") && !j["fail_tile"].is_null()) c.fail_tile = j["fail_tile"].get<std::size_t>();
        if (j.contains("train")) {
            const auto& t = j["train"];
            reject_unknown(t, {"learning_rate", "epochs", "batch_size", "embedding_width", "layers_per_branch"},
                           source + ": train");
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.epochs = t.value("epochs", c.train.epochs);
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.embedding_width = t.value("embedding_width", c.train.embedding_width);
            c.train.layers_per_branch = t.value("layers_per_branch", c.train.layers_per_branch);
        }
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            reject_unknown(p,
                           {"occurrences", "catalog", "mask", "model", "features", "species_rasters", "thresholds",
                            "indicator_config", "habitat_plots", "hierarchy", "eval_plots", "occupancy"},
                           source + ": paths");
            auto opt = [&](const char* key, std::optional<fs::path>& dst) {
                if (p.contains(key) && !p[key].is_null()) dst = resolve(base, p[key].get<std::string>());
            };
            opt("occurrences", c.paths.occurrences);
            opt("catalog", c.paths.catalog);
            opt("mask", c.paths.mask);
            opt("model", c.paths.model);
            opt("species_rasters", c.paths.species_rasters);
            opt("thresholds", c.paths.thresholds);
            opt("indicator_config", c.paths.indicator_config);
            opt("habitat_plots", c.paths.habitat_plots);
            opt("hierarchy", c.paths.hierarchy);
            opt("eval_plots", c.paths.eval_plots);
            opt("occupancy", c.paths.occupancy);
            if (p.contains("features") && !p["features"].is_null()) {
                FeaturePaths fp;
                for (const auto m : kModalities) {
                    const auto& e = p["features"].at(std::string(modality_name(m)));
                    fp.rasters[static_cast<std::size_t>(m)] = resolve(base, e.at("path").get<std::string>());
                    fp.shapes[static_cast<std::size_t>(m)] = e.at("shape").get<std::vector<std::size_t>>();
                }
                c.paths.features = std::move(fp);
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(source + ": malformed configuration: " + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), path.parent_path(), path.string());
}

std::string PipelineConfig::to_json() const {
    ordered_json j;
    j["grid"] = {{"x_min", grid.x_min},
                 {"y_min", grid.y_min},
                 {"cell_size", grid.cell_size},
                 {"width", grid.width},
                 {"height", grid.height}};
    j["tile_size_m"] = tile_size_m;
    j["workers"] = workers;
    j["seed"] = seed;
    j["out"] = out_dir.string();
    ordered_json p = ordered_json::object();
    auto put = [&p](const char* key, const std::optional<fs::path>& v) {
        if (v) p[key] = v->string();
    };
    put("occurrences", paths.occurrences);
    put("catalog", paths.catalog);
    put("mask", paths.mask);
    put("model", paths.model);
    if (paths.features) {
        ordered_json f;
        for (const auto m : kModalities) {
            const auto b = static_cast<std::size_t>(m);
            f[std::string(modality_name(m))] = {{"path", paths.features->rasters[b].string()},
                                                {"shape", paths.features->shapes[b]}};
        }
        p["features"] = f;
    }
    put("species_rasters", paths.species_rasters);
    put("thresholds", paths.thresholds);
    put("indicator_config", paths.indicator_config);
    put("habitat_plots", paths.habitat_plots);
    put("hierarchy", paths.hierarchy);
    put("eval_plots", paths.eval_plots);
    put("occupancy", paths.occupancy);
    j["paths"] = p;
    j["threshold_mode"] = threshold_mode_name(threshold_mode);
    j["alpha"] = alpha;
    j["top_k"] = top_k;
    j["block_size_m"] = block_size_m;
    j["fractions"] = {fractions.train, fractions.val, fractions.test};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"embedding_width", train.embedding_width},
                  {"layers_per_branch", train.layers_per_branch}};
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Shared loaders

namespace {

template <class T>
const T& require(const std::optional<T>& v, const char* what) {
    if (!v) throw ValidationError(std::string("configuration is missing paths.") + what);
    return *v;
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
}

SpeciesCatalog load_catalog(const PipelineConfig& c) { return SpeciesCatalog::read(require(c.paths.catalog, "catalog")); }

std::optional<TerrestrialMask> load_mask(const PipelineConfig& c) {
    if (!c.paths.mask) return std::nullopt;
    const Raster r = read_raster(*c.paths.mask);
    if (r.header().dtype != DType::U8) throw ValidationError(c.paths.mask->string() + ": mask raster must be u8");
    if (!(r.grid() == c.grid)) throw ValidationError(c.paths.mask->string() + ": mask grid differs from the configured grid");
    const auto band = r.band<std::uint8_t>(0);
    return TerrestrialMask(c.grid.width, c.grid.height, std::vector<std::uint8_t>(band.begin(), band.end()));
}

fs::path model_path(const PipelineConfig& c) { return c.paths.model.value_or(c.out_dir / "model.atlsdm"); }
fs::path thresholds_path(const PipelineConfig& c) { return c.paths.thresholds.value_or(c.out_dir / "thresholds.csv"); }
fs::path occupancy_path(const PipelineConfig& c) { return c.paths.occupancy.value_or(c.out_dir / "occupancy.csv"); }

SdmArchitecture architecture_for(const PipelineConfig& c, const FeatureStack& features, std::size_t species) {
    SdmArchitecture a;
    a.input_shapes = features.shapes();
    a.embedding_width = c.train.embedding_width;
    a.layers_per_branch = c.train.layers_per_branch;
    a.species_count = species;
    return a;
}

FeatureStack load_features(const PipelineConfig& c) {
    const auto& fp = require(c.paths.features, "features");
    auto stack = FeatureStack::read(fp.rasters, fp.shapes);
    if (!(stack.grid() == c.grid)) throw ValidationError("feature rasters do not match the configured grid");
    return stack;
}

// Owns everything a predictor needs and exposes the relocating view.
class PredictorBundle {
public:
    PredictorBundle(const PipelineConfig& c, const SpeciesCatalog& catalog) {
        mask_ = load_mask(c);
        const fs::path mp = model_path(c);
        if (c.paths.features && fs::exists(mp)) {
            features_ = std::make_unique<FeatureStack>(load_features(c));
            model_ = std::make_unique<SdmModel>(load_checkpoint(mp));
            if (model_->species_count() != catalog.size()) {
                throw ValidationError("model species count does not match the catalog");
            }
            base_ = std::make_unique<ModelPredictor>(*model_, *features_);
        } else if (c.paths.species_rasters) {
            auto rp = std::make_unique<RasterPredictor>(load_raster_predictor_dir(catalog, *c.paths.species_rasters));
            if (!(rp->grid() == c.grid)) throw ValidationError("species rasters do not match the configured grid");
            base_ = std::move(rp);
        } else {
            throw ValidationError("no predictor available: provide paths.features with a trained model (" +
                                  mp.string() + ") or paths.species_rasters");
        }
        if (mask_) relocating_ = std::make_unique<RelocatingPredictor>(*base_, *mask_);
    }

    const Predictor& get() const { return relocating_ ? *relocating_ : *base_; }
    const TerrestrialMask* mask() const { return mask_ ? &*mask_ : nullptr; }

private:
    std::optional<TerrestrialMask> mask_;
    std::unique_ptr<FeatureStack> features_;
    std::unique_ptr<SdmModel> model_;
    std::unique_ptr<Predictor> base_;
    std::unique_ptr<RelocatingPredictor> relocating_;
};

SplitAssignment make_split(const PipelineConfig& c) {
    return split_spatial_blocks(c.grid, c.block_size_m, c.fractions, c.seed);
}

ThresholdSet load_thresholds(const PipelineConfig& c, const SpeciesCatalog& catalog) {
    const auto p = thresholds_path(c);
    require_file(p, "thresholds");
    return ThresholdSet::read(p, catalog);
}

void write_text(const fs::path& p, const std::string& text) { csv::write_file(p, text); }

// ---------------------------------------------------------------------------
// Tiled execution with staging, commit and quarantine

class Staging {
public:
    Staging(const fs::path& out_dir, std::string stage) : out_(out_dir), stage_(std::move(stage)) {
        root_ = out_ / ".staging" / stage_;
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    Staging(const Staging&) = delete;
    Staging& operator=(const Staging&) = delete;
    ~Staging() {
        std::error_code ec;
        if (!kept_) fs::remove_all(root_, ec);
        fs::remove(out_ / ".staging", ec);  // only succeeds when empty
    }

    const fs::path& root() const noexcept { return root_; }
    fs::path tile_file(std::size_t tile, std::size_t product) const {
        return root_ / "tiles" / std::to_string(tile) / (std::to_string(product) + ".rst");
    }
    fs::path final_dir() const { return root_ / "final"; }

    fs::path quarantine(const std::string& message) {
        const fs::path qroot = out_ / "quarantine";
        fs::create_directories(qroot);
        fs::path dest;
        for (int n = 0;; ++n) {
            dest = qroot / (stage_ + "-" + std::to_string(n));
            if (!fs::exists(dest)) break;
        }
        write_text(root_ / "FAILURE.txt", message + "\n");
        fs::rename(root_, dest);
        kept_ = true;
        return dest;
    }

    // Replaces out/<name> with the staged final/<name> directory.
    void commit_dir(const std::string& name) {
        const fs::path target = out_ / name;
        const fs::path old = out_ / (".old-" + name);
        fs::remove_all(old);
        if (fs::exists(target)) fs::rename(target, old);
        fs::rename(final_dir() / name, target);
        fs::remove_all(old);
    }

private:
    fs::path out_;
    std::string stage_;
    fs::path root_;
    bool kept_ = false;
};

RasterHeader tile_header(const RasterHeader& full, const MetaTile& t) {
    RasterHeader h = full;
    h.width = t.width();
    h.height = t.height();
    h.x_min = full.x_min + static_cast<double>(t.cols.begin) * full.cell_size_m;
    h.y_min = full.y_min + static_cast<double>(t.rows.begin) * full.cell_size_m;
    return h;
}

using TileFill = std::function<void(const MetaTile&, std::span<Raster>)>;

// Each tile fills tile-sized rasters that are staged to disk; once every tile
// succeeded the staged tiles are mosaicked into full-grid rasters.
std::vector<Raster> run_tiled(const PipelineConfig& c, Staging& staging, const std::vector<RasterHeader>& products,
                              const TileFill& fill) {
    const auto tiles = make_tiling(c.grid, c.tile_size_m);
    try {
        schedule_tiles(tiles, c.workers, [&](const MetaTile& tile, std::size_t index) {
            if (c.fail_tile && *c.fail_tile == index) {
                throw RuntimeFailure("injected failure");
            }
            std::vector<Raster> local;
            local.reserve(products.size());
            for (const auto& h : products) local.emplace_back(tile_header(h, tile));
            fill(tile, local);
            for (std::size_t k = 0; k < local.size(); ++k) write_raster(local[k], staging.tile_file(index, k));
        });
    } catch (const TileFailure& e) {
        const auto where = staging.quarantine(e.what());
        throw TileFailure(e.tile_index(), std::string(e.what()) + "; partial outputs quarantined in " + where.string());
    }
    std::vector<Raster> full;
    full.reserve(products.size());
    for (const auto& h : products) full.emplace_back(h);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        for (std::size_t k = 0; k < products.size(); ++k) {
            const Raster part = read_raster(staging.tile_file(i, k));
            paste_raster(part, full[k], {tiles[i].cols.begin, tiles[i].rows.begin});
        }
    }
    return full;
}

std::vector<LabeledVector> labeled_cells(const SiteOccupancy& occ, const SplitAssignment& split, Fold fold,
                                         const Predictor& predictor, std::size_t species, bool surveyed_only) {
    std::vector<LabeledVector> out;
    for (const auto& [lin, cell] : occ.cells()) {
        const auto c = cell_at(occ.grid(), lin);
        if (split.fold_of(c) != fold) continue;
        if (surveyed_only) {
            bool has_absence = false;
            for (const auto& [sp, present] : cell.species) has_absence = has_absence || !present;
            if (!has_absence) continue;
        }
        out.push_back({predictor.predict_cell(c), occ.labels(c, species)});
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Occupancy and evaluation plot files

std::string occupancy_to_csv(const SiteOccupancy& occupancy, const SpeciesCatalog& catalog) {
    std::ostringstream out;
    out << "col,row,species_id,value\n";
    for (const auto& [lin, cell] : occupancy.cells()) {
        const auto c = cell_at(occupancy.grid(), lin);
        if (cell.species.empty()) {
            out << c.col << ',' << c.row << ",,\n";
            continue;
        }
        for (const auto& [sp, present] : cell.species) {
            out << c.col << ',' << c.row << ',' << catalog.id(sp) << ',' << (present ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

SiteOccupancy read_occupancy(const fs::path& path, const GridSpec& grid, const SpeciesCatalog& catalog) {
    const auto table = csv::read_file(path);
    const auto c_col = table.column("col");
    const auto c_row = table.column("row");
    const auto c_sp = table.column("species_id");
    const auto c_v = table.column("value");
    SiteOccupancy occ(grid);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = path.string() + ":" + std::to_string(table.line_numbers[r]);
        const CellIndex cell{csv::parse_int(row[c_col], ctx), csv::parse_int(row[c_row], ctx)};
        if (!contains(grid, cell)) throw ValidationError(ctx + ": cell outside the configured grid");
        if (row[c_sp].empty()) {
            occ.touch(cell);
            continue;
        }
        const auto idx = catalog.index_of(row[c_sp]);
        if (!idx) throw ValidationError(ctx + ": unknown species '" + row[c_sp] + "'");
        const auto v = csv::parse_int(row[c_v], ctx);
        if (v == 1) {
            occ.record_presence(cell, static_cast<std::uint32_t>(*idx));
        } else if (v == 0) {
            occ.record_absence(cell, static_cast<std::uint32_t>(*idx));
        } else {
            throw ValidationError(ctx + ": occupancy value must be 0 or 1");
        }
    }
    return occ;
}

std::vector<EvalPlotRecord> read_eval_plots(const fs::path& path, const SpeciesCatalog& catalog) {
    const auto table = csv::read_file(path);
    const auto c_id = table.column("plot_id");
    const auto c_e = table.column("easting");
    const auto c_n = table.column("northing");
    const auto c_d = table.column("date");
    const auto c_sp = table.column("species_id");
    const std::optional<std::size_t> c_h =
        table.has_column("eunis_level3") ? std::optional(table.column("eunis_level3")) : std::nullopt;
    std::map<std::string, EvalPlotRecord> plots;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = path.string() + ":" + std::to_string(table.line_numbers[r]);
        auto [it, inserted] = plots.try_emplace(row[c_id]);
        auto& p = it->second;
        const double e = csv::parse_double(row[c_e], ctx);
        const double n = csv::parse_double(row[c_n], ctx);
        std::optional<std::string> habitat;
        if (c_h && !row[*c_h].empty()) habitat = EunisCode(row[*c_h]).str();
        if (inserted) {
            p.plot_id = row[c_id];
            p.easting = e;
            p.northing = n;
            p.date = row[c_d];
            p.habitat = habitat;
            order.push_back(row[c_id]);
        } else if (p.easting != e || p.northing != n || p.habitat != habitat) {
            throw ValidationError(ctx + ": plot '" + row[c_id] + "' has inconsistent location or habitat");
        }
        if (!row[c_sp].empty()) {
            const auto idx = catalog.index_of(row[c_sp]);
            if (!idx) throw ValidationError(ctx + ": unknown species '" + row[c_sp] + "'");
            p.species.push_back(*idx);
        }
    }
    std::vector<EvalPlotRecord> out;
    for (const auto& id : order) {
        auto p = std::move(plots[id]);
        std::sort(p.species.begin(), p.species.end());
        p.species.erase(std::unique(p.species.begin(), p.species.end()), p.species.end());
        out.push_back(std::move(p));
    }
    return out;
}

std::string eval_plots_to_csv(const std::vector<EvalPlotRecord>& plots, const SpeciesCatalog& catalog) {
    std::ostringstream out;
    out << "plot_id,easting,northing,date,species_id,eunis_level3\n";
    for (const auto& p : plots) {
        const std::string prefix = p.plot_id + "," + csv::format_double(p.easting) + "," +
                                   csv::format_double(p.northing) + "," + p.date + ",";
        const std::string suffix = "," + p.habitat.value_or("") + "\n";
        if (p.species.empty()) out << prefix << suffix;
        for (auto s : p.species) out << prefix << catalog.id(s) << suffix;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Stages

IngestSummary run_ingest(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const auto mask = load_mask(c);
    const auto records = read_occurrences(require(c.paths.occurrences, "occurrences"));
    const auto agg = aggregate_to_grid(records, c.grid, catalog, mask ? &*mask : nullptr);
    const auto occ = target_group_filter(agg.occupancy);
    const auto split = make_split(c);

    IngestSummary s;
    s.records = records.size();
    s.accepted = agg.accepted;
    s.rejected = agg.rejected.size();
    s.dropped_out_of_extent = agg.dropped_out_of_extent;
    s.relocated = agg.relocated;
    s.occupied_cells = occ.cell_count();
    for (const auto& [lin, cell] : occ.cells()) {
        ++s.fold_cells[static_cast<std::size_t>(split.fold_of(cell_at(c.grid, lin)))];
    }

    std::ostringstream split_csv;
    split_csv << "block_col,block_row,fold\n";
    for (std::int64_t br = 0; br < split.blocks_y(); ++br) {
        for (std::int64_t bc = 0; bc < split.blocks_x(); ++bc) {
            split_csv << bc << ',' << br << ',' << fold_name(split.block_fold(bc, br)) << '\n';
        }
    }
    ordered_json summary;
    summary["records"] = s.records;
    summary["accepted"] = s.accepted;
    summary["rejected"] = s.rejected;
    summary["dropped_out_of_extent"] = s.dropped_out_of_extent;
    summary["relocated"] = s.relocated;
    summary["occupied_cells"] = s.occupied_cells;
    summary["fold_cells"] = {{"train", s.fold_cells[0]}, {"val", s.fold_cells[1]}, {"test", s.fold_cells[2]}};
    ordered_json rejected = ordered_json::array();
    for (const auto& r : agg.rejected) rejected.push_back({{"record", r.record_index}, {"reason", r.reason}});
    summary["rejected_records"] = rejected;

    fs::create_directories(c.out_dir);
    write_text(occupancy_path(c), occupancy_to_csv(occ, catalog));
    write_text(c.out_dir / "split.csv", split_csv.str());
    write_text(c.out_dir / "ingest_summary.json", summary.dump(2) + "\n");
    return s;
}

TrainReport run_train(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const auto features = load_features(c);
    const auto occ_path = occupancy_path(c);
    require_file(occ_path, "occupancy (run ingest first)");
    const auto occ = read_occupancy(occ_path, c.grid, catalog);
    const auto split = make_split(c);

    std::vector<Sample> samples;
    for (const auto& [lin, cell] : occ.cells()) {
        const auto cidx = cell_at(c.grid, lin);
        if (split.fold_of(cidx) != Fold::Train) continue;
        samples.push_back({features.features_at(cidx), occ.labels(cidx, catalog.size())});
    }
    if (samples.empty()) throw ValidationError("no occupied cells fall in the training fold");

    TrainConfig tc;
    tc.architecture = architecture_for(c, features, catalog.size());
    tc.learning_rate = c.train.learning_rate;
    tc.epochs = c.train.epochs;
    tc.batch_size = c.train.batch_size;
    tc.seed = c.seed;
    TrainReport report;
    const auto model = train(samples, tc, &report);

    save_checkpoint(model, model_path(c));
    ordered_json j;
    j["samples"] = samples.size();
    j["initial_loss"] = report.initial_loss;
    j["final_loss"] = report.final_loss;
    j["epoch_losses"] = report.epoch_losses;
    write_text(c.out_dir / "train_report.json", j.dump(2) + "\n");
    return report;
}

ThresholdSet run_calibrate(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const PredictorBundle predictor(c, catalog);
    const auto occ_path = occupancy_path(c);
    require_file(occ_path, "occupancy (run ingest first)");
    const auto occ = read_occupancy(occ_path, c.grid, catalog);
    const auto split = make_split(c);

    auto plots = labeled_cells(occ, split, Fold::Val, predictor.get(), catalog.size(), false);
    if (plots.empty()) throw ValidationError("no occupied cells fall in the validation fold");
    const ThresholdSet t = c.threshold_mode == ThresholdMode::Conformal ? fit_conformal_thresholds(plots, c.alpha)
                                                                        : fit_fscore_threshold(plots);
    t.write(thresholds_path(c), catalog);
    return t;
}

SpeciesMapSummary run_species_maps(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const PredictorBundle bundle(c, catalog);
    const auto thresholds = load_thresholds(c, catalog);
    const Predictor& predictor = bundle.get();

    std::vector<RasterHeader> products;
    for (const auto& id : catalog.ids()) {
        products.push_back(RasterHeader::for_grid(c.grid, DType::F32, {id}, std::nan("")));
    }
    Staging staging(c.out_dir, "map-species");
    const auto full = run_tiled(c, staging, products, [&](const MetaTile& tile, std::span<Raster> out) {
        const CellIndex origin{tile.cols.begin, tile.rows.begin};
        std::vector<double> p(predictor.species_count());
        for (std::int64_t row = tile.rows.begin; row < tile.rows.end; ++row) {
            for (std::int64_t col = tile.cols.begin; col < tile.cols.end; ++col) {
                predictor.predict_cell({col, row}, p);
                for (std::size_t s = 0; s < p.size(); ++s) {
                    if (thresholds.present(s, p[s])) {
                        out[s].set(0, {col - origin.col, row - origin.row}, p[s]);
                    }
                }
            }
        }
    });

    SpeciesMapSummary summary;
    ordered_json produced = ordered_json::array();
    ordered_json suppressed = ordered_json::array();
    const fs::path dir = staging.final_dir() / "species";
    fs::create_directories(dir);
    for (std::size_t s = 0; s < catalog.size(); ++s) {
        std::int64_t cells = 0;
        for (float v : full[s].band<float>(0)) cells += !std::isnan(v);
        if (cells == 0) {
            summary.suppressed.push_back(catalog.id(s));
            suppressed.push_back(catalog.id(s));
            continue;
        }
        const std::string file = catalog.id(s) + ".rst";
        write_raster(full[s], dir / file);
        summary.produced.push_back(catalog.id(s));
        produced.push_back({{"species_id", catalog.id(s)}, {"file", file}, {"cells", cells}});
    }
    ordered_json manifest;
    manifest["produced"] = produced;
    manifest["suppressed"] = suppressed;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    staging.commit_dir("species");
    return summary;
}

std::vector<std::string> run_indicator_maps(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const PredictorBundle bundle(c, catalog);
    const auto thresholds = load_thresholds(c, catalog);
    const auto config = c.paths.indicator_config ? IndicatorConfig::read(*c.paths.indicator_config)
                                                 : IndicatorConfig::standard();
    const Predictor& predictor = bundle.get();

    std::vector<double> occupancy;
    if (config.needs_occupancy()) occupancy = occupancy_fractions(predictor, thresholds, bundle.mask());
    const auto defs = resolve_indicators(config, catalog, occupancy);
    const auto table = status_table(catalog);

    std::vector<RasterHeader> products;
    for (const auto& d : defs) products.push_back(indicator_header(c.grid, d));
    Staging staging(c.out_dir, "map-indicators");
    const auto full = run_tiled(c, staging, products, [&](const MetaTile& tile, std::span<Raster> out) {
        compute_indicator_tile(predictor, defs, thresholds, table, tile, out);
    });

    const fs::path dir = staging.final_dir() / "indicators";
    fs::create_directories(dir);
    ordered_json manifest = ordered_json::array();
    std::vector<std::string> names;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const std::string file = defs[i].name + ".rst";
        write_raster(full[i], dir / file);
        ordered_json species = ordered_json::array();
        for (auto s : defs[i].species) species.push_back(catalog.id(s));
        manifest.push_back({{"name", defs[i].name},
                            {"kind", indicator_kind_name(defs[i].kind)},
                            {"file", file},
                            {"bands", full[i].header().band_names},
                            {"species", species}});
        names.push_back(defs[i].name);
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    staging.commit_dir("indicators");
    return names;
}

namespace {

StandinHabitatModel load_habitat_model(const PipelineConfig& c, const SpeciesCatalog& catalog) {
    const auto plots = read_labeled_plots(require(c.paths.habitat_plots, "habitat_plots"), catalog);
    return train_standin(plots, catalog.size());
}

HabitatHierarchy load_hierarchy(const PipelineConfig& c) {
    return c.paths.hierarchy ? HabitatHierarchy::read(*c.paths.hierarchy) : HabitatHierarchy{};
}

}  // namespace

void run_habitat_maps(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const PredictorBundle bundle(c, catalog);
    const auto thresholds = load_thresholds(c, catalog);
    const auto model = load_habitat_model(c, catalog);
    const auto hierarchy = load_hierarchy(c);
    const auto tables = habitat_class_tables(model, hierarchy);
    const Predictor& predictor = bundle.get();

    const auto header = RasterHeader::for_grid(c.grid, DType::I16, {"class"});
    Staging staging(c.out_dir, "map-habitats");
    const auto full = run_tiled(c, staging, {header, header, header}, [&](const MetaTile& tile, std::span<Raster> out) {
        compute_habitat_tile(predictor, thresholds, model, hierarchy, c.top_k, tables, tile, out.first<3>());
    });

    const fs::path dir = staging.final_dir() / "habitats";
    fs::create_directories(dir);
    for (int level = 1; level <= 3; ++level) {
        const auto i = static_cast<std::size_t>(level - 1);
        write_raster(full[i], dir / ("level" + std::to_string(level) + ".rst"));
        write_text(dir / ("level" + std::to_string(level) + "_classes.csv"), class_table_csv(tables[i]));
    }
    staging.commit_dir("habitats");
}

MetricReport run_evaluate(const PipelineConfig& c) {
    c.validate();
    const auto catalog = load_catalog(c);
    const PredictorBundle bundle(c, catalog);
    const auto thresholds = load_thresholds(c, catalog);
    const Predictor& predictor = bundle.get();

    std::vector<EvalPlot> plots;
    std::vector<EunisCode> habitat_truth;
    std::vector<CellIndex> habitat_cells;
    if (c.paths.eval_plots) {
        for (const auto& rec : read_eval_plots(*c.paths.eval_plots, catalog)) {
            auto cell = locate_cell(c.grid, {rec.easting, rec.northing});
            if (!cell) continue;
            EvalPlot p;
            p.plot_id = rec.plot_id;
            p.cell = *cell;
            p.probs = predictor.predict_cell(*cell);
            p.truth.assign(catalog.size(), 0);
            for (auto s : rec.species) p.truth[s] = 1;
            plots.push_back(std::move(p));
            if (rec.habitat) {
                habitat_truth.emplace_back(*rec.habitat);
                habitat_cells.push_back(*cell);
            }
        }
    } else {
        const auto occ_path = occupancy_path(c);
        require_file(occ_path, "occupancy (run ingest first)");
        const auto occ = read_occupancy(occ_path, c.grid, catalog);
        const auto split = make_split(c);
        for (const auto& [lin, cell] : occ.cells()) {
            const auto cidx = cell_at(c.grid, lin);
            if (split.fold_of(cidx) != Fold::Test) continue;
            bool surveyed = false;
            for (const auto& [sp, present] : cell.species) surveyed = surveyed || !present;
            if (!surveyed) continue;
            plots.push_back({std::to_string(lin), cidx, predictor.predict_cell(cidx), occ.labels(cidx, catalog.size())});
        }
    }
    if (plots.empty()) throw ValidationError("no evaluation plots available");

    MetricReport report = evaluate_plots(plots, thresholds);
    if (!habitat_truth.empty() && c.paths.habitat_plots) {
        const auto model = load_habitat_model(c, catalog);
        const auto hierarchy = load_hierarchy(c);
        std::vector<EunisCode> preds;
        for (const auto& cell : habitat_cells) {
            preds.push_back(classify_cell(predictor.predict_cell(cell), thresholds, model, c.top_k).code);
        }
        HabitatAccuracy acc;
        acc.plots = preds.size();
        std::array<double*, 3> slots{&acc.level1, &acc.level2, &acc.level3};
        for (int level = 1; level <= 3; ++level) {
            std::size_t hits = 0;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                hits += hierarchy.at_level(preds[i], level) == hierarchy.at_level(habitat_truth[i], level);
            }
            *slots[static_cast<std::size_t>(level - 1)] = static_cast<double>(hits) / static_cast<double>(preds.size());
        }
        report.habitat = acc;
    }
    write_text(c.out_dir / "metrics.json", report.to_json() + "\n");
    return report;
}

}  // namespace atlas
