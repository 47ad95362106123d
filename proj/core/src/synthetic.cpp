#include "atlas/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "atlas/error.hpp"
#include "atlas/rng.hpp"
#include "csv.hpp"
#include "json.hpp"

namespace atlas {
namespace fs = std::filesystem;

namespace {

const std::array<std::vector<std::size_t>, kModalityCount> kShapes{
    std::vector<std::size_t>{4, 2, 2}, std::vector<std::size_t>{2, 3, 2}, std::vector<std::size_t>{3, 4}};

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

SpeciesCatalog make_catalog() {
    struct Row {
        const char* id;
        bool tree, invasive, eu;
        IucnStatus iucn;
    };
    static constexpr Row rows[] = {
        {"sp01", true, false, false, IucnStatus::LC},  {"sp02", false, false, true, IucnStatus::NT},
        {"sp03", false, false, false, IucnStatus::VU}, {"sp04", false, true, false, IucnStatus::LC},
        {"sp05", false, false, false, IucnStatus::EN}, {"sp06", true, false, false, IucnStatus::CR},
        {"sp07", false, false, true, IucnStatus::NA},  {"sp08", false, false, false, IucnStatus::LC},
    };
    SpeciesCatalog c;
    for (const auto& r : rows) c.add(r.id, {r.tree, r.invasive, r.eu, r.iucn});
    return c;
}

// Uniform point strictly inside a cell.
Point point_in(const GridSpec& g, CellIndex c, Rng& rng) {
    const double x = g.x_min + (static_cast<double>(c.col) + rng.uniform(0.05, 0.95)) * g.cell_size;
    const double y = g.y_min + (static_cast<double>(c.row) + rng.uniform(0.05, 0.95)) * g.cell_size;
    return {x, y};
}

CellIndex random_land_cell(const GridSpec& g, const TerrestrialMask& mask, Rng& rng) {
    for (;;) {
        const CellIndex c{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(g.width))),
                          static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(g.height)))};
        if (mask.is_land(c)) return c;
    }
}

}  // namespace

std::vector<std::uint8_t> SyntheticWorld::truth_labels(CellIndex cell) const {
    std::vector<std::uint8_t> y(catalog.size(), 0);
    for (auto s : signatures[habitat_of_cell[static_cast<std::size_t>(linear_index(grid, cell))]]) y[s] = 1;
    return y;
}

const EunisCode& SyntheticWorld::habitat_at(CellIndex cell) const {
    return habitats[habitat_of_cell[static_cast<std::size_t>(linear_index(grid, cell))]];
}

SyntheticWorld make_synthetic_world(const SyntheticWorldOptions& o) {
    if (o.voronoi_seeds < 3) throw ValidationError("synthetic world needs at least three Voronoi seeds");
    SyntheticWorld w;
    w.options = o;
    w.grid = GridSpec{0.0, 0.0, o.cell_size, o.width, o.height};
    w.grid.validate();
    w.catalog = make_catalog();
    w.habitats = {EunisCode("R21"), EunisCode("R22"), EunisCode("S42")};
    w.signatures = {{0, 1, 2}, {2, 3, 4}, {5, 6, 7}};

    Rng rng(splitmix64(o.seed));
    const auto W = o.width;
    const auto H = o.height;
    const auto n_cells = static_cast<std::size_t>(W * H);

    // Voronoi patches; seed i carries habitat i % 3 so all three occur.
    std::vector<std::pair<double, double>> seeds(o.voronoi_seeds);
    for (auto& s : seeds) s = {rng.uniform(0.0, static_cast<double>(W)), rng.uniform(0.0, static_cast<double>(H))};
    w.habitat_of_cell.resize(n_cells);
    for (std::int64_t r = 0; r < H; ++r) {
        for (std::int64_t c = 0; c < W; ++c) {
            const double x = static_cast<double>(c) + 0.5;
            const double y = static_cast<double>(r) + 0.5;
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                const double d = (x - seeds[i].first) * (x - seeds[i].first) + (y - seeds[i].second) * (y - seeds[i].second);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            w.habitat_of_cell[static_cast<std::size_t>(r * W + c)] = static_cast<std::uint8_t>(best % 3);
        }
    }

    w.mask = TerrestrialMask(W, H, std::uint8_t{1});
    if (o.lake) {
        const double cx = 0.3 * static_cast<double>(W);
        const double cy = 0.7 * static_cast<double>(H);
        const double rad = 0.06 * static_cast<double>(std::min(W, H));
        for (std::int64_t r = 0; r < H; ++r) {
            for (std::int64_t c = 0; c < W; ++c) {
                const double dx = static_cast<double>(c) + 0.5 - cx;
                const double dy = static_cast<double>(r) + 0.5 - cy;
                if (dx * dx + dy * dy <= rad * rad) w.mask.set_land({c, r}, false);
            }
        }
    }

    // Features: habitat prototype plus per-cell Gaussian noise.
    std::array<Raster, kModalityCount> rasters;
    for (const auto m : kModalities) {
        const auto b = static_cast<std::size_t>(m);
        const auto n = element_count(kShapes[b]);
        std::vector<std::string> names;
        for (std::size_t e = 0; e < n; ++e) names.push_back(std::string(modality_name(m)) + "_" + std::to_string(e));
        Raster raster(RasterHeader::for_grid(w.grid, DType::F32, names));
        std::vector<std::vector<double>> proto(w.habitats.size(), std::vector<double>(n));
        for (auto& p : proto) {
            for (auto& v : p) v = rng.normal();
        }
        auto bands = raster.values<float>();
        for (std::size_t e = 0; e < n; ++e) {
            for (std::size_t i = 0; i < n_cells; ++i) {
                bands[e * n_cells + i] =
                    static_cast<float>(proto[w.habitat_of_cell[i]][e] + o.feature_noise * rng.normal());
            }
        }
        rasters[b] = std::move(raster);
    }
    w.features = FeatureStack(std::move(rasters), kShapes);
    w.split = split_spatial_blocks(w.grid, o.block_size_m, o.fractions, o.seed);

    // Presence-only sightings of signature species at random land cells.
    for (std::size_t i = 0; i < o.po_records; ++i) {
        const auto cell = random_land_cell(w.grid, w.mask, rng);
        const auto& sig = w.signatures[w.habitat_of_cell[static_cast<std::size_t>(linear_index(w.grid, cell))]];
        const auto sp = sig[rng.below(sig.size())];
        const auto pt = point_in(w.grid, cell, rng);
        w.records.push_back({w.catalog.id(sp), pt.easting, pt.northing, "2021-06-15", RecordSource::PO, std::nullopt});
    }

    // Exhaustive survey plots listing the whole signature.
    for (std::size_t i = 0; i < o.pa_plots; ++i) {
        const auto cell = random_land_cell(w.grid, w.mask, rng);
        const auto h = w.habitat_of_cell[static_cast<std::size_t>(linear_index(w.grid, cell))];
        const auto pt = point_in(w.grid, cell, rng);
        char id[16];
        std::snprintf(id, sizeof id, "P%05zu", i + 1);
        for (auto sp : w.signatures[h]) {
            w.records.push_back({w.catalog.id(sp), pt.easting, pt.northing, "2022-05-01", RecordSource::PA, std::string(id)});
        }
        if (w.split.fold_of(cell) == Fold::Test) {
            w.eval_plots.push_back({id, pt.easting, pt.northing, "2022-05-01", w.signatures[h], w.habitats[h].str()});
        } else {
            w.habitat_plots.push_back({id, w.habitats[h], w.signatures[h]});
        }
    }
    return w;
}

fs::path write_synthetic_world(const SyntheticWorld& w, const fs::path& dir) {
    fs::create_directories(dir / "features");
    csv::write_file(dir / "catalog.csv", w.catalog.to_csv());
    csv::write_file(dir / "occurrences.csv", occurrences_to_csv(w.records));
    csv::write_file(dir / "habitat_plots.csv", labeled_plots_to_csv(w.habitat_plots, w.catalog));
    csv::write_file(dir / "eval_plots.csv", eval_plots_to_csv(w.eval_plots, w.catalog));

    Raster mask(RasterHeader::for_grid(w.grid, DType::U8, {"land"}));
    const auto land = w.mask.data();
    std::copy(land.begin(), land.end(), mask.values<std::uint8_t>().begin());
    write_raster(mask, dir / "mask.rst");

    // Paths in the config are relative to its own directory.
    PipelineConfig c;
    c.grid = w.grid;
    c.seed = w.options.seed;
    c.out_dir = "out";
    c.block_size_m = w.options.block_size_m;
    c.fractions = w.options.fractions;
    c.paths.catalog = "catalog.csv";
    c.paths.occurrences = "occurrences.csv";
    c.paths.mask = "mask.rst";
    c.paths.habitat_plots = "habitat_plots.csv";
    c.paths.eval_plots = "eval_plots.csv";
    FeaturePaths fp;
    for (const auto m : kModalities) {
        const auto b = static_cast<std::size_t>(m);
        fp.rasters[b] = fs::path("features") / (std::string(modality_name(m)) + ".rst");
        fp.shapes[b] = kShapes[b];
        write_raster(w.features.raster(m), dir / fp.rasters[b]);
    }
    c.paths.features = fp;
    const fs::path config = dir / "config.json";
    csv::write_file(config, c.to_json() + "\n");
    return config;
}

}  // namespace atlas
