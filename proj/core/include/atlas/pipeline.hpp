#pragma once

// Orchestration of the mapping stages. Every stage reads a PipelineConfig,
// validates all inputs before producing anything, and commits outputs only
// after every tile succeeded.
//
// Output layout under out_dir:
//   occupancy.csv, split.csv, ingest_summary.json     (ingest)
//   model.atlsdm, train_report.json                   (train)
//   thresholds.csv                                    (calibrate)
//   species/<species_id>.rst, species/manifest.json   (map-species)
//   indicators/<name>.rst, indicators/manifest.json   (map-indicators)
//   habitats/level{1,2,3}.rst, level{1,2,3}_classes.csv (map-habitats)
//   metrics.json                                      (evaluate)
//   quarantine/<stage>-<n>/                           (failed tiled runs)

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atlas/calibrate.hpp"
#include "atlas/evalsuite.hpp"
#include "atlas/geogrid.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/sdm.hpp"

namespace atlas {

struct FeaturePaths {
    std::array<std::filesystem::path, kModalityCount> rasters;
    std::array<std::vector<std::size_t>, kModalityCount> shapes;
};

struct PipelinePaths {
    std::optional<std::filesystem::path> occurrences;
    std::optional<std::filesystem::path> catalog;
    std::optional<std::filesystem::path> mask;
    std::optional<std::filesystem::path> model;            // default: <out>/model.atlsdm
    std::optional<FeaturePaths> features;
    std::optional<std::filesystem::path> species_rasters;  // directory of <species_id>.rst
    std::optional<std::filesystem::path> thresholds;       // default: <out>/thresholds.csv
    std::optional<std::filesystem::path> indicator_config; // default: the seven standard indicators
    std::optional<std::filesystem::path> habitat_plots;
    std::optional<std::filesystem::path> hierarchy;
    std::optional<std::filesystem::path> eval_plots;
    std::optional<std::filesystem::path> occupancy;        // default: <out>/occupancy.csv
};

struct TrainSettings {
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::size_t embedding_width = 16;
    std::size_t layers_per_branch = 2;
};

struct PipelineConfig {
    GridSpec grid;
    double tile_size_m = kDefaultTileSizeM;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    PipelinePaths paths;
    ThresholdMode threshold_mode = ThresholdMode::Conformal;
    double alpha = 0.1;
    std::size_t top_k = 100;
    double block_size_m = 10'000.0;
    FoldFractions fractions;
    TrainSettings train;
    // Test hook: the tile with this index throws during tiled stages.
    std::optional<std::size_t> fail_tile;

    void validate() const;

    // JSON mirroring the fields above; relative paths resolve against base_dir.
    static PipelineConfig from_json(std::string_view text, const std::filesystem::path& base_dir,
                                    const std::string& source = "<config>");
    static PipelineConfig read(const std::filesystem::path& path);
    std::string to_json() const;
};

struct IngestSummary {
    std::size_t records = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t dropped_out_of_extent = 0;
    std::size_t relocated = 0;
    std::size_t occupied_cells = 0;
    std::array<std::size_t, 3> fold_cells{};
};

IngestSummary run_ingest(const PipelineConfig& config);
TrainReport run_train(const PipelineConfig& config);
ThresholdSet run_calibrate(const PipelineConfig& config);

struct SpeciesMapSummary {
    std::vector<std::string> produced;
    std::vector<std::string> suppressed;
};
SpeciesMapSummary run_species_maps(const PipelineConfig& config);
std::vector<std::string> run_indicator_maps(const PipelineConfig& config);
void run_habitat_maps(const PipelineConfig& config);
MetricReport run_evaluate(const PipelineConfig& config);

// occupancy.csv: col,row,species_id,value (value 1 presence, 0 absence);
// cells with records but no species rows are written with an empty species.
std::string occupancy_to_csv(const SiteOccupancy& occupancy, const SpeciesCatalog& catalog);
SiteOccupancy read_occupancy(const std::filesystem::path& path, const GridSpec& grid, const SpeciesCatalog& catalog);

// plot_id,easting,northing,date,species_id,eunis_level3; one row per
// plot-species pair, empty species_id for a plot with no species, and an
// optional habitat label repeated on each row.
struct EvalPlotRecord {
    std::string plot_id;
    double easting = 0.0;
    double northing = 0.0;
    std::string date;
    std::vector<std::size_t> species;
    std::optional<std::string> habitat;
};
std::vector<EvalPlotRecord> read_eval_plots(const std::filesystem::path& path, const SpeciesCatalog& catalog);
std::string eval_plots_to_csv(const std::vector<EvalPlotRecord>& plots, const SpeciesCatalog& catalog);

// Exit codes used by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

}  // namespace atlas
