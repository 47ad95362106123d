#pragma once

// Generated toy world with known truth, used by the end-to-end tests and
// the `atlas synth` demo: Voronoi habitat patches, a lake, per-habitat
// species signatures and habitat-driven environmental features.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "atlas/habitat.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/pipeline.hpp"
#include "atlas/predictor.hpp"

namespace atlas {

struct SyntheticWorldOptions {
    std::int64_t width = 200;
    std::int64_t height = 200;
    double cell_size = 500.0;
    std::uint64_t seed = 7;
    std::size_t po_records = 6000;
    std::size_t pa_plots = 1500;
    std::size_t voronoi_seeds = 24;
    double feature_noise = 0.5;
    bool lake = true;
    double block_size_m = 10'000.0;
    FoldFractions fractions{0.6, 0.2, 0.2};
};

struct SyntheticWorld {
    SyntheticWorldOptions options;
    GridSpec grid;
    SpeciesCatalog catalog;
    TerrestrialMask mask;
    std::vector<EunisCode> habitats;                 // level-3 codes
    std::vector<std::vector<std::size_t>> signatures;  // species per habitat
    std::vector<std::uint8_t> habitat_of_cell;       // index into habitats
    FeatureStack features;
    std::vector<OccurrenceRecord> records;
    std::vector<LabeledPlot> habitat_plots;          // PA plots outside the test fold
    std::vector<EvalPlotRecord> eval_plots;          // PA plots inside the test fold
    SplitAssignment split;

    std::vector<std::uint8_t> truth_labels(CellIndex cell) const;
    const EunisCode& habitat_at(CellIndex cell) const;
};

SyntheticWorld make_synthetic_world(const SyntheticWorldOptions& options = {});

// Writes inputs plus a config.json wired to them; returns the config path.
std::filesystem::path write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace atlas
