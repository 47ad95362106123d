#pragma once

// Per-cell species probability sources consumed by the map stages.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "atlas/geogrid.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/raster.hpp"
#include "atlas/sdm.hpp"

namespace atlas {

class Predictor {
public:
    virtual ~Predictor() = default;

    virtual const GridSpec& grid() const noexcept = 0;
    virtual std::size_t species_count() const noexcept = 0;
    // Writes species_count() probabilities for the cell. Must be safe to call
    // concurrently.
    virtual void predict_cell(CellIndex cell, std::span<double> out) const = 0;

    ProbabilityVector predict_cell(CellIndex cell) const {
        ProbabilityVector p(species_count());
        predict_cell(cell, p);
        return p;
    }
};

// Dense in-memory probabilities, [cell][species] in row-major cell order.
class GridPredictor final : public Predictor {
public:
    GridPredictor(GridSpec grid, std::size_t species_count);
    GridPredictor(GridSpec grid, std::size_t species_count, std::vector<double> values);

    const GridSpec& grid() const noexcept override { return grid_; }
    std::size_t species_count() const noexcept override { return species_; }
    void predict_cell(CellIndex cell, std::span<double> out) const override;
    using Predictor::predict_cell;

    void set(CellIndex cell, std::span<const double> probs);

private:
    GridSpec grid_;
    std::size_t species_;
    std::vector<double> values_;
};

// Precomputed per-species probability rasters. Species without a raster and
// nodata cells read as probability 0.
class RasterPredictor final : public Predictor {
public:
    const GridSpec& grid() const noexcept override { return grid_; }
    std::size_t species_count() const noexcept override { return layers_.size(); }
    void predict_cell(CellIndex cell, std::span<double> out) const override;
    using Predictor::predict_cell;

    bool has_raster(std::size_t species) const { return !layers_.at(species).empty(); }

private:
    friend RasterPredictor load_raster_predictor(const SpeciesCatalog&,
                                                 const std::map<std::string, std::filesystem::path>&);
    GridSpec grid_;
    std::vector<std::vector<float>> layers_;
};

// Rasters are keyed by species id; every raster must share one grid.
RasterPredictor load_raster_predictor(const SpeciesCatalog& catalog,
                                      const std::map<std::string, std::filesystem::path>& paths);
// Loads <dir>/<species_id>.rst for every catalog species that has a file.
RasterPredictor load_raster_predictor_dir(const SpeciesCatalog& catalog, const std::filesystem::path& dir);

// Environmental inputs for every cell: one f32 raster per modality whose
// bands are the flattened tensor elements.
class FeatureStack {
public:
    FeatureStack() = default;
    FeatureStack(std::array<Raster, kModalityCount> rasters,
                 std::array<std::vector<std::size_t>, kModalityCount> shapes);

    static FeatureStack read(const std::array<std::filesystem::path, kModalityCount>& paths,
                             const std::array<std::vector<std::size_t>, kModalityCount>& shapes);

    const GridSpec& grid() const noexcept { return grid_; }
    const std::array<std::vector<std::size_t>, kModalityCount>& shapes() const noexcept { return shapes_; }
    const Raster& raster(Modality m) const { return rasters_[static_cast<std::size_t>(m)]; }
    Features features_at(CellIndex cell) const;

private:
    GridSpec grid_;
    std::array<Raster, kModalityCount> rasters_;
    std::array<std::vector<std::size_t>, kModalityCount> shapes_;
};

class ModelPredictor final : public Predictor {
public:
    ModelPredictor(const SdmModel& model, const FeatureStack& features, BranchMask branches = {});

    const GridSpec& grid() const noexcept override { return features_.grid(); }
    std::size_t species_count() const noexcept override { return model_.species_count(); }
    void predict_cell(CellIndex cell, std::span<double> out) const override;
    using Predictor::predict_cell;

private:
    const SdmModel& model_;
    const FeatureStack& features_;
    BranchMask branches_;
};

// Serves water cells with the prediction of their nearest land cell.
class RelocatingPredictor final : public Predictor {
public:
    RelocatingPredictor(const Predictor& inner, const TerrestrialMask& mask);

    const GridSpec& grid() const noexcept override { return inner_.grid(); }
    std::size_t species_count() const noexcept override { return inner_.species_count(); }
    void predict_cell(CellIndex cell, std::span<double> out) const override;
    using Predictor::predict_cell;

private:
    const Predictor& inner_;
    std::vector<std::int64_t> source_;  // row-major source cell per grid cell
};

}  // namespace atlas
