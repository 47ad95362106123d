#include "atlas/predictor.hpp"

#include <cmath>

#include "atlas/error.hpp"

namespace atlas {

GridPredictor::GridPredictor(GridSpec grid, std::size_t species_count)
    : grid_(grid), species_(species_count), values_(static_cast<std::size_t>(grid.cell_count()) * species_count, 0.0) {
    grid_.validate();
}

GridPredictor::GridPredictor(GridSpec grid, std::size_t species_count, std::vector<double> values)
    : grid_(grid), species_(species_count), values_(std::move(values)) {
    grid_.validate();
    if (values_.size() != static_cast<std::size_t>(grid_.cell_count()) * species_) {
        throw ValidationError("probability buffer does not match grid and species count");
    }
}

void GridPredictor::predict_cell(CellIndex cell, std::span<double> out) const {
    if (!contains(grid_, cell)) throw ValidationError("cell outside predictor grid");
    if (out.size() != species_) throw ValidationError("output span has the wrong length");
    const auto base = static_cast<std::size_t>(linear_index(grid_, cell)) * species_;
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(base), species_, out.begin());
}

void GridPredictor::set(CellIndex cell, std::span<const double> probs) {
    if (!contains(grid_, cell)) throw ValidationError("cell outside predictor grid");
    if (probs.size() != species_) throw ValidationError("probability vector has the wrong length");
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probabilities must lie in [0,1]");
    }
    const auto base = static_cast<std::size_t>(linear_index(grid_, cell)) * species_;
    std::copy(probs.begin(), probs.end(), values_.begin() + static_cast<std::ptrdiff_t>(base));
}

void RasterPredictor::predict_cell(CellIndex cell, std::span<double> out) const {
    if (!contains(grid_, cell)) throw ValidationError("cell outside predictor grid");
    if (out.size() != layers_.size()) throw ValidationError("output span has the wrong length");
    const auto i = static_cast<std::size_t>(linear_index(grid_, cell));
    for (std::size_t s = 0; s < layers_.size(); ++s) {
        if (layers_[s].empty()) {
            out[s] = 0.0;
            continue;
        }
        const float v = layers_[s][i];
        out[s] = std::isnan(v) ? 0.0 : static_cast<double>(v);
    }
}

RasterPredictor load_raster_predictor(const SpeciesCatalog& catalog,
                                      const std::map<std::string, std::filesystem::path>& paths) {
    RasterPredictor pred;
    pred.layers_.resize(catalog.size());
    bool have_grid = false;
    for (const auto& [id, path] : paths) {
        const auto idx = catalog.index_of(id);
        if (!idx) throw ValidationError("raster supplied for unknown species '" + id + "'");
        const Raster r = read_raster(path);
        if (r.header().dtype != DType::F32) {
            throw ValidationError(path.string() + ": species rasters must be f32");
        }
        const GridSpec g = r.grid();
        if (!have_grid) {
            pred.grid_ = g;
            have_grid = true;
        } else if (!(g == pred.grid_)) {
            throw ValidationError(path.string() + ": raster grid differs from the other species rasters");
        }
        const auto band = r.band<float>(0);
        std::vector<float> layer(band.begin(), band.end());
        if (r.header().nodata && !std::isnan(*r.header().nodata)) {
            const auto nd = static_cast<float>(*r.header().nodata);
            for (auto& v : layer) {
                if (v == nd) v = 0.0f;
            }
        }
        pred.layers_[*idx] = std::move(layer);
    }
    if (!have_grid) throw ValidationError("no species rasters supplied");
    return pred;
}

RasterPredictor load_raster_predictor_dir(const SpeciesCatalog& catalog, const std::filesystem::path& dir) {
    std::map<std::string, std::filesystem::path> paths;
    for (const auto& id : catalog.ids()) {
        auto p = dir / (id + ".rst");
        if (std::filesystem::exists(p)) paths.emplace(id, std::move(p));
    }
    return load_raster_predictor(catalog, paths);
}

FeatureStack::FeatureStack(std::array<Raster, kModalityCount> rasters,
                           std::array<std::vector<std::size_t>, kModalityCount> shapes)
    : rasters_(std::move(rasters)), shapes_(std::move(shapes)) {
    grid_ = rasters_[0].grid();
    for (const auto m : kModalities) {
        const auto b = static_cast<std::size_t>(m);
        const auto& r = rasters_[b];
        if (!(r.grid() == grid_)) throw ValidationError("feature rasters do not share one grid");
        if (r.header().dtype != DType::F32) throw ValidationError("feature rasters must be f32");
        std::size_t n = shapes_[b].empty() ? 0 : 1;
        for (auto s : shapes_[b]) n *= s;
        if (n != r.header().band_count()) {
            throw ValidationError(std::string(modality_name(m)) + " feature raster has " +
                                  std::to_string(r.header().band_count()) + " bands, shape needs " +
                                  std::to_string(n));
        }
    }
}

FeatureStack FeatureStack::read(const std::array<std::filesystem::path, kModalityCount>& paths,
                                const std::array<std::vector<std::size_t>, kModalityCount>& shapes) {
    std::array<Raster, kModalityCount> rasters;
    for (std::size_t i = 0; i < kModalityCount; ++i) rasters[i] = read_raster(paths[i]);
    return FeatureStack(std::move(rasters), shapes);
}

Features FeatureStack::features_at(CellIndex cell) const {
    if (!contains(grid_, cell)) throw ValidationError("cell outside feature grid");
    const auto i = static_cast<std::size_t>(linear_index(grid_, cell));
    Features f;
    for (const auto m : kModalities) {
        const auto b = static_cast<std::size_t>(m);
        auto& t = f[m];
        t.modality = m;
        t.shape = shapes_[b];
        const auto& r = rasters_[b];
        const std::size_t bands = r.header().band_count();
        t.values.resize(bands);
        const auto all = r.values<float>();
        for (std::size_t k = 0; k < bands; ++k) {
            t.values[k] = static_cast<double>(all[k * r.header().band_cells() + i]);
        }
    }
    return f;
}

ModelPredictor::ModelPredictor(const SdmModel& model, const FeatureStack& features, BranchMask branches)
    : model_(model), features_(features), branches_(branches) {
    if (model.architecture().input_shapes != features.shapes()) {
        throw ValidationError("feature stack shapes do not match the model's input shapes");
    }
}

void ModelPredictor::predict_cell(CellIndex cell, std::span<double> out) const {
    const auto p = predict(features_.features_at(cell), model_, branches_);
    if (out.size() != p.size()) throw ValidationError("output span has the wrong length");
    std::copy(p.begin(), p.end(), out.begin());
}

RelocatingPredictor::RelocatingPredictor(const Predictor& inner, const TerrestrialMask& mask) : inner_(inner) {
    const auto& g = inner.grid();
    if (!mask.matches(g)) throw ValidationError("terrestrial mask does not match the predictor grid");
    source_.resize(static_cast<std::size_t>(g.cell_count()));
    for (std::int64_t lin = 0; lin < g.cell_count(); ++lin) {
        const auto c = cell_at(g, lin);
        source_[static_cast<std::size_t>(lin)] = linear_index(g, relocate_to_terrestrial(c, mask));
    }
}

void RelocatingPredictor::predict_cell(CellIndex cell, std::span<double> out) const {
    const auto& g = inner_.grid();
    if (!contains(g, cell)) throw ValidationError("cell outside predictor grid");
    inner_.predict_cell(cell_at(g, source_[static_cast<std::size_t>(linear_index(g, cell))]), out);
}

}  // namespace atlas
