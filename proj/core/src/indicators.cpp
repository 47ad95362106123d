#include "atlas/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/scheduler.hpp"
#include "json.hpp"

namespace atlas {

double count_mean(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) sum += v;
    return sum;
}

double count_variance(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) sum += v * (1.0 - v);
    return sum;
}

double confidence_halfwidth(double variance) {
    if (!(variance >= 0.0)) throw ValidationError("variance must be nonnegative");
    return 2.0 * std::sqrt(variance);
}

double at_least_one_probability(std::span<const double> p) {
    double none = 1.0;
    for (double v : p) none *= 1.0 - v;
    return 1.0 - none;
}

std::vector<double> brute_force_poisson_binomial(std::span<const double> p) {
    if (p.size() > kMaxOracleSpecies) {
        throw ValidationError("Poisson binomial oracle limited to " + std::to_string(kMaxOracleSpecies) +
                              " species, got " + std::to_string(p.size()));
    }
    std::vector<double> pmf{1.0};
    for (double q : p) {
        if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("probabilities must lie in [0,1]");
        std::vector<double> next(pmf.size() + 1, 0.0);
        for (std::size_t k = 0; k < pmf.size(); ++k) {
            next[k] += pmf[k] * (1.0 - q);
            next[k + 1] += pmf[k] * q;
        }
        pmf = std::move(next);
    }
    return pmf;
}

IucnStatusTable status_table(const SpeciesCatalog& catalog) {
    IucnStatusTable t(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) t[i] = iucn_rank(catalog.attributes(i).iucn);
    return t;
}

std::optional<int> most_threatened_status(const Assemblage& assemblage, const IucnStatusTable& table) {
    std::optional<int> best;
    for (const auto s : assemblage.species) {
        const int rank = table.at(s);
        if (rank < 0) continue;
        if (!best || rank > *best) best = rank;
    }
    return best;
}

std::string_view indicator_kind_name(IndicatorKind k) noexcept {
    switch (k) {
        case IndicatorKind::Count: return "COUNT";
        case IndicatorKind::AtLeastOne: return "AT_LEAST_ONE";
        case IndicatorKind::MaxStatus: return "MAX_STATUS";
    }
    return "?";
}

IndicatorEstimate estimate_count(std::span<const double> cell_probs, std::span<const std::size_t> subset) {
    std::vector<double> p;
    p.reserve(subset.size());
    for (auto s : subset) p.push_back(cell_probs[s]);
    IndicatorEstimate e;
    e.mean = count_mean(p);
    const double var = count_variance(p);
    e.sigma = std::sqrt(var);
    e.halfwidth = confidence_halfwidth(var);
    return e;
}

std::vector<double> occupancy_fractions(const Predictor& predictor, const ThresholdSet& thresholds,
                                        const TerrestrialMask* mask) {
    const auto& g = predictor.grid();
    if (!thresholds.covers(predictor.species_count())) {
        throw ValidationError("threshold set does not match predictor species count");
    }
    std::vector<std::int64_t> counts(predictor.species_count(), 0);
    std::int64_t cells = 0;
    std::vector<double> p(predictor.species_count());
    for (std::int64_t lin = 0; lin < g.cell_count(); ++lin) {
        const auto c = cell_at(g, lin);
        if (mask && !mask->is_land(c)) continue;
        ++cells;
        predictor.predict_cell(c, p);
        for (std::size_t s = 0; s < p.size(); ++s) counts[s] += thresholds.present(s, p[s]);
    }
    std::vector<double> out(counts.size(), 0.0);
    if (cells == 0) return out;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        out[s] = static_cast<double>(counts[s]) / static_cast<double>(cells);
    }
    return out;
}

std::vector<std::size_t> specialist_species(std::span<const double> occupancy_fraction, double tau) {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < occupancy_fraction.size(); ++s) {
        if (occupancy_fraction[s] > 0.0 && occupancy_fraction[s] < tau) out.push_back(s);
    }
    return out;
}

IndicatorConfig IndicatorConfig::standard() {
    IndicatorConfig c;
    c.indicators = {
        {"species_richness", IndicatorKind::Count, SpeciesSelector::All, std::nullopt, {}},
        {"eu_directive", IndicatorKind::Count, SpeciesSelector::EuDirective, std::nullopt, {}},
        {"threatened_species", IndicatorKind::Count, SpeciesSelector::Threatened, std::nullopt, {}},
        {"most_threatened", IndicatorKind::MaxStatus, SpeciesSelector::StatusTable, std::nullopt, {}},
        {"tree_species", IndicatorKind::Count, SpeciesSelector::Tree, std::nullopt, {}},
        {"invasive_species", IndicatorKind::Count, SpeciesSelector::Invasive, std::nullopt, {}},
        {"specialist_species", IndicatorKind::Count, SpeciesSelector::Specialist, std::nullopt, {}},
    };
    return c;
}

IndicatorConfig IndicatorConfig::parse_json(std::string_view text, const std::string& source) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(source + ": not valid JSON: " + e.what());
    }
    IndicatorConfig c;
    try {
        c.specialist_tau = j.value("specialist_tau", kDefaultSpecialistTau);
        if (!(c.specialist_tau > 0.0 && c.specialist_tau <= 1.0)) {
            throw ValidationError(source + ": specialist_tau must lie in (0,1]");
        }
        for (const auto& item : j.at("indicators")) {
            IndicatorSpec spec;
            spec.name = item.at("name").get<std::string>();
            const auto kind = item.at("kind").get<std::string>();
            if (kind == "COUNT") {
                spec.kind = IndicatorKind::Count;
            } else if (kind == "AT_LEAST_ONE") {
                spec.kind = IndicatorKind::AtLeastOne;
            } else if (kind == "MAX_STATUS") {
                spec.kind = IndicatorKind::MaxStatus;
            } else {
                throw ValidationError(source + ": indicator '" + spec.name + "' has unknown kind '" + kind + "'");
            }
            const int selectors = int(item.contains("attribute")) + int(item.contains("species")) +
                                  int(item.contains("iucn_status")) + int(item.contains("status_table"));
            if (spec.kind == IndicatorKind::MaxStatus) {
                if (selectors > 1 || (selectors == 1 && !item.contains("status_table"))) {
                    throw ValidationError(source + ": MAX_STATUS indicator '" + spec.name +
                                          "' takes only a status_table reference");
                }
                if (item.contains("status_table") && item["status_table"].get<std::string>() != "catalog") {
                    throw ValidationError(source + ": only the 'catalog' status table is supported");
                }
                spec.selector = SpeciesSelector::StatusTable;
            } else {
                if (selectors != 1 || item.contains("status_table")) {
                    throw ValidationError(source + ": indicator '" + spec.name +
                                          "' needs exactly one of attribute, species, iucn_status");
                }
                if (item.contains("attribute")) {
                    const auto a = item["attribute"].get<std::string>();
                    if (a == "all") spec.selector = SpeciesSelector::All;
                    else if (a == "eu_directive") spec.selector = SpeciesSelector::EuDirective;
                    else if (a == "threatened") spec.selector = SpeciesSelector::Threatened;
                    else if (a == "tree") spec.selector = SpeciesSelector::Tree;
                    else if (a == "invasive") spec.selector = SpeciesSelector::Invasive;
                    else if (a == "specialist") spec.selector = SpeciesSelector::Specialist;
                    else throw ValidationError(source + ": unknown attribute '" + a + "'");
                } else if (item.contains("species")) {
                    spec.selector = SpeciesSelector::Explicit;
                    spec.species_ids = item["species"].get<std::vector<std::string>>();
                } else {
                    spec.selector = SpeciesSelector::IucnStatus;
                    spec.status = parse_iucn(item["iucn_status"].get<std::string>());
                    if (*spec.status == IucnStatus::NA) {
                        throw ValidationError(source + ": iucn_status selector cannot be NA");
                    }
                }
            }
            c.indicators.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw ValidationError(source + ": malformed indicator configuration: " + e.what());
    }
    if (c.indicators.empty()) throw ValidationError(source + ": no indicators configured");
    for (std::size_t i = 0; i < c.indicators.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (c.indicators[i].name == c.indicators[k].name) {
                throw ValidationError(source + ": duplicate indicator name '" + c.indicators[i].name + "'");
            }
        }
    }
    return c;
}

IndicatorConfig IndicatorConfig::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open indicator configuration " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), path.string());
}

bool IndicatorConfig::needs_occupancy() const noexcept {
    return std::any_of(indicators.begin(), indicators.end(),
                       [](const auto& s) { return s.selector == SpeciesSelector::Specialist; });
}

std::vector<IndicatorDefinition> resolve_indicators(const IndicatorConfig& config, const SpeciesCatalog& catalog,
                                                    std::span<const double> occupancy_fraction) {
    std::vector<IndicatorDefinition> out;
    for (const auto& spec : config.indicators) {
        IndicatorDefinition def{spec.name, spec.kind, {}};
        auto select = [&](auto pred) {
            for (std::size_t i = 0; i < catalog.size(); ++i) {
                if (pred(catalog.attributes(i))) def.species.push_back(i);
            }
        };
        switch (spec.selector) {
            case SpeciesSelector::All: select([](const auto&) { return true; }); break;
            case SpeciesSelector::EuDirective: select([](const auto& a) { return a.eu_directive; }); break;
            case SpeciesSelector::Threatened:
                select([](const auto& a) {
                    return a.iucn == IucnStatus::VU || a.iucn == IucnStatus::EN || a.iucn == IucnStatus::CR;
                });
                break;
            case SpeciesSelector::Tree: select([](const auto& a) { return a.is_tree; }); break;
            case SpeciesSelector::Invasive: select([](const auto& a) { return a.is_invasive; }); break;
            case SpeciesSelector::IucnStatus: select([&](const auto& a) { return a.iucn == *spec.status; }); break;
            case SpeciesSelector::Specialist:
                if (occupancy_fraction.size() != catalog.size()) {
                    throw ValidationError("indicator '" + spec.name + "' needs the specialist occupancy pre-pass");
                }
                def.species = specialist_species(occupancy_fraction, config.specialist_tau);
                break;
            case SpeciesSelector::Explicit:
                for (const auto& id : spec.species_ids) {
                    const auto idx = catalog.index_of(id);
                    if (!idx) {
                        throw ValidationError("indicator '" + spec.name + "' references unknown species '" + id + "'");
                    }
                    def.species.push_back(*idx);
                }
                std::sort(def.species.begin(), def.species.end());
                def.species.erase(std::unique(def.species.begin(), def.species.end()), def.species.end());
                break;
            case SpeciesSelector::StatusTable: break;
        }
        if (def.kind == IndicatorKind::AtLeastOne && def.species.empty()) {
            throw ValidationError("AT_LEAST_ONE indicator '" + spec.name + "' has an empty species set");
        }
        out.push_back(std::move(def));
    }
    return out;
}

RasterHeader indicator_header(const GridSpec& grid, const IndicatorDefinition& def) {
    switch (def.kind) {
        case IndicatorKind::Count:
            return RasterHeader::for_grid(grid, DType::F32, {"mean", "halfwidth"});
        case IndicatorKind::AtLeastOne:
            return RasterHeader::for_grid(grid, DType::F32, {"probability"});
        case IndicatorKind::MaxStatus:
            return RasterHeader::for_grid(grid, DType::I16, {"status_rank"}, double(kNoStatus));
    }
    throw ValidationError("unknown indicator kind");
}

void evaluate_cell_indicators(std::span<const double> probs, std::span<const IndicatorDefinition> defs,
                              const ThresholdSet& thresholds, const IucnStatusTable& table, CellIndex cell,
                              std::vector<double>& out) {
    std::vector<double> subset;
    std::optional<Assemblage> assemblage;
    for (const auto& def : defs) {
        switch (def.kind) {
            case IndicatorKind::Count: {
                const auto e = estimate_count(probs, def.species);
                out.push_back(e.mean);
                out.push_back(e.halfwidth);
                break;
            }
            case IndicatorKind::AtLeastOne: {
                subset.clear();
                for (auto s : def.species) subset.push_back(probs[s]);
                out.push_back(at_least_one_probability(subset));
                break;
            }
            case IndicatorKind::MaxStatus: {
                if (!assemblage) assemblage = apply_thresholds(probs, thresholds, cell);
                out.push_back(most_threatened_status(*assemblage, table).value_or(kNoStatus));
                break;
            }
        }
    }
}

void compute_indicator_tile(const Predictor& predictor, std::span<const IndicatorDefinition> defs,
                            const ThresholdSet& thresholds, const IucnStatusTable& table, const MetaTile& tile,
                            std::span<Raster> outputs) {
    if (outputs.size() != defs.size()) throw ValidationError("one output raster per indicator is required");
    if (outputs.empty()) return;
    const GridSpec& g = predictor.grid();
    // Outputs may cover the whole grid or just this tile.
    const CellIndex origin = raster_origin_in(g, outputs.front().header());
    std::vector<double> probs(predictor.species_count());
    std::vector<double> values;
    for (std::int64_t row = tile.rows.begin; row < tile.rows.end; ++row) {
        for (std::int64_t col = tile.cols.begin; col < tile.cols.end; ++col) {
            const CellIndex c{col, row};
            const CellIndex local{col - origin.col, row - origin.row};
            predictor.predict_cell(c, probs);
            values.clear();
            evaluate_cell_indicators(probs, defs, thresholds, table, c, values);
            std::size_t v = 0;
            for (std::size_t d = 0; d < defs.size(); ++d) {
                const std::size_t bands = outputs[d].header().band_count();
                for (std::size_t b = 0; b < bands; ++b) outputs[d].set(b, local, values[v++]);
            }
        }
    }
}

std::vector<IndicatorRaster> compute_indicator_map(const Predictor& predictor,
                                                   std::span<const IndicatorDefinition> defs,
                                                   const ThresholdSet& thresholds, const IucnStatusTable& table,
                                                   double tile_size_m, std::size_t workers) {
    const auto& g = predictor.grid();
    if (table.size() != predictor.species_count()) {
        throw ValidationError("status table does not match predictor species count");
    }
    if (!thresholds.covers(predictor.species_count())) {
        throw ValidationError("threshold set does not match predictor species count");
    }
    for (const auto& d : defs) {
        for (auto s : d.species) {
            if (s >= predictor.species_count()) throw ValidationError("indicator species index out of range");
        }
    }
    std::vector<Raster> rasters;
    rasters.reserve(defs.size());
    for (const auto& d : defs) rasters.emplace_back(indicator_header(g, d));
    const auto tiles = make_tiling(g, tile_size_m);
    schedule_tiles(tiles, workers, [&](const MetaTile& tile, std::size_t) {
        compute_indicator_tile(predictor, defs, thresholds, table, tile, rasters);
    });
    std::vector<IndicatorRaster> out;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        out.push_back({defs[i].name, defs[i].kind, std::move(rasters[i])});
    }
    return out;
}

}  // namespace atlas
