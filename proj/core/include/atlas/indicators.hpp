#pragma once

// Biodiversity indicators from per-cell species probabilities.
//
// A count indicator n_S(x) over a species subset S is a sum of independent,
// non-identical Bernoulli variables (Poisson binomial), so its mean and
// variance are sums of p_i and p_i(1 - p_i). Maps carry the mean and a
// 2-sigma half-width. AT_LEAST_ONE layers carry 1 - prod(1 - p_i).
// MAX_STATUS layers carry the highest IUCN rank among thresholded species.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atlas/calibrate.hpp"
#include "atlas/geogrid.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/predictor.hpp"
#include "atlas/raster.hpp"

namespace atlas {

double count_mean(std::span<const double> p);
double count_variance(std::span<const double> p);
double confidence_halfwidth(double variance);
double at_least_one_probability(std::span<const double> p);

inline constexpr std::size_t kMaxOracleSpecies = 25;

// Exact Poisson binomial pmf over counts 0..|S| by sequential convolution.
std::vector<double> brute_force_poisson_binomial(std::span<const double> p);

// Per-species rank, NA = -1.
using IucnStatusTable = std::vector<int>;
IucnStatusTable status_table(const SpeciesCatalog& catalog);

inline constexpr int kNoStatus = -1;

// Highest rank >= 0 among present species, or nullopt.
std::optional<int> most_threatened_status(const Assemblage& assemblage, const IucnStatusTable& table);

enum class IndicatorKind : std::uint8_t { Count, AtLeastOne, MaxStatus };
std::string_view indicator_kind_name(IndicatorKind k) noexcept;

struct IndicatorDefinition {
    std::string name;
    IndicatorKind kind = IndicatorKind::Count;
    std::vector<std::size_t> species;  // ascending catalog indices; ignored for MAX_STATUS
};

struct IndicatorEstimate {
    double mean = 0.0;
    double sigma = 0.0;
    double halfwidth = 0.0;
};

IndicatorEstimate estimate_count(std::span<const double> cell_probs, std::span<const std::size_t> subset);

// Fraction of land cells (all cells without a mask) where each species is
// thresholded present.
std::vector<double> occupancy_fractions(const Predictor& predictor, const ThresholdSet& thresholds,
                                        const TerrestrialMask* mask = nullptr);

// Species predicted present somewhere, but in fewer than tau of the cells.
std::vector<std::size_t> specialist_species(std::span<const double> occupancy_fraction, double tau);

inline constexpr double kDefaultSpecialistTau = 0.001;

// How an indicator's species subset is chosen from the catalog.
enum class SpeciesSelector : std::uint8_t {
    All,
    EuDirective,
    Threatened,   // IUCN VU, EN or CR
    Tree,
    Invasive,
    Specialist,
    IucnStatus,   // exactly one status, e.g. EN
    Explicit,     // listed species ids
    StatusTable,  // MAX_STATUS over the catalog's IUCN table
};

struct IndicatorSpec {
    std::string name;
    IndicatorKind kind = IndicatorKind::Count;
    SpeciesSelector selector = SpeciesSelector::All;
    std::optional<atlas::IucnStatus> status;
    std::vector<std::string> species_ids;
};

// JSON form:
//   {"specialist_tau": 0.001,
//    "indicators": [
//      {"name": "richness", "kind": "COUNT", "attribute": "all"},
//      {"name": "en_present", "kind": "AT_LEAST_ONE", "iucn_status": "EN"},
//      {"name": "custom", "kind": "COUNT", "species": ["sp1", "sp2"]},
//      {"name": "most_threatened", "kind": "MAX_STATUS", "status_table": "catalog"}]}
// attribute is one of all, eu_directive, threatened, tree, invasive, specialist.
struct IndicatorConfig {
    double specialist_tau = kDefaultSpecialistTau;
    std::vector<IndicatorSpec> indicators;

    // Species richness, EU directive, threatened, most threatened, trees,
    // invasives, specialists.
    static IndicatorConfig standard();
    static IndicatorConfig parse_json(std::string_view text, const std::string& source = "<indicators>");
    static IndicatorConfig read(const std::filesystem::path& path);

    bool needs_occupancy() const noexcept;
};

// Resolves selectors against the catalog. occupancy_fraction is only read
// when a specialist selector is present. Rejects unknown species ids and
// empty AT_LEAST_ONE subsets.
std::vector<IndicatorDefinition> resolve_indicators(const IndicatorConfig& config, const SpeciesCatalog& catalog,
                                                    std::span<const double> occupancy_fraction = {});

// Band layout of an indicator raster.
struct IndicatorRaster {
    std::string name;
    IndicatorKind kind = IndicatorKind::Count;
    Raster raster;
};

// COUNT: f32 bands {mean, halfwidth}. AT_LEAST_ONE: f32 band {probability}.
// MAX_STATUS: i16 band {status_rank} with nodata -1.
RasterHeader indicator_header(const GridSpec& grid, const IndicatorDefinition& def);

// Values of every definition for one cell, in band order, appended to out.
void evaluate_cell_indicators(std::span<const double> probs, std::span<const IndicatorDefinition> defs,
                              const ThresholdSet& thresholds, const IucnStatusTable& table, CellIndex cell,
                              std::vector<double>& out);

// Fills the tile's cells of every output raster (one per definition).
void compute_indicator_tile(const Predictor& predictor, std::span<const IndicatorDefinition> defs,
                            const ThresholdSet& thresholds, const IucnStatusTable& table, const MetaTile& tile,
                            std::span<Raster> outputs);

std::vector<IndicatorRaster> compute_indicator_map(const Predictor& predictor,
                                                   std::span<const IndicatorDefinition> defs,
                                                   const ThresholdSet& thresholds, const IucnStatusTable& table,
                                                   double tile_size_m = kDefaultTileSizeM, std::size_t workers = 1);

}  // namespace atlas
