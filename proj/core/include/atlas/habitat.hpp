#pragma once

// Habitat classification from probability-ranked species assemblages, with
// rollup from EUNIS level 3 to levels 2 and 1.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "atlas/calibrate.hpp"
#include "atlas/geogrid.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/predictor.hpp"
#include "atlas/raster.hpp"

namespace atlas {

// A EUNIS habitat code: an uppercase letter followed by up to two
// alphanumerics. The level is the code length.
class EunisCode {
public:
    EunisCode() = default;
    // Throws ValidationError for malformed codes.
    explicit EunisCode(std::string code);

    const std::string& str() const noexcept { return code_; }
    int level() const noexcept { return static_cast<int>(code_.size()); }
    // Prefix of the given level (at most this code's level).
    EunisCode truncate(int level) const;

    friend bool operator==(const EunisCode&, const EunisCode&) = default;
    friend auto operator<=>(const EunisCode&, const EunisCode&) = default;

private:
    std::string code_;
};

struct RankedAssemblage {
    std::vector<std::size_t> species;   // descending probability, ties by ascending index
    std::vector<double> probabilities;  // parallel to species

    std::size_t size() const noexcept { return species.size(); }
    bool empty() const noexcept { return species.empty(); }
};

RankedAssemblage rank_species(std::span<const double> probs, const ThresholdSet& thresholds);
// Ranks the full catalog with no threshold.
RankedAssemblage rank_all_species(std::span<const double> probs);
RankedAssemblage truncate_top_k(const RankedAssemblage& assemblage, std::size_t k);

inline constexpr std::size_t kDefaultTopK = 100;

struct HabitatScore {
    EunisCode code;
    double score = 0.0;
};

// Any model mapping a top-K ranked assemblage to per-habitat scores.
class HabitatClassifier {
public:
    virtual ~HabitatClassifier() = default;
    // Level-3 classes in ascending code order.
    virtual const std::vector<EunisCode>& classes() const noexcept = 0;
    // One finite score per class, same order as classes(); higher is better.
    virtual std::vector<double> scores(const RankedAssemblage& top_k) const = 0;
};

struct LabeledPlot {
    std::string plot_id;
    EunisCode habitat;
    std::vector<std::size_t> species;
};

// Incidence-based stand-in: log class prior plus, for every species in the
// assemblage, log((count + 1) / (n_class + 2)).
class StandinHabitatModel final : public HabitatClassifier {
public:
    static constexpr double kSmoothing = 1.0;

    const std::vector<EunisCode>& classes() const noexcept override { return classes_; }
    std::vector<double> scores(const RankedAssemblage& top_k) const override;

    std::size_t species_count() const noexcept { return species_count_; }
    const std::vector<std::size_t>& class_plot_counts() const noexcept { return plot_counts_; }
    std::vector<double> class_priors() const;
    // Smoothed P(species present | class).
    double incidence(std::size_t class_index, std::size_t species) const;

    friend StandinHabitatModel train_standin(std::span<const LabeledPlot>, std::size_t);

private:
    std::size_t species_count_ = 0;
    std::size_t total_plots_ = 0;
    std::vector<EunisCode> classes_;
    std::vector<std::size_t> plot_counts_;
    std::vector<std::vector<std::size_t>> species_counts_;  // [class][species]
};

// Needs two or more distinct level-3 labels and nonempty species sets.
StandinHabitatModel train_standin(std::span<const LabeledPlot> plots, std::size_t species_count);

// plot_id,eunis_level3,species_id with one row per plot-species pair.
std::vector<LabeledPlot> read_labeled_plots(const std::filesystem::path& path, const SpeciesCatalog& catalog);
std::vector<LabeledPlot> parse_labeled_plots(std::istream& in, const SpeciesCatalog& catalog,
                                             const std::string& source = "<plots>");
std::string labeled_plots_to_csv(std::span<const LabeledPlot> plots, const SpeciesCatalog& catalog);

struct HabitatPrediction {
    EunisCode code;
    double score = 0.0;  // posterior-style softmax weight of the winning class
};

// Argmax over the classifier's scores of the first k species. Ties go to the
// lexicographically smallest code. With an empty assemblage the stand-in
// reduces to its class priors.
HabitatPrediction classify(const RankedAssemblage& assemblage, const HabitatClassifier& model,
                           std::size_t k = kDefaultTopK);

// Level-3 to (level-1, level-2). Prefix truncation unless an explicit
// table has an entry for the code.
class HabitatHierarchy {
public:
    HabitatHierarchy() = default;
    // level3,level2,level1
    static HabitatHierarchy read(const std::filesystem::path& path);
    static HabitatHierarchy parse(std::istream& in, const std::string& source = "<hierarchy>");

    void add(const EunisCode& level3, const EunisCode& level2, const EunisCode& level1);
    std::pair<EunisCode, EunisCode> rollup(const EunisCode& level3) const;
    EunisCode at_level(const EunisCode& level3, int level) const;

private:
    std::map<EunisCode, std::pair<EunisCode, EunisCode>> table_;
};

// Prefix rollup: "R22" -> ("R", "R2").
std::pair<EunisCode, EunisCode> rollup(const EunisCode& level3);
std::pair<EunisCode, EunisCode> rollup(std::string_view level3);

// Per-cell rank -> truncate -> classify, and the level-2 / level-1 layers.
struct HabitatMaps {
    // class_tables[0] is level 1, [1] level 2, [2] level 3; raster values
    // index into them.
    std::array<std::vector<EunisCode>, 3> class_tables;
    std::array<Raster, 3> layers;  // i16, band "class", same order
};

std::array<std::vector<EunisCode>, 3> habitat_class_tables(const HabitatClassifier& model,
                                                           const HabitatHierarchy& hierarchy);

HabitatPrediction classify_cell(std::span<const double> probs, const ThresholdSet& thresholds,
                                const HabitatClassifier& model, std::size_t k);

// Fills the tile's cells of the three i16 layers (whole-grid or tile-sized).
void compute_habitat_tile(const Predictor& predictor, const ThresholdSet& thresholds,
                          const HabitatClassifier& model, const HabitatHierarchy& hierarchy, std::size_t k,
                          const std::array<std::vector<EunisCode>, 3>& tables, const MetaTile& tile,
                          std::span<Raster, 3> layers);

HabitatMaps compute_habitat_map(const Predictor& predictor, const ThresholdSet& thresholds,
                                const HabitatClassifier& model, std::size_t k = kDefaultTopK,
                                const HabitatHierarchy& hierarchy = {}, double tile_size_m = kDefaultTileSizeM,
                                std::size_t workers = 1);

// index,code
std::string class_table_csv(const std::vector<EunisCode>& table);

}  // namespace atlas
