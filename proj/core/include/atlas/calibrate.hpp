#pragma once

// Presence thresholds: one global F-score-maximizing cut, or per-species
// split-conformal cuts that bound the rate of omitting truly present species.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atlas/geogrid.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/sdm.hpp"

namespace atlas {

enum class ThresholdMode : std::uint8_t { GlobalFscore, Conformal };

std::string_view threshold_mode_name(ThresholdMode m) noexcept;
ThresholdMode parse_threshold_mode(std::string_view s);

class ThresholdSet {
public:
    ThresholdSet() = default;

    static ThresholdSet global(double t);
    // nullopt entries are NEVER: the species is never predicted present.
    static ThresholdSet conformal(std::vector<std::optional<double>> per_species, double alpha);

    ThresholdMode mode() const noexcept { return mode_; }
    double alpha() const noexcept { return alpha_; }
    double global_threshold() const noexcept { return global_; }
    const std::vector<std::optional<double>>& per_species() const noexcept { return per_species_; }

    // Global mode applies to any species count; conformal mode needs an exact match.
    bool covers(std::size_t species_count) const noexcept;
    std::optional<double> threshold(std::size_t species) const;
    bool present(std::size_t species, double p) const {
        const auto t = threshold(species);
        return t.has_value() && p >= *t;
    }

    // CSV with a leading comment line carrying a JSON object:
    //   # {"mode":"conformal","alpha":0.1}
    //   species_id,threshold
    //   sp0,0.25
    //   sp1,NEVER
    // Global mode writes the same threshold for every catalog species.
    std::string to_csv(const SpeciesCatalog& catalog) const;
    static ThresholdSet from_csv(std::istream& in, const SpeciesCatalog& catalog,
                                 const std::string& source = "<thresholds>");
    void write(const std::filesystem::path& path, const SpeciesCatalog& catalog) const;
    static ThresholdSet read(const std::filesystem::path& path, const SpeciesCatalog& catalog);

    friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;

private:
    ThresholdMode mode_ = ThresholdMode::GlobalFscore;
    double global_ = 0.5;
    double alpha_ = 0.0;
    std::vector<std::optional<double>> per_species_;
};

struct Assemblage {
    CellIndex cell;
    std::vector<std::size_t> species;     // ascending catalog index
    std::vector<double> probabilities;    // parallel to species, copied verbatim
};

// One validation or calibration plot: predicted probabilities and the
// observed 0/1 vector, both over the catalog.
struct LabeledVector {
    ProbabilityVector probs;
    std::vector<std::uint8_t> truth;
};

// Scans the distinct validation probabilities plus {0, 1} and returns the
// cut maximizing mean per-plot F1. Ties (within 1e-12) go to the smallest
// observed probability, falling back to the smallest of {0, 1}.
ThresholdSet fit_fscore_threshold(std::span<const LabeledVector> plots);

// Mean per-plot F1 of a single global threshold.
double mean_plot_fscore(std::span<const LabeledVector> plots, double threshold);

// Per species: with n calibration presences scored s_(1) <= ... <= s_(n),
// k = floor(alpha (n + 1)); the threshold is s_(k), or 0 when k = 0, or
// NEVER when n = 0.
ThresholdSet fit_conformal_thresholds(std::span<const LabeledVector> plots, double alpha);

// Single-species form of the rule above.
std::optional<double> conformal_threshold(std::vector<double> presence_scores, double alpha);

Assemblage apply_thresholds(std::span<const double> probs, const ThresholdSet& thresholds, CellIndex cell);

}  // namespace atlas
