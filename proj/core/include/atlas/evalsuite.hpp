#pragma once

// Presence/absence evaluation metrics and coverage statistics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atlas/calibrate.hpp"
#include "atlas/habitat.hpp"
#include "atlas/predictor.hpp"

namespace atlas {

// Rank-based AUC (Mann-Whitney U with mid-ranks for ties). nullopt when the
// labels hold only one class.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// 2|pred ∩ truth| / (|pred| + |truth|); two empty sets score 1. Inputs are
// species index lists in any order; duplicates are ignored.
double fscore(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

// |top-k ∩ truth| / |truth|. Rejects an empty truth set.
double recall_at_k(const RankedAssemblage& ranked, std::span<const std::size_t> truth, std::size_t k);

// Fraction of items whose level-truncated codes agree. Truths must be
// level 3; predictions at least the requested level.
double habitat_accuracy(std::span<const EunisCode> preds, std::span<const EunisCode> truths, int level);

struct EvalPlot {
    std::string plot_id;
    CellIndex cell;
    ProbabilityVector probs;
    std::vector<std::uint8_t> truth;
};

std::vector<std::size_t> truth_set(std::span<const std::uint8_t> truth);

// Mean over plots of fscore(thresholded prediction, truth).
double mean_fscore(std::span<const EvalPlot> plots, const ThresholdSet& thresholds);

// Pooled over every (plot, species) pair.
std::optional<double> micro_auc(std::span<const EvalPlot> plots);
// Mean over species that have both presences and absences.
std::optional<double> macro_auc(std::span<const EvalPlot> plots);

// Mean Recall@K over plots with at least one true presence, ranking the
// full catalog by probability.
std::optional<double> mean_recall_at_k(std::span<const EvalPlot> plots, std::size_t k);

// Sum with pairwise (cascade) reduction; fixed order, so reproducible.
double pairwise_sum(std::span<const double> values) noexcept;

struct SpeciesCoverage {
    std::int64_t cells = 0;
    double fraction = 0.0;  // of terrestrial cells
    double area_m2 = 0.0;
};

SpeciesCoverage coverage_from_count(std::int64_t present_cells, std::int64_t terrestrial_cells, double cell_size_m);

// Per species over the grid (land cells only when a mask is given).
std::vector<SpeciesCoverage> coverage_statistics(const Predictor& predictor, const ThresholdSet& thresholds,
                                                 const TerrestrialMask* mask = nullptr);

struct HabitatAccuracy {
    double level1 = 0.0;
    double level2 = 0.0;
    double level3 = 0.0;
    std::size_t plots = 0;
};

struct MetricReport {
    std::optional<double> auc;        // micro
    std::optional<double> auc_macro;
    std::optional<double> fscore;
    std::optional<double> recall_at_50;
    std::optional<double> recall_at_250;
    std::size_t plots = 0;
    std::optional<HabitatAccuracy> habitat;

    // {"auc":..,"auc_macro":..,"fscore":..,"recall@50":..,"recall@250":..,
    //  "plots":N,"habitat_accuracy":{"level1":..,"level2":..,"level3":..,"plots":M}}
    std::string to_json() const;
};

MetricReport evaluate_plots(std::span<const EvalPlot> plots, const ThresholdSet& thresholds);

HabitatAccuracy habitat_accuracy_all(std::span<const EunisCode> preds, std::span<const EunisCode> truths);

}  // namespace atlas
