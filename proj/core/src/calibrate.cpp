#include "atlas/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "atlas/error.hpp"
#include "csv.hpp"
#include "json.hpp"

namespace atlas {
namespace {

void check_plots(std::span<const LabeledVector> plots) {
    if (plots.empty()) throw ValidationError("at least one plot is required");
    const std::size_t n = plots.front().probs.size();
    for (const auto& p : plots) {
        if (p.probs.size() != n || p.truth.size() != n) {
            throw ValidationError("plots must share one catalog size for probabilities and truth");
        }
        for (double v : p.probs) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("probabilities must lie in [0,1]");
        }
    }
}

double plot_f1(std::size_t tp, std::size_t predicted, std::size_t truth) noexcept {
    if (predicted + truth == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + truth);
}

}  // namespace

std::string_view threshold_mode_name(ThresholdMode m) noexcept {
    return m == ThresholdMode::GlobalFscore ? "global_fscore" : "conformal";
}

ThresholdMode parse_threshold_mode(std::string_view s) {
    if (s == "global_fscore") return ThresholdMode::GlobalFscore;
    if (s == "conformal") return ThresholdMode::Conformal;
    throw ValidationError("unknown threshold mode '" + std::string(s) + "'");
}

ThresholdSet ThresholdSet::global(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("global threshold must lie in [0,1]");
    ThresholdSet s;
    s.mode_ = ThresholdMode::GlobalFscore;
    s.global_ = t;
    return s;
}

ThresholdSet ThresholdSet::conformal(std::vector<std::optional<double>> per_species, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    for (const auto& t : per_species) {
        if (t && !(*t >= 0.0 && *t <= 1.0)) throw ValidationError("thresholds must lie in [0,1]");
    }
    ThresholdSet s;
    s.mode_ = ThresholdMode::Conformal;
    s.alpha_ = alpha;
    s.per_species_ = std::move(per_species);
    return s;
}

bool ThresholdSet::covers(std::size_t species_count) const noexcept {
    return mode_ == ThresholdMode::GlobalFscore || per_species_.size() == species_count;
}

std::optional<double> ThresholdSet::threshold(std::size_t species) const {
    if (mode_ == ThresholdMode::GlobalFscore) return global_;
    return per_species_.at(species);
}

std::string ThresholdSet::to_csv(const SpeciesCatalog& catalog) const {
    if (!covers(catalog.size())) throw ValidationError("threshold set does not match the catalog size");
    nlohmann::json meta;
    meta["mode"] = threshold_mode_name(mode_);
    if (mode_ == ThresholdMode::Conformal) {
        meta["alpha"] = alpha_;
    } else {
        meta["alpha"] = nullptr;
        meta["threshold"] = global_;
    }
    std::ostringstream out;
    out << "# " << meta.dump() << "\n";
    out << "species_id,threshold\n";
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const auto t = threshold(i);
        out << catalog.id(i) << ',' << (t ? csv::format_double(*t) : std::string("NEVER")) << '\n';
    }
    return out.str();
}

ThresholdSet ThresholdSet::from_csv(std::istream& in, const SpeciesCatalog& catalog, const std::string& source) {
    const auto table = csv::parse(in, source);
    if (table.comments.empty()) throw ValidationError(source + ": missing threshold metadata comment line");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(table.comments.front());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(source + ": threshold metadata is not JSON: " + e.what());
    }
    const auto mode = parse_threshold_mode(meta.value("mode", std::string()));
    const auto c_id = table.column("species_id");
    const auto c_t = table.column("threshold");
    std::vector<std::optional<double>> per(catalog.size());
    std::vector<bool> seen(catalog.size(), false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + ":" + std::to_string(table.line_numbers[r]);
        const auto idx = catalog.index_of(row[c_id]);
        if (!idx) throw ValidationError(ctx + ": unknown species '" + row[c_id] + "'");
        if (seen[*idx]) throw ValidationError(ctx + ": duplicate species '" + row[c_id] + "'");
        seen[*idx] = true;
        if (row[c_t] != "NEVER") per[*idx] = csv::parse_double(row[c_t], ctx);
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw ValidationError(source + ": no threshold for species '" + catalog.id(i) + "'");
    }
    if (mode == ThresholdMode::GlobalFscore) {
        if (!meta.contains("threshold") || !meta["threshold"].is_number()) {
            throw ValidationError(source + ": global_fscore thresholds need a numeric 'threshold'");
        }
        return global(meta["threshold"].get<double>());
    }
    if (!meta.contains("alpha") || !meta["alpha"].is_number()) {
        throw ValidationError(source + ": conformal thresholds need a numeric 'alpha'");
    }
    return conformal(std::move(per), meta["alpha"].get<double>());
}

void ThresholdSet::write(const std::filesystem::path& path, const SpeciesCatalog& catalog) const {
    csv::write_file(path, to_csv(catalog));
}

ThresholdSet ThresholdSet::read(const std::filesystem::path& path, const SpeciesCatalog& catalog) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open thresholds " + path.string());
    return from_csv(in, catalog, path.string());
}

double mean_plot_fscore(std::span<const LabeledVector> plots, double threshold) {
    check_plots(plots);
    double sum = 0.0;
    for (const auto& p : plots) {
        std::size_t tp = 0, pred = 0, truth = 0;
        for (std::size_t i = 0; i < p.probs.size(); ++i) {
            const bool yes = p.probs[i] >= threshold;
            pred += yes;
            truth += p.truth[i] != 0;
            tp += yes && p.truth[i] != 0;
        }
        sum += plot_f1(tp, pred, truth);
    }
    return sum / static_cast<double>(plots.size());
}

ThresholdSet fit_fscore_threshold(std::span<const LabeledVector> plots) {
    check_plots(plots);
    std::size_t presences = 0;
    for (const auto& p : plots) {
        for (auto y : p.truth) presences += y != 0;
    }
    if (presences == 0) throw ValidationError("F-score threshold needs at least one true presence");

    // Sweep candidates from high to low. Entries are consumed once their
    // probability reaches the current cut, so per-plot counts stay exact
    // integers and each candidate costs one pass over the plots.
    struct Entry {
        double p;
        std::uint32_t plot;
        bool truth;
    };
    std::vector<Entry> entries;
    std::vector<std::size_t> truth_count(plots.size(), 0);
    for (std::uint32_t k = 0; k < plots.size(); ++k) {
        const auto& pl = plots[k];
        for (std::size_t i = 0; i < pl.probs.size(); ++i) {
            entries.push_back({pl.probs[i], k, pl.truth[i] != 0});
            truth_count[k] += pl.truth[i] != 0;
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.p > b.p; });

    std::vector<double> candidates;
    candidates.reserve(entries.size() + 2);
    candidates.push_back(1.0);
    for (const auto& e : entries) candidates.push_back(e.p);
    candidates.push_back(0.0);
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<std::size_t> tp(plots.size(), 0), pred(plots.size(), 0);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    std::size_t next = 0;
    for (const double t : candidates) {
        while (next < entries.size() && entries[next].p >= t) {
            const auto& e = entries[next++];
            ++pred[e.plot];
            tp[e.plot] += e.truth;
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < plots.size(); ++k) sum += plot_f1(tp[k], pred[k], truth_count[k]);
        scores.push_back(sum / static_cast<double>(plots.size()));
    }

    // Scores within 1e-12 of the best are ties; that keeps the choice stable
    // under reordering or duplicating plots. Ties go to the smallest observed
    // probability; the 0 and 1 sentinels win only when no observed value ties.
    const double best = *std::max_element(scores.begin(), scores.end());
    auto observed = [&](double t) {
        return std::binary_search(entries.begin(), entries.end(), Entry{t, 0, false},
                                  [](const Entry& a, const Entry& b) { return a.p > b.p; });
    };
    std::optional<double> pick_observed, pick_any;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (scores[i] < best - 1e-12) continue;
        pick_any = candidates[i];  // descending, so the last hit is the smallest
        if (observed(candidates[i])) pick_observed = candidates[i];
    }
    return ThresholdSet::global(pick_observed ? *pick_observed : *pick_any);
}

std::optional<double> conformal_threshold(std::vector<double> scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    if (scores.empty()) return std::nullopt;
    std::sort(scores.begin(), scores.end());
    const double n1 = static_cast<double>(scores.size() + 1);
    // The epsilon absorbs products such as 0.29 * 100 landing just below an integer.
    auto k = static_cast<std::size_t>(std::floor(alpha * n1 + 1e-9));
    k = std::min(k, scores.size());
    if (k == 0) return 0.0;
    return scores[k - 1];
}

ThresholdSet fit_conformal_thresholds(std::span<const LabeledVector> plots, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    check_plots(plots);
    const std::size_t n = plots.front().probs.size();
    std::vector<std::vector<double>> scores(n);
    for (const auto& p : plots) {
        for (std::size_t i = 0; i < n; ++i) {
            if (p.truth[i]) scores[i].push_back(p.probs[i]);
        }
    }
    std::vector<std::optional<double>> per(n);
    for (std::size_t i = 0; i < n; ++i) per[i] = conformal_threshold(std::move(scores[i]), alpha);
    return ThresholdSet::conformal(std::move(per), alpha);
}

Assemblage apply_thresholds(std::span<const double> probs, const ThresholdSet& thresholds, CellIndex cell) {
    if (!thresholds.covers(probs.size())) {
        throw ValidationError("threshold set covers a different number of species than the probability vector");
    }
    Assemblage a;
    a.cell = cell;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (thresholds.present(i, probs[i])) {
            a.species.push_back(i);
            a.probabilities.push_back(probs[i]);
        }
    }
    return a;
}

}  // namespace atlas
