#include "atlas/evalsuite.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "atlas/error.hpp"
#include "json.hpp"

namespace atlas {

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // Ranks are 1-based; the tie group shares the average of i+1 .. j.
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;
    const double np = static_cast<double>(positives);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(negatives));
}

double fscore(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
    const std::set<std::size_t> p(predicted.begin(), predicted.end());
    const std::set<std::size_t> t(truth.begin(), truth.end());
    if (p.empty() && t.empty()) return 1.0;
    std::size_t both = 0;
    for (auto s : p) both += t.contains(s);
    return 2.0 * static_cast<double>(both) / static_cast<double>(p.size() + t.size());
}

double recall_at_k(const RankedAssemblage& ranked, std::span<const std::size_t> truth, std::size_t k) {
    const std::set<std::size_t> t(truth.begin(), truth.end());
    if (t.empty()) throw ValidationError("recall@k needs a nonempty truth set");
    if (k == 0) throw ValidationError("recall@k needs k >= 1");
    const std::size_t n = std::min(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += t.contains(ranked.species[i]);
    return static_cast<double>(hits) / static_cast<double>(t.size());
}

double habitat_accuracy(std::span<const EunisCode> preds, std::span<const EunisCode> truths, int level) {
    if (preds.size() != truths.size()) throw ValidationError("habitat_accuracy: length mismatch");
    if (preds.empty()) throw ValidationError("habitat_accuracy: no plots");
    if (level < 1 || level > 3) throw ValidationError("habitat level must be 1, 2 or 3");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (truths[i].level() != 3) throw ValidationError("habitat truths must be level-3 codes");
        hits += preds[i].truncate(level) == truths[i].truncate(level);
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

HabitatAccuracy habitat_accuracy_all(std::span<const EunisCode> preds, std::span<const EunisCode> truths) {
    return {habitat_accuracy(preds, truths, 1), habitat_accuracy(preds, truths, 2),
            habitat_accuracy(preds, truths, 3), preds.size()};
}

std::vector<std::size_t> truth_set(std::span<const std::uint8_t> truth) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) out.push_back(i);
    }
    return out;
}

double pairwise_sum(std::span<const double> v) noexcept {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean_fscore(std::span<const EvalPlot> plots, const ThresholdSet& thresholds) {
    if (plots.empty()) throw ValidationError("mean_fscore needs at least one plot");
    std::vector<double> f;
    f.reserve(plots.size());
    for (const auto& p : plots) {
        if (p.probs.size() != p.truth.size()) throw ValidationError("plot probability/truth length mismatch");
        const auto a = apply_thresholds(p.probs, thresholds, p.cell);
        f.push_back(fscore(a.species, truth_set(p.truth)));
    }
    return pairwise_sum(f) / static_cast<double>(f.size());
}

std::optional<double> micro_auc(std::span<const EvalPlot> plots) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const auto& p : plots) {
        if (p.probs.size() != p.truth.size()) throw ValidationError("plot probability/truth length mismatch");
        scores.insert(scores.end(), p.probs.begin(), p.probs.end());
        labels.insert(labels.end(), p.truth.begin(), p.truth.end());
    }
    return auc(scores, labels);
}

std::optional<double> macro_auc(std::span<const EvalPlot> plots) {
    if (plots.empty()) return std::nullopt;
    const std::size_t n = plots.front().probs.size();
    std::vector<double> per;
    std::vector<double> scores(plots.size());
    std::vector<std::uint8_t> labels(plots.size());
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < plots.size(); ++k) {
            if (plots[k].probs.size() != n || plots[k].truth.size() != n) {
                throw ValidationError("plots differ in catalog size");
            }
            scores[k] = plots[k].probs[s];
            labels[k] = plots[k].truth[s];
        }
        if (const auto a = auc(scores, labels)) per.push_back(*a);
    }
    if (per.empty()) return std::nullopt;
    return pairwise_sum(per) / static_cast<double>(per.size());
}

std::optional<double> mean_recall_at_k(std::span<const EvalPlot> plots, std::size_t k) {
    std::vector<double> r;
    for (const auto& p : plots) {
        const auto truth = truth_set(p.truth);
        if (truth.empty()) continue;
        r.push_back(recall_at_k(rank_all_species(p.probs), truth, k));
    }
    if (r.empty()) return std::nullopt;
    return pairwise_sum(r) / static_cast<double>(r.size());
}

SpeciesCoverage coverage_from_count(std::int64_t present, std::int64_t terrestrial, double cell_size_m) {
    SpeciesCoverage c;
    c.cells = present;
    c.fraction = terrestrial > 0 ? static_cast<double>(present) / static_cast<double>(terrestrial) : 0.0;
    c.area_m2 = static_cast<double>(present) * cell_size_m * cell_size_m;
    return c;
}

std::vector<SpeciesCoverage> coverage_statistics(const Predictor& predictor, const ThresholdSet& thresholds,
                                                 const TerrestrialMask* mask) {
    const auto& g = predictor.grid();
    if (mask && !mask->matches(g)) throw ValidationError("mask does not match the predictor grid");
    if (!thresholds.covers(predictor.species_count())) {
        throw ValidationError("threshold set does not match predictor species count");
    }
    std::vector<std::int64_t> counts(predictor.species_count(), 0);
    std::int64_t land = 0;
    std::vector<double> p(predictor.species_count());
    for (std::int64_t lin = 0; lin < g.cell_count(); ++lin) {
        const auto c = cell_at(g, lin);
        if (mask && !mask->is_land(c)) continue;
        ++land;
        predictor.predict_cell(c, p);
        for (std::size_t s = 0; s < p.size(); ++s) counts[s] += thresholds.present(s, p[s]);
    }
    std::vector<SpeciesCoverage> out;
    out.reserve(counts.size());
    for (auto n : counts) out.push_back(coverage_from_count(n, land, g.cell_size));
    return out;
}

MetricReport evaluate_plots(std::span<const EvalPlot> plots, const ThresholdSet& thresholds) {
    MetricReport r;
    r.plots = plots.size();
    if (plots.empty()) return r;
    r.auc = micro_auc(plots);
    r.auc_macro = macro_auc(plots);
    r.fscore = mean_fscore(plots, thresholds);
    r.recall_at_50 = mean_recall_at_k(plots, 50);
    r.recall_at_250 = mean_recall_at_k(plots, 250);
    return r;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    auto put = [&j](const char* key, const std::optional<double>& v) {
        if (v) {
            j[key] = *v;
        } else {
            j[key] = nullptr;
        }
    };
    put("auc", auc);
    put("auc_macro", auc_macro);
    put("fscore", fscore);
    put("recall@50", recall_at_50);
    put("recall@250", recall_at_250);
    j["plots"] = plots;
    if (habitat) {
        j["habitat_accuracy"] = {{"level1", habitat->level1},
                                 {"level2", habitat->level2},
                                 {"level3", habitat->level3},
                                 {"plots", habitat->plots}};
    } else {
        j["habitat_accuracy"] = nullptr;
    }
    return j.dump(2);
}

}  // namespace atlas
