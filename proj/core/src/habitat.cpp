#include "atlas/habitat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/scheduler.hpp"
#include "csv.hpp"

namespace atlas {

EunisCode::EunisCode(std::string code) : code_(std::move(code)) {
    if (code_.empty() || code_.size() > 3) {
        throw ValidationError("malformed EUNIS code '" + code_ + "': expected 1 to 3 characters");
    }
    if (!std::isupper(static_cast<unsigned char>(code_[0]))) {
        throw ValidationError("malformed EUNIS code '" + code_ + "': must start with an uppercase letter");
    }
    for (std::size_t i = 1; i < code_.size(); ++i) {
        if (!std::isalnum(static_cast<unsigned char>(code_[i]))) {
            throw ValidationError("malformed EUNIS code '" + code_ + "': non-alphanumeric character");
        }
    }
}

EunisCode EunisCode::truncate(int level) const {
    if (level < 1 || level > this->level()) {
        throw ValidationError("cannot truncate '" + code_ + "' to level " + std::to_string(level));
    }
    return EunisCode(code_.substr(0, static_cast<std::size_t>(level)));
}

namespace {

RankedAssemblage rank_filtered(std::span<const double> probs, const ThresholdSet* thresholds) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!thresholds || thresholds->present(i, probs[i])) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });
    RankedAssemblage r;
    r.species = std::move(idx);
    r.probabilities.reserve(r.species.size());
    for (auto s : r.species) r.probabilities.push_back(probs[s]);
    return r;
}

}  // namespace

RankedAssemblage rank_species(std::span<const double> probs, const ThresholdSet& thresholds) {
    if (!thresholds.covers(probs.size())) {
        throw ValidationError("threshold set does not match the probability vector");
    }
    return rank_filtered(probs, &thresholds);
}

RankedAssemblage rank_all_species(std::span<const double> probs) { return rank_filtered(probs, nullptr); }

RankedAssemblage truncate_top_k(const RankedAssemblage& a, std::size_t k) {
    if (k == 0) throw ValidationError("top-k must be at least 1");
    const std::size_t n = std::min(k, a.size());
    RankedAssemblage r;
    r.species.assign(a.species.begin(), a.species.begin() + static_cast<std::ptrdiff_t>(n));
    r.probabilities.assign(a.probabilities.begin(), a.probabilities.begin() + static_cast<std::ptrdiff_t>(n));
    return r;
}

std::vector<double> StandinHabitatModel::class_priors() const {
    std::vector<double> p(classes_.size());
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        p[c] = static_cast<double>(plot_counts_[c]) / static_cast<double>(total_plots_);
    }
    return p;
}

double StandinHabitatModel::incidence(std::size_t c, std::size_t s) const {
    return (static_cast<double>(species_counts_.at(c).at(s)) + kSmoothing) /
           (static_cast<double>(plot_counts_.at(c)) + 2.0 * kSmoothing);
}

std::vector<double> StandinHabitatModel::scores(const RankedAssemblage& top_k) const {
    std::vector<double> out(classes_.size());
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        double score = std::log(static_cast<double>(plot_counts_[c]) / static_cast<double>(total_plots_));
        for (auto s : top_k.species) {
            if (s >= species_count_) throw ValidationError("assemblage species index outside the model catalog");
            score += std::log(incidence(c, s));
        }
        out[c] = score;
    }
    return out;
}

StandinHabitatModel train_standin(std::span<const LabeledPlot> plots, std::size_t species_count) {
    if (species_count == 0) throw ValidationError("habitat model needs a nonempty catalog");
    std::set<EunisCode> labels;
    for (const auto& p : plots) {
        if (p.habitat.level() != 3) {
            throw ValidationError("plot '" + p.plot_id + "' label '" + p.habitat.str() + "' is not level 3");
        }
        if (p.species.empty()) throw ValidationError("plot '" + p.plot_id + "' has no species");
        for (auto s : p.species) {
            if (s >= species_count) throw ValidationError("plot '" + p.plot_id + "' species index out of range");
        }
        labels.insert(p.habitat);
    }
    if (labels.size() < 2) throw ValidationError("habitat training needs at least two distinct habitat labels");

    StandinHabitatModel m;
    m.species_count_ = species_count;
    m.total_plots_ = plots.size();
    m.classes_.assign(labels.begin(), labels.end());
    m.plot_counts_.assign(m.classes_.size(), 0);
    m.species_counts_.assign(m.classes_.size(), std::vector<std::size_t>(species_count, 0));
    for (const auto& p : plots) {
        const auto c = static_cast<std::size_t>(
            std::lower_bound(m.classes_.begin(), m.classes_.end(), p.habitat) - m.classes_.begin());
        ++m.plot_counts_[c];
        std::set<std::size_t> unique(p.species.begin(), p.species.end());
        for (auto s : unique) ++m.species_counts_[c][s];
    }
    return m;
}

std::vector<LabeledPlot> parse_labeled_plots(std::istream& in, const SpeciesCatalog& catalog,
                                             const std::string& source) {
    const auto table = csv::parse(in, source);
    const auto c_plot = table.column("plot_id");
    const auto c_code = table.column("eunis_level3");
    const auto c_sp = table.column("species_id");
    // Plots keep the order of their first row.
    std::vector<LabeledPlot> out;
    std::map<std::string, std::size_t> slot;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + ":" + std::to_string(table.line_numbers[r]);
        EunisCode code;
        try {
            code = EunisCode(row[c_code]);
        } catch (const ValidationError& e) {
            throw ValidationError(ctx + ": " + e.what());
        }
        if (code.level() != 3) throw ValidationError(ctx + ": habitat label must be level 3");
        const auto idx = catalog.index_of(row[c_sp]);
        if (!idx) throw ValidationError(ctx + ": unknown species '" + row[c_sp] + "'");
        auto [it, inserted] = slot.try_emplace(row[c_plot], out.size());
        if (inserted) out.emplace_back();
        auto& plot = out[it->second];
        if (inserted) {
            plot.plot_id = row[c_plot];
            plot.habitat = code;
        } else if (!(plot.habitat == code)) {
            throw ValidationError(ctx + ": plot '" + row[c_plot] + "' has conflicting habitat labels");
        }
        plot.species.push_back(*idx);
    }
    for (auto& p : out) {
        std::sort(p.species.begin(), p.species.end());
        p.species.erase(std::unique(p.species.begin(), p.species.end()), p.species.end());
    }
    return out;
}

std::vector<LabeledPlot> read_labeled_plots(const std::filesystem::path& path, const SpeciesCatalog& catalog) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open labeled plots " + path.string());
    return parse_labeled_plots(in, catalog, path.string());
}

std::string labeled_plots_to_csv(std::span<const LabeledPlot> plots, const SpeciesCatalog& catalog) {
    std::ostringstream out;
    out << "plot_id,eunis_level3,species_id\n";
    for (const auto& p : plots) {
        for (auto s : p.species) out << p.plot_id << ',' << p.habitat.str() << ',' << catalog.id(s) << '\n';
    }
    return out.str();
}

HabitatPrediction classify(const RankedAssemblage& assemblage, const HabitatClassifier& model, std::size_t k) {
    const auto top = truncate_top_k(assemblage, k);
    const auto scores = model.scores(top);
    const auto& classes = model.classes();
    if (classes.empty() || scores.size() != classes.size()) {
        throw ValidationError("habitat classifier returned an inconsistent score vector");
    }
    // classes() is sorted, so the first maximum is the smallest code.
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[best]) best = c;
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw ValidationError("habitat classifier returned a non-finite score");
    }
    double norm = 0.0;
    for (double s : scores) norm += std::exp(s - scores[best]);
    return {classes[best], 1.0 / norm};
}

HabitatHierarchy HabitatHierarchy::parse(std::istream& in, const std::string& source) {
    const auto table = csv::parse(in, source);
    const auto c3 = table.column("level3");
    const auto c2 = table.column("level2");
    const auto c1 = table.column("level1");
    HabitatHierarchy h;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        try {
            h.add(EunisCode(row[c3]), EunisCode(row[c2]), EunisCode(row[c1]));
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(table.line_numbers[r]) + ": " + e.what());
        }
    }
    return h;
}

HabitatHierarchy HabitatHierarchy::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open hierarchy " + path.string());
    return parse(in, path.string());
}

void HabitatHierarchy::add(const EunisCode& level3, const EunisCode& level2, const EunisCode& level1) {
    if (level3.level() != 3 || level2.level() != 2 || level1.level() != 1) {
        throw ValidationError("hierarchy row must list codes of levels 3, 2 and 1");
    }
    table_[level3] = {level1, level2};
}

std::pair<EunisCode, EunisCode> HabitatHierarchy::rollup(const EunisCode& level3) const {
    if (const auto it = table_.find(level3); it != table_.end()) return it->second;
    return atlas::rollup(level3);
}

EunisCode HabitatHierarchy::at_level(const EunisCode& level3, int level) const {
    if (level == 3) return level3;
    const auto [l1, l2] = rollup(level3);
    if (level == 2) return l2;
    if (level == 1) return l1;
    throw ValidationError("habitat level must be 1, 2 or 3");
}

std::pair<EunisCode, EunisCode> rollup(const EunisCode& level3) {
    if (level3.level() != 3) throw ValidationError("rollup needs a level-3 code, got '" + level3.str() + "'");
    return {level3.truncate(1), level3.truncate(2)};
}

std::pair<EunisCode, EunisCode> rollup(std::string_view level3) { return rollup(EunisCode(std::string(level3))); }

std::array<std::vector<EunisCode>, 3> habitat_class_tables(const HabitatClassifier& model,
                                                           const HabitatHierarchy& hierarchy) {
    std::array<std::set<EunisCode>, 3> sets;
    for (const auto& c : model.classes()) {
        const auto [l1, l2] = hierarchy.rollup(c);
        sets[0].insert(l1);
        sets[1].insert(l2);
        sets[2].insert(c);
    }
    std::array<std::vector<EunisCode>, 3> out;
    for (int i = 0; i < 3; ++i) out[i].assign(sets[i].begin(), sets[i].end());
    if (out[2].size() > 32767) throw ValidationError("too many habitat classes for an i16 raster");
    return out;
}

HabitatPrediction classify_cell(std::span<const double> probs, const ThresholdSet& thresholds,
                                const HabitatClassifier& model, std::size_t k) {
    return classify(truncate_top_k(rank_species(probs, thresholds), k), model, k);
}

void compute_habitat_tile(const Predictor& predictor, const ThresholdSet& thresholds,
                          const HabitatClassifier& model, const HabitatHierarchy& hierarchy, std::size_t k,
                          const std::array<std::vector<EunisCode>, 3>& tables, const MetaTile& tile,
                          std::span<Raster, 3> layers) {
    const GridSpec& g = predictor.grid();
    const CellIndex origin = raster_origin_in(g, layers[0].header());
    auto index_of = [](const std::vector<EunisCode>& table, const EunisCode& code) {
        const auto it = std::lower_bound(table.begin(), table.end(), code);
        if (it == table.end() || !(*it == code)) throw ValidationError("habitat code missing from class table");
        return static_cast<double>(it - table.begin());
    };
    std::vector<double> probs(predictor.species_count());
    for (std::int64_t row = tile.rows.begin; row < tile.rows.end; ++row) {
        for (std::int64_t col = tile.cols.begin; col < tile.cols.end; ++col) {
            const CellIndex c{col, row};
            predictor.predict_cell(c, probs);
            const auto pred = classify_cell(probs, thresholds, model, k);
            const auto [l1, l2] = hierarchy.rollup(pred.code);
            const CellIndex local{col - origin.col, row - origin.row};
            layers[0].set(0, local, index_of(tables[0], l1));
            layers[1].set(0, local, index_of(tables[1], l2));
            layers[2].set(0, local, index_of(tables[2], pred.code));
        }
    }
}

HabitatMaps compute_habitat_map(const Predictor& predictor, const ThresholdSet& thresholds,
                                const HabitatClassifier& model, std::size_t k, const HabitatHierarchy& hierarchy,
                                double tile_size_m, std::size_t workers) {
    if (!thresholds.covers(predictor.species_count())) {
        throw ValidationError("threshold set does not match predictor species count");
    }
    HabitatMaps maps;
    maps.class_tables = habitat_class_tables(model, hierarchy);
    for (auto& layer : maps.layers) {
        layer = Raster(RasterHeader::for_grid(predictor.grid(), DType::I16, {"class"}));
    }
    const auto tiles = make_tiling(predictor.grid(), tile_size_m);
    schedule_tiles(tiles, workers, [&](const MetaTile& tile, std::size_t) {
        compute_habitat_tile(predictor, thresholds, model, hierarchy, k, maps.class_tables, tile, maps.layers);
    });
    return maps;
}

std::string class_table_csv(const std::vector<EunisCode>& table) {
    std::ostringstream out;
    out << "index,code\n";
    for (std::size_t i = 0; i < table.size(); ++i) out << i << ',' << table[i].str() << '\n';
    return out.str();
}

}  // namespace atlas
