// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Independent oracles live here rather than in the library.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>

#include "atlas/error.hpp"
#include "atlas/evalsuite.hpp"
#include "atlas/indicators.hpp"
#include "atlas/pipeline.hpp"
#include "atlas/raster.hpp"
#include "atlas/rng.hpp"
#include "atlas/synthetic.hpp"
#include "json.hpp"
#include "sdm_support.hpp"
#include "test_support.hpp"

using namespace atlas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

const std::vector<double> kWorkedExample{0.9, 0.8, 0.1, 0, 0, 0, 0, 0, 0, 0};

// Exact pmf by enumerating all 2^n outcomes.
std::vector<double> pmf_enumerated(const std::vector<double>& p) {
    std::vector<double> f(p.size() + 1, 0.0);
    for (std::uint32_t mask = 0; mask < (1u << p.size()); ++mask) {
        double w = 1;
        for (std::size_t i = 0; i < p.size(); ++i) w *= (mask >> i & 1u) ? p[i] : 1 - p[i];
        f[static_cast<std::size_t>(__builtin_popcount(mask))] += w;
    }
    return f;
}

void criterion1(Outcome& o) {
    const double mean = count_mean(kWorkedExample);
    const double hw = confidence_halfwidth(count_variance(kWorkedExample));
    o.check(std::abs(mean - 1.8) <= 1e-12, "mean");
    o.check(std::abs(hw - 2 * std::sqrt(0.34)) <= 1e-12, "half-width");
    // One decimal: the mean prints as 1.8; the half-width reaches 1.1 by truncation.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", mean);
    o.check(std::string(buf) == "1.8", "mean at one decimal");
    o.check(std::floor(hw * 10) / 10 == 1.1, "half-width truncated to one decimal");
    o.detail << " mean=" << mean << " halfwidth=" << hw;
}

void criterion2(Outcome& o) {
    const double p = at_least_one_probability(kWorkedExample);
    o.check(std::abs(p - 0.982) <= 1e-12, "at-least-one");
    o.detail << " p=" << p;
}

void criterion3(Outcome& o) {
    Rng rng(3);
    double worst_moment = 0, worst_zero = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = rng.below(16);
        std::vector<double> p(n);
        for (auto& x : p) {
            const double u = rng.uniform();
            x = u < 0.1 ? 0.0 : u > 0.9 ? 1.0 : rng.uniform();
        }
        const auto pmf = brute_force_poisson_binomial(p);
        const auto dp = pmf_enumerated(p);
        double m = 0, m2 = 0;
        for (std::size_t k = 0; k < pmf.size(); ++k) {
            m += static_cast<double>(k) * dp[k];
            m2 += static_cast<double>(k * k) * dp[k];
            worst_moment = std::max(worst_moment, std::abs(pmf[k] - dp[k]));
        }
        worst_moment = std::max({worst_moment, std::abs(count_mean(p) - m), std::abs(count_variance(p) - (m2 - m * m))});
        worst_zero = std::max(worst_zero, std::abs(at_least_one_probability(p) - (1 - pmf[0])));
    }
    o.check(worst_moment <= 1e-9, "moments");
    o.check(worst_zero <= 1e-12, "at-least-one vs pmf(0)");
    o.detail << " max moment err=" << worst_moment << " max p0 err=" << worst_zero;
}

void criterion4(Outcome& o) {
    Rng rng(4);
    const std::size_t species = 3, cal_plots = 300, test_plots = 300;
    // Species-specific score distributions shared by calibration and test draws.
    auto draw = [&](std::size_t s, bool present) {
        const double u = rng.uniform();
        const double v = present ? std::pow(u, 0.3 + 0.3 * static_cast<double>(s)) : u * u;
        return v;
    };
    auto make_plots = [&](std::size_t n) {
        std::vector<LabeledVector> plots(n);
        for (auto& pl : plots) {
            for (std::size_t s = 0; s < species; ++s) {
                const bool present = rng.bernoulli(0.5);
                pl.truth.push_back(present);
                pl.probs.push_back(draw(s, present));
            }
        }
        return plots;
    };
    const std::vector<double> alphas{0.05, 0.1, 0.2};
    double worst_excess = -1;
    std::vector<double> mean_omission(alphas.size(), 0.0);
    bool monotone = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto cal = make_plots(cal_plots);
        const auto test = make_plots(test_plots);
        std::vector<ThresholdSet> sets;
        for (double a : alphas) sets.push_back(fit_conformal_thresholds(cal, a));
        for (std::size_t s = 0; s < species; ++s) {
            std::size_t n = 0;
            for (const auto& pl : cal) n += pl.truth[s];
            for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
                std::size_t present = 0, missed = 0;
                for (const auto& pl : test) {
                    if (!pl.truth[s]) continue;
                    ++present;
                    missed += !sets[ai].present(s, pl.probs[s]);
                }
                const double rate = present ? static_cast<double>(missed) / present : 0.0;
                mean_omission[ai] += rate / (1000.0 * species);
                worst_excess = std::max(worst_excess, rate - (alphas[ai] + 3 / std::sqrt(static_cast<double>(n))));
                if (ai > 0) {
                    const auto lo = sets[ai - 1].threshold(s), hi = sets[ai].threshold(s);
                    if (lo.has_value() != hi.has_value() || (lo && *lo > *hi)) monotone = false;
                }
            }
        }
    }
    o.check(worst_excess <= 0, "omission above alpha + 3/sqrt(n)");
    o.check(monotone, "thresholds monotone in alpha");
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        o.check(mean_omission[ai] <= alphas[ai] + 0.01, "mean omission above alpha");
        o.detail << " alpha=" << alphas[ai] << ":mean omission " << mean_omission[ai];
    }
}

void criterion5(Outcome& o) {
    Rng rng(5);
    double worst = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.bernoulli(0.3) ? std::floor(rng.uniform() * 5) / 5 : rng.uniform();
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        y[1] = 0;
        const auto a = auc(s, y);
        if (!a) {
            o.check(false, "auc undefined with both classes present");
            break;
        }
        worst = std::max(worst, std::abs(*a - atlas::testing::brute_auc(s, y)));
    }
    o.check(worst <= 1e-12, "auc vs pairwise count");

    RankedAssemblage ranked;
    ranked.species = {3, 1, 4, 0};
    ranked.probabilities = {0.9, 0.8, 0.7, 0.6};
    const std::vector<std::size_t> truth{1, 2, 4};
    o.check(std::abs(recall_at_k(ranked, truth, 2) - 1.0 / 3) <= 1e-12, "recall@2");
    o.check(std::abs(recall_at_k(ranked, truth, 4) - 2.0 / 3) <= 1e-12, "recall@4");
    const std::vector<std::size_t> pred{1, 2, 3}, obs{2, 3, 4};
    o.check(std::abs(fscore(pred, obs) - 2.0 / 3) <= 1e-12, "fscore 2/3");
    const std::vector<std::size_t> one{5}, four{1, 2, 3, 5};
    o.check(std::abs(fscore(one, four) - 0.4) <= 1e-12, "fscore 0.4");

    const std::vector<std::string> alphabet{"R21", "R22", "R23", "R31", "S41", "S42", "T11"};
    bool ordered = true;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<EunisCode> p, t;
        for (std::size_t i = 0; i < n; ++i) {
            p.emplace_back(alphabet[rng.below(alphabet.size())]);
            t.emplace_back(alphabet[rng.below(alphabet.size())]);
        }
        const double l1 = habitat_accuracy(p, t, 1), l2 = habitat_accuracy(p, t, 2), l3 = habitat_accuracy(p, t, 3);
        ordered = ordered && l1 >= l2 && l2 >= l3;
    }
    o.check(ordered, "habitat accuracy L1 >= L2 >= L3");
    o.detail << " max auc err=" << worst;
}

void criterion6(Outcome& o) {
    Rng rng(6);
    double worst = 0;
    for (int m = 0; m < 20; ++m) {
        const auto arch = atlas::testing::random_small_architecture(rng, 120);
        const auto model = atlas::testing::random_small_model(arch, rng);
        const auto x = atlas::testing::random_features(arch, rng);
        std::vector<std::uint8_t> y(arch.species_count);
        for (auto& v : y) v = rng.bernoulli(0.5);
        worst = std::max(worst, atlas::testing::gradient_relative_error(model, x, y));
    }
    o.check(worst <= 1e-4, "gradient relative error");
    o.detail << " max relative error=" << worst;
}

// Shared by criteria 7 and 8.
struct World {
    atlas::testing::TempDir dir;
    SyntheticWorld world;
    PipelineConfig config;
    MetricReport report;
};

World& world() {
    static std::unique_ptr<World> w;
    if (!w) {
        w = std::make_unique<World>();
        w->world = make_synthetic_world();
        w->config = PipelineConfig::read(write_synthetic_world(w->world, w->dir.path()));
        run_ingest(w->config);
        run_train(w->config);
        run_calibrate(w->config);
        run_species_maps(w->config);
        run_indicator_maps(w->config);
        run_habitat_maps(w->config);
        w->report = run_evaluate(w->config);
    }
    return *w;
}

void criterion7(Outcome& o) {
    auto& w = world();
    const auto& r = w.report;
    o.check(r.auc.has_value() && *r.auc >= 0.95, "AUC >= 0.95");
    o.check(r.habitat.has_value() && r.habitat->level3 >= 0.9, "L3 accuracy >= 0.9");

    // Cell-wise scalar recomputation of every indicator band.
    const auto& c = w.config;
    const auto& catalog = w.world.catalog;
    const auto thresholds = ThresholdSet::read(c.out_dir / "thresholds.csv", catalog);
    const auto model = load_checkpoint(c.out_dir / "model.atlsdm");
    const ModelPredictor mp(model, w.world.features);
    const RelocatingPredictor pred(mp, w.world.mask);
    const auto table = status_table(catalog);
    const auto manifest =
        nlohmann::json::parse(atlas::testing::read_text(c.out_dir / "indicators" / "manifest.json"));
    std::size_t mismatches = 0, compared = 0;
    for (const auto& entry : manifest) {
        const auto raster = read_raster(c.out_dir / "indicators" / entry["file"].get<std::string>());
        std::vector<std::size_t> subset;
        for (const auto& id : entry["species"]) subset.push_back(*catalog.index_of(id.get<std::string>()));
        const std::string kind = entry["kind"];
        for (std::int64_t i = 0; i < c.grid.cell_count(); ++i) {
            const auto cell = cell_at(c.grid, i);
            const auto p = pred.predict_cell(cell);
            std::vector<double> expect;
            if (kind == indicator_kind_name(IndicatorKind::Count)) {
                double mean = 0, var = 0;
                for (auto s : subset) {
                    mean += p[s];
                    var += p[s] * (1 - p[s]);
                }
                const auto e = estimate_count(p, subset);
                expect = {e.mean, e.halfwidth};
                if (std::abs(e.mean - mean) > 1e-9 || std::abs(e.halfwidth - 2 * std::sqrt(var)) > 1e-9) ++mismatches;
            } else if (kind == indicator_kind_name(IndicatorKind::AtLeastOne)) {
                double none = 1;
                std::vector<double> sub;
                for (auto s : subset) {
                    none *= 1 - p[s];
                    sub.push_back(p[s]);
                }
                const double a = at_least_one_probability(sub);
                expect = {a};
                if (std::abs(a - (1 - none)) > 1e-9) ++mismatches;
            } else {
                int best = kNoStatus;
                for (std::size_t s = 0; s < p.size(); ++s) {
                    if (thresholds.present(s, p[s])) best = std::max(best, table[s]);
                }
                expect = {static_cast<double>(best)};
            }
            for (std::size_t b = 0; b < expect.size(); ++b) {
                ++compared;
                const double want = raster.header().dtype == DType::F32
                                        ? static_cast<double>(static_cast<float>(expect[b]))
                                        : expect[b];
                if (raster.get(b, cell) != want) ++mismatches;
            }
        }
    }
    o.check(compared > 0 && mismatches == 0, "indicator recomputation mismatches");
    o.detail << " auc=" << r.auc.value_or(-1) << " L1=" << (r.habitat ? r.habitat->level1 : -1)
             << " L2=" << (r.habitat ? r.habitat->level2 : -1) << " L3=" << (r.habitat ? r.habitat->level3 : -1)
             << " indicator values checked=" << compared << " mismatches=" << mismatches;
}

std::map<std::string, std::vector<std::uint8_t>> map_outputs(const fs::path& out) {
    std::map<std::string, std::vector<std::uint8_t>> m;
    for (const char* d : {"species", "indicators", "habitats"}) {
        if (!fs::exists(out / d)) continue;
        for (const auto& f : atlas::testing::list_files(out / d)) {
            m[std::string(d) + "/" + f] = atlas::testing::read_bytes(out / d / f);
        }
    }
    return m;
}

void criterion8(Outcome& o) {
    auto& w = world();
    auto c = w.config;
    c.workers = 1;
    c.tile_size_m = kDefaultTileSizeM;
    const auto reference = map_outputs(c.out_dir);  // produced with the config defaults
    o.check(!reference.empty(), "no outputs");
    std::size_t runs = 0;
    for (double tile : {c.grid.extent_x(), kDefaultTileSizeM}) {
        for (std::size_t workers : {1u, 4u, 8u}) {
            c.tile_size_m = tile;
            c.workers = workers;
            run_species_maps(c);
            run_indicator_maps(c);
            run_habitat_maps(c);
            ++runs;
            if (map_outputs(c.out_dir) != reference) {
                std::ostringstream s;
                s << "outputs differ at workers=" << workers << " tile=" << tile;
                o.check(false, s.str());
            }
        }
    }
    o.detail << " runs=" << runs << " files=" << reference.size();
}

void criterion9(Outcome& o) {
    const auto a = coverage_from_count(132'800'000, 5'500'000'000, 50);
    const auto b = coverage_from_count(3'230'000'000, 5'500'000'000, 50);
    o.check(std::abs(a.fraction * 100 - 2.4) <= 0.05, "2.4%");
    o.check(std::abs(b.fraction * 100 - 58.6) <= 0.5, "58.6%");
    o.detail << " " << a.fraction * 100 << "% " << b.fraction * 100 << "%";
}

void criterion10(Outcome& o) {
    Rng rng(10);
    atlas::testing::TempDir dir;
    std::size_t identical = 0;
    for (int i = 0; i < 100; ++i) {
        const auto r = atlas::testing::random_raster(rng);
        const auto path = dir / ("r" + std::to_string(i) + ".rst");
        write_raster(r, path);
        const auto back = read_raster(path);
        identical += bit_equal(r, back) && atlas::testing::read_bytes(path) == encode_raster(back);
    }
    o.check(identical == 100, "round trip");

    // Truncation, trailing garbage and a broken header must each be rejected
    // with a message naming the offset or the problem.
    const auto r = atlas::testing::random_raster(rng);
    auto bytes = encode_raster(r);
    auto rejected = [&](std::vector<std::uint8_t> b, const std::string& needle) {
        const auto path = dir / "corrupt.rst";
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                                    static_cast<std::streamsize>(b.size()));
        try {
            read_raster(path);
        } catch (const ValidationError& e) {
            return std::string(e.what()).find(needle) != std::string::npos;
        }
        return false;
    };
    auto truncated = bytes;
    truncated.resize(bytes.size() - 1);
    o.check(rejected(truncated, "byte offset"), "truncated payload");
    auto padded = bytes;
    padded.push_back(0);
    o.check(rejected(padded, "byte offset"), "trailing bytes");
    auto broken = bytes;
    broken[2] = '#';
    o.check(rejected(broken, "header"), "corrupt header");
    o.check(rejected({}, "header"), "empty file");
    o.detail << " round trips=" << identical;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"count mean and half-width of the 10-species example", criterion1},
        {"at-least-one probability of the 10-species example", criterion2},
        {"Poisson-binomial analytic moments vs enumeration", criterion3},
        {"conformal omission bound and monotone thresholds", criterion4},
        {"AUC, recall@k, fscore and habitat accuracy oracles", criterion5},
        {"SDM gradient vs central differences", criterion6},
        {"end-to-end synthetic world", criterion7},
        {"map determinism across workers and tile sizes", criterion8},
        {"coverage fraction arithmetic", criterion9},
        {"raster round trip and corruption diagnostics", criterion10},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::printf("%s criterion %zu: %s |%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.str().c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
