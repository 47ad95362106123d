#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "atlas/error.hpp"
#include "atlas/occurrence.hpp"
#include "atlas/rng.hpp"

using namespace atlas;

namespace {

const GridSpec kGrid{0, 0, 50, 4, 4};

OccurrenceRecord po(const std::string& sp, CellIndex c) {
    const auto p = cell_center(kGrid, c);
    return {sp, p.easting, p.northing, "2020-01-01", RecordSource::PO, std::nullopt};
}

OccurrenceRecord pa(const std::string& sp, CellIndex c, const std::string& plot) {
    const auto p = cell_center(kGrid, c);
    return {sp, p.easting, p.northing, "2020-01-01", RecordSource::PA, plot};
}

SpeciesCatalog abc() { return SpeciesCatalog(std::vector<std::string>{"A", "B", "C"}); }

// Independent restatement of the block hash.
std::uint64_t sm64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Fold oracle_fold(std::int64_t bc, std::int64_t br, std::uint64_t seed, FoldFractions f) {
    const std::uint64_t h = sm64(sm64(sm64(seed) ^ static_cast<std::uint64_t>(bc)) ^ static_cast<std::uint64_t>(br));
    const double u = static_cast<double>(h >> 11) / 9007199254740992.0;
    if (u < f.train) return Fold::Train;
    if (u < f.train + f.val) return Fold::Val;
    return Fold::Test;
}

}  // namespace

TEST(Catalog, CsvRoundTripAndValidation) {
    const std::string csv =
        "species_id,is_tree,is_invasive,eu_directive,iucn_status\n"
        "Quercus robur,1,0,0,LC\n"
        "Fallopia japonica,0,1,0,NA\n"
        "Lynx lynx,0,0,1,EN\n";
    std::istringstream in(csv);
    const auto cat = SpeciesCatalog::from_csv(in);
    ASSERT_EQ(cat.size(), 3u);
    EXPECT_EQ(cat.index_of("Lynx lynx"), 2u);
    EXPECT_TRUE(cat.attributes(0).is_tree);
    EXPECT_EQ(cat.attributes(2).iucn, IucnStatus::EN);
    std::istringstream again(cat.to_csv());
    const auto back = SpeciesCatalog::from_csv(again);
    EXPECT_EQ(back.ids(), cat.ids());
    for (std::size_t i = 0; i < cat.size(); ++i) EXPECT_EQ(back.attributes(i), cat.attributes(i));

    std::istringstream dup("species_id,is_tree,is_invasive,eu_directive,iucn_status\nA,0,0,0,LC\nA,0,0,0,LC\n");
    EXPECT_THROW(SpeciesCatalog::from_csv(dup), ValidationError);
    std::istringstream bad("species_id,is_tree,is_invasive,eu_directive,iucn_status\nA,0,0,0,XX\n");
    EXPECT_THROW(SpeciesCatalog::from_csv(bad), ValidationError);
}

TEST(Iucn, RanksAndNames) {
    EXPECT_EQ(iucn_rank(parse_iucn("LC")), 0);
    EXPECT_EQ(iucn_rank(parse_iucn("EX")), 6);
    EXPECT_EQ(iucn_rank(parse_iucn("NA")), -1);
    EXPECT_EQ(iucn_name(IucnStatus::CR), "CR");
    EXPECT_THROW(parse_iucn("lc?"), ValidationError);
}

TEST(Occurrences, CsvRoundTrip) {
    std::vector<OccurrenceRecord> recs{po("A", {0, 0}), pa("B", {1, 1}, "P1"), pa("", {2, 2}, "P2")};
    std::istringstream in(occurrences_to_csv(recs));
    const auto back = read_occurrences(in);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[1].plot_id, "P1");
    EXPECT_EQ(back[1].source, RecordSource::PA);
    EXPECT_EQ(back[2].species_id, "");
    EXPECT_EQ(back[0].easting, recs[0].easting);
}

TEST(Occurrences, PaWithoutPlotRejected) {
    std::istringstream in("species_id,easting,northing,date,source,plot_id\nA,1,1,2020-01-01,PA,\n");
    EXPECT_THROW(read_occurrences(in), ValidationError);
    std::istringstream bad_source("species_id,easting,northing,date,source,plot_id\nA,1,1,2020-01-01,XX,\n");
    EXPECT_THROW(read_occurrences(bad_source), ValidationError);
    std::istringstream bad_number("species_id,easting,northing,date,source,plot_id\nA,east,1,2020-01-01,PO,\n");
    EXPECT_THROW(read_occurrences(bad_number), ValidationError);
}

TEST(Aggregate, SinglePresenceOnlyRecord) {
    const auto res = aggregate_to_grid({po("A", {0, 0})}, kGrid, abc());
    const auto* cell = res.occupancy.find({0, 0});
    ASSERT_NE(cell, nullptr);
    ASSERT_EQ(cell->species.size(), 1u);
    EXPECT_TRUE(cell->species.at(0));
    EXPECT_EQ(res.occupancy.cell_count(), 1u);
}

TEST(Aggregate, PresenceAbsencePlotImpliesAbsences) {
    const SpeciesCatalog cat(std::vector<std::string>{"A", "B"});
    const auto res = aggregate_to_grid({pa("A", {1, 1}, "P1")}, kGrid, cat);
    const auto* cell = res.occupancy.find({1, 1});
    ASSERT_NE(cell, nullptr);
    EXPECT_TRUE(cell->species.at(0));
    EXPECT_FALSE(cell->species.at(1));
    EXPECT_EQ(res.occupancy.labels({1, 1}, 2), (std::vector<std::uint8_t>{1, 0}));
}

TEST(Aggregate, PresenceWinsOverAbsence) {
    const SpeciesCatalog cat(std::vector<std::string>{"A", "B"});
    const auto res = aggregate_to_grid({pa("A", {2, 1}, "P1"), po("B", {2, 1})}, kGrid, cat);
    EXPECT_TRUE(res.occupancy.find({2, 1})->species.at(1));
}

TEST(Aggregate, EmptyInputAndRejections) {
    EXPECT_EQ(aggregate_to_grid({}, kGrid, abc()).occupancy.cell_count(), 0u);
    auto far = po("A", {0, 0});
    far.easting = 1e9;
    const auto res = aggregate_to_grid({po("Z", {0, 0}), far, po("A", {1, 0})}, kGrid, abc());
    EXPECT_EQ(res.accepted, 1u);
    EXPECT_EQ(res.dropped_out_of_extent, 1u);
    ASSERT_EQ(res.rejected.size(), 1u);
    EXPECT_EQ(res.rejected[0].record_index, 0u);
}

TEST(Aggregate, WaterRecordsRelocate) {
    TerrestrialMask mask(4, 4, true);
    mask.set_land({0, 0}, false);
    const auto res = aggregate_to_grid({po("A", {0, 0})}, kGrid, abc(), &mask);
    EXPECT_EQ(res.relocated, 1u);
    EXPECT_EQ(res.occupancy.find({0, 0}), nullptr);
    EXPECT_NE(res.occupancy.find({1, 0}), nullptr);
}

TEST(Aggregate, OrderIndependentAndPresenceWinsProperty) {
    Rng rng(77);
    const auto cat = abc();
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<OccurrenceRecord> recs;
        const auto n = 1 + rng.below(30);
        for (std::size_t i = 0; i < n; ++i) {
            const CellIndex c{static_cast<std::int64_t>(rng.below(4)), static_cast<std::int64_t>(rng.below(4))};
            const std::string sp = cat.id(rng.below(3));
            if (rng.bernoulli(0.5)) {
                recs.push_back(po(sp, c));
            } else {
                recs.push_back(pa(rng.bernoulli(0.2) ? "" : sp, c, "P" + std::to_string(i)));
            }
        }
        const auto a = aggregate_to_grid(recs, kGrid, cat).occupancy;
        auto shuffled = recs;
        rng.shuffle(std::span(shuffled));
        const auto b = aggregate_to_grid(shuffled, kGrid, cat).occupancy;
        ASSERT_EQ(a, b);

        // Oracle: per (cell, species), any presence -> 1; else any absence -> 0.
        std::map<std::pair<std::int64_t, std::size_t>, int> presences, absences;
        std::map<std::string, std::vector<std::size_t>> plot_lists;
        std::map<std::string, CellIndex> plot_cell;
        for (const auto& r : recs) {
            const auto c = *locate_cell(kGrid, {r.easting, r.northing});
            if (r.source == RecordSource::PO) {
                ++presences[{linear_index(kGrid, c), *cat.index_of(r.species_id)}];
            } else {
                plot_cell[*r.plot_id] = c;
                auto& l = plot_lists[*r.plot_id];
                if (!r.species_id.empty()) l.push_back(*cat.index_of(r.species_id));
            }
        }
        for (const auto& [plot, listed] : plot_lists) {
            const auto lin = linear_index(kGrid, plot_cell[plot]);
            for (std::size_t s = 0; s < cat.size(); ++s) {
                if (std::find(listed.begin(), listed.end(), s) != listed.end()) {
                    ++presences[{lin, s}];
                } else {
                    ++absences[{lin, s}];
                }
            }
        }
        for (std::int64_t lin = 0; lin < kGrid.cell_count(); ++lin) {
            const auto* cell = a.find(cell_at(kGrid, lin));
            for (std::size_t s = 0; s < cat.size(); ++s) {
                const bool pres = presences.count({lin, s}) > 0;
                const bool abs = absences.count({lin, s}) > 0;
                if (!pres && !abs) {
                    ASSERT_TRUE(cell == nullptr || cell->species.count(static_cast<std::uint32_t>(s)) == 0);
                } else {
                    ASSERT_NE(cell, nullptr);
                    ASSERT_EQ(cell->species.at(static_cast<std::uint32_t>(s)), pres);
                }
            }
        }
    }
}

TEST(TargetGroup, KeepsOnlyRecordedCells) {
    const GridSpec g{0, 0, 50, 10, 10};
    SiteOccupancy occ(g);
    occ.record_presence({1, 1}, 0);
    occ.record_presence({5, 2}, 1);
    occ.record_absence({9, 9}, 0);
    occ.touch({3, 3});
    const auto f = target_group_filter(occ);
    EXPECT_EQ(f.cell_count(), 3u);
    EXPECT_EQ(f.find({3, 3}), nullptr);
}

TEST(TargetGroup, IdentityWhenAllPopulated) {
    const GridSpec g{0, 0, 50, 2, 2};
    SiteOccupancy occ(g);
    for (std::int64_t i = 0; i < 4; ++i) occ.record_presence(cell_at(g, i), 0);
    EXPECT_EQ(target_group_filter(occ), occ);
}

TEST(TargetGroup, AbsenceOnlySurveyRetained) {
    const auto res = aggregate_to_grid({pa("", {2, 3}, "P9")}, kGrid, abc());
    const auto f = target_group_filter(res.occupancy);
    ASSERT_EQ(f.cell_count(), 1u);
    EXPECT_EQ(f.labels({2, 3}, 3), (std::vector<std::uint8_t>{0, 0, 0}));
    EXPECT_EQ(f.find({2, 3})->species.size(), 3u);
}

TEST(Split, DegenerateFractionsAllTrain) {
    const GridSpec g{0, 0, 50, 1000, 1000};
    const auto s = split_spatial_blocks(g, 10'000, {1, 0, 0}, 3);
    for (auto f : s.block_folds()) EXPECT_EQ(f, Fold::Train);
}

TEST(Split, FourBlocksMatchHandEvaluatedHash) {
    const GridSpec g{0, 0, 50, 400, 400};  // 2x2 blocks of 200 cells
    const FoldFractions f{0.5, 0.25, 0.25};
    const auto s = split_spatial_blocks(g, 10'000, f, 42);
    ASSERT_EQ(s.blocks_x(), 2);
    ASSERT_EQ(s.blocks_y(), 2);
    for (std::int64_t br = 0; br < 2; ++br) {
        for (std::int64_t bc = 0; bc < 2; ++bc) EXPECT_EQ(s.block_fold(bc, br), oracle_fold(bc, br, 42, f));
    }
    EXPECT_EQ(s, split_spatial_blocks(g, 10'000, f, 42));
}

TEST(Split, BlocksAreAtomicAcrossSeeds) {
    const GridSpec g{0, 0, 50, 450, 330};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = split_spatial_blocks(g, 10'000, {0.6, 0.2, 0.2}, seed);
        const auto folds = s.cell_folds();
        for (std::int64_t r = 0; r < g.height; ++r) {
            for (std::int64_t c = 0; c < g.width; ++c) {
                ASSERT_EQ(folds[static_cast<std::size_t>(r * g.width + c)], s.block_fold(c / 200, r / 200));
            }
        }
        EXPECT_EQ(s.blocks_x(), 3);
        EXPECT_EQ(s.blocks_y(), 2);
    }
}

TEST(Split, ProportionsOverManyBlocks) {
    const GridSpec g{0, 0, 50, 200, 200};
    const auto s = split_spatial_blocks(g, 50, {0.7, 0.2, 0.1}, 9);  // 40,000 one-cell blocks
    std::array<double, 3> counts{};
    for (auto f : s.block_folds()) counts[static_cast<std::size_t>(f)] += 1;
    const double n = static_cast<double>(s.block_folds().size());
    EXPECT_NEAR(counts[0] / n, 0.7, 0.02);
    EXPECT_NEAR(counts[1] / n, 0.2, 0.02);
    EXPECT_NEAR(counts[2] / n, 0.1, 0.02);
}

TEST(Split, RejectsBadInputs) {
    const GridSpec g{0, 0, 50, 10, 10};
    EXPECT_THROW(split_spatial_blocks(g, 10'000, {0.5, 0.5, 0.5}, 0), ValidationError);
    EXPECT_THROW(split_spatial_blocks(g, 10'000, {1.2, -0.1, -0.1}, 0), ValidationError);
    EXPECT_THROW(split_spatial_blocks(g, 75, {1, 0, 0}, 0), ValidationError);
}
