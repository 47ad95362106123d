// atlas: command-line driver for the mapping pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "atlas/error.hpp"
#include "atlas/pipeline.hpp"
#include "atlas/scheduler.hpp"
#include "atlas/synthetic.hpp"

namespace {

struct SharedFlags {
    std::string config;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
    cmd->add_option("--config", f.config, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--workers", f.workers, "Worker threads (ATLAS_WORKERS overrides)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Seed for splits and training");
    cmd->add_option("--out", f.out, "Output directory");
}

atlas::PipelineConfig load(const SharedFlags& f) {
    auto c = atlas::PipelineConfig::read(f.config);
    if (f.workers) c.workers = *f.workers;
    c.workers = atlas::workers_from_env(c.workers);
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.out_dir = *f.out;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Species, indicator and habitat mapping pipeline"};
    app.require_subcommand(1);
    SharedFlags flags;

    auto* ingest = app.add_subcommand("ingest", "Aggregate occurrences to the grid and assign spatial folds");
    auto* train = app.add_subcommand("train", "Fit the multimodal species model on the training fold");
    auto* calibrate = app.add_subcommand("calibrate", "Fit presence thresholds on the validation fold");
    auto* species = app.add_subcommand("map-species", "Write thresholded per-species probability rasters");
    auto* indicators = app.add_subcommand("map-indicators", "Write biodiversity indicator rasters");
    auto* habitats = app.add_subcommand("map-habitats", "Write habitat class rasters at three levels");
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against held-out plots");
    for (auto* cmd : {ingest, train, calibrate, species, indicators, habitats, evaluate}) add_shared(cmd, flags);

    std::string synth_dir;
    atlas::SyntheticWorldOptions synth_opts;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic world with a ready-to-run config");
    synth->add_option("dir", synth_dir, "Destination directory")->required();
    synth->add_option("--seed", synth_opts.seed, "Generator seed");
    synth->add_option("--size", synth_opts.width, "Grid side in cells");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? atlas::kExitOk : atlas::kExitValidation;
    }

    try {
        if (synth->parsed()) {
            synth_opts.height = synth_opts.width;
            const auto world = atlas::make_synthetic_world(synth_opts);
            std::cout << atlas::write_synthetic_world(world, synth_dir).string() << '\n';
            return atlas::kExitOk;
        }
        const auto config = load(flags);
        if (ingest->parsed()) {
            const auto s = atlas::run_ingest(config);
            std::cout << "records " << s.records << ", accepted " << s.accepted << ", rejected " << s.rejected
                      << ", relocated " << s.relocated << ", occupied cells " << s.occupied_cells << '\n';
        } else if (train->parsed()) {
            const auto r = atlas::run_train(config);
            std::cout << "loss " << r.initial_loss << " -> " << r.final_loss << '\n';
        } else if (calibrate->parsed()) {
            atlas::run_calibrate(config);
            std::cout << "thresholds written\n";
        } else if (species->parsed()) {
            const auto s = atlas::run_species_maps(config);
            std::cout << s.produced.size() << " species maps, " << s.suppressed.size() << " suppressed\n";
        } else if (indicators->parsed()) {
            for (const auto& name : atlas::run_indicator_maps(config)) std::cout << name << '\n';
        } else if (habitats->parsed()) {
            atlas::run_habitat_maps(config);
            std::cout << "habitat maps written\n";
        } else if (evaluate->parsed()) {
            std::cout << atlas::run_evaluate(config).to_json() << '\n';
        }
    } catch (const atlas::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return atlas::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return atlas::kExitRuntime;
    }
    return atlas::kExitOk;
}
