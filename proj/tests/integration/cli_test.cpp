#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "atlas/pipeline.hpp"
#include "test_support.hpp"

#ifdef ATLAS_CLI_PATH

using atlas::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(ATLAS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, FullRunAndExitCodes) {
    TempDir dir;
    const auto world = (dir / "world").string();
    ASSERT_EQ(run_cli("synth " + world + " --size 60"), atlas::kExitOk);
    const std::string cfg = "--config " + world + "/config.json";
    for (const char* stage : {"ingest", "train", "calibrate", "map-species", "map-indicators", "map-habitats",
                              "evaluate"}) {
        EXPECT_EQ(run_cli(std::string(stage) + " " + cfg + " --workers 2"), atlas::kExitOk) << stage;
    }
    EXPECT_TRUE(fs::exists(dir / "world/out/metrics.json"));

    // --out redirects outputs; the model lives under the new directory too.
    const auto alt = (dir / "alt").string();
    EXPECT_EQ(run_cli("ingest " + cfg + " --out " + alt), atlas::kExitOk);
    EXPECT_TRUE(fs::exists(dir / "alt/occupancy.csv"));

    EXPECT_EQ(run_cli("map-species " + cfg, "ATLAS_WORKERS=abc"), atlas::kExitValidation);
    EXPECT_EQ(run_cli("map-species " + cfg, "ATLAS_WORKERS=3"), atlas::kExitOk);
}

TEST(Cli, ValidationErrorsExitOne) {
    TempDir dir;
    EXPECT_EQ(run_cli("map-species --config " + (dir / "missing.json").string()), atlas::kExitValidation);
    atlas::testing::write_text(dir / "bad.json", "{\"grid\": {\"width\": 0, \"height\": 1}}");
    EXPECT_EQ(run_cli("ingest --config " + (dir / "bad.json").string()), atlas::kExitValidation);
    EXPECT_EQ(run_cli("no-such-command"), atlas::kExitValidation);
    EXPECT_EQ(run_cli(""), atlas::kExitValidation);
    EXPECT_EQ(run_cli("--help"), atlas::kExitOk);
}

TEST(Cli, InjectedTileFailureExitsTwoAndQuarantines) {
    TempDir dir;
    const auto world = (dir / "w").string();
    ASSERT_EQ(run_cli("synth " + world + " --size 100"), atlas::kExitOk);
    const std::string cfg = "--config " + world + "/config.json";
    ASSERT_EQ(run_cli("ingest " + cfg), atlas::kExitOk);
    ASSERT_EQ(run_cli("train " + cfg), atlas::kExitOk);
    ASSERT_EQ(run_cli("calibrate " + cfg), atlas::kExitOk);
    auto text = atlas::testing::read_text(dir / "w/config.json");
    text.insert(text.find('{') + 1, "\"fail_tile\": 2,");
    atlas::testing::write_text(dir / "w/config.json", text);
    EXPECT_EQ(run_cli("map-indicators " + cfg + " --workers 4"), atlas::kExitRuntime);
    EXPECT_TRUE(fs::exists(dir / "w/out/quarantine/map-indicators-0"));
    EXPECT_FALSE(fs::exists(dir / "w/out/indicators"));
}

#endif
