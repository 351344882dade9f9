#include <doctest.h>

#include <set>

#include "test_util.hpp"
#include "waffle/config.hpp"
#include "waffle/error.hpp"

using namespace waffle;

TEST_CASE("config parses keys, comments and blank lines") {
    const ExperimentConfig cfg = ExperimentConfig::parse_text(
        "# an experiment\n"
        "fed.rounds = 100\n"
        "\n"
        "fed.lr = 0.04   # inline comment\n"
        "data.preset = mnist\n");
    CHECK(cfg.get_int("fed.rounds", 0) == 100);
    CHECK(cfg.get_real("fed.lr", 0.0) == doctest::Approx(0.04));
    CHECK(cfg.get_string("data.preset", "") == "mnist");
    CHECK(cfg.get_int("fed.batch_size", 10) == 10);  // fallback
}

TEST_CASE("unknown keys are rejected by name") {
    try {
        ExperimentConfig::parse_text("fed.rouns = 100\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("fed.rouns") != std::string::npos);
    }
}

TEST_CASE("malformed lines and values are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::parse_text("fed.rounds\n"), ConfigError);
    const ExperimentConfig cfg = ExperimentConfig::parse_text("fed.rounds = ten\n");
    CHECK_THROWS_AS(cfg.get_int("fed.rounds", 0), ConfigError);
    const ExperimentConfig cfg2 = ExperimentConfig::parse_text("fed.lr = fast\n");
    CHECK_THROWS_AS(cfg2.get_real("fed.lr", 0.0), ConfigError);
}

TEST_CASE("lists split on commas") {
    const ExperimentConfig cfg =
        ExperimentConfig::parse_text("ibp.factors = 10, 20 ,30\n");
    CHECK(cfg.get_list("ibp.factors") == std::vector<std::string>{"10", "20", "30"});
}

TEST_CASE("sweep grids expand to the cartesian product") {
    const ExperimentConfig cfg = ExperimentConfig::parse_text(
        "fed.rounds = 5\n"
        "sweep.fed.local_epochs = 10,20,30\n"
        "sweep.ibp.alpha = 48,96\n");
    const auto cells = cfg.expand_sweep();
    REQUIRE(cells.size() == 6);
    std::set<std::string> names;
    for (const auto& cell : cells) {
        CHECK(cell.get_int("fed.rounds", 0) == 5);
        CHECK(cell.has("fed.local_epochs"));
        CHECK(cell.has("ibp.alpha"));
        CHECK_FALSE(cell.has("sweep.fed.local_epochs"));
        names.insert(cell.cell_name());
    }
    CHECK(names.size() == 6);
    CHECK(names.count("fed.local_epochs-10__ibp.alpha-48") == 1);
}

TEST_CASE("a config without sweeps expands to itself") {
    const ExperimentConfig cfg = ExperimentConfig::parse_text("fed.rounds = 2\n");
    const auto cells = cfg.expand_sweep();
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].cell_name().empty());
}

TEST_CASE("resolved text is sorted and hashing is value-sensitive") {
    const ExperimentConfig a = ExperimentConfig::parse_text(
        "fed.rounds = 2\n"
        "data.preset = synthetic\n");
    const std::string text = a.resolved_text();
    CHECK(text == "data.preset = synthetic\nfed.rounds = 2\n");
    const ExperimentConfig b = ExperimentConfig::parse_text(
        "fed.rounds = 3\n"
        "data.preset = synthetic\n");
    CHECK(a.config_hash() != b.config_hash());
    const ExperimentConfig c = ExperimentConfig::parse_text(
        "data.preset = synthetic\nfed.rounds = 2\n");
    CHECK(a.config_hash() == c.config_hash());
}

TEST_CASE("config files load from disk") {
    testutil::TempDir dir("config");
    const std::string path = dir.path("run.cfg");
    {
        std::ofstream out(path);
        out << "fed.rounds = 7\n";
    }
    const ExperimentConfig cfg = ExperimentConfig::parse_file(path);
    CHECK(cfg.get_int("fed.rounds", 0) == 7);
    CHECK_THROWS_AS(ExperimentConfig::parse_file(dir.path("missing.cfg")), IoError);
}
