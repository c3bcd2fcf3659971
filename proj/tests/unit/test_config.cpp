#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "projcgan/config.hpp"
#include "projcgan/errors.hpp"

using namespace projcgan;

TEST_CASE("defaults cover every schema key") {
    RunConfig c = RunConfig::defaults();
    for (const RunConfig::Entry& e : RunConfig::schema()) CHECK(c.str(e.key) == e.value);
    CHECK(c.str("task") == "classgen");
    CHECK(c.integer("iterations") == 20000);
    CHECK(c.real("lr") == doctest::Approx(0.0002).epsilon(1e-15));
    CHECK(c.boolean("sn_embedding"));
    CHECK_FALSE(c.boolean("resume"));
}

TEST_CASE("parsing overlays values and tolerates comments and spacing") {
    RunConfig c = RunConfig::from_text(
        "# a run\n"
        "\n"
        "iterations = 50   # short\n"
        "  lr=0.01\n"
        "variant =   acgan\n");
    CHECK(c.integer("iterations") == 50);
    CHECK(c.real("lr") == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(c.str("variant") == "acgan");
    CHECK(c.integer("batch") == 64);  // untouched keys keep their defaults
}

TEST_CASE("all problems in a file are reported together") {
    try {
        RunConfig::from_text(
            "iterations = 10\n"
            "what even is this line\n"
            "bogus_key = 3\n"
            "iterations = 20\n"
            " = 5\n");
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("config rejected:") == 0);
        CHECK(msg.find("line 2: expected 'key = value'") != std::string::npos);
        CHECK(msg.find("line 3: unknown key 'bogus_key'") != std::string::npos);
        CHECK(msg.find("line 4: duplicate key 'iterations' (first at line 1)") !=
              std::string::npos);
        CHECK(msg.find("line 5: empty key") != std::string::npos);
    }
}

TEST_CASE("typed getters name the offending key") {
    RunConfig c = RunConfig::from_text("out = somewhere\nlr = fast\n");
    CHECK_THROWS_WITH_AS(c.integer("out"), "config key 'out': 'somewhere' is not an integer",
                         ValueError);
    CHECK_THROWS_WITH_AS(c.real("lr"), "config key 'lr': 'fast' is not a number", ValueError);
    CHECK_THROWS_WITH_AS(c.boolean("out"), "config key 'out': 'somewhere' is not a boolean",
                         ValueError);
    CHECK_THROWS_AS(c.str("nope"), ValueError);
    // fractional text never passes the integer getter
    CHECK_THROWS_AS(RunConfig::defaults().integer("lr"), ValueError);
}

TEST_CASE("boolean accepts the four spellings") {
    RunConfig c = RunConfig::defaults();
    c.set("resume", "1");
    CHECK(c.boolean("resume"));
    c.set("resume", "0");
    CHECK_FALSE(c.boolean("resume"));
    c.set("resume", "true");
    CHECK(c.boolean("resume"));
    c.set("resume", "yes");
    CHECK_THROWS_AS(c.boolean("resume"), ValueError);
}

TEST_CASE("list getters split on commas") {
    RunConfig c = RunConfig::defaults();
    CHECK(c.list("sweep_variants") == std::vector<std::string>{"projection", "concat_hidden"});
    CHECK(c.list("sweep_lr").empty());
    c.set("sweep_lr", "0.0001, 0.0002 ,0.001");
    const std::vector<double> lrs = c.real_list("sweep_lr");
    REQUIRE(lrs.size() == 3);
    CHECK(lrs[0] == doctest::Approx(0.0001).epsilon(1e-15));
    CHECK(lrs[2] == doctest::Approx(0.001).epsilon(1e-15));
    c.set("sweep_lr", "0.1,oops");
    CHECK_THROWS_AS(c.real_list("sweep_lr"), ValueError);
    c.set("morph_chain", "3, 1, 4, 1");
    CHECK(c.list("morph_chain") == std::vector<std::string>{"3", "1", "4", "1"});
}

TEST_CASE("set rejects unknown keys") {
    RunConfig c = RunConfig::defaults();
    CHECK_THROWS_AS(c.set("bogus", "1"), ValueError);
    c.set("seed", "99");
    CHECK(c.integer("seed") == 99);
}

TEST_CASE("echo round-trips through the parser") {
    RunConfig c = RunConfig::from_text("seed = 77\nvariant = concat_input\nlr = 0.004\n");
    const std::string echoed = c.echo();
    RunConfig back = RunConfig::from_text(echoed);
    CHECK(back.echo() == echoed);
    CHECK(back.integer("seed") == 77);
    CHECK(back.str("variant") == "concat_input");

    // echo order follows the schema
    const std::string first_key = RunConfig::schema().front().key;
    CHECK(echoed.rfind(first_key + std::string(" = "), 0) == 0);
}

TEST_CASE("from_file reads and from a missing path throws") {
    const std::string path = "/tmp/projcgan_test_config.cfg";
    {
        std::ofstream out(path);
        out << "batch = 16\n";
    }
    RunConfig c = RunConfig::from_file(path);
    CHECK(c.integer("batch") == 16);
    std::remove(path.c_str());
    CHECK_THROWS_AS(RunConfig::from_file(path), IoError);
}
