#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "uwdiff/config.hpp"

using namespace uwdiff;
namespace fs = std::filesystem;

TEST_CASE("built-in defaults") {
    const RunConfig cfg;
    CHECK(cfg.get_int("T") == 2000);
    CHECK(cfg.get_real("beta_min") == 1e-6);
    CHECK(cfg.get_real("beta_max") == 1e-2);
    CHECK(cfg.get_real("learning_rate") == 1e-4);
    CHECK(cfg.get_int("batch_size") == 8);
    CHECK(cfg.get_int("steps") == 20000);
    CHECK(cfg.get_int("image_size") == 64);

    const TrainConfig train = cfg.train();
    CHECK(train.total_steps == 20000);
    CHECK(train.checkpoint_interval == 1000);

    const EAConfig ea = cfg.ea();
    CHECK(ea.gene_length == 11);
    CHECK(ea.capacity == 10);
    CHECK(ea.epochs == 50);
    CHECK(ea.crossover_prob == 0.5);
    CHECK(ea.mutation_prob == 0.1);

    const CorpusSpec corpus = cfg.corpus();
    CHECK(corpus.seed == 2023);
    CHECK(corpus.train_count == 512);
    CHECK(corpus.val_count == 32);
    CHECK(corpus.test_count == 16);
    CHECK(corpus.degradation.gains == std::array<double, 3>{0.45, 0.85, 0.75});
    CHECK(corpus.degradation.blur_sigma == 1.2);

    CHECK(cfg.model() == nn::DenoiserConfig{});
    CHECK(cfg.sequence() == uniform_sequence(2000, 10));
    CHECK(cfg.sequence("piecewise").size() == 11);
    CHECK(cfg.int_list("benchmark_steps") == std::vector<int>{40, 20, 10});

    const NoiseSchedule s = cfg.schedule();
    CHECK(s.steps() == 2000);
    CHECK(s.beta(1) == doctest::Approx(1e-6));
    CHECK(s.beta(2000) == doctest::Approx(1e-2));
}

TEST_CASE("parsing key=value text") {
    RunConfig cfg;
    cfg.merge_text("# comment line\n\n  steps = 50   # trailing comment\nseed=7\ngate = multiplicative\n");
    CHECK(cfg.get_int("steps") == 50);
    CHECK(cfg.get_seed("seed") == 7);
    CHECK(cfg.gate() == nn::GateMode::Multiplicative);
    CHECK(cfg.dump().find("steps=50\n") != std::string::npos);

    SUBCASE("unknown key reports its line") {
        try {
            cfg.merge_text("steps = 5\n\nbogus_key = 3\n", "run.cfg");
            FAIL("expected an error");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("run.cfg:3") != std::string::npos);
            CHECK(msg.find("bogus_key") != std::string::npos);
        }
    }
    SUBCASE("malformed lines and values") {
        CHECK_THROWS_AS(cfg.merge_text("steps 5\n"), ConfigError);
        CHECK_THROWS_AS(cfg.merge_text("steps = five\n"), ConfigError);
        CHECK_THROWS_AS(cfg.merge_text("learning_rate = 1e-3x\n"), ConfigError);
        CHECK_THROWS_AS(cfg.merge_text("gate = sideways\n"), ConfigError);
        CHECK_THROWS_AS(cfg.merge_text("seed = -1\n"), ConfigError);
        CHECK_THROWS_AS(cfg.get("nope"), ConfigError);
    }
}

TEST_CASE("file then explicit values take precedence over defaults") {
    const fs::path path = fs::temp_directory_path() / "uwdiff_test_config.cfg";
    std::ofstream(path) << "steps = 300\nlearning_rate = 0.002\n";
    RunConfig cfg;
    cfg.merge_file(path);
    cfg.set("steps", "12");
    CHECK(cfg.get_int("steps") == 12);
    CHECK(cfg.get_real("learning_rate") == 0.002);
    CHECK(cfg.get_int("batch_size") == 8);
    fs::remove(path);
    CHECK_THROWS_AS(cfg.merge_file(path), ConfigError);
}

TEST_CASE("sequence specs") {
    RunConfig cfg;
    CHECK(cfg.sequence("uniform:4") == SamplingSequence({2000, 1500, 1000, 500, 0}, 2000));
    CHECK(cfg.sequence("2000,1000,0") == SamplingSequence({2000, 1000, 0}, 2000));
    CHECK(cfg.sequence("piecewise:1000:100:500").size() == 13);
    const fs::path path = fs::temp_directory_path() / "uwdiff_test_sequence.txt";
    std::ofstream(path) << "2000,5,0\n";
    CHECK(cfg.sequence(path.string()) == SamplingSequence({2000, 5, 0}, 2000));
    fs::remove(path);
    CHECK_THROWS(cfg.sequence("uniform:x"));
    CHECK_THROWS(cfg.sequence("piecewise:1:2"));
    CHECK_THROWS(cfg.sequence("2000,2000,0"));
    CHECK_THROWS(cfg.sequence("/no/such/file"));

    cfg.set("T", "100");
    CHECK(cfg.sequence("uniform:10") == uniform_sequence(100, 10));
    cfg.set("benchmark_steps", "5,0");
    CHECK_THROWS_AS(cfg.int_list("benchmark_steps"), ConfigError);
}
