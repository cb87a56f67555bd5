#include <doctest.h>

#include "depotcast/config.hpp"
#include "depotcast/experiment.hpp"
#include "support.hpp"

using namespace depotcast;
using namespace depotcast::exp;
using namespace std::chrono;
using depotcast::testing::slurp;
using depotcast::testing::spit;
using depotcast::testing::TempDir;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{year{y}, month{m}, day{d}}; }

}  // namespace

TEST_CASE("defaults are valid and describe the five nested windows") {
  const RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto& w = cfg.experiment.windows;
  REQUIRE(w.size() == 5);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i].train_start == ymd(2017 + static_cast<int>(i), 1, 1));
    CHECK(w[i].train_end == ymd(2021, 7, 31));
    CHECK(w[i].test_start == ymd(2021, 8, 2));
    CHECK(w[i].test_weeks == 4);
  }
  REQUIRE(cfg.experiment.feature_sets.size() == 4);
  CHECK(cfg.experiment.feature_sets[0].label() == "base");
  CHECK(cfg.experiment.feature_sets[1].label() == "appointments");
  CHECK(cfg.experiment.feature_sets[2].label() == "cax");
  CHECK(cfg.experiment.feature_sets[3].label() == "teu");
  CHECK(cfg.train.hidden_widths == std::vector<int>{64, 64});
}

TEST_CASE("sync writes the intensity table from profile and day factors") {
  RunConfig cfg;
  CHECK(cfg.sim.base_intensity[0][8] == doctest::Approx(cfg.hourly_profile[8] * cfg.day_factors[0]));
  CHECK(cfg.sim.base_intensity[4][12] == doctest::Approx(cfg.hourly_profile[12] * cfg.day_factors[4]));
  cfg.day_factors[2] = 3.0;
  cfg.calendar.first_hour = 6;
  cfg.sync();
  CHECK(cfg.sim.base_intensity[2][10] == doctest::Approx(3.0 * cfg.hourly_profile[10]));
  CHECK(cfg.sim.calendar.first_hour == 6);
}

TEST_CASE("key-value overrides apply on top of defaults") {
  const auto cfg = config_from_key_values({{"train.epochs", "7"},
                                           {"train.hidden_widths", "16,8,4"},
                                           {"train.activation", "tanh"},
                                           {"sim.appointment_coverage", "0.8"},
                                           {"sim.start_date", "2019-01-01"},
                                           {"calendar.working_days", "Mon,Tue,Wed"},
                                           {"experiment.models", "bayesian"},
                                           {"experiment.feature_sets", "base,appointments+teu"},
                                           {"experiment.windows", "2020-01-01:2020-06-30:2020-07-06:2"}});
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.hidden_widths == std::vector<int>{16, 8, 4});
  CHECK(cfg.train.activation == nn::Activation::Tanh);
  CHECK(cfg.sim.appointment_coverage == 0.8);
  CHECK(cfg.sim.start_date == ymd(2019, 1, 1));
  CHECK(cfg.calendar.working_days == std::array<bool, 7>{true, true, true, false, false, false, false});
  CHECK(cfg.sim.calendar.working_days == cfg.calendar.working_days);
  CHECK(cfg.experiment.models == std::vector<std::string>{"bayesian"});
  REQUIRE(cfg.experiment.feature_sets.size() == 2);
  CHECK(cfg.experiment.feature_sets[1].label() == "appointments+teu");
  REQUIRE(cfg.experiment.windows.size() == 1);
  CHECK(cfg.experiment.windows[0].test_start == ymd(2020, 7, 6));
  CHECK(cfg.experiment.windows[0].test_weeks == 2);
}

TEST_CASE("constant intensity replaces the hourly profile") {
  const auto cfg = config_from_key_values({{"sim.constant_intensity", "4.5"}});
  for (int d = 0; d < 7; ++d) {
    for (int h = 0; h < 24; ++h) REQUIRE(cfg.sim.base_intensity[d][h] == 4.5);
  }
}

TEST_CASE("bad keys and values raise ConfigError") {
  CHECK_THROWS_AS(config_from_key_values({{"train.epoch", "7"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"train.epochs", "seven"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"train.epochs", "0"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"train.learning_rate", "1e-3x"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"sim.start_date", "2021-02-30"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"sim.day_factors", "1,2,3"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"calendar.working_days", "Mon,Funday"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"experiment.models", "lstm"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"experiment.models", ""}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"experiment.feature_sets", "base,weather"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"experiment.windows", "2020-01-01:2020-06-30"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"experiment.jobs", "0"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"train.activation", "gelu"}}), ConfigError);
  CHECK_THROWS_AS(config_from_key_values({{"sim.appointment_coverage", "2"}}), ConfigError);
}

TEST_CASE("key values round-trip exactly") {
  RunConfig cfg;
  cfg.train.learning_rate = 0.1 + 0.2;
  cfg.train.kl_weight = 1.0 / 3.0;
  cfg.sim.rng_seed = 18446744073709551615ULL;
  cfg.experiment.exclude_empty_hours = true;
  const auto kv = to_key_values(cfg);
  const auto back = config_from_key_values(kv);
  CHECK(back.train.learning_rate == cfg.train.learning_rate);
  CHECK(back.train.kl_weight == cfg.train.kl_weight);
  CHECK(back.sim.rng_seed == cfg.sim.rng_seed);
  CHECK(back.experiment.exclude_empty_hours);
  CHECK(to_key_values(back) == kv);
}

TEST_CASE("INI files load, save and reload identically") {
  TempDir dir;
  spit(dir / "run.ini",
       "; comment\n"
       "[train]\n"
       "epochs = 12\n"
       "learning_rate = 0.005\n"
       "\n"
       "[sim]\n"
       "appointment_coverage = 0.8\n"
       "rng_seed = 99\n");
  const auto cfg = load_config(dir / "run.ini");
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.learning_rate == 0.005);
  CHECK(cfg.sim.appointment_coverage == 0.8);
  CHECK(cfg.sim.rng_seed == 99);

  save_config(cfg, dir / "saved.ini");
  const auto text = slurp(dir / "saved.ini");
  CHECK(text.find("[train]\n") != std::string::npos);
  CHECK(text.find("epochs = 12\n") != std::string::npos);
  CHECK(to_key_values(load_config(dir / "saved.ini")) == to_key_values(cfg));
}

TEST_CASE("malformed INI files are reported") {
  TempDir dir;
  spit(dir / "a.ini", "epochs = 3\n");
  CHECK_THROWS_AS(load_config(dir / "a.ini"), ConfigError);
  spit(dir / "b.ini", "[train]\nepochs\n");
  CHECK_THROWS_AS(load_config(dir / "b.ini"), ConfigError);
  spit(dir / "c.ini", "[train]\nwidth = 3\n");
  CHECK_THROWS_AS(load_config(dir / "c.ini"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.ini"), ConfigError);
}

TEST_CASE("a run manifest doubles as a config file") {
  TempDir dir;
  RunConfig cfg;
  cfg.train.epochs = 3;
  cfg.experiment.master_seed = 5;
  RunManifest m;
  m.command = "ablate-windows";
  m.arguments = {"ablate-windows", "--seed", "5"};
  m.config = to_key_values(cfg);
  m.data_fingerprint = sha256_hex("abc");
  m.wall_seconds = 1.5;
  m.outputs = {"window_ablation.csv"};
  write_manifest(m, dir / "manifest.json");

  const auto back = read_manifest(dir / "manifest.json");
  CHECK(back.command == m.command);
  CHECK(back.arguments == m.arguments);
  CHECK(back.config == m.config);
  CHECK(back.data_fingerprint == m.data_fingerprint);
  CHECK(back.software_version == software_version());
  CHECK(back.outputs == m.outputs);
  CHECK(back.wall_seconds == 1.5);

  const auto loaded = load_config(dir / "manifest.json");
  CHECK(to_key_values(loaded) == m.config);

  spit(dir / "other.json", "{\"format\": \"something\"}");
  CHECK_THROWS_AS(load_config(dir / "other.json"), ConfigError);
}

TEST_CASE("sha256 matches known digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("file fingerprints depend on names and contents") {
  TempDir dir;
  spit(dir / "a.csv", "x\n1\n");
  spit(dir / "b.csv", "x\n2\n");
  const auto fp = fingerprint_files({dir / "a.csv", dir / "b.csv"});
  CHECK(fp.size() == 64);
  CHECK(fp == fingerprint_files({dir / "a.csv", dir / "b.csv"}));
  CHECK(fp != fingerprint_files({dir / "b.csv", dir / "a.csv"}));
  spit(dir / "b.csv", "x\n3\n");
  CHECK(fp != fingerprint_files({dir / "a.csv", dir / "b.csv"}));
  CHECK_THROWS(fingerprint_files({dir / "nope.csv"}));
}
