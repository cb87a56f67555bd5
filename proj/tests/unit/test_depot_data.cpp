#include <cmath>
#include <map>
#include <set>

#include <doctest.h>

#include "depotcast/depot_data.hpp"
#include "support.hpp"

using namespace depotcast;
using namespace depotcast::data;
using namespace std::chrono;
using depotcast::testing::slurp;
using depotcast::testing::spit;
using depotcast::testing::TempDir;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{year{y}, month{m}, day{d}}; }

SimConfig small_config() {
  SimConfig cfg;
  cfg.start_date = ymd(2021, 5, 3);
  cfg.end_date = ymd(2021, 6, 30);
  return cfg;
}

TruckVisitRecord visit(const std::string& in, int stay_minutes, bool twenty, bool inbound) {
  TruckVisitRecord r;
  r.gate_in_time = *parse_timestamp(in);
  r.gate_out_time = r.gate_in_time + minutes{stay_minutes};
  r.loading_time = r.gate_in_time + minutes{stay_minutes / 3};
  r.dispatch_time = r.gate_in_time + minutes{2 * stay_minutes / 3};
  r.customer_id = "C001";
  r.is_20_feet = twenty;
  r.is_inbound = inbound;
  r.depot_move_id = "DM1";
  return r;
}

const std::string kHeader =
    "GateInTime,GateOutTime,LoadingTime,DispatchTime,CustomerID,Is20Feet,IsInbound,DepotMoveID\n";

}  // namespace

TEST_CASE("zero intensity generates no trucks and no appointments") {
  auto cfg = small_config();
  cfg.base_intensity = constant_intensity(0.0);
  const auto g = generate_events(cfg);
  CHECK(g.events.empty());
  CHECK(g.appointments.empty());
  CHECK_FALSE(g.cax.empty());
}

TEST_CASE("constant intensity 10 over 1000 working hours averages 10 per hour") {
  SimConfig cfg;
  cfg.calendar.first_hour = 0;
  cfg.calendar.last_hour = 19;
  cfg.calendar.working_days.fill(true);
  cfg.start_date = ymd(2021, 1, 1);
  cfg.end_date = ymd(2021, 2, 19);  // 50 days x 20 hours
  cfg.base_intensity = constant_intensity(10.0);
  cfg.cax_coupling = 0.0;
  cfg.teu_coupling = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    cfg.rng_seed = seed;
    const auto g = generate_events(cfg);
    const double mean = static_cast<double>(g.events.size()) / 1000.0;
    CHECK(std::abs(mean - 10.0) <= 3.0 * std::sqrt(10.0 / 1000.0));
  }
}

TEST_CASE("generated events respect the working grid and record invariants") {
  const auto cfg = small_config();
  const auto g = generate_events(cfg);
  REQUIRE(g.events.size() > 1000);
  std::set<std::string> ids;
  for (const auto& e : g.events) {
    REQUIRE(cfg.calendar.is_working_hour(e.gate_in_time));
    REQUIRE(e.gate_in_time < e.gate_out_time);
    REQUIRE(e.gate_in_time <= e.loading_time);
    REQUIRE(e.loading_time <= e.gate_out_time);
    REQUIRE(e.gate_in_time <= e.dispatch_time);
    REQUIRE(e.dispatch_time <= e.gate_out_time);
    ids.insert(e.depot_move_id);
  }
  CHECK(ids.size() == g.events.size());
}

TEST_CASE("appointments are booked at least one calendar day ahead") {
  const auto g = generate_events(small_config());
  REQUIRE_FALSE(g.appointments.empty());
  for (const auto& a : g.appointments) {
    REQUIRE(days_between(date_of(a.booked_at), date_of(a.expected_arrival)) >= 1);
    REQUIRE(a.expected_arrival == floor_hour(a.expected_arrival));
  }
}

TEST_CASE("appointment coverage controls the share of booked trucks") {
  auto cfg = small_config();
  cfg.appointment_coverage = 0.8;
  const auto g = generate_events(cfg);
  const double share = static_cast<double>(g.appointments.size()) / g.events.size();
  const double se = std::sqrt(0.8 * 0.2 / g.events.size());
  CHECK(std::abs(share - 0.8) < 4.0 * se);
  cfg.appointment_coverage = 0.0;
  CHECK(generate_events(cfg).appointments.empty());
}

TEST_CASE("CAx values stay in [0, 1] and cover every simulated ISO week") {
  const auto cfg = small_config();
  const auto g = generate_events(cfg);
  std::set<IsoWeek> weeks;
  for (const auto& c : g.cax) {
    CHECK(c.value >= 0.0);
    CHECK(c.value <= 1.0);
    weeks.insert(c.iso_week);
  }
  for (Date d = cfg.start_date; local_days{d} <= local_days{cfg.end_date}; d = add_days(d, 1)) {
    REQUIRE(weeks.count(iso_week(d)) == 1);
  }
  for (const auto& s : g.sailings) CHECK(s.teu >= 0.0);
}

TEST_CASE("congestion raises handling time") {
  auto cfg = small_config();
  cfg.handling_noise_minutes = 0.0;
  cfg.base_intensity = constant_intensity(5.0);
  cfg.cax_coupling = 0.0;
  cfg.teu_coupling = 0.0;
  const auto g = generate_events(cfg);
  std::map<std::int64_t, int> per_hour;
  for (const auto& e : g.events) ++per_hour[hour_index(e.gate_in_time)];
  for (const auto& e : g.events) {
    const double expected =
        std::max(1.0, std::round(cfg.handling_base_minutes +
                                 cfg.congestion_coefficient * per_hour[hour_index(e.gate_in_time)]));
    REQUIRE(e.handling_minutes() == doctest::Approx(expected));
  }
}

TEST_CASE("generation is a pure function of the config") {
  const auto cfg = small_config();
  TempDir a, b;
  const auto g1 = generate_events(cfg);
  const auto g2 = generate_events(cfg);
  write_events(g1.events, a / "events.csv");
  write_events(g2.events, b / "events.csv");
  write_appointments(g1.appointments, a / "appointments.csv");
  write_appointments(g2.appointments, b / "appointments.csv");
  CHECK(slurp(a / "events.csv") == slurp(b / "events.csv"));
  CHECK(slurp(a / "appointments.csv") == slurp(b / "appointments.csv"));

  auto other = cfg;
  other.rng_seed += 1;
  CHECK_FALSE(generate_events(other).events == g1.events);
}

TEST_CASE("invalid simulator configs are rejected") {
  auto cfg = small_config();
  cfg.end_date = cfg.start_date;
  CHECK_THROWS_AS(generate_events(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.appointment_coverage = 1.5;
  CHECK_THROWS_AS(generate_events(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.base_intensity[0][8] = -1.0;
  CHECK_THROWS_AS(generate_events(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.calendar.working_days.fill(false);
  CHECK_THROWS(generate_events(cfg));
}

TEST_CASE("events round-trip through CSV") {
  TempDir dir;
  const auto g = generate_events(small_config());
  write_events(g.events, dir / "events.csv");
  const auto back = read_events(dir / "events.csv");
  CHECK(back.rejected_rows == 0);
  CHECK(back.records == g.events);

  write_appointments(g.appointments, dir / "a.csv");
  CHECK(read_appointments(dir / "a.csv") == g.appointments);
  write_cax(g.cax, dir / "c.csv");
  const auto cax = read_cax(dir / "c.csv");
  REQUIRE(cax.size() == g.cax.size());
  for (std::size_t i = 0; i < cax.size(); ++i) {
    CHECK(cax[i].iso_week == g.cax[i].iso_week);
    CHECK(cax[i].value == g.cax[i].value);
  }
  write_sailings(g.sailings, dir / "s.csv");
  CHECK(read_sailings(dir / "s.csv") == g.sailings);
}

TEST_CASE("zero records write a header-only file") {
  TempDir dir;
  write_events({}, dir / "events.csv");
  CHECK(slurp(dir / "events.csv") == kHeader);
  CHECK(read_events(dir / "events.csv").records.empty());
}

TEST_CASE("flags are written and read as 0/1") {
  TempDir dir;
  write_events({visit("2021-06-23 18:05:00", 20, true, false),
                visit("2021-06-23 18:10:00", 20, false, true)},
               dir / "events.csv");
  const auto text = slurp(dir / "events.csv");
  CHECK(text.find(",C001,1,0,DM1\n") != std::string::npos);
  CHECK(text.find(",C001,0,1,DM1\n") != std::string::npos);
  const auto back = read_events(dir / "events.csv").records;
  REQUIRE(back.size() == 2);
  CHECK(back[0].is_20_feet);
  CHECK_FALSE(back[0].is_inbound);
  CHECK(back[1].is_inbound);
}

TEST_CASE("rows with gate-out before gate-in are rejected and counted") {
  TempDir dir;
  spit(dir / "events.csv",
       kHeader +
           "2021-06-23 18:05:00,2021-06-23 18:25:00,2021-06-23 18:10:00,2021-06-23 18:20:00,C1,1,0,M1\n"
           "2021-06-23 18:30:00,2021-06-23 18:10:00,2021-06-23 18:30:00,2021-06-23 18:30:00,C2,0,0,M2\n"
           "2021-06-23 18:40:00,2021-06-23 18:55:00,2021-06-23 18:45:00,2021-06-23 18:50:00,C3,0,1,M3\n");
  const auto r = read_events(dir / "events.csv");
  CHECK(r.rejected_rows == 1);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].customer_id == "C1");
  CHECK(r.records[1].customer_id == "C3");
}

TEST_CASE("malformed event files report the problem") {
  TempDir dir;
  spit(dir / "missing.csv", "GateInTime,GateOutTime\n");
  CHECK_THROWS_AS(read_events(dir / "missing.csv"), DataError);

  spit(dir / "bad_ts.csv", kHeader +
                               "2021-06-23 18:05:00,2021-06-23 18:25:00,2021-06-23 18:10:00,2021-06-23 18:20:00,C1,1,0,M1\n"
                               "2021-06-23 18:05,2021-06-23 18:25:00,2021-06-23 18:10:00,2021-06-23 18:20:00,C1,1,0,M1\n");
  try {
    read_events(dir / "bad_ts.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  spit(dir / "bad_flag.csv",
       kHeader + "2021-06-23 18:05:00,2021-06-23 18:25:00,2021-06-23 18:10:00,2021-06-23 18:20:00,C1,yes,0,M1\n");
  CHECK_THROWS_AS(read_events(dir / "bad_flag.csv"), DataError);
  CHECK_THROWS_AS(read_events(dir / "does_not_exist.csv"), DataError);
}

TEST_CASE("columns may appear in any order") {
  TempDir dir;
  spit(dir / "events.csv",
       "DepotMoveID,IsInbound,Is20Feet,CustomerID,DispatchTime,LoadingTime,GateOutTime,GateInTime\n"
       "M1,1,0,C9,2021-06-23 18:20:00,2021-06-23 18:10:00,2021-06-23 18:25:00,2021-06-23 18:05:00\n");
  const auto r = read_events(dir / "events.csv").records;
  REQUIRE(r.size() == 1);
  CHECK(r[0].handling_minutes() == doctest::Approx(20.0));
  CHECK(r[0].is_inbound);
  CHECK(r[0].customer_id == "C9");
}
