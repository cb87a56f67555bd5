#include "depotcast/depot_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

#include <fmt/format.h>

#include "csv.hpp"

namespace depotcast::data {

using namespace std::chrono;

double TruckVisitRecord::handling_minutes() const {
  return duration<double, minutes::period>(gate_out_time - gate_in_time).count();
}

IntensityTable default_intensity() {
  // Hours 05..20.
  constexpr std::array<double, 16> hourly{8, 18, 26, 28, 24, 20, 18, 17,
                                          19, 24, 26, 22, 16, 12, 7, 3};
  constexpr std::array<double, 7> daily{1.15, 1.05, 1.0, 0.95, 0.85, 0.5, 0.2};
  IntensityTable t{};
  for (std::size_t d = 0; d < 7; ++d) {
    for (std::size_t i = 0; i < hourly.size(); ++i) t[d][5 + i] = hourly[i] * daily[d];
  }
  return t;
}

IntensityTable constant_intensity(double rate) {
  IntensityTable t{};
  for (auto& day : t) day.fill(rate);
  return t;
}

void SimConfig::validate() const {
  if (!start_date.ok() || !end_date.ok() || !(local_days{start_date} < local_days{end_date})) {
    throw std::invalid_argument(fmt::format("invalid date range {} .. {}", format_date(start_date),
                                            format_date(end_date)));
  }
  calendar.validate();
  for (const auto& day : base_intensity) {
    for (double rate : day) {
      if (!std::isfinite(rate) || rate < 0.0) {
        throw std::invalid_argument("arrival intensity must be finite and non-negative");
      }
    }
  }
  if (!(appointment_coverage >= 0.0 && appointment_coverage <= 1.0)) {
    throw std::invalid_argument("appointment_coverage must lie in [0, 1]");
  }
  if (!(handling_base_minutes > 0.0)) throw std::invalid_argument("handling_base_minutes must be > 0");
  if (!(congestion_coefficient >= 0.0)) {
    throw std::invalid_argument("congestion_coefficient must be >= 0");
  }
  if (!(handling_noise_minutes >= 0.0) || !(handling_noise_shape > 0.0)) {
    throw std::invalid_argument("handling noise mean must be >= 0 and shape > 0");
  }
  if (max_booking_lead_days < 1) throw std::invalid_argument("max_booking_lead_days must be >= 1");
  if (road_lag_hours < 0) throw std::invalid_argument("road_lag_hours must be >= 0");
  if (!(cax_persistence >= 0.0 && cax_persistence < 1.0) || !(cax_innovation_sd >= 0.0)) {
    throw std::invalid_argument("CAx process needs persistence in [0, 1) and sd >= 0");
  }
  if (!(ships_per_day >= 0.0) || !(teu_min >= 0.0) || !(teu_max >= teu_min) ||
      !(teu_reference > 0.0)) {
    throw std::invalid_argument("invalid sailing-list parameters");
  }
  if (customer_count < 1) throw std::invalid_argument("customer_count must be >= 1");
}

namespace {

// Exogenous series run past end_date so forecasts issued at the end of the
// simulated span still find CAx and sailing data.
constexpr int kExogenousLookaheadDays = 14;

int draw_poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

std::vector<CaxWeekValue> simulate_cax(const SimConfig& cfg, std::mt19937_64& rng) {
  std::vector<CaxWeekValue> out;
  const Date first = add_days(cfg.start_date, -day_of_week(cfg.start_date));
  const Date last = add_days(cfg.end_date, kExogenousLookaheadDays);
  std::normal_distribution<double> innovation(0.0, 1.0);
  double value = 0.5;
  for (Date monday = first; local_days{monday} <= local_days{last}; monday = add_days(monday, 7)) {
    value = 0.5 + cfg.cax_persistence * (value - 0.5) + cfg.cax_innovation_sd * innovation(rng);
    value = std::clamp(value, 0.02, 0.98);
    out.push_back({iso_week(monday), value});
  }
  return out;
}

std::vector<SailingEntry> simulate_sailings(const SimConfig& cfg, std::mt19937_64& rng) {
  std::vector<SailingEntry> out;
  const Date first = add_days(cfg.start_date, -1);
  const Date last = add_days(cfg.end_date, kExogenousLookaheadDays);
  std::uniform_int_distribution<int> minute_of_day(0, 24 * 60 - 1);
  std::uniform_real_distribution<double> teu(cfg.teu_min, cfg.teu_max);
  for (Date d = first; local_days{d} <= local_days{last}; d = add_days(d, 1)) {
    const int ships = draw_poisson(rng, cfg.ships_per_day);
    std::vector<SailingEntry> day;
    for (int i = 0; i < ships; ++i) {
      const int m = minute_of_day(rng);
      day.push_back({make_timestamp(d, m / 60, m % 60), std::round(teu(rng))});
    }
    std::stable_sort(day.begin(), day.end(),
                     [](const auto& a, const auto& b) { return a.arrival_time < b.arrival_time; });
    out.insert(out.end(), day.begin(), day.end());
  }
  return out;
}

}  // namespace

GeneratedData generate_events(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);

  GeneratedData out;
  out.cax = simulate_cax(cfg, rng);
  out.sailings = simulate_sailings(cfg, rng);

  std::map<IsoWeek, double> cax_by_week;
  for (const auto& c : out.cax) cax_by_week[c.iso_week] = c.value;
  std::unordered_map<std::int64_t, double> teu_by_hour;
  for (const auto& s : out.sailings) teu_by_hour[hour_index(s.arrival_time)] += s.teu;

  std::uniform_int_distribution<int> minute(0, 59);
  std::uniform_int_distribution<int> hour_of_day(0, 23);
  std::uniform_int_distribution<int> lead_days(1, cfg.max_booking_lead_days);
  std::uniform_int_distribution<int> customer(1, cfg.customer_count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double noise_scale =
      cfg.handling_noise_minutes > 0.0 ? cfg.handling_noise_minutes / cfg.handling_noise_shape
                                       : 1.0;
  std::gamma_distribution<double> noise(cfg.handling_noise_shape, noise_scale);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution booked(cfg.appointment_coverage);

  std::uint64_t move_id = 0;
  for (Date d = cfg.start_date; local_days{d} <= local_days{cfg.end_date}; d = add_days(d, 1)) {
    if (!cfg.calendar.is_working_day(d)) continue;
    const auto dow = static_cast<std::size_t>(day_of_week(d));
    const double cax = cax_by_week.at(iso_week(d));
    for (int h = cfg.calendar.first_hour; h <= cfg.calendar.last_hour; ++h) {
      const Timestamp hour_start = make_timestamp(d, h);
      double teu_lagged = 0.0;
      if (auto it = teu_by_hour.find(hour_index(hour_start) - cfg.road_lag_hours);
          it != teu_by_hour.end()) {
        teu_lagged = it->second;
      }
      const double multiplier =
          std::max(0.0, 1.0 + cfg.cax_coupling * (cax - 0.5) +
                            cfg.teu_coupling * teu_lagged / cfg.teu_reference);
      const int arrivals =
          draw_poisson(rng, cfg.base_intensity[dow][static_cast<std::size_t>(h)] * multiplier);
      if (arrivals == 0) continue;

      std::vector<int> offsets(static_cast<std::size_t>(arrivals));
      for (auto& m : offsets) m = minute(rng);
      std::sort(offsets.begin(), offsets.end());

      for (int m : offsets) {
        TruckVisitRecord r;
        r.gate_in_time = hour_start + minutes{m};
        const double raw = cfg.handling_base_minutes + cfg.congestion_coefficient * arrivals +
                           (cfg.handling_noise_minutes > 0.0 ? noise(rng) : 0.0);
        const auto stay = std::max<long long>(1, std::llround(raw));
        r.gate_out_time = r.gate_in_time + minutes{stay};
        const auto loading = std::llround((0.2 + 0.4 * unit(rng)) * static_cast<double>(stay));
        const auto dispatch = std::llround((0.6 + 0.35 * unit(rng)) * static_cast<double>(stay));
        r.loading_time = r.gate_in_time + minutes{loading};
        r.dispatch_time = r.gate_in_time + minutes{dispatch};
        r.customer_id = fmt::format("C{:03d}", customer(rng));
        r.is_20_feet = coin(rng);
        r.is_inbound = coin(rng);
        r.depot_move_id = fmt::format("DM{:08d}", ++move_id);

        if (booked(rng)) {
          const Date booking_day = add_days(d, -lead_days(rng));
          const int bh = hour_of_day(rng);
          out.appointments.push_back(
              {make_timestamp(booking_day, bh, minute(rng)), floor_hour(r.gate_in_time)});
        }
        out.events.push_back(std::move(r));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace {

constexpr std::array<std::string_view, 8> kEventColumns{
    "GateInTime", "GateOutTime", "LoadingTime", "DispatchTime",
    "CustomerID", "Is20Feet",    "IsInbound",   "DepotMoveID"};

Timestamp parse_ts_field(std::string_view text, const csv::Table& t, std::size_t row,
                         std::string_view column) {
  auto ts = parse_timestamp(text);
  if (!ts) {
    throw DataError(fmt::format("'{}' row {}: unparseable {} '{}'", t.path(), row + 1, column,
                                text));
  }
  return *ts;
}

bool parse_flag(std::string_view text, const csv::Table& t, std::size_t row,
                std::string_view column) {
  if (text == "1") return true;
  if (text == "0") return false;
  throw DataError(
      fmt::format("'{}' row {}: {} must be 0 or 1, got '{}'", t.path(), row + 1, column, text));
}

double parse_real(std::string_view text, const csv::Table& t, std::size_t row,
                  std::string_view column) {
  auto v = csv::to_double(text);
  if (!v) {
    throw DataError(
        fmt::format("'{}' row {}: unparseable {} '{}'", t.path(), row + 1, column, text));
  }
  return *v;
}

}  // namespace

ReadResult read_events(const std::filesystem::path& path) {
  const auto table = csv::Table::load<DataError>(path);
  std::array<std::size_t, kEventColumns.size()> col{};
  for (std::size_t i = 0; i < kEventColumns.size(); ++i) {
    col[i] = table.column<DataError>(kEventColumns[i]);
  }

  ReadResult result;
  result.records.reserve(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto f = table.row<DataError>(i);
    TruckVisitRecord r;
    r.gate_in_time = parse_ts_field(f[col[0]], table, i, kEventColumns[0]);
    r.gate_out_time = parse_ts_field(f[col[1]], table, i, kEventColumns[1]);
    r.loading_time = parse_ts_field(f[col[2]], table, i, kEventColumns[2]);
    r.dispatch_time = parse_ts_field(f[col[3]], table, i, kEventColumns[3]);
    r.customer_id = std::string(f[col[4]]);
    r.is_20_feet = parse_flag(f[col[5]], table, i, kEventColumns[5]);
    r.is_inbound = parse_flag(f[col[6]], table, i, kEventColumns[6]);
    r.depot_move_id = std::string(f[col[7]]);

    const bool ordered = r.gate_in_time < r.gate_out_time && r.gate_in_time <= r.loading_time &&
                         r.loading_time <= r.gate_out_time && r.gate_in_time <= r.dispatch_time &&
                         r.dispatch_time <= r.gate_out_time;
    if (!ordered) {
      ++result.rejected_rows;
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

void write_events(const std::vector<TruckVisitRecord>& records,
                  const std::filesystem::path& path) {
  auto out = csv::open_for_write<DataError>(path);
  out << "GateInTime,GateOutTime,LoadingTime,DispatchTime,CustomerID,Is20Feet,IsInbound,"
         "DepotMoveID\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", format_timestamp(r.gate_in_time),
                       format_timestamp(r.gate_out_time), format_timestamp(r.loading_time),
                       format_timestamp(r.dispatch_time), r.customer_id, r.is_20_feet ? 1 : 0,
                       r.is_inbound ? 1 : 0, r.depot_move_id);
  }
  csv::finish<DataError>(out, path);
}

std::vector<AppointmentRecord> read_appointments(const std::filesystem::path& path) {
  const auto table = csv::Table::load<DataError>(path);
  const auto booked = table.column<DataError>("BookedAt");
  const auto expected = table.column<DataError>("ExpectedArrival");
  std::vector<AppointmentRecord> out;
  out.reserve(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto f = table.row<DataError>(i);
    AppointmentRecord a{parse_ts_field(f[booked], table, i, "BookedAt"),
                        parse_ts_field(f[expected], table, i, "ExpectedArrival")};
    if (!(a.booked_at < a.expected_arrival)) {
      throw DataError(fmt::format("'{}' row {}: BookedAt must precede ExpectedArrival",
                                  table.path(), i + 1));
    }
    out.push_back(a);
  }
  return out;
}

void write_appointments(const std::vector<AppointmentRecord>& appts,
                        const std::filesystem::path& path) {
  auto out = csv::open_for_write<DataError>(path);
  out << "BookedAt,ExpectedArrival\n";
  for (const auto& a : appts) {
    out << format_timestamp(a.booked_at) << ',' << format_timestamp(a.expected_arrival) << '\n';
  }
  csv::finish<DataError>(out, path);
}

std::vector<CaxWeekValue> read_cax(const std::filesystem::path& path) {
  const auto table = csv::Table::load<DataError>(path);
  const auto cy = table.column<DataError>("IsoYear");
  const auto cw = table.column<DataError>("IsoWeek");
  const auto cv = table.column<DataError>("Cax");
  std::vector<CaxWeekValue> out;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto f = table.row<DataError>(i);
    const auto y = csv::to_int(f[cy]);
    const auto w = csv::to_int(f[cw]);
    const double v = parse_real(f[cv], table, i, "Cax");
    if (!y || !w || *w < 1 || *w > 53) {
      throw DataError(fmt::format("'{}' row {}: bad ISO year/week", table.path(), i + 1));
    }
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError(fmt::format("'{}' row {}: Cax {} outside [0, 1]", table.path(), i + 1, v));
    }
    out.push_back({{static_cast<int>(*y), static_cast<unsigned>(*w)}, v});
  }
  return out;
}

void write_cax(const std::vector<CaxWeekValue>& values, const std::filesystem::path& path) {
  auto out = csv::open_for_write<DataError>(path);
  out << "IsoYear,IsoWeek,Cax\n";
  for (const auto& c : values) {
    out << fmt::format("{},{},{}\n", c.iso_week.year, c.iso_week.week, c.value);
  }
  csv::finish<DataError>(out, path);
}

std::vector<SailingEntry> read_sailings(const std::filesystem::path& path) {
  const auto table = csv::Table::load<DataError>(path);
  const auto ct = table.column<DataError>("ArrivalTime");
  const auto cteu = table.column<DataError>("Teu");
  std::vector<SailingEntry> out;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto f = table.row<DataError>(i);
    SailingEntry s{parse_ts_field(f[ct], table, i, "ArrivalTime"),
                   parse_real(f[cteu], table, i, "Teu")};
    if (!(s.teu >= 0.0)) {
      throw DataError(fmt::format("'{}' row {}: negative Teu", table.path(), i + 1));
    }
    out.push_back(s);
  }
  return out;
}

void write_sailings(const std::vector<SailingEntry>& sailings,
                    const std::filesystem::path& path) {
  auto out = csv::open_for_write<DataError>(path);
  out << "ArrivalTime,Teu\n";
  for (const auto& s : sailings) {
    out << fmt::format("{},{}\n", format_timestamp(s.arrival_time), s.teu);
  }
  csv::finish<DataError>(out, path);
}

}  // namespace depotcast::data
