#pragma once

// Raw gate-event schema, its CSV representation, and a seeded simulator that
// stands in for a real depot database.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "depotcast/calendar.hpp"

namespace depotcast::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One truck handling event. Column names on disk: GateInTime, GateOutTime,
/// LoadingTime, DispatchTime, CustomerID, Is20Feet, IsInbound, DepotMoveID.
struct TruckVisitRecord {
  Timestamp gate_in_time;
  Timestamp gate_out_time;
  Timestamp loading_time;
  Timestamp dispatch_time;
  std::string customer_id;
  bool is_20_feet = false;
  bool is_inbound = false;
  std::string depot_move_id;

  [[nodiscard]] double handling_minutes() const;
  bool operator==(const TruckVisitRecord&) const = default;
};

struct AppointmentRecord {
  Timestamp booked_at;
  Timestamp expected_arrival;  // hour resolution
  bool operator==(const AppointmentRecord&) const = default;
};

struct CaxWeekValue {
  IsoWeek iso_week;
  double value = 0.5;  // in [0, 1]; 0.5 = balanced inflow and outflow
  bool operator==(const CaxWeekValue&) const = default;
};

struct SailingEntry {
  Timestamp arrival_time;
  double teu = 0.0;
  bool operator==(const SailingEntry&) const = default;
};

// Arrival-rate profile indexed [day_of_week][hour], trucks per hour.
using IntensityTable = std::array<std::array<double, 24>, 7>;

/// Default profile: morning and afternoon peaks across 05..20, Monday busiest.
IntensityTable default_intensity();
IntensityTable constant_intensity(double rate);

struct SimConfig {
  Date start_date{std::chrono::year{2017}, std::chrono::January, std::chrono::day{1}};
  Date end_date{std::chrono::year{2021}, std::chrono::August, std::chrono::day{31}};
  WorkCalendar calendar{};
  IntensityTable base_intensity = default_intensity();

  double handling_base_minutes = 12.0;
  double congestion_coefficient = 0.4;  // minutes per concurrent truck
  double handling_noise_minutes = 6.0;  // mean of the positive (gamma) noise term
  double handling_noise_shape = 2.0;

  double appointment_coverage = 0.8;
  int max_booking_lead_days = 7;

  // Intensity multiplier: 1 + cax_coupling * (cax - 0.5) + teu_coupling * teu / teu_reference
  double cax_coupling = 1.0;
  double teu_coupling = 0.5;
  double teu_reference = 10000.0;
  int road_lag_hours = 2;

  double cax_persistence = 0.8;
  double cax_innovation_sd = 0.08;
  double ships_per_day = 3.0;
  double teu_min = 1500.0;
  double teu_max = 14000.0;

  int customer_count = 40;
  std::uint64_t rng_seed = 20210801;

  void validate() const;
};

struct GeneratedData {
  std::vector<TruckVisitRecord> events;
  std::vector<AppointmentRecord> appointments;
  std::vector<CaxWeekValue> cax;
  std::vector<SailingEntry> sailings;
};

/// Pure function of cfg: equal configs (including the seed) give equal outputs.
GeneratedData generate_events(const SimConfig& cfg);

struct ReadResult {
  std::vector<TruckVisitRecord> records;
  std::size_t rejected_rows = 0;  // rows with gate-out not after gate-in
};

ReadResult read_events(const std::filesystem::path& path);
void write_events(const std::vector<TruckVisitRecord>& records,
                  const std::filesystem::path& path);

// Companion single-purpose files.
//   appointments: BookedAt,ExpectedArrival
//   cax:          IsoYear,IsoWeek,Cax
//   sailings:     ArrivalTime,Teu
std::vector<AppointmentRecord> read_appointments(const std::filesystem::path& path);
void write_appointments(const std::vector<AppointmentRecord>& appts,
                        const std::filesystem::path& path);
std::vector<CaxWeekValue> read_cax(const std::filesystem::path& path);
void write_cax(const std::vector<CaxWeekValue>& values, const std::filesystem::path& path);
std::vector<SailingEntry> read_sailings(const std::filesystem::path& path);
void write_sailings(const std::vector<SailingEntry>& sailings,
                    const std::filesystem::path& path);

}  // namespace depotcast::data
