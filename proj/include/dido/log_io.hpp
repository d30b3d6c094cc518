#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dido/simkit.hpp"

namespace dido {

/// Numeric CSV with a mandatory header row. Throws IoError on a missing
/// file, header mismatch (when expected is non-empty), ragged rows or
/// unparsable fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& expected_header = {});
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Shortest round-trippable text for a double (17 significant digits).
std::string format_double(double x);

const std::vector<std::string>& imu_header();
const std::vector<std::string>& rotor_header();
const std::vector<std::string>& truth_header();

/// Writes imu.csv, rotor.csv and truth.csv into dir (created if missing).
void write_flight_log(const std::filesystem::path& dir, const FlightLog& log);

/// Reads the CSV triple. Fields absent from truth.csv are reconstructed:
/// omega_I = gyro - b_gyro, a_GB and alpha_I by central differences.
/// truth.csv is optional when require_truth is false.
FlightLog read_flight_log(const std::filesystem::path& dir, bool require_truth = true);

}  // namespace dido
