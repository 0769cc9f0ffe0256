#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "txsim/calibration.hpp"
#include "txsim/scheduler.hpp"
#include "txsim/sparsity.hpp"

namespace txsim {

struct SimReport {
  uint64_t total_cycles = 0;
  double latency_ms = 0.0;
  double dynamic_energy_j = 0.0;
  std::map<std::string, double> dynamic_energy_by_module_j;
  double leakage_energy_j = 0.0;
  double area_mm2 = 0.0;
  uint64_t compute_stall_pe_cycles = 0;
  uint64_t memory_stall_pe_cycles = 0;
  std::map<std::string, double> utilization;
  uint64_t dense_macs = 0;
  uint64_t effectual_macs = 0;
  uint64_t skipped_macs = 0;
  uint64_t bytes_loaded = 0;
  uint64_t bytes_stored = 0;
  std::map<std::string, uint64_t> peak_buffer_bytes;    // act, weight, mask
  std::map<std::string, uint64_t> buffer_capacity_bytes;
  std::map<std::string, uint64_t> op_counts;
  std::map<std::string, double> rho_by_role;
  double mac_dynamic_energy_j = 0.0;
  double gradient_mac_energy_j = 0.0;  // MAC energy of gradient-operand matmuls
};

std::string report_to_json(const SimReport& r);

// Cycle count of one tile pair on a MAC lane: ceil(effectual/M) plus the
// adder-tree fill of depth log2(M).
uint64_t mac_lane_cycles(uint64_t dense_macs, int macs_per_lane, double effectual_fraction);

// access latency + ceil(bytes / (channels * per-channel bandwidth))
uint64_t memory_transfer_cycles(uint64_t bytes, const MemConfig& mem, const CalibrationTable& calib);

double accelerator_area_mm2(const AcceleratorConfig& cfg, const CalibrationTable& calib);
double accelerator_leakage_mw(const AcceleratorConfig& cfg, const CalibrationTable& calib);

// Event-driven replay of a schedule. Memory ops share one data link with
// bank-overlapped access latency; compute ops issue in order per PE when
// their dependencies have retired and a module of their kind is free.
// Deterministic for fixed inputs.
SimReport simulate(const Schedule& schedule, const CalibrationTable& calib, const CurveSet& curves,
                   const PruneThresholds& thresholds);

}  // namespace txsim
