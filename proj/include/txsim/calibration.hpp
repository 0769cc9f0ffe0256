#pragma once

#include <map>
#include <string>

#include "txsim/spaces.hpp"

namespace txsim {

// Per-module synthesis-style cost entries. All entries are editable through
// the JSON calibration file; shipped defaults are plausible 14nm magnitudes,
// not measurements.
struct ModuleCost {
  double area_mm2 = 0.0;
  double energy_pj = 0.0;   // per operation (MAC, element, transaction)
  double leakage_mw = 0.0;
};

struct MemCost {
  double access_latency_cycles = 0.0;
  double bandwidth_bytes_per_cycle_per_channel = 0.0;
  double energy_pj_per_byte = 0.0;
  double area_mm2 = 0.0;  // on-chip memories only
  double leakage_mw = 0.0;
};

struct CalibrationTable {
  int calib_version = 1;
  double clock_mhz = 700.0;  // assumption, not reported by any datasheet
  int il_bits = 4;
  int fl_bits = 12;

  ModuleCost mac_unit{0.0006, 0.5, 0.002};
  ModuleCost mac_lane{0.002, 0.0, 0.005};  // per-lane adder tree & control
  ModuleCost softmax_module{0.010, 2.0, 0.010};
  ModuleCost layernorm_module{0.012, 2.0, 0.012};
  ModuleCost comparator{2e-6, 0.05, 1e-5};  // per DynaProp comparator
  ModuleCost buffer_mb{0.6, 0.05, 2.0};     // area/leak per MB, energy per byte
  ModuleCost mem_controller{0.5, 10.0, 5.0};

  double softmax_elems_per_cycle = 8.0;
  double layernorm_elems_per_cycle = 8.0;
  double act_elems_per_cycle = 16.0;
  double act_energy_pj = 0.1;

  std::map<MemType, MemCost> mem{
      {MemType::RRAM, {20.0, 32.0, 1.0, 2.0, 10.0}},
      {MemType::DRAM, {80.0, 8.0, 4.0, 0.0, 0.0}},
      {MemType::HBM, {40.0, 16.0, 2.0, 1.5, 20.0}},
  };

  uint32_t elem_bytes() const { return (il_bits + fl_bits + 7) / 8; }
  const MemCost& mem_cost(MemType t) const;
};

CalibrationTable default_calibration();
std::string calibration_to_json(const CalibrationTable& c);
CalibrationTable calibration_from_json(const std::string& text);
CalibrationTable load_calibration(const std::string& path);

}  // namespace txsim
