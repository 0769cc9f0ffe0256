#include "txsim/calibration.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace txsim {

const MemCost& CalibrationTable::mem_cost(MemType t) const {
  auto it = mem.find(t);
  if (it == mem.end())
    throw Error(ErrorCode::IncompleteCalibration, "no memory entry for " + mem_type_name(t));
  return it->second;
}

CalibrationTable default_calibration() { return CalibrationTable{}; }

static json module_json(const ModuleCost& m) {
  return {{"area_mm2", m.area_mm2}, {"energy_pj", m.energy_pj}, {"leakage_mw", m.leakage_mw}};
}

static ModuleCost module_from(const json& j, const std::string& name) {
  ModuleCost m;
  try {
    m.area_mm2 = j.at("area_mm2").get<double>();
    m.energy_pj = j.at("energy_pj").get<double>();
    m.leakage_mw = j.at("leakage_mw").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompleteCalibration, "calibration entry '" + name + "': " + e.what());
  }
  if (m.area_mm2 < 0 || m.energy_pj < 0 || m.leakage_mw < 0)
    throw Error(ErrorCode::IncompleteCalibration, "calibration entry '" + name + "' is negative");
  return m;
}

std::string calibration_to_json(const CalibrationTable& c) {
  json j;
  j["calib_version"] = c.calib_version;
  j["clock_mhz"] = c.clock_mhz;
  j["fixed_point"] = {{"il_bits", c.il_bits}, {"fl_bits", c.fl_bits}};
  j["mac_unit"] = module_json(c.mac_unit);
  j["mac_lane"] = module_json(c.mac_lane);
  j["softmax_module"] = module_json(c.softmax_module);
  j["softmax_module"]["elems_per_cycle"] = c.softmax_elems_per_cycle;
  j["layernorm_module"] = module_json(c.layernorm_module);
  j["layernorm_module"]["elems_per_cycle"] = c.layernorm_elems_per_cycle;
  j["activation"] = {{"elems_per_cycle", c.act_elems_per_cycle}, {"energy_pj", c.act_energy_pj}};
  j["dynaprop_comparator"] = module_json(c.comparator);
  j["buffer_per_mb"] = module_json(c.buffer_mb);
  j["memory_controller"] = module_json(c.mem_controller);
  json mems;
  for (const auto& [type, mc] : c.mem) {
    mems[mem_type_name(type)] = {
        {"access_latency_cycles", mc.access_latency_cycles},
        {"bandwidth_bytes_per_cycle_per_channel", mc.bandwidth_bytes_per_cycle_per_channel},
        {"energy_pj_per_byte", mc.energy_pj_per_byte},
        {"area_mm2", mc.area_mm2},
        {"leakage_mw", mc.leakage_mw}};
  }
  j["memory"] = std::move(mems);
  return j.dump(2);
}

CalibrationTable calibration_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("calibration parse error: ") + e.what());
  }
  CalibrationTable c;
  try {
    c.calib_version = j.at("calib_version").get<int>();
    c.clock_mhz = j.at("clock_mhz").get<double>();
    c.il_bits = j.at("fixed_point").at("il_bits").get<int>();
    c.fl_bits = j.at("fixed_point").at("fl_bits").get<int>();
    c.mac_unit = module_from(j.at("mac_unit"), "mac_unit");
    c.mac_lane = module_from(j.at("mac_lane"), "mac_lane");
    c.softmax_module = module_from(j.at("softmax_module"), "softmax_module");
    c.softmax_elems_per_cycle = j.at("softmax_module").at("elems_per_cycle").get<double>();
    c.layernorm_module = module_from(j.at("layernorm_module"), "layernorm_module");
    c.layernorm_elems_per_cycle = j.at("layernorm_module").at("elems_per_cycle").get<double>();
    c.act_elems_per_cycle = j.at("activation").at("elems_per_cycle").get<double>();
    c.act_energy_pj = j.at("activation").at("energy_pj").get<double>();
    c.comparator = module_from(j.at("dynaprop_comparator"), "dynaprop_comparator");
    c.buffer_mb = module_from(j.at("buffer_per_mb"), "buffer_per_mb");
    c.mem_controller = module_from(j.at("memory_controller"), "memory_controller");
    c.mem.clear();
    const auto& mems = j.at("memory");
    for (auto it = mems.begin(); it != mems.end(); ++it) {
      MemType t;
      if (it.key() == "rram") t = MemType::RRAM;
      else if (it.key() == "dram") t = MemType::DRAM;
      else if (it.key() == "hbm") t = MemType::HBM;
      else throw Error(ErrorCode::IncompleteCalibration, "unknown memory type " + it.key());
      MemCost mc;
      mc.access_latency_cycles = it->at("access_latency_cycles").get<double>();
      mc.bandwidth_bytes_per_cycle_per_channel =
          it->at("bandwidth_bytes_per_cycle_per_channel").get<double>();
      mc.energy_pj_per_byte = it->at("energy_pj_per_byte").get<double>();
      mc.area_mm2 = it->at("area_mm2").get<double>();
      mc.leakage_mw = it->at("leakage_mw").get<double>();
      c.mem[t] = mc;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompleteCalibration, std::string("calibration incomplete: ") + e.what());
  }
  if (c.clock_mhz <= 0) throw Error(ErrorCode::IncompleteCalibration, "clock_mhz must be > 0");
  return c;
}

CalibrationTable load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open calibration file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return calibration_from_json(ss.str());
}

}  // namespace txsim
