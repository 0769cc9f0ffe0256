#include "txsim/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

namespace txsim {

uint64_t mac_lane_cycles(uint64_t dense_macs, int macs_per_lane, double effectual_fraction) {
  const auto eff = static_cast<uint64_t>(
      std::llround(static_cast<double>(dense_macs) * effectual_fraction));
  return ceil_div(eff, static_cast<uint64_t>(macs_per_lane)) +
         static_cast<uint64_t>(ilog2(static_cast<uint64_t>(macs_per_lane)));
}

uint64_t memory_transfer_cycles(uint64_t bytes, const MemConfig& mem,
                                const CalibrationTable& calib) {
  const MemCost& mc = calib.mem_cost(mem.type);
  const double link_bw = mem.channels * mc.bandwidth_bytes_per_cycle_per_channel;
  const uint64_t xfer =
      bytes == 0 ? 0 : static_cast<uint64_t>(std::ceil(static_cast<double>(bytes) / link_bw));
  return static_cast<uint64_t>(mc.access_latency_cycles) + xfer;
}

double accelerator_area_mm2(const AcceleratorConfig& cfg, const CalibrationTable& c) {
  const double per_lane = c.mac_lane.area_mm2 + cfg.macs_per_lane * c.mac_unit.area_mm2;
  const double comparators =
      static_cast<double>(cfg.batch_tile) * cfg.spatial_tile * cfg.spatial_tile;
  const double per_pe = cfg.mac_lanes_per_pe * per_lane +
                        cfg.softmax_per_pe * c.softmax_module.area_mm2 +
                        c.layernorm_module.area_mm2 + comparators * c.comparator.area_mm2;
  const double buffers = static_cast<double>(cfg.act_buffer_mb + cfg.weight_buffer_mb +
                                             cfg.mask_buffer_mb) *
                         c.buffer_mb.area_mm2;
  return cfg.num_pes * per_pe + buffers + c.mem_controller.area_mm2 +
         c.mem_cost(cfg.mem.type).area_mm2;
}

double accelerator_leakage_mw(const AcceleratorConfig& cfg, const CalibrationTable& c) {
  const double per_lane = c.mac_lane.leakage_mw + cfg.macs_per_lane * c.mac_unit.leakage_mw;
  const double comparators =
      static_cast<double>(cfg.batch_tile) * cfg.spatial_tile * cfg.spatial_tile;
  const double per_pe = cfg.mac_lanes_per_pe * per_lane +
                        cfg.softmax_per_pe * c.softmax_module.leakage_mw +
                        c.layernorm_module.leakage_mw + comparators * c.comparator.leakage_mw;
  const double buffers = static_cast<double>(cfg.act_buffer_mb + cfg.weight_buffer_mb +
                                             cfg.mask_buffer_mb) *
                         c.buffer_mb.leakage_mw;
  return cfg.num_pes * per_pe + buffers + c.mem_controller.leakage_mw +
         c.mem_cost(cfg.mem.type).leakage_mw;
}

// ---------------------------------------------------------------------------
// Event-driven engine
// ---------------------------------------------------------------------------

namespace {

enum ModuleKind { kLane = 0, kSoftmaxMod = 1, kLayerNormMod = 2, kPruneMod = 3, kModuleKinds = 4 };

int module_kind_of(TileOpKind k) {
  switch (k) {
    case TileOpKind::TileMatMulAcc:
    case TileOpKind::TileActivation: return kLane;
    case TileOpKind::TileSoftmax: return kSoftmaxMod;
    case TileOpKind::TileLayerNorm: return kLayerNormMod;
    case TileOpKind::TilePrune: return kPruneMod;
    default: return -1;
  }
}

constexpr uint32_t kAdmissionWindow = 8192;  // memory ops admitted ahead of retirement

struct Sim {
  const Schedule& s;
  const CalibrationTable& calib;
  const TiledProgram& prog;

  // static per-tile data
  std::vector<double> tile_rho;
  std::vector<uint64_t> tile_payload_bytes;
  std::vector<uint64_t> tile_mask_bytes;
  std::vector<uint32_t> tile_refcount;
  std::vector<uint8_t> tile_to_weight_buffer;

  // per-op state
  std::vector<uint32_t> pending_deps;
  std::vector<uint32_t> pending_srcs;
  std::vector<uint8_t> retired;
  std::vector<uint32_t> dep_adj;      // dependents arena
  std::vector<uint32_t> dep_off;      // per op: [off, off+cnt)
  std::vector<uint32_t> dep_cnt;

  // matrices
  std::vector<uint32_t> remaining_stores;
  std::vector<std::vector<uint32_t>> waiting_loads;

  // memory engine
  std::set<uint32_t> eligible_mem;
  uint64_t link_free = 0;
  std::vector<uint64_t> bank_free;
  uint32_t next_admit = 0;
  uint32_t min_unretired = 0;

  // buffers
  uint64_t cap[3] = {0, 0, 0};   // act, weight, mask
  uint64_t used[3] = {0, 0, 0};
  uint64_t peak[3] = {0, 0, 0};

  // PEs
  std::vector<uint32_t> head;                      // queue position per PE
  std::vector<std::array<int, kModuleKinds>> busy;
  std::vector<uint64_t> block_start;
  std::vector<uint8_t> block_is_mem;
  std::set<uint32_t> space_blocked_pes;

  // events
  struct Ev {
    uint64_t t;
    uint64_t seq;
    uint32_t op;
    bool operator>(const Ev& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<Ev>> events;
  uint64_t seq = 0;
  uint64_t now = 0;
  uint64_t horizon = 0;  // latest finish time seen
  uint64_t retired_count = 0;

  // stats
  double e_mac_pj = 0, e_grad_mac_pj = 0, e_act_pj = 0, e_softmax_pj = 0, e_ln_pj = 0,
         e_prune_pj = 0, e_mem_pj = 0, e_ctrl_pj = 0, e_buf_pj = 0;
  uint64_t dense_total = 0, eff_total = 0;
  uint64_t bytes_loaded = 0, bytes_stored = 0;
  uint64_t busy_cycles[kModuleKinds] = {0, 0, 0, 0};
  uint64_t link_busy = 0;
  uint64_t stall_compute = 0, stall_memory = 0;
  double rho_role[4] = {0, 0, 0, 0};

  Sim(const Schedule& sched, const CalibrationTable& cal, const CurveSet& curves,
      const PruneThresholds& th)
      : s(sched), calib(cal), prog(sched.program) {
    rho_role[static_cast<int>(Role::Weight)] = resolve_rho(curves, th, Role::Weight);
    rho_role[static_cast<int>(Role::Activation)] = resolve_rho(curves, th, Role::Activation);
    rho_role[static_cast<int>(Role::Gradient)] = resolve_rho(curves, th, Role::Gradient);
    rho_role[static_cast<int>(Role::Const)] = 0.0;
    init_tiles();
    init_ops();
    init_buffers();
    init_pes();
  }

  void init_tiles() {
    const uint32_t elem_bytes = calib.elem_bytes();
    const size_t n = prog.tiles.size();
    tile_rho.resize(n);
    tile_payload_bytes.resize(n);
    tile_mask_bytes.resize(n);
    tile_refcount.assign(n, 0);
    tile_to_weight_buffer.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const TileInfo& t = prog.tiles[i];
      const double role_rho = rho_role[static_cast<int>(t.role)];
      const double rho = 1.0 - (1.0 - t.struct_zero_frac) * (1.0 - role_rho);
      tile_rho[i] = rho;
      const auto nnz = static_cast<uint64_t>(
          std::llround(static_cast<double>(t.elems) * (1.0 - rho)));
      tile_payload_bytes[i] = nnz * elem_bytes;
      tile_mask_bytes[i] = (t.elems + 7) / 8;
      tile_to_weight_buffer[i] = (t.role == Role::Weight || t.role == Role::Const) ? 1 : 0;
    }
    // Prune ops rewrite their tile in place and do not hold a reference.
    for (const auto& op : prog.ops) {
      if (op.kind == TileOpKind::TilePrune) continue;
      if (op.in_tile0 != kNone) ++tile_refcount[op.in_tile0];
      if (op.in_tile1 != kNone && op.in_tile1 != op.in_tile0) ++tile_refcount[op.in_tile1];
    }
  }

  void init_ops() {
    const size_t n = prog.ops.size();
    pending_deps.assign(n, 0);
    pending_srcs.assign(n, 0);
    retired.assign(n, 0);
    dep_cnt.assign(n, 0);
    remaining_stores = prog.stores_per_matrix;
    waiting_loads.assign(prog.stores_per_matrix.size(), {});
    for (const auto& op : prog.ops) {
      for (uint32_t d : {op.dep0, op.dep1, op.dep2}) {
        if (d == kNone) continue;
        ++pending_deps[op.id];
        ++dep_cnt[d];
      }
      if (op.kind == TileOpKind::Load) {
        for (uint16_t i = 0; i < op.src_cnt; ++i) {
          const uint32_t mat = prog.load_sources[op.src_off + i];
          if (remaining_stores[mat] > 0) {
            ++pending_srcs[op.id];
            waiting_loads[mat].push_back(op.id);
          }
        }
      }
    }
    dep_off.assign(n + 1, 0);
    for (size_t i = 0; i < n; ++i) dep_off[i + 1] = dep_off[i] + dep_cnt[i];
    dep_adj.assign(dep_off[n], 0);
    std::vector<uint32_t> cursor(dep_off.begin(), dep_off.end() - 1);
    for (const auto& op : prog.ops)
      for (uint32_t d : {op.dep0, op.dep1, op.dep2})
        if (d != kNone) dep_adj[cursor[d]++] = op.id;
  }

  void init_buffers() {
    cap[0] = uint64_t(s.cfg.act_buffer_mb) << 20;
    cap[1] = uint64_t(s.cfg.weight_buffer_mb) << 20;
    cap[2] = uint64_t(s.cfg.mask_buffer_mb) << 20;
    // Hard feasibility: a single op's working set must fit.
    for (const auto& op : prog.ops) {
      uint64_t need[3] = {0, 0, 0};
      auto add_tile = [&](uint32_t tile) {
        if (tile == kNone) return;
        need[tile_to_weight_buffer[tile] ? 1 : 0] += tile_payload_bytes[tile];
        need[2] += tile_mask_bytes[tile];
      };
      add_tile(op.in_tile0);
      if (op.in_tile1 != op.in_tile0) add_tile(op.in_tile1);
      if (op.out_tile != op.in_tile0) add_tile(op.out_tile);
      if (need[0] > cap[0] || need[1] > cap[1] || need[2] > cap[2])
        throw Error(ErrorCode::BufferOverflow,
                    "single-op working set exceeds a buffer (op " + std::to_string(op.id) +
                        ", node " + std::to_string(op.node) + ")");
    }
    const uint32_t nbanks = std::max(1, s.cfg.mem.banks * s.cfg.mem.ranks);
    bank_free.assign(nbanks, 0);
  }

  void init_pes() {
    const size_t n = s.pe_queues.size();
    head.assign(n, 0);
    busy.assign(n, {0, 0, 0, 0});
    block_start.assign(n, UINT64_MAX);
    block_is_mem.assign(n, 0);
  }

  int module_count(int kind) const {
    switch (kind) {
      case kLane: return s.cfg.mac_lanes_per_pe;
      case kSoftmaxMod: return s.cfg.softmax_per_pe;
      default: return 1;
    }
  }

  bool reserve_tile(uint32_t tile) {
    const int bufi = tile_to_weight_buffer[tile] ? 1 : 0;
    const uint64_t pb = tile_payload_bytes[tile], mb = tile_mask_bytes[tile];
    if (used[bufi] + pb > cap[bufi] || used[2] + mb > cap[2]) return false;
    used[bufi] += pb;
    used[2] += mb;
    peak[bufi] = std::max(peak[bufi], used[bufi]);
    peak[2] = std::max(peak[2], used[2]);
    return true;
  }

  void release_tile(uint32_t tile) {
    const int bufi = tile_to_weight_buffer[tile] ? 1 : 0;
    used[bufi] -= tile_payload_bytes[tile];
    used[2] -= tile_mask_bytes[tile];
  }

  void consume_tile(uint32_t tile, bool& freed) {
    if (tile == kNone) return;
    if (--tile_refcount[tile] == 0) {
      release_tile(tile);
      freed = true;
    }
  }

  double tile_density(uint32_t tile) const { return tile == kNone ? 1.0 : 1.0 - tile_rho[tile]; }

  uint64_t compute_cycles(const TiledOp& op, uint64_t* eff_out, double* energy_pj,
                          bool* grad_mac) const {
    switch (op.kind) {
      case TileOpKind::TileMatMulAcc: {
        const double f = tile_density(op.in_tile0) * tile_density(op.in_tile1);
        const auto eff = static_cast<uint64_t>(
            std::llround(static_cast<double>(op.dense_macs) * f));
        *eff_out = eff;
        *energy_pj = static_cast<double>(eff) * calib.mac_unit.energy_pj;
        *grad_mac = (op.in_tile0 != kNone && prog.tiles[op.in_tile0].role == Role::Gradient) ||
                    (op.in_tile1 != kNone && prog.tiles[op.in_tile1].role == Role::Gradient);
        return std::max<uint64_t>(
            1, ceil_div(eff, static_cast<uint64_t>(s.cfg.macs_per_lane)) +
                   static_cast<uint64_t>(ilog2(static_cast<uint64_t>(s.cfg.macs_per_lane))));
      }
      case TileOpKind::TileSoftmax:
      case TileOpKind::TileLayerNorm:
      case TileOpKind::TileActivation: {
        double density = tile_density(op.in_tile0);
        if (op.in_tile1 != kNone) density = 0.5 * (density + tile_density(op.in_tile1));
        const auto eff = static_cast<uint64_t>(
            std::llround(static_cast<double>(op.elems) * density));
        *eff_out = 0;
        double per_cycle = calib.act_elems_per_cycle, per_pj = calib.act_energy_pj;
        if (op.kind == TileOpKind::TileSoftmax) {
          per_cycle = calib.softmax_elems_per_cycle;
          per_pj = calib.softmax_module.energy_pj;
        } else if (op.kind == TileOpKind::TileLayerNorm) {
          per_cycle = calib.layernorm_elems_per_cycle;
          per_pj = calib.layernorm_module.energy_pj;
        }
        *energy_pj = static_cast<double>(eff) * per_pj;
        *grad_mac = false;
        return std::max<uint64_t>(
            1, static_cast<uint64_t>(std::ceil(static_cast<double>(eff) / per_cycle)));
      }
      case TileOpKind::TilePrune:
        *eff_out = 0;
        *energy_pj = static_cast<double>(op.elems) * calib.comparator.energy_pj;
        *grad_mac = false;
        return 1;  // parallel comparator bank, one cycle per tile
      default:
        *eff_out = 0;
        *energy_pj = 0;
        *grad_mac = false;
        return 0;
    }
  }

  void schedule_event(uint64_t t, uint32_t op) {
    events.push({t, seq++, op});
    horizon = std::max(horizon, t);
  }

  void retire(uint32_t op_id, std::set<uint32_t>& pe_poke, bool& mem_poke) {
    retired[op_id] = 1;
    ++retired_count;
    for (uint32_t i = dep_off[op_id]; i < dep_off[op_id + 1]; ++i) {
      const uint32_t d = dep_adj[i];
      if (--pending_deps[d] == 0) {
        const auto& dop = prog.ops[d];
        if (dop.kind == TileOpKind::Load || dop.kind == TileOpKind::Store) {
          if (d < admit_end() && pending_srcs[d] == 0) {
            eligible_mem.insert(d);
            mem_poke = true;
          }
        } else {
          pe_poke.insert(dop.pe);
        }
      }
    }
  }

  uint32_t admit_end() const {
    const uint64_t e = uint64_t(min_unretired) + kAdmissionWindow;
    return e > prog.ops.size() ? static_cast<uint32_t>(prog.ops.size()) : static_cast<uint32_t>(e);
  }

  void advance_window(bool& mem_poke) {
    while (min_unretired < prog.ops.size() && retired[min_unretired]) ++min_unretired;
    const uint32_t end = admit_end();
    while (next_admit < end) {
      const auto& op = prog.ops[next_admit];
      if ((op.kind == TileOpKind::Load || op.kind == TileOpKind::Store) &&
          pending_deps[next_admit] == 0 && pending_srcs[next_admit] == 0) {
        eligible_mem.insert(next_admit);
        mem_poke = true;
      }
      ++next_admit;
    }
  }

  void poke_memory(uint64_t t) {
    const MemCost& mc = calib.mem_cost(s.cfg.mem.type);
    const double link_bw = s.cfg.mem.channels * mc.bandwidth_bytes_per_cycle_per_channel;
    auto it = eligible_mem.begin();
    while (it != eligible_mem.end()) {
      const uint32_t id = *it;
      const auto& op = prog.ops[id];
      const uint32_t tile = op.kind == TileOpKind::Load ? op.out_tile : op.in_tile0;
      if (op.kind == TileOpKind::Load) {
        if (!reserve_tile(tile)) {
          ++it;  // space blocked; retry after an eviction
          continue;
        }
      }
      const uint64_t bytes = tile_payload_bytes[tile] + tile_mask_bytes[tile];
      const uint32_t bank = tile % bank_free.size();
      const uint64_t access_start = std::max(t, bank_free[bank]);
      const uint64_t data_t = access_start + static_cast<uint64_t>(mc.access_latency_cycles);
      const uint64_t xfer =
          bytes == 0 ? 0
                     : static_cast<uint64_t>(std::ceil(static_cast<double>(bytes) / link_bw));
      const uint64_t start_x = std::max(data_t, link_free);
      const uint64_t done = start_x + xfer;
      link_free = done;
      bank_free[bank] = done;
      link_busy += xfer;

      e_mem_pj += static_cast<double>(bytes) * mc.energy_pj_per_byte;
      e_ctrl_pj += calib.mem_controller.energy_pj;
      e_buf_pj += static_cast<double>(bytes) * calib.buffer_mb.energy_pj;
      if (op.kind == TileOpKind::Load)
        bytes_loaded += bytes;
      else
        bytes_stored += bytes;

      schedule_event(done, id);
      it = eligible_mem.erase(it);
    }
  }

  void poke_pe(uint32_t pe, uint64_t t) {
    auto& queue = s.pe_queues[pe];
    while (head[pe] < queue.size()) {
      const uint32_t id = queue[head[pe]];
      const auto& op = prog.ops[id];
      const int mk = module_kind_of(op.kind);
      bool blocked_mem = false;
      bool can_issue = true;
      if (pending_deps[id] > 0) {
        can_issue = false;
        blocked_mem = (op.kind == TileOpKind::TilePrune);  // waiting on its load
      } else if (busy[pe][mk] >= module_count(mk)) {
        can_issue = false;
      } else if (op.out_tile != kNone && op.chain_end) {
        if (!reserve_tile(op.out_tile)) {
          can_issue = false;
          blocked_mem = true;
          space_blocked_pes.insert(pe);
        }
      }
      if (!can_issue) {
        if (block_start[pe] == UINT64_MAX) {
          block_start[pe] = t;
          block_is_mem[pe] = blocked_mem;
        }
        return;
      }
      if (block_start[pe] != UINT64_MAX) {
        const uint64_t waited = t - block_start[pe];
        if (block_is_mem[pe])
          stall_memory += waited;
        else
          stall_compute += waited;
        block_start[pe] = UINT64_MAX;
      }

      uint64_t eff = 0;
      double energy = 0;
      bool grad_mac = false;
      const uint64_t cyc = compute_cycles(op, &eff, &energy, &grad_mac);
      switch (op.kind) {
        case TileOpKind::TileMatMulAcc:
          dense_total += op.dense_macs;
          eff_total += eff;
          e_mac_pj += energy;
          if (grad_mac) e_grad_mac_pj += energy;
          break;
        case TileOpKind::TileSoftmax: e_softmax_pj += energy; break;
        case TileOpKind::TileLayerNorm: e_ln_pj += energy; break;
        case TileOpKind::TileActivation: e_act_pj += energy; break;
        case TileOpKind::TilePrune: e_prune_pj += energy; break;
        default: break;
      }
      ++busy[pe][mk];
      busy_cycles[mk] += cyc;
      schedule_event(t + cyc, id);
      ++head[pe];
    }
  }

  SimReport run() {
    SimReport rep;
    std::set<uint32_t> pe_poke;
    bool mem_poke = false;
    advance_window(mem_poke);
    poke_memory(0);
    for (uint32_t pe = 0; pe < s.pe_queues.size(); ++pe) poke_pe(pe, 0);

    while (!events.empty()) {
      const Ev ev = events.top();
      events.pop();
      now = ev.t;
      const auto& op = prog.ops[ev.op];
      pe_poke.clear();
      mem_poke = false;
      bool freed = false;

      if (op.kind == TileOpKind::Load) {
        retire(ev.op, pe_poke, mem_poke);
      } else if (op.kind == TileOpKind::Store) {
        retire(ev.op, pe_poke, mem_poke);
        consume_tile(op.in_tile0, freed);
        const uint32_t mat = op.node;
        if (--remaining_stores[mat] == 0) {
          for (uint32_t l : waiting_loads[mat]) {
            if (--pending_srcs[l] == 0 && pending_deps[l] == 0 && l < admit_end()) {
              eligible_mem.insert(l);
              mem_poke = true;
            }
          }
        }
      } else {
        const int mk = module_kind_of(op.kind);
        --busy[op.pe][mk];
        retire(ev.op, pe_poke, mem_poke);
        if (op.kind != TileOpKind::TilePrune) {
          consume_tile(op.in_tile0, freed);
          if (op.in_tile1 != op.in_tile0) consume_tile(op.in_tile1, freed);
        }
        pe_poke.insert(op.pe);
      }

      advance_window(mem_poke);
      if (freed) {
        mem_poke = true;
        for (uint32_t pe : space_blocked_pes) pe_poke.insert(pe);
        space_blocked_pes.clear();
      }
      if (mem_poke || freed) poke_memory(now);
      for (uint32_t pe : pe_poke) poke_pe(pe, now);
    }

    if (retired_count != prog.ops.size())
      throw Error(ErrorCode::BufferOverflow,
                  "simulation deadlocked with " +
                      std::to_string(prog.ops.size() - retired_count) +
                      " ops pending (buffer working set too large for config)");

    rep.total_cycles = horizon;
    rep.latency_ms = static_cast<double>(horizon) / (calib.clock_mhz * 1e3);
    rep.area_mm2 = accelerator_area_mm2(s.cfg, calib);
    const double seconds = static_cast<double>(horizon) / (calib.clock_mhz * 1e6);
    rep.leakage_energy_j = accelerator_leakage_mw(s.cfg, calib) * 1e-3 * seconds;
    rep.dynamic_energy_by_module_j = {
        {"mac", e_mac_pj * 1e-12},          {"activation", e_act_pj * 1e-12},
        {"softmax", e_softmax_pj * 1e-12},  {"layernorm", e_ln_pj * 1e-12},
        {"dynaprop", e_prune_pj * 1e-12},   {"memory", e_mem_pj * 1e-12},
        {"controller", e_ctrl_pj * 1e-12},  {"buffer", e_buf_pj * 1e-12}};
    rep.dynamic_energy_j = 0;
    for (const auto& [k, v] : rep.dynamic_energy_by_module_j) rep.dynamic_energy_j += v;
    rep.mac_dynamic_energy_j = e_mac_pj * 1e-12;
    rep.gradient_mac_energy_j = e_grad_mac_pj * 1e-12;
    rep.compute_stall_pe_cycles = stall_compute;
    rep.memory_stall_pe_cycles = stall_memory;
    rep.dense_macs = dense_total;
    rep.effectual_macs = eff_total;
    rep.skipped_macs = dense_total - eff_total;
    rep.bytes_loaded = bytes_loaded;
    rep.bytes_stored = bytes_stored;
    const double cyc = std::max<double>(1, static_cast<double>(horizon));
    rep.utilization = {
        {"mac_lanes", static_cast<double>(busy_cycles[kLane]) /
                          (cyc * s.cfg.num_pes * s.cfg.mac_lanes_per_pe)},
        {"softmax_modules", static_cast<double>(busy_cycles[kSoftmaxMod]) /
                                (cyc * s.cfg.num_pes * s.cfg.softmax_per_pe)},
        {"layernorm_modules",
         static_cast<double>(busy_cycles[kLayerNormMod]) / (cyc * s.cfg.num_pes)},
        {"dynaprop_modules",
         static_cast<double>(busy_cycles[kPruneMod]) / (cyc * s.cfg.num_pes)},
        {"memory_link", static_cast<double>(link_busy) / cyc}};
    rep.peak_buffer_bytes = {{"act", peak[0]}, {"weight", peak[1]}, {"mask", peak[2]}};
    rep.buffer_capacity_bytes = {{"act", cap[0]}, {"weight", cap[1]}, {"mask", cap[2]}};
    for (const auto& [k, v] : prog.op_counts()) rep.op_counts[k] = v;
    rep.rho_by_role = {{"weight", rho_role[static_cast<int>(Role::Weight)]},
                       {"activation", rho_role[static_cast<int>(Role::Activation)]},
                       {"gradient", rho_role[static_cast<int>(Role::Gradient)]}};
    return rep;
  }
};

}  // namespace

SimReport simulate(const Schedule& schedule, const CalibrationTable& calib, const CurveSet& curves,
                   const PruneThresholds& thresholds) {
  Sim sim(schedule, calib, curves, thresholds);
  return sim.run();
}

std::string report_to_json(const SimReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["total_cycles"] = r.total_cycles;
  j["latency_ms"] = r.latency_ms;
  j["dynamic_energy_j"] = r.dynamic_energy_j;
  j["dynamic_energy_by_module_j"] = r.dynamic_energy_by_module_j;
  j["mac_dynamic_energy_j"] = r.mac_dynamic_energy_j;
  j["gradient_mac_energy_j"] = r.gradient_mac_energy_j;
  j["leakage_energy_j"] = r.leakage_energy_j;
  j["area_mm2"] = r.area_mm2;
  j["compute_stall_pe_cycles"] = r.compute_stall_pe_cycles;
  j["memory_stall_pe_cycles"] = r.memory_stall_pe_cycles;
  j["utilization"] = r.utilization;
  j["dense_macs"] = r.dense_macs;
  j["effectual_macs"] = r.effectual_macs;
  j["skipped_macs"] = r.skipped_macs;
  j["bytes_loaded"] = r.bytes_loaded;
  j["bytes_stored"] = r.bytes_stored;
  j["peak_buffer_bytes"] = r.peak_buffer_bytes;
  j["buffer_capacity_bytes"] = r.buffer_capacity_bytes;
  j["op_counts"] = r.op_counts;
  j["rho_by_role"] = r.rho_by_role;
  return j.dump(2);
}

}  // namespace txsim
