#include "txsim/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

using nlohmann::json;

namespace txsim {

// ---------------------------------------------------------------------------
// Head categories
// ---------------------------------------------------------------------------

int head_category(const HeadOp& h) {
  switch (h.kind) {
    case HeadKind::SA_SDP: return 0;
    case HeadKind::SA_WMA: return 1;
    case HeadKind::LT_DFT: return 2;
    case HeadKind::LT_DCT: return 3;
    case HeadKind::DSC:
      if (h.kernel == 5) return 4;
      if (h.kernel == 9) return 5;
      if (h.kernel == 13) return 6;
      return -1;
  }
  return -1;
}

HeadOp category_head(int category) {
  switch (category) {
    case 0: return {HeadKind::SA_SDP, 0};
    case 1: return {HeadKind::SA_WMA, 0};
    case 2: return {HeadKind::LT_DFT, 0};
    case 3: return {HeadKind::LT_DCT, 0};
    case 4: return {HeadKind::DSC, 5};
    case 5: return {HeadKind::DSC, 9};
    case 6: return {HeadKind::DSC, 13};
  }
  throw Error(ErrorCode::InvalidConfig, "bad head category");
}

std::string head_name(const HeadOp& h) {
  switch (h.kind) {
    case HeadKind::SA_SDP: return "sa_sdp";
    case HeadKind::SA_WMA: return "sa_wma";
    case HeadKind::LT_DFT: return "lt_dft";
    case HeadKind::LT_DCT: return "lt_dct";
    case HeadKind::DSC: return "dsc" + std::to_string(h.kernel);
  }
  return "?";
}

std::optional<HeadOp> head_from_name(const std::string& name) {
  if (name == "sa_sdp") return HeadOp{HeadKind::SA_SDP, 0};
  if (name == "sa_wma") return HeadOp{HeadKind::SA_WMA, 0};
  if (name == "lt_dft") return HeadOp{HeadKind::LT_DFT, 0};
  if (name == "lt_dct") return HeadOp{HeadKind::LT_DCT, 0};
  if (name.rfind("dsc", 0) == 0 && name.size() > 3) {
    int k = std::atoi(name.c_str() + 3);
    if (k > 0) return HeadOp{HeadKind::DSC, k};
  }
  return std::nullopt;
}

static std::array<int, kHeadCategories> head_counts(const std::vector<HeadOp>& heads) {
  std::array<int, kHeadCategories> c{};
  for (const auto& h : heads) {
    int cat = head_category(h);
    if (cat < 0) return {-1, -1, -1, -1, -1, -1, -1};
    ++c[cat];
  }
  return c;
}

bool LayerConfig::operator==(const LayerConfig& o) const {
  return hidden == o.hidden && ff == o.ff && head_counts(heads) == head_counts(o.heads);
}

std::string mem_type_name(MemType t) {
  switch (t) {
    case MemType::RRAM: return "rram";
    case MemType::DRAM: return "dram";
    case MemType::HBM: return "hbm";
  }
  return "?";
}

std::string activation_name(Activation a) { return a == Activation::ReLU ? "relu" : "gelu"; }

static MemType mem_type_from(const std::string& s) {
  if (s == "rram") return MemType::RRAM;
  if (s == "dram") return MemType::DRAM;
  if (s == "hbm") return MemType::HBM;
  throw Error(ErrorCode::IoError, "unknown memory type: " + s);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

template <typename T>
static bool in_set(const std::vector<T>& set, const T& v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

ValidityReport validate_accelerator(const AcceleratorConfig& cfg, const AcceleratorSpace& s) {
  ValidityReport r;
  if (!in_set(s.batch_tile, cfg.batch_tile)) r.fail("batch_tile", "not a permissible value");
  if (!in_set(s.spatial_tile, cfg.spatial_tile)) r.fail("spatial_tile", "not a permissible value");
  if (!in_set(s.activation, cfg.activation)) r.fail("activation", "not a permissible value");
  if (!in_set(s.num_pes, cfg.num_pes)) r.fail("num_pes", "not a permissible value");
  if (!in_set(s.mac_lanes, cfg.mac_lanes_per_pe)) r.fail("mac_lanes_per_pe", "not a permissible value");
  if (!in_set(s.macs_per_lane, cfg.macs_per_lane)) r.fail("macs_per_lane", "not a permissible value");
  if (!in_set(s.softmax_per_pe, cfg.softmax_per_pe)) r.fail("softmax_per_pe", "not a permissible value");
  if (!in_set(s.batch_size, cfg.batch_size)) r.fail("batch_size", "not a permissible value");
  if (!in_set(s.act_buffer_mb, cfg.act_buffer_mb)) r.fail("act_buffer_mb", "not a permissible value");
  if (!in_set(s.weight_buffer_mb, cfg.weight_buffer_mb))
    r.fail("weight_buffer_mb", "not a permissible value");
  if (!in_set(s.mask_buffer_mb, cfg.mask_buffer_mb)) r.fail("mask_buffer_mb", "not a permissible value");
  if (!in_set(s.mem_configs, cfg.mem)) r.fail("mem_config", "tuple not in the supported list");
  return r;
}

ValidityReport validate_transformer(const TransformerConfig& cfg, const TransformerSpace& s,
                                    ValidationMode mode) {
  ValidityReport r;
  const bool strict = (mode == ValidationMode::Strict);
  if (!in_set(s.num_layers, static_cast<int>(cfg.layers.size())))
    r.fail("num_layers", std::to_string(cfg.layers.size()) + " not a permissible layer count");
  const auto& hidden_set = strict ? s.hidden_strict : s.hidden_extended;
  const auto& kernel_set = strict ? s.dsc_kernels_strict : s.dsc_kernels_extended;
  for (size_t j = 0; j < cfg.layers.size(); ++j) {
    const auto& L = cfg.layers[j];
    const std::string tag = "layer" + std::to_string(j + 1);
    if (!in_set(hidden_set, L.hidden)) r.fail(tag + ".hidden", std::to_string(L.hidden) + " not allowed");
    if (!in_set(s.num_heads, static_cast<int>(L.heads.size())))
      r.fail(tag + ".num_heads", std::to_string(L.heads.size()) + " not a permissible head count");
    for (const auto& h : L.heads) {
      if (h.kind == HeadKind::DSC) {
        if (!in_set(kernel_set, h.kernel))
          r.fail(tag + ".dsc_kernel", std::to_string(h.kernel) + " not allowed");
      } else if (h.kernel != 0) {
        r.fail(tag + ".head_param", "kernel parameter present on a non-convolution head");
      }
    }
    if (strict && !L.heads.empty()) {
      for (const auto& h : L.heads) {
        if (!(h == L.heads.front())) {
          r.fail(tag + ".heads", "mixed head types in one layer");
          break;
        }
      }
    }
    if (!in_set(s.ff_stack_lengths, static_cast<int>(L.ff.size())))
      r.fail(tag + ".ff_stack", std::to_string(L.ff.size()) + " not a permissible stack length");
    for (int f : L.ff)
      if (!in_set(s.ff_dims, f)) r.fail(tag + ".ff_dim", std::to_string(f) + " not allowed");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cardinality
// ---------------------------------------------------------------------------

uint64_t count_accelerator_space(const AcceleratorSpace& s) {
  uint64_t n = 1;
  n *= s.batch_tile.size();
  n *= s.spatial_tile.size();
  n *= s.activation.size();
  n *= s.num_pes.size();
  n *= s.mac_lanes.size();
  n *= s.macs_per_lane.size();
  n *= s.softmax_per_pe.size();
  n *= s.batch_size.size();
  n *= s.act_buffer_mb.size();
  n *= s.weight_buffer_mb.size();
  n *= s.mask_buffer_mb.size();
  n *= s.mem_configs.size();
  return n;
}

// Walks the full cross product. The two innermost axes are fused into the
// loop body; everything else is flattened into one index so the parallel
// version can split it evenly.
static uint64_t enumerate_impl(const AcceleratorSpace& s, bool parallel) {
  const std::vector<size_t> dims = {
      s.batch_tile.size(),    s.spatial_tile.size(),     s.activation.size(),
      s.num_pes.size(),       s.mac_lanes.size(),        s.macs_per_lane.size(),
      s.softmax_per_pe.size(), s.batch_size.size(),      s.act_buffer_mb.size(),
      s.weight_buffer_mb.size()};
  uint64_t outer = 1;
  for (size_t d : dims) outer *= d;
  const long long outer_ll = static_cast<long long>(outer);

  uint64_t total = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : total) if (parallel)
#endif
  for (long long oi = 0; oi < outer_ll; ++oi) {
    uint64_t rest = static_cast<uint64_t>(oi);
    std::array<size_t, 10> idx{};
    for (int d = 9; d >= 0; --d) {
      idx[d] = rest % dims[d];
      rest /= dims[d];
    }
    AcceleratorConfig cfg;
    cfg.batch_tile = s.batch_tile[idx[0]];
    cfg.spatial_tile = s.spatial_tile[idx[1]];
    cfg.activation = s.activation[idx[2]];
    cfg.num_pes = s.num_pes[idx[3]];
    cfg.mac_lanes_per_pe = s.mac_lanes[idx[4]];
    cfg.macs_per_lane = s.macs_per_lane[idx[5]];
    cfg.softmax_per_pe = s.softmax_per_pe[idx[6]];
    cfg.batch_size = s.batch_size[idx[7]];
    cfg.act_buffer_mb = s.act_buffer_mb[idx[8]];
    cfg.weight_buffer_mb = s.weight_buffer_mb[idx[9]];
    uint64_t local = 0;
    for (int mask_mb : s.mask_buffer_mb) {
      cfg.mask_buffer_mb = mask_mb;
      for (const auto& mem : s.mem_configs) {
        cfg.mem = mem;
        if (validate_accelerator(cfg, s).valid) ++local;
      }
    }
    total += local;
  }
  (void)parallel;
  return total;
}

uint64_t enumerate_accelerator_space_serial(const AcceleratorSpace& s) {
  return enumerate_impl(s, false);
}

uint64_t enumerate_accelerator_space(const AcceleratorSpace& s) { return enumerate_impl(s, true); }

// ---------------------------------------------------------------------------
// BigUint
// ---------------------------------------------------------------------------

static constexpr uint64_t kLimbBase = 1000000000ULL;

BigUint BigUint::from_u64(uint64_t v) {
  BigUint b;
  if (v == 0) b.limbs.push_back(0);
  while (v > 0) {
    b.limbs.push_back(static_cast<uint32_t>(v % kLimbBase));
    v /= kLimbBase;
  }
  return b;
}

BigUint& BigUint::mul_u64(uint64_t v) {
  uint64_t carry = 0;
  for (auto& limb : limbs) {
    __uint128_t cur = static_cast<__uint128_t>(limb) * v + carry;
    limb = static_cast<uint32_t>(cur % kLimbBase);
    carry = static_cast<uint64_t>(cur / kLimbBase);
  }
  while (carry > 0) {
    limbs.push_back(static_cast<uint32_t>(carry % kLimbBase));
    carry /= kLimbBase;
  }
  return *this;
}

BigUint& BigUint::add(const BigUint& o) {
  const size_t n = std::max(limbs.size(), o.limbs.size());
  limbs.resize(n, 0);
  uint64_t carry = 0;
  for (size_t i = 0; i < n; ++i) {
    uint64_t cur = carry + limbs[i] + (i < o.limbs.size() ? o.limbs[i] : 0);
    limbs[i] = static_cast<uint32_t>(cur % kLimbBase);
    carry = cur / kLimbBase;
  }
  if (carry) limbs.push_back(static_cast<uint32_t>(carry));
  return *this;
}

std::string BigUint::str() const {
  if (limbs.empty()) return "0";
  std::ostringstream os;
  os << limbs.back();
  for (size_t i = limbs.size() - 1; i-- > 0;) {
    std::string part = std::to_string(limbs[i]);
    os << std::string(9 - part.size(), '0') << part;
  }
  return os.str();
}

BigUint count_transformer_space_strict(const TransformerSpace& s) {
  // Per-layer choices: homogeneous (kind, param) pair, head count, hidden
  // size, and an ordered feed-forward stack.
  uint64_t kind_params = 2 /*SA*/ + 2 /*LT*/ + s.dsc_kernels_strict.size();
  uint64_t ff = 0;
  for (int len : s.ff_stack_lengths) {
    uint64_t combos = 1;
    for (int i = 0; i < len; ++i) combos *= s.ff_dims.size();
    ff += combos;
  }
  const uint64_t per_layer = kind_params * s.num_heads.size() * s.hidden_strict.size() * ff;
  BigUint total = BigUint::from_u64(0);
  for (int l : s.num_layers) {
    BigUint term = BigUint::from_u64(1);
    for (int i = 0; i < l; ++i) term.mul_u64(per_layer);
    total.add(term);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

std::vector<double> encode_accelerator(const AcceleratorConfig& cfg,
                                       const AcceleratorSpace& space) {
  int mem_idx = 0;
  for (size_t i = 0; i < space.mem_configs.size(); ++i)
    if (space.mem_configs[i] == cfg.mem) mem_idx = static_cast<int>(i) + 1;
  return {static_cast<double>(cfg.batch_tile),     static_cast<double>(cfg.spatial_tile),
          static_cast<double>(cfg.spatial_tile),   static_cast<double>(cfg.num_pes),
          static_cast<double>(cfg.mac_lanes_per_pe), static_cast<double>(cfg.macs_per_lane),
          static_cast<double>(cfg.softmax_per_pe), static_cast<double>(cfg.batch_size),
          static_cast<double>(cfg.act_buffer_mb),  static_cast<double>(cfg.weight_buffer_mb),
          static_cast<double>(cfg.mask_buffer_mb), static_cast<double>(mem_idx)};
}

std::vector<double> encode_accelerator_ext(const AcceleratorConfig& cfg,
                                           const AcceleratorSpace& space) {
  auto e = encode_accelerator(cfg, space);
  e.push_back(cfg.activation == Activation::GeLU ? 1.0 : 0.0);
  return e;
}

static std::optional<int> match_int(double v, const std::vector<int>& set) {
  for (int s : set)
    if (std::fabs(v - s) < 1e-6) return s;
  return std::nullopt;
}

std::optional<AcceleratorConfig> decode_accelerator(const std::vector<double>& e,
                                                    const AcceleratorSpace& space) {
  if (e.size() != kAccEmbedDims && e.size() != kAccEmbedDimsExt) return std::nullopt;
  AcceleratorConfig cfg;
  auto b = match_int(e[0], space.batch_tile);
  auto x = match_int(e[1], space.spatial_tile);
  auto y = match_int(e[2], space.spatial_tile);
  auto pes = match_int(e[3], space.num_pes);
  auto lanes = match_int(e[4], space.mac_lanes);
  auto macs = match_int(e[5], space.macs_per_lane);
  auto sm = match_int(e[6], space.softmax_per_pe);
  auto bs = match_int(e[7], space.batch_size);
  auto ab = match_int(e[8], space.act_buffer_mb);
  auto wb = match_int(e[9], space.weight_buffer_mb);
  auto mb = match_int(e[10], space.mask_buffer_mb);
  if (!b || !x || !y || !pes || !lanes || !macs || !sm || !bs || !ab || !wb || !mb)
    return std::nullopt;
  if (*x != *y) return std::nullopt;
  const double mem_raw = e[11];
  const int mem_idx = static_cast<int>(std::llround(mem_raw));
  if (std::fabs(mem_raw - mem_idx) > 1e-6) return std::nullopt;
  if (mem_idx < 1 || mem_idx > static_cast<int>(space.mem_configs.size())) return std::nullopt;
  cfg.batch_tile = *b;
  cfg.spatial_tile = *x;
  cfg.num_pes = *pes;
  cfg.mac_lanes_per_pe = *lanes;
  cfg.macs_per_lane = *macs;
  cfg.softmax_per_pe = *sm;
  cfg.batch_size = *bs;
  cfg.act_buffer_mb = *ab;
  cfg.weight_buffer_mb = *wb;
  cfg.mask_buffer_mb = *mb;
  cfg.mem = space.mem_configs[mem_idx - 1];
  cfg.activation = Activation::ReLU;
  if (e.size() == kAccEmbedDimsExt) {
    if (std::fabs(e[12]) < 1e-6)
      cfg.activation = Activation::ReLU;
    else if (std::fabs(e[12] - 1.0) < 1e-6)
      cfg.activation = Activation::GeLU;
    else
      return std::nullopt;
  }
  return cfg;
}

std::vector<double> encode_transformer(const TransformerConfig& cfg) {
  std::vector<double> e(kTxfEmbedDims, 0.0);
  const size_t n = std::min<size_t>(cfg.layers.size(), kTxfSlots);
  for (size_t j = 0; j < n; ++j) {
    const auto& L = cfg.layers[j];
    double* slot = &e[j * kTxfSlotWidth];
    slot[0] = L.hidden;
    auto counts = head_counts(L.heads);
    for (int c = 0; c < kHeadCategories; ++c) slot[1 + c] = counts[c];
    for (size_t f = 0; f < L.ff.size() && f < 3; ++f) slot[1 + kHeadCategories + f] = L.ff[f];
  }
  return e;
}

std::optional<TransformerConfig> decode_transformer(const std::vector<double>& e,
                                                    const TransformerSpace& space) {
  if (e.size() != kTxfEmbedDims) return std::nullopt;
  TransformerConfig cfg;
  bool ended = false;
  for (int j = 0; j < kTxfSlots; ++j) {
    const double* slot = &e[j * kTxfSlotWidth];
    bool empty = true;
    for (int i = 0; i < kTxfSlotWidth; ++i)
      if (slot[i] != 0.0) empty = false;
    if (empty) {
      ended = true;
      continue;
    }
    if (ended) return std::nullopt;  // populated slot after an empty one
    LayerConfig L;
    auto h = match_int(slot[0], space.hidden_extended);
    if (!h) return std::nullopt;
    L.hidden = *h;
    int total_heads = 0;
    for (int c = 0; c < kHeadCategories; ++c) {
      const double raw = slot[1 + c];
      const int count = static_cast<int>(std::llround(raw));
      if (std::fabs(raw - count) > 1e-6 || count < 0) return std::nullopt;
      for (int i = 0; i < count; ++i) L.heads.push_back(category_head(c));
      total_heads += count;
    }
    if (std::find(space.num_heads.begin(), space.num_heads.end(), total_heads) ==
        space.num_heads.end())
      return std::nullopt;
    bool ff_ended = false;
    for (int f = 0; f < 3; ++f) {
      const double raw = slot[1 + kHeadCategories + f];
      if (raw == 0.0) {
        ff_ended = true;
        continue;
      }
      if (ff_ended) return std::nullopt;
      auto dim = match_int(raw, space.ff_dims);
      if (!dim) return std::nullopt;
      L.ff.push_back(*dim);
    }
    if (L.ff.empty()) return std::nullopt;
    cfg.layers.push_back(std::move(L));
  }
  if (std::find(space.num_layers.begin(), space.num_layers.end(),
                static_cast<int>(cfg.layers.size())) == space.num_layers.end())
    return std::nullopt;
  return cfg;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

AcceleratorConfig sample_accelerator(DetRng& rng, const AcceleratorSpace& s) {
  AcceleratorConfig cfg;
  cfg.batch_tile = s.batch_tile[rng.index(s.batch_tile.size())];
  cfg.spatial_tile = s.spatial_tile[rng.index(s.spatial_tile.size())];
  cfg.activation = s.activation[rng.index(s.activation.size())];
  cfg.num_pes = s.num_pes[rng.index(s.num_pes.size())];
  cfg.mac_lanes_per_pe = s.mac_lanes[rng.index(s.mac_lanes.size())];
  cfg.macs_per_lane = s.macs_per_lane[rng.index(s.macs_per_lane.size())];
  cfg.softmax_per_pe = s.softmax_per_pe[rng.index(s.softmax_per_pe.size())];
  cfg.batch_size = s.batch_size[rng.index(s.batch_size.size())];
  cfg.act_buffer_mb = s.act_buffer_mb[rng.index(s.act_buffer_mb.size())];
  cfg.weight_buffer_mb = s.weight_buffer_mb[rng.index(s.weight_buffer_mb.size())];
  cfg.mask_buffer_mb = s.mask_buffer_mb[rng.index(s.mask_buffer_mb.size())];
  cfg.mem = s.mem_configs[rng.index(s.mem_configs.size())];
  return cfg;
}

TransformerConfig sample_transformer(DetRng& rng, const TransformerSpace& s, ValidationMode mode) {
  const bool strict = (mode == ValidationMode::Strict);
  const auto& hidden_set = strict ? s.hidden_strict : s.hidden_extended;
  const auto& kernel_set = strict ? s.dsc_kernels_strict : s.dsc_kernels_extended;
  TransformerConfig cfg;
  const int l = s.num_layers[rng.index(s.num_layers.size())];
  for (int j = 0; j < l; ++j) {
    LayerConfig L;
    L.hidden = hidden_set[rng.index(hidden_set.size())];
    const int n = s.num_heads[rng.index(s.num_heads.size())];
    if (strict) {
      // One operation type and parameter shared by every head of the layer.
      const int pick = static_cast<int>(rng.index(4 + kernel_set.size()));
      HeadOp h;
      if (pick == 0) h = {HeadKind::SA_SDP, 0};
      else if (pick == 1) h = {HeadKind::SA_WMA, 0};
      else if (pick == 2) h = {HeadKind::LT_DFT, 0};
      else if (pick == 3) h = {HeadKind::LT_DCT, 0};
      else h = {HeadKind::DSC, kernel_set[pick - 4]};
      L.heads.assign(n, h);
    } else {
      for (int i = 0; i < n; ++i) {
        HeadOp h = category_head(static_cast<int>(rng.index(kHeadCategories)));
        if (h.kind == HeadKind::DSC &&
            std::find(kernel_set.begin(), kernel_set.end(), h.kernel) == kernel_set.end())
          h.kernel = kernel_set[rng.index(kernel_set.size())];
        L.heads.push_back(h);
      }
    }
    const int stack = s.ff_stack_lengths[rng.index(s.ff_stack_lengths.size())];
    for (int i = 0; i < stack; ++i) L.ff.push_back(s.ff_dims[rng.index(s.ff_dims.size())]);
    cfg.layers.push_back(std::move(L));
  }
  return cfg;
}

std::vector<std::pair<TransformerConfig, AcceleratorConfig>> sample_space(
    uint64_t seed, int n, ValidationMode mode, const DesignSpaces& spaces) {
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "sample_space: n must be >= 1");
  DetRng rng(seed);
  std::vector<std::pair<TransformerConfig, AcceleratorConfig>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto txf = sample_transformer(rng, spaces.transformer, mode);
    auto acc = sample_accelerator(rng, spaces.accelerator);
    out.emplace_back(std::move(txf), std::move(acc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string transformer_to_json(const TransformerConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["layers"] = json::array();
  for (const auto& L : cfg.layers) {
    json layer;
    layer["hidden_size"] = L.hidden;
    layer["heads"] = json::array();
    for (const auto& h : L.heads) layer["heads"].push_back(head_name(h));
    layer["ff"] = L.ff;
    j["layers"].push_back(layer);
  }
  return j.dump(2);
}

TransformerConfig transformer_from_json(const std::string& text) {
  json j = json::parse(text);
  TransformerConfig cfg;
  for (const auto& layer : j.at("layers")) {
    LayerConfig L;
    L.hidden = layer.at("hidden_size").get<int>();
    for (const auto& h : layer.at("heads")) {
      auto op = head_from_name(h.get<std::string>());
      if (!op) throw Error(ErrorCode::IoError, "unknown head kind: " + h.get<std::string>());
      L.heads.push_back(*op);
    }
    L.ff = layer.at("ff").get<std::vector<int>>();
    cfg.layers.push_back(std::move(L));
  }
  return cfg;
}

std::string accelerator_to_json(const AcceleratorConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["batch_tile"] = cfg.batch_tile;
  j["spatial_tile"] = cfg.spatial_tile;
  j["activation"] = activation_name(cfg.activation);
  j["num_pes"] = cfg.num_pes;
  j["mac_lanes_per_pe"] = cfg.mac_lanes_per_pe;
  j["macs_per_lane"] = cfg.macs_per_lane;
  j["softmax_per_pe"] = cfg.softmax_per_pe;
  j["batch_size"] = cfg.batch_size;
  j["act_buffer_mb"] = cfg.act_buffer_mb;
  j["weight_buffer_mb"] = cfg.weight_buffer_mb;
  j["mask_buffer_mb"] = cfg.mask_buffer_mb;
  j["mem"] = {{"type", mem_type_name(cfg.mem.type)},
              {"banks", cfg.mem.banks},
              {"ranks", cfg.mem.ranks},
              {"channels", cfg.mem.channels}};
  return j.dump(2);
}

AcceleratorConfig accelerator_from_json(const std::string& text) {
  json j = json::parse(text);
  AcceleratorConfig cfg;
  cfg.batch_tile = j.at("batch_tile").get<int>();
  cfg.spatial_tile = j.at("spatial_tile").get<int>();
  std::string act = j.value("activation", "relu");
  cfg.activation = (act == "gelu") ? Activation::GeLU : Activation::ReLU;
  cfg.num_pes = j.at("num_pes").get<int>();
  cfg.mac_lanes_per_pe = j.at("mac_lanes_per_pe").get<int>();
  cfg.macs_per_lane = j.at("macs_per_lane").get<int>();
  cfg.softmax_per_pe = j.at("softmax_per_pe").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.act_buffer_mb = j.at("act_buffer_mb").get<int>();
  cfg.weight_buffer_mb = j.at("weight_buffer_mb").get<int>();
  cfg.mask_buffer_mb = j.at("mask_buffer_mb").get<int>();
  const auto& mem = j.at("mem");
  cfg.mem.type = mem_type_from(mem.at("type").get<std::string>());
  cfg.mem.banks = mem.at("banks").get<int>();
  cfg.mem.ranks = mem.at("ranks").get<int>();
  cfg.mem.channels = mem.at("channels").get<int>();
  return cfg;
}

static std::vector<Activation> parse_activation_set(const json& arr) {
  std::vector<Activation> out;
  for (const auto& v : arr)
    out.push_back(v.get<std::string>() == "gelu" ? Activation::GeLU : Activation::ReLU);
  return out;
}

DesignSpaces parse_spaces(const std::string& text) {
  DesignSpaces ds;
  json j = json::parse(text);
  if (j.contains("accelerator")) {
    const auto& a = j["accelerator"];
    auto& s = ds.accelerator;
    if (a.contains("batch_tile")) s.batch_tile = a["batch_tile"].get<std::vector<int>>();
    if (a.contains("spatial_tile")) s.spatial_tile = a["spatial_tile"].get<std::vector<int>>();
    if (a.contains("activation")) s.activation = parse_activation_set(a["activation"]);
    if (a.contains("num_pes")) s.num_pes = a["num_pes"].get<std::vector<int>>();
    if (a.contains("mac_lanes")) s.mac_lanes = a["mac_lanes"].get<std::vector<int>>();
    if (a.contains("macs_per_lane")) s.macs_per_lane = a["macs_per_lane"].get<std::vector<int>>();
    if (a.contains("softmax_per_pe")) s.softmax_per_pe = a["softmax_per_pe"].get<std::vector<int>>();
    if (a.contains("batch_size")) s.batch_size = a["batch_size"].get<std::vector<int>>();
    if (a.contains("act_buffer_mb")) s.act_buffer_mb = a["act_buffer_mb"].get<std::vector<int>>();
    if (a.contains("weight_buffer_mb"))
      s.weight_buffer_mb = a["weight_buffer_mb"].get<std::vector<int>>();
    if (a.contains("mask_buffer_mb")) s.mask_buffer_mb = a["mask_buffer_mb"].get<std::vector<int>>();
    if (a.contains("mem_configs")) {
      s.mem_configs.clear();
      for (const auto& m : a["mem_configs"]) {
        MemConfig mc;
        mc.type = mem_type_from(m.at("type").get<std::string>());
        mc.banks = m.at("banks").get<int>();
        mc.ranks = m.at("ranks").get<int>();
        mc.channels = m.at("channels").get<int>();
        s.mem_configs.push_back(mc);
      }
    }
  }
  if (j.contains("transformer")) {
    const auto& t = j["transformer"];
    auto& s = ds.transformer;
    if (t.contains("num_layers")) s.num_layers = t["num_layers"].get<std::vector<int>>();
    if (t.contains("num_heads")) s.num_heads = t["num_heads"].get<std::vector<int>>();
    if (t.contains("hidden_strict")) s.hidden_strict = t["hidden_strict"].get<std::vector<int>>();
    if (t.contains("hidden_extended"))
      s.hidden_extended = t["hidden_extended"].get<std::vector<int>>();
    if (t.contains("ff_dims")) s.ff_dims = t["ff_dims"].get<std::vector<int>>();
    if (t.contains("ff_stack_lengths"))
      s.ff_stack_lengths = t["ff_stack_lengths"].get<std::vector<int>>();
    if (t.contains("dsc_kernels_strict"))
      s.dsc_kernels_strict = t["dsc_kernels_strict"].get<std::vector<int>>();
    if (t.contains("dsc_kernels_extended"))
      s.dsc_kernels_extended = t["dsc_kernels_extended"].get<std::vector<int>>();
  }
  return ds;
}

DesignSpaces load_spaces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open spaces file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spaces(ss.str());
}

}  // namespace txsim
