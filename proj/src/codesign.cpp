#include "txsim/codesign.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "txsim/graph.hpp"
#include "txsim/scheduler.hpp"

namespace txsim {

double performance(const Measures& m, const PerfWeights& w) {
  const double sum = w.alpha + w.beta + w.gamma + w.delta + w.epsilon;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidConfig, "performance weights must sum to 1");
  for (double v : {m.latency, m.area, m.dynamic_energy, m.leakage_energy, m.accuracy})
    if (v < 0.0 || v > 1.0)
      throw Error(ErrorCode::UnnormalizedMeasure, "measure outside [0,1]");
  return w.alpha * (1.0 - m.latency) + w.beta * (1.0 - m.area) +
         w.gamma * (1.0 - m.dynamic_energy) + w.delta * (1.0 - m.leakage_energy) +
         w.epsilon * m.accuracy;
}

Measures normalize_measures(const SimReport& raw, double accuracy, const ReferenceMaxima& mx) {
  if (mx.latency_ms <= 0 || mx.area_mm2 <= 0 || mx.dynamic_j <= 0 || mx.leakage_j <= 0)
    throw Error(ErrorCode::MissingReference, "reference maxima not set");
  Measures m;
  m.latency = std::clamp(raw.latency_ms / mx.latency_ms, 0.0, 1.0);
  m.area = std::clamp(raw.area_mm2 / mx.area_mm2, 0.0, 1.0);
  m.dynamic_energy = std::clamp(raw.dynamic_energy_j / mx.dynamic_j, 0.0, 1.0);
  m.leakage_energy = std::clamp(raw.leakage_energy_j / mx.leakage_j, 0.0, 1.0);
  m.accuracy = std::clamp(accuracy, 0.0, 1.0);
  return m;
}

std::string maxima_to_json(const ReferenceMaxima& m) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["latency_ms"] = m.latency_ms;
  j["area_mm2"] = m.area_mm2;
  j["dynamic_j"] = m.dynamic_j;
  j["leakage_j"] = m.leakage_j;
  j["workload"] = m.workload;
  return j.dump(2);
}

ReferenceMaxima maxima_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ReferenceMaxima m;
  m.latency_ms = j.at("latency_ms").get<double>();
  m.area_mm2 = j.at("area_mm2").get<double>();
  m.dynamic_j = j.at("dynamic_j").get<double>();
  m.leakage_j = j.at("leakage_j").get<double>();
  m.workload = j.value("workload", "");
  return m;
}

AcceleratorConfig corner_accelerator(const AcceleratorSpace& s) {
  AcceleratorConfig c;
  c.batch_tile = s.batch_tile.back();
  c.spatial_tile = s.spatial_tile.back();
  c.activation = s.activation.back();
  c.num_pes = s.num_pes.back();
  c.mac_lanes_per_pe = s.mac_lanes.back();
  c.macs_per_lane = s.macs_per_lane.back();
  c.softmax_per_pe = s.softmax_per_pe.back();
  c.batch_size = s.batch_size.back();
  c.act_buffer_mb = s.act_buffer_mb.back();
  c.weight_buffer_mb = s.weight_buffer_mb.back();
  c.mask_buffer_mb = s.mask_buffer_mb.back();
  c.mem = s.mem_configs.back();
  return c;
}

TransformerConfig corner_transformer(const TransformerSpace& s) {
  // Deepest strict-mode model with every field at its maximum; heads use the
  // costliest kind (WMA carries an extra trained matrix and is sequence-length
  // independent, unlike the convolutions).
  TransformerConfig c;
  const int layers = *std::max_element(s.num_layers.begin(), s.num_layers.end());
  const int heads = *std::max_element(s.num_heads.begin(), s.num_heads.end());
  const int hidden = *std::max_element(s.hidden_strict.begin(), s.hidden_strict.end());
  const int ff = *std::max_element(s.ff_dims.begin(), s.ff_dims.end());
  const int stack = *std::max_element(s.ff_stack_lengths.begin(), s.ff_stack_lengths.end());
  for (int j = 0; j < layers; ++j) {
    LayerConfig L;
    L.hidden = hidden;
    L.heads.assign(heads, HeadOp{HeadKind::SA_WMA, 0});
    L.ff.assign(stack, ff);
    c.layers.push_back(L);
  }
  return c;
}

ReferenceMaxima compute_reference_maxima(const DesignSpaces& spaces,
                                         const CalibrationTable& calib, const CurveSet& curves,
                                         const PruneThresholds& thresholds, uint32_t seq_len) {
  const AcceleratorConfig acc = corner_accelerator(spaces.accelerator);
  const TransformerConfig txf = corner_transformer(spaces.transformer);
  BuildOptions opts;
  opts.activation = acc.activation;
  Graph g = build_graph(txf, seq_len, EvalMode::Training, opts);
  Schedule sched = build_schedule(g, acc);
  SimReport rep = simulate(sched, calib, curves, thresholds);
  ReferenceMaxima mx;
  mx.latency_ms = rep.latency_ms;
  mx.area_mm2 = rep.area_mm2;
  mx.dynamic_j = rep.dynamic_energy_j;
  mx.leakage_j = rep.leakage_energy_j;
  mx.workload = "corner: max accelerator x deepest strict transformer, training, seq_len=" +
                std::to_string(seq_len);
  return mx;
}

// ---------------------------------------------------------------------------
// Pair evaluation
// ---------------------------------------------------------------------------

EvalPoint evaluate_pair(const std::vector<double>& x_txf, const std::vector<double>& x_acc,
                        const EvalContext& ctx) {
  EvalPoint pt;
  pt.x_txf = x_txf;
  pt.x_acc = x_acc;
  pt.p = kPerformanceMin;
  pt.valid = false;

  auto txf = decode_transformer(x_txf, ctx.spaces.transformer);
  auto acc = decode_accelerator(x_acc, ctx.spaces.accelerator);
  if (!txf || !acc) {
    pt.diagnostic = "embedding decodes to no valid configuration";
    return pt;
  }
  if (!validate_transformer(*txf, ctx.spaces.transformer, ctx.validation).valid ||
      !validate_accelerator(*acc, ctx.spaces.accelerator).valid) {
    pt.diagnostic = "configuration outside the design space";
    return pt;
  }
  if (ctx.constraints.max_layers &&
      static_cast<int>(txf->layers.size()) > *ctx.constraints.max_layers) {
    pt.diagnostic = "constraint violation: layers > " + std::to_string(*ctx.constraints.max_layers);
    return pt;
  }
  for (const auto& L : txf->layers)
    for (const auto& h : L.heads)
      if (h.kind == HeadKind::DSC && static_cast<uint32_t>(h.kernel) > ctx.seq_len) {
        pt.diagnostic = "convolution kernel exceeds sequence length";
        return pt;
      }

  try {
    BuildOptions opts;
    opts.activation = acc->activation;
    Graph g = build_graph(*txf, ctx.seq_len, ctx.mode, opts);
    Schedule sched = build_schedule(g, *acc);
    SimReport rep = simulate(sched, ctx.calib, ctx.curves, ctx.thresholds);
    if (ctx.constraints.max_area_mm2 && rep.area_mm2 > *ctx.constraints.max_area_mm2) {
      pt.diagnostic = "constraint violation: area";
      return pt;
    }
    const double acc_score = accuracy_oracle(*txf, ctx.oracle);
    pt.measures = normalize_measures(rep, acc_score, ctx.maxima);
    pt.p = performance(pt.measures, ctx.weights);
    pt.valid = true;
  } catch (const Error& e) {
    pt.diagnostic = e.what();
    pt.p = kPerformanceMin;
    pt.valid = false;
  }
  return pt;
}

// ---------------------------------------------------------------------------
// Lattice projection
// ---------------------------------------------------------------------------

namespace {

double snap(double v, const std::vector<int>& set) {
  double best = set.front();
  double best_d = std::fabs(v - best);
  for (int s : set) {
    const double d = std::fabs(v - s);
    if (d < best_d - 1e-12 || (std::fabs(d - best_d) <= 1e-12 && s < best)) {
      best = s;
      best_d = d;
    }
  }
  return best;
}

double snap_with_zero(double v, const std::vector<int>& set) {
  double best = 0.0;
  double best_d = std::fabs(v);
  for (int s : set) {
    const double d = std::fabs(v - s);
    if (d < best_d - 1e-12) {
      best = s;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

std::vector<double> project_accelerator_embedding(const std::vector<double>& e,
                                                  const AcceleratorSpace& s) {
  std::vector<double> out(e);
  out[0] = snap(e[0], s.batch_tile);
  out[1] = snap(e[1], s.spatial_tile);
  out[2] = out[1];  // y mirrors x
  out[3] = snap(e[3], s.num_pes);
  out[4] = snap(e[4], s.mac_lanes);
  out[5] = snap(e[5], s.macs_per_lane);
  out[6] = snap(e[6], s.softmax_per_pe);
  out[7] = snap(e[7], s.batch_size);
  out[8] = snap(e[8], s.act_buffer_mb);
  out[9] = snap(e[9], s.weight_buffer_mb);
  out[10] = snap(e[10], s.mask_buffer_mb);
  out[11] = std::clamp(std::round(e[11]), 1.0, static_cast<double>(s.mem_configs.size()));
  if (out.size() > 12) out[12] = e[12] >= 0.5 ? 1.0 : 0.0;
  return out;
}

std::vector<double> project_transformer_embedding(const std::vector<double>& e,
                                                  const TransformerSpace& s,
                                                  ValidationMode mode) {
  const bool strict = (mode == ValidationMode::Strict);
  const auto& hidden_set = strict ? s.hidden_strict : s.hidden_extended;
  const auto& kernel_set = strict ? s.dsc_kernels_strict : s.dsc_kernels_extended;
  // Categories representable in this mode.
  std::vector<int> cats;
  for (int c = 0; c < kHeadCategories; ++c) {
    HeadOp h = category_head(c);
    if (h.kind != HeadKind::DSC ||
        std::find(kernel_set.begin(), kernel_set.end(), h.kernel) != kernel_set.end())
      cats.push_back(c);
  }

  std::vector<double> out(kTxfEmbedDims, 0.0);
  int layers = 0;
  for (int slot = 0; slot < kTxfSlots; ++slot) {
    const double* f = &e[slot * kTxfSlotWidth];
    const double h = snap_with_zero(f[0], hidden_set);
    if (h == 0.0) continue;  // empty slots are skipped; survivors compact left
    double* o = &out[layers * kTxfSlotWidth];
    o[0] = h;

    // Head counts: clamp to the representable categories, then adjust to the
    // nearest permissible total.
    int total = 0;
    for (int c : cats) {
      const int count = std::max(0, static_cast<int>(std::llround(f[1 + c])));
      o[1 + c] = count;
      total += count;
    }
    int n = s.num_heads.front();
    int best_d = std::abs(total - n);
    for (int cand : s.num_heads) {
      const int d = std::abs(total - cand);
      if (d < best_d || (d == best_d && cand < n)) {
        n = cand;
        best_d = d;
      }
    }
    if (strict) {
      // One operation type per layer: keep the dominant category.
      int keep = cats.front();
      for (int c : cats)
        if (o[1 + c] > o[1 + keep]) keep = c;
      for (int c = 0; c < kHeadCategories; ++c) o[1 + c] = 0;
      o[1 + keep] = n;
    } else {
      while (total > n) {
        int big = cats.front();
        for (int c : cats)
          if (o[1 + c] > o[1 + big]) big = c;
        o[1 + big] -= 1;
        --total;
      }
      while (total < n) {
        int big = cats.front();
        for (int c : cats)
          if (o[1 + c] > o[1 + big]) big = c;
        o[1 + big] += 1;
        ++total;
      }
    }

    // Feed-forward stack: snapped dims compact left; at least one element.
    int nf = 0;
    for (int k = 0; k < 3; ++k) {
      const double v = snap_with_zero(f[1 + kHeadCategories + k], s.ff_dims);
      if (v != 0.0) o[1 + kHeadCategories + nf++] = v;
    }
    if (nf == 0) o[1 + kHeadCategories] = snap(f[1 + kHeadCategories], s.ff_dims);
    ++layers;
  }

  // Layer count onto the permissible set: truncate down or replicate the
  // last layer up.
  int want = s.num_layers.front();
  int best_d = std::abs(layers - want);
  for (int cand : s.num_layers) {
    const int d = std::abs(layers - cand);
    if (d < best_d || (d == best_d && cand < want)) {
      want = cand;
      best_d = d;
    }
  }
  if (layers == 0) {
    // Nothing survived; emit the minimal model.
    for (int slot = 0; slot < want; ++slot) {
      double* o = &out[slot * kTxfSlotWidth];
      o[0] = hidden_set.front();
      o[1 + cats.front()] = s.num_heads.front();
      o[1 + kHeadCategories] = s.ff_dims.front();
    }
  } else if (layers > want) {
    for (int slot = want; slot < kTxfSlots; ++slot)
      for (int i = 0; i < kTxfSlotWidth; ++i) out[slot * kTxfSlotWidth + i] = 0.0;
  } else {
    for (int slot = layers; slot < want; ++slot)
      for (int i = 0; i < kTxfSlotWidth; ++i)
        out[slot * kTxfSlotWidth + i] = out[(layers - 1) * kTxfSlotWidth + i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proposal
// ---------------------------------------------------------------------------

static std::vector<double> concat_pair(const std::vector<double>& a,
                                       const std::vector<double>& b) {
  std::vector<double> x(a);
  x.insert(x.end(), b.begin(), b.end());
  return x;
}

std::pair<std::vector<double>, std::vector<double>> embedding_hull(
    const DesignSpaces& spaces) {
  std::vector<double> lo(kTxfEmbedDims + kAccEmbedDimsExt, 0.0);
  std::vector<double> hi(kTxfEmbedDims + kAccEmbedDimsExt, 0.0);
  const auto& ts = spaces.transformer;
  const auto& as = spaces.accelerator;
  auto vmax = [](const std::vector<int>& v) {
    return static_cast<double>(*std::max_element(v.begin(), v.end()));
  };
  auto vmin = [](const std::vector<int>& v) {
    return static_cast<double>(*std::min_element(v.begin(), v.end()));
  };
  for (int slot = 0; slot < kTxfSlots; ++slot) {
    double* h = &hi[slot * kTxfSlotWidth];
    h[0] = vmax(ts.hidden_extended);
    for (int c = 0; c < kHeadCategories; ++c) h[1 + c] = vmax(ts.num_heads);
    for (int f = 0; f < 3; ++f) h[1 + kHeadCategories + f] = vmax(ts.ff_dims);
  }
  double* al = &lo[kTxfEmbedDims];
  double* ah = &hi[kTxfEmbedDims];
  al[0] = vmin(as.batch_tile); ah[0] = vmax(as.batch_tile);
  al[1] = al[2] = vmin(as.spatial_tile); ah[1] = ah[2] = vmax(as.spatial_tile);
  al[3] = vmin(as.num_pes); ah[3] = vmax(as.num_pes);
  al[4] = vmin(as.mac_lanes); ah[4] = vmax(as.mac_lanes);
  al[5] = vmin(as.macs_per_lane); ah[5] = vmax(as.macs_per_lane);
  al[6] = vmin(as.softmax_per_pe); ah[6] = vmax(as.softmax_per_pe);
  al[7] = vmin(as.batch_size); ah[7] = vmax(as.batch_size);
  al[8] = vmin(as.act_buffer_mb); ah[8] = vmax(as.act_buffer_mb);
  al[9] = vmin(as.weight_buffer_mb); ah[9] = vmax(as.weight_buffer_mb);
  al[10] = vmin(as.mask_buffer_mb); ah[10] = vmax(as.mask_buffer_mb);
  al[11] = 1.0; ah[11] = static_cast<double>(as.mem_configs.size());
  al[12] = 0.0; ah[12] = 1.0;
  return {std::move(lo), std::move(hi)};
}

std::pair<std::vector<double>, std::vector<double>> propose_with_objective(
    const ProposalObjective& obj, DetRng& rng, const EvalContext& ctx,
    const std::vector<EvalPoint>& dataset, const std::optional<AcceleratorConfig>& freeze_acc) {
  const int txf_dims = kTxfEmbedDims;
  // Structural user constraints restrict the projection target; anything the
  // projection cannot express still lands in the penalty path.
  TransformerSpace txf_space = ctx.spaces.transformer;
  if (ctx.constraints.max_layers) {
    std::vector<int> allowed;
    for (int l : txf_space.num_layers)
      if (l <= *ctx.constraints.max_layers) allowed.push_back(l);
    if (!allowed.empty()) txf_space.num_layers = std::move(allowed);
  }

  std::set<std::vector<double>> seen;
  for (const auto& pt : dataset) seen.insert(concat_pair(pt.x_txf, pt.x_acc));

  // Restart points: perturbations of the best valid pairs plus fresh samples.
  std::vector<const EvalPoint*> valid;
  for (const auto& pt : dataset)
    if (pt.valid) valid.push_back(&pt);
  std::sort(valid.begin(), valid.end(),
            [](const EvalPoint* a, const EvalPoint* b) { return a->p > b->p; });

  const ValidationMode vmode = ctx.validation;
  auto random_start = [&]() {
    TransformerConfig txf = sample_transformer(rng, txf_space, vmode);
    AcceleratorConfig acc =
        freeze_acc ? *freeze_acc : sample_accelerator(rng, ctx.spaces.accelerator);
    return concat_pair(encode_transformer(txf), encode_accelerator_ext(acc, ctx.spaces.accelerator));
  };

  std::vector<double> best_x;
  double best_a = -1e300;
  const std::vector<double> frozen_emb =
      freeze_acc ? encode_accelerator_ext(*freeze_acc, ctx.spaces.accelerator)
                 : std::vector<double>{};

  constexpr int kRestarts = 8;
  constexpr int kAscentSteps = 40;
  const std::vector<double>& sd = obj.scale;
  // Search box: the lattice hull. Ascent iterates are clamped to it so the
  // surrogate is never queried far outside the data distribution.
  const auto [lo, hi] = embedding_hull(ctx.spaces);
  auto clamp_box = [&](std::vector<double>& x) {
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  };
  auto project_full = [&](const std::vector<double>& x) {
    std::vector<double> xt(x.begin(), x.begin() + txf_dims);
    std::vector<double> xa(x.begin() + txf_dims, x.end());
    xt = project_transformer_embedding(xt, txf_space, ctx.validation);
    xa = freeze_acc ? frozen_emb : project_accelerator_embedding(xa, ctx.spaces.accelerator);
    return concat_pair(xt, xa);
  };
  std::vector<double> best_any;  // polish seed, duplicates allowed
  double best_any_a = -1e300;
  // Projects, scores, and records a candidate; returns the projected point
  // and its objective value.
  auto consider = [&](const std::vector<double>& x) {
    std::vector<double> proj = project_full(x);
    const double a = obj.value(proj);
    if (a > best_any_a) {
      best_any_a = a;
      best_any = proj;
    }
    if (!seen.count(proj) && a > best_a) {
      best_a = a;
      best_x = proj;
    }
    return std::make_pair(std::move(proj), a);
  };

  for (int r = 0; r < kRestarts; ++r) {
    std::vector<double> x;
    if (r % 2 == 0 && !valid.empty()) {
      const EvalPoint& base = *valid[std::min<size_t>(r / 2, valid.size() - 1)];
      x = concat_pair(base.x_txf, base.x_acc);
      for (size_t i = 0; i < x.size(); ++i) x[i] += rng.normal() * 0.3 * sd[i];
    } else {
      x = random_start();
    }
    if (freeze_acc)
      std::copy(frozen_emb.begin(), frozen_emb.end(), x.begin() + txf_dims);
    clamp_box(x);
    consider(x);

    for (int step = 0; step < kAscentSteps; ++step) {
      std::vector<double> g = obj.grad(x);
      // Unit step in standardized coordinates; accelerator gradients are
      // forced to zero when the hardware is frozen. Every step is snapped to
      // the lattice and scored; the best projected candidate wins.
      double norm = 0.0;
      for (size_t i = 0; i < g.size(); ++i) {
        if (freeze_acc && i >= static_cast<size_t>(txf_dims)) continue;
        const double gs = g[i] * sd[i];
        norm += gs * gs;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) break;
      for (size_t i = 0; i < x.size(); ++i) {
        if (freeze_acc && i >= static_cast<size_t>(txf_dims)) continue;
        x[i] += (g[i] * sd[i] * sd[i]) / norm;
      }
      clamp_box(x);
      consider(x);
    }
  }

  // Discrete refinement: hill-climb the acquisition over one-step lattice
  // neighbourhoods. Gradient ascent alone tends to settle a cell or two away
  // from the surrogate's argmax, and near the top the acquisition cannot
  // separate adjacent cells, so every probed neighbour also competes as a
  // proposal; successive (deduplicated) proposals sweep the top cells.
  auto sorted_with_zero = [](std::vector<int> v) {
    v.push_back(0);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto& as = ctx.spaces.accelerator;
  const auto& ts = txf_space;
  const auto hidden_vals = sorted_with_zero(ts.hidden_extended);
  const auto ff_vals = sorted_with_zero(ts.ff_dims);
  auto set_neighbors = [](const std::vector<int>& vals, double cur, std::vector<double>& out) {
    for (size_t i = 0; i < vals.size(); ++i) {
      if (static_cast<double>(vals[i]) == cur) {
        if (i > 0) out.push_back(vals[i - 1]);
        if (i + 1 < vals.size()) out.push_back(vals[i + 1]);
        return;
      }
    }
  };
  // One-step lattice neighbours of a point, respecting x == y and the frozen
  // accelerator if any.
  auto neighbors_of = [&](const std::vector<double>& base) {
    std::vector<std::vector<double>> result;
    for (size_t i = 0; i < base.size(); ++i) {
      const bool acc_dim = i >= static_cast<size_t>(txf_dims);
      if (acc_dim && freeze_acc) continue;
      std::vector<double> cands;
      if (acc_dim) {
        switch (i - txf_dims) {
          case 0: set_neighbors(as.batch_tile, base[i], cands); break;
          case 1: set_neighbors(as.spatial_tile, base[i], cands); break;
          case 2: continue;  // y mirrors x
          case 3: set_neighbors(as.num_pes, base[i], cands); break;
          case 4: set_neighbors(as.mac_lanes, base[i], cands); break;
          case 5: set_neighbors(as.macs_per_lane, base[i], cands); break;
          case 6: set_neighbors(as.softmax_per_pe, base[i], cands); break;
          case 7: set_neighbors(as.batch_size, base[i], cands); break;
          case 8: set_neighbors(as.act_buffer_mb, base[i], cands); break;
          case 9: set_neighbors(as.weight_buffer_mb, base[i], cands); break;
          case 10: set_neighbors(as.mask_buffer_mb, base[i], cands); break;
          case 11:
            if (base[i] > 1) cands.push_back(base[i] - 1);
            if (base[i] < static_cast<double>(as.mem_configs.size())) cands.push_back(base[i] + 1);
            break;
          case 12: cands.push_back(base[i] == 0.0 ? 1.0 : 0.0); break;
          default: break;
        }
      } else {
        const int field = static_cast<int>(i % kTxfSlotWidth);
        if (field == 0) {
          set_neighbors(hidden_vals, base[i], cands);
        } else if (field <= kHeadCategories) {
          if (base[i] > 0) cands.push_back(base[i] - 1);
          cands.push_back(base[i] + 1);
        } else {
          set_neighbors(ff_vals, base[i], cands);
        }
      }
      for (double v : cands) {
        std::vector<double> cand = base;
        cand[i] = v;
        if (acc_dim && i - txf_dims == 1) cand[i + 1] = v;
        result.push_back(std::move(cand));
      }
    }
    return result;
  };
  // Neighbour moves can break structural validity (head totals, trailing
  // zeros); every candidate passes back through the repairing projection.
  if (!best_any.empty()) {
    std::vector<double> cur = best_any;
    for (int round = 0; round < 4; ++round) {
      bool improved = false;
      for (const auto& cand : neighbors_of(cur)) {
        auto [proj, a] = consider(cand);
        if (a > best_any_a + 1e-15) {
          best_any_a = a;
          cur = std::move(proj);
          improved = true;
        }
      }
      if (!improved) break;
    }
  }

  // Local exploitation around the best evaluated pair: its unseen neighbours
  // compete as proposals, giving lattice-exact convergence once the search
  // closes in on an optimum.
  if (!valid.empty()) {
    const std::vector<double> incumbent = concat_pair(valid[0]->x_txf, valid[0]->x_acc);
    for (const auto& cand : neighbors_of(incumbent)) consider(cand);
  }

  if (best_x.empty()) {
    // Every candidate was a duplicate; fall back to an unseen sample.
    for (int tries = 0; tries < 64; ++tries) {
      std::vector<double> x = random_start();
      if (!seen.count(x)) {
        best_x = std::move(x);
        break;
      }
    }
    if (best_x.empty()) best_x = random_start();
  }

  std::vector<double> xt(best_x.begin(), best_x.begin() + txf_dims);
  std::vector<double> xa(best_x.begin() + txf_dims, best_x.end());
  return {std::move(xt), std::move(xa)};
}

std::pair<std::vector<double>, std::vector<double>> propose_next(
    const Surrogate& s, DetRng& rng, const EvalContext& ctx, double kappa,
    const std::vector<EvalPoint>& dataset, const std::optional<AcceleratorConfig>& freeze_acc) {
  if (!s.fitted()) throw Error(ErrorCode::UnfittedSurrogate, "propose before fit");
  ProposalObjective obj;
  obj.value = [&s, kappa](const std::vector<double>& x) { return s.acquisition(x, kappa); };
  obj.grad = [&s, kappa](const std::vector<double>& x) { return s.acquisition_grad(x, kappa); };
  obj.scale = s.input_std();
  return propose_with_objective(obj, rng, ctx, dataset, freeze_acc);
}

// ---------------------------------------------------------------------------
// Search loop
// ---------------------------------------------------------------------------

namespace {

bool satisfies_constraints(const TransformerConfig& txf, const Constraints& c) {
  if (c.max_layers && static_cast<int>(txf.layers.size()) > *c.max_layers) return false;
  return true;
}

std::pair<std::vector<double>, std::vector<double>> sample_valid_pair(
    DetRng& rng, const EvalContext& ctx, const std::optional<AcceleratorConfig>& freeze_acc,
    uint32_t seq_len) {
  for (int tries = 0; tries < 256; ++tries) {
    TransformerConfig txf = sample_transformer(rng, ctx.spaces.transformer, ctx.validation);
    if (!satisfies_constraints(txf, ctx.constraints)) continue;
    bool kernel_ok = true;
    for (const auto& L : txf.layers)
      for (const auto& h : L.heads)
        if (h.kind == HeadKind::DSC && static_cast<uint32_t>(h.kernel) > seq_len)
          kernel_ok = false;
    if (!kernel_ok) continue;
    AcceleratorConfig acc =
        freeze_acc ? *freeze_acc : sample_accelerator(rng, ctx.spaces.accelerator);
    return {encode_transformer(txf), encode_accelerator_ext(acc, ctx.spaces.accelerator)};
  }
  throw Error(ErrorCode::InvalidConfig, "could not sample a constraint-satisfying pair");
}

}  // namespace

SearchResult run_search(const SearchConfig& cfg, const EvalContext& ctx) {
  const bool needs_init = cfg.method != SearchMethod::Random;
  if (needs_init && cfg.budget < cfg.initial_samples)
    throw Error(ErrorCode::InvalidConfig, "budget below initial sample count");
  DetRng rng(cfg.seed);
  SearchResult result;
  std::vector<EvalPoint> dataset;
  dataset.reserve(cfg.budget);

  const bool guided = cfg.method != SearchMethod::Random;
  std::optional<AcceleratorConfig> freeze;
  if (cfg.method == SearchMethod::HwNas)
    freeze = cfg.freeze_acc ? *cfg.freeze_acc : corner_accelerator(ctx.spaces.accelerator);

  // Initial design: valid, constraint-satisfying samples. Evaluations may run
  // in parallel; results are committed in sample order.
  std::vector<std::pair<std::vector<double>, std::vector<double>>> init;
  const int n_init = guided ? std::min(cfg.initial_samples, cfg.budget) : 0;
  for (int i = 0; i < n_init; ++i) init.push_back(sample_valid_pair(rng, ctx, freeze, ctx.seq_len));
  std::vector<EvalPoint> init_pts(init.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.workers))
#endif
  for (long long i = 0; i < static_cast<long long>(init.size()); ++i)
    init_pts[i] = evaluate_pair(init[i].first, init[i].second, ctx);

  double best_p = kPerformanceMin;
  auto commit = [&](EvalPoint pt) {
    if (pt.valid && pt.p > best_p) {
      best_p = pt.p;
      result.best = pt;
    }
    TracePoint tp;
    tp.iteration = static_cast<int>(dataset.size());
    tp.p = pt.p;
    tp.valid = pt.valid;
    tp.best_p = best_p;
    tp.x_txf = pt.x_txf;
    tp.x_acc = pt.x_acc;
    tp.measures = pt.measures;
    result.trace.push_back(std::move(tp));
    dataset.push_back(std::move(pt));
  };
  for (auto& pt : init_pts) commit(std::move(pt));

  Surrogate surrogate;
  auto dataset_xy = [&]() {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    xs.reserve(dataset.size());
    for (const auto& pt : dataset) {
      xs.push_back(concat_pair(pt.x_txf, pt.x_acc));
      ys.push_back(pt.p);
    }
    return std::make_pair(std::move(xs), std::move(ys));
  };

  while (static_cast<int>(dataset.size()) < cfg.budget) {
    if (!guided) {
      auto [xt, xa] = sample_valid_pair(rng, ctx, freeze, ctx.seq_len);
      commit(evaluate_pair(xt, xa, ctx));
      continue;
    }
    auto [xs, ys] = dataset_xy();
    if (!surrogate.fitted()) {
      SurrogateOptions sopts = cfg.surrogate;
      sopts.seed = cfg.seed ^ 0xABCD1234;
      if (sopts.std_floor.empty()) {
        const auto [lo, hi] = embedding_hull(ctx.spaces);
        sopts.std_floor.resize(lo.size());
        for (size_t i = 0; i < lo.size(); ++i) sopts.std_floor[i] = 0.25 * (hi[i] - lo[i]);
      }
      surrogate.fit(xs, ys, sopts);
    } else {
      surrogate.update(xs, ys);
    }
    const double frac = static_cast<double>(dataset.size()) / std::max(1, cfg.budget);
    const double kappa = cfg.kappa_start + (cfg.kappa_end - cfg.kappa_start) * frac;
    auto [xt, xa] = propose_next(surrogate, rng, ctx, kappa, dataset, freeze);
    commit(evaluate_pair(xt, xa, ctx));
  }

  if (result.best.valid) {
    result.best_txf = decode_transformer(result.best.x_txf, ctx.spaces.transformer);
    result.best_acc = decode_accelerator(result.best.x_acc, ctx.spaces.accelerator);
  }
  return result;
}

std::string trace_to_jsonl(const std::vector<TracePoint>& trace) {
  std::string out;
  for (const auto& tp : trace) {
    nlohmann::json j;
    j["iteration"] = tp.iteration;
    j["p"] = tp.p;
    j["best_p"] = tp.best_p;
    j["valid"] = tp.valid;
    j["embedding_version"] = kEmbeddingLayoutVersion;
    j["x_txf"] = tp.x_txf;
    j["x_acc"] = tp.x_acc;
    j["measures"] = {{"latency", tp.measures.latency},
                     {"area", tp.measures.area},
                     {"dynamic_energy", tp.measures.dynamic_energy},
                     {"leakage_energy", tp.measures.leakage_energy},
                     {"accuracy", tp.measures.accuracy}};
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace txsim
