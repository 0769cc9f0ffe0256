#include "txsim/sparsity.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace txsim {

size_t MaskedTile::pruned_count() const {
  size_t n = 0;
  const size_t total = elems();
  for (size_t i = 0; i < total; ++i) n += mask_bit(i);
  return n;
}

static MaskedTile pack_with_tau(const Tile& t, double tau, bool apply_tau) {
  MaskedTile mt;
  mt.b = t.b;
  mt.r = t.r;
  mt.c = t.c;
  const size_t n = t.elems();
  mt.mask.assign((n + 7) / 8, 0);
  mt.values.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    double v = t.data[i];
    if (apply_tau && std::fabs(v) < tau) v = 0.0;
    if (v == 0.0) {
      mt.mask[i >> 3] |= static_cast<uint8_t>(1u << (i & 7));
    } else {
      mt.values.push_back(v);
    }
  }
  return mt;
}

MaskedTile prune_tile(const Tile& t, double tau) {
  if (tau < 0.0) throw Error(ErrorCode::InvalidConfig, "prune threshold must be >= 0");
  return pack_with_tau(t, tau, true);
}

double pruning_ratio(const MaskedTile& t) {
  const size_t n = t.elems();
  if (n == 0) return 0.0;
  return static_cast<double>(t.pruned_count()) / static_cast<double>(n);
}

MaskedTile pack_zero_free(const Tile& t) { return pack_with_tau(t, 0.0, false); }

Tile unpack(const MaskedTile& mt) {
  const size_t n = mt.elems();
  if (mt.mask.size() != (n + 7) / 8 || mt.pruned_count() + mt.values.size() != n)
    throw Error(ErrorCode::MaskShapeMismatch, "unpack: mask does not match payload");
  Tile t(mt.b, mt.r, mt.c);
  size_t vi = 0;
  for (size_t i = 0; i < n; ++i) t.data[i] = mt.mask_bit(i) ? 0.0 : mt.values[vi++];
  return t;
}

MaskedMatmulResult masked_matmul(const MaskedTile& w, const MaskedTile& a) {
  if (w.b != a.b || w.c != a.r)
    throw Error(ErrorCode::ShapeMismatch, "masked_matmul: tiles not conformable");
  // Rank index into the packed payload: value of element i is
  // values[i - popcount(mask[0..i])] when unmasked.
  auto build_rank = [](const MaskedTile& t) {
    std::vector<uint32_t> rank(t.elems());
    uint32_t pruned = 0;
    for (size_t i = 0; i < t.elems(); ++i) {
      rank[i] = static_cast<uint32_t>(i) - pruned;
      if (t.mask_bit(i)) ++pruned;
    }
    return rank;
  };
  const auto wrank = build_rank(w);
  const auto arank = build_rank(a);

  MaskedMatmulResult res;
  res.out = Tile(w.b, w.r, a.c);
  for (uint32_t bi = 0; bi < w.b; ++bi) {
    for (uint32_t i = 0; i < w.r; ++i) {
      for (uint32_t k = 0; k < w.c; ++k) {
        const size_t widx = (size_t(bi) * w.r + i) * w.c + k;
        if (w.mask_bit(widx)) continue;
        const double wv = w.values[wrank[widx]];
        for (uint32_t j = 0; j < a.c; ++j) {
          const size_t aidx = (size_t(bi) * a.r + k) * a.c + j;
          if (a.mask_bit(aidx)) continue;
          res.out.at(bi, i, j) += wv * a.values[arank[aidx]];
          ++res.effectual_macs;
        }
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

Role role_of(DataClass dc) {
  switch (dc) {
    case DataClass::Weight: return Role::Weight;
    case DataClass::Activation: return Role::Activation;
    case DataClass::Gradient: return Role::Gradient;
    case DataClass::Const: return Role::Const;
  }
  return Role::Activation;
}

std::string role_name(Role r) {
  switch (r) {
    case Role::Weight: return "weight";
    case Role::Activation: return "activation";
    case Role::Gradient: return "gradient";
    case Role::Const: return "const";
  }
  return "?";
}

double eval_rho(const SparsityCurve& curve, double tau) {
  if (curve.empty()) throw Error(ErrorCode::EmptyCurve, "empty sparsity curve");
  const auto& p = curve.points;
  if (tau <= p.front().first) return p.front().second;
  if (tau >= p.back().first) return p.back().second;
  for (size_t i = 1; i < p.size(); ++i) {
    if (tau <= p[i].first) {
      const double t0 = p[i - 1].first, t1 = p[i].first;
      const double r0 = p[i - 1].second, r1 = p[i].second;
      if (t1 == t0) return r1;
      return r0 + (r1 - r0) * (tau - t0) / (t1 - t0);
    }
  }
  return p.back().second;
}

double lookup_tau(const SparsityCurve& curve, double rho_desired) {
  if (curve.empty()) throw Error(ErrorCode::EmptyCurve, "empty sparsity curve");
  const auto& p = curve.points;
  if (rho_desired <= p.front().second) return p.front().first;
  if (rho_desired >= p.back().second) return p.back().first;
  for (size_t i = 1; i < p.size(); ++i) {
    if (rho_desired <= p[i].second) {
      const double t0 = p[i - 1].first, t1 = p[i].first;
      const double r0 = p[i - 1].second, r1 = p[i].second;
      if (r1 == r0) return t0;
      return t0 + (t1 - t0) * (rho_desired - r0) / (r1 - r0);
    }
  }
  return p.back().first;
}

SparsityCurve profile_values(const std::vector<double>& values, Role role,
                             const std::vector<double>& tau_grid) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "profile: no values");
  for (size_t i = 1; i < tau_grid.size(); ++i)
    if (tau_grid[i] < tau_grid[i - 1])
      throw Error(ErrorCode::InvalidConfig, "profile: tau grid must be ascending");
  SparsityCurve c;
  c.role = role;
  const double n = static_cast<double>(values.size());
  for (double tau : tau_grid) {
    uint64_t zeros = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : zeros)
#endif
    for (long long i = 0; i < static_cast<long long>(values.size()); ++i) {
      const double v = values[static_cast<size_t>(i)];
      if (v == 0.0 || std::fabs(v) < tau) ++zeros;
    }
    c.points.emplace_back(tau, static_cast<double>(zeros) / n);
  }
  return c;
}

SparsityCurve profile_curve(const Graph& g, const Params& params,
                            const std::vector<std::map<uint32_t, Matrix>>& inputs, Role role,
                            const std::vector<double>& tau_grid) {
  if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "profile: no inputs");
  std::vector<double> values;
  for (const auto& in : inputs) {
    EvalResult res = evaluate(g, params, in);
    for (const auto& node : g.nodes) {
      // Structural views do not own data.
      if (node.kind == NodeKind::Transpose || node.kind == NodeKind::Slice ||
          node.kind == NodeKind::Concat || node.kind == NodeKind::BandExpand ||
          node.kind == NodeKind::ConstMat)
        continue;
      if (role_of(node.dclass) != role) continue;
      const auto& m = res.values[node.id];
      values.insert(values.end(), m.data.begin(), m.data.end());
    }
  }
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "profile: no matrices with role " + role_name(role));
  return profile_values(values, role, tau_grid);
}

const SparsityCurve& CurveSet::of(Role r) const {
  switch (r) {
    case Role::Weight: return weight;
    case Role::Gradient: return gradient;
    default: return activation;
  }
}

CurveSet identity_curves() {
  CurveSet cs;
  cs.weight = {Role::Weight, {{0.0, 0.0}, {1.0, 1.0}}};
  cs.activation = {Role::Activation, {{0.0, 0.0}, {1.0, 1.0}}};
  cs.gradient = {Role::Gradient, {{0.0, 0.0}, {1.0, 1.0}}};
  return cs;
}

double resolve_tau(const CurveSet& curves, const PruneThresholds& th, Role role) {
  switch (role) {
    case Role::Weight:
      return th.tau_weight ? *th.tau_weight : lookup_tau(curves.weight, kDefaultWeightPruneRatio);
    case Role::Activation:
      return th.tau_activation ? *th.tau_activation : th.tau_infer;
    case Role::Gradient:
      return th.tau_gradient ? *th.tau_gradient : th.tau_train;
    case Role::Const:
      return 0.0;
  }
  return 0.0;
}

double resolve_rho(const CurveSet& curves, const PruneThresholds& th, Role role) {
  if (role == Role::Const) return 0.0;
  return eval_rho(curves.of(role), resolve_tau(curves, th, role));
}

std::string curve_to_json(const SparsityCurve& c) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["role"] = role_name(c.role);
  auto pts = nlohmann::json::array();
  for (const auto& [tau, rho] : c.points) pts.push_back({tau, rho});
  j["points"] = std::move(pts);
  return j.dump(2);
}

SparsityCurve curve_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SparsityCurve c;
  const std::string role = j.at("role").get<std::string>();
  if (role == "weight") c.role = Role::Weight;
  else if (role == "gradient") c.role = Role::Gradient;
  else c.role = Role::Activation;
  for (const auto& p : j.at("points")) c.points.emplace_back(p[0].get<double>(), p[1].get<double>());
  return c;
}

// ---------------------------------------------------------------------------
// Footprint
// ---------------------------------------------------------------------------

static void add_footprint(Footprint& f, uint64_t elems, uint32_t elem_bytes, double rho) {
  f.dense_bytes += elems * elem_bytes;
  const auto nnz = static_cast<uint64_t>(std::llround(static_cast<double>(elems) * (1.0 - rho)));
  f.payload_bytes += nnz * elem_bytes;
  f.mask_bytes += (elems + 7) / 8;
}

FootprintReport compute_footprint(const Graph& g, uint32_t elem_bytes, double rho_w, double rho_a,
                                  double rho_g) {
  FootprintReport rep;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Transpose || n.kind == NodeKind::Slice || n.kind == NodeKind::Concat ||
        n.kind == NodeKind::BandExpand || n.kind == NodeKind::ConstMat)
      continue;
    const uint64_t elems = uint64_t(n.rows) * n.cols;
    switch (role_of(n.dclass)) {
      case Role::Weight: add_footprint(rep.weights, elems, elem_bytes, rho_w); break;
      case Role::Activation: add_footprint(rep.activations, elems, elem_bytes, rho_a); break;
      case Role::Gradient: add_footprint(rep.gradients, elems, elem_bytes, rho_g); break;
      case Role::Const: break;
    }
  }
  return rep;
}

}  // namespace txsim
