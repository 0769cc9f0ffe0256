#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "txsim/common.hpp"

namespace txsim {

// ---------------------------------------------------------------------------
// Transformer side
// ---------------------------------------------------------------------------

enum class HeadKind { SA_SDP, SA_WMA, LT_DFT, LT_DCT, DSC };

struct HeadOp {
  HeadKind kind = HeadKind::SA_SDP;
  int kernel = 0;  // convolution kernel length, DSC only

  bool operator==(const HeadOp&) const = default;
};

// Embedding categories. DSC is split by kernel length so that per-layer head
// multisets map to fixed-size count vectors.
constexpr int kHeadCategories = 7;
int head_category(const HeadOp& h);                 // 0..6, -1 if unknown kernel
HeadOp category_head(int category);                 // inverse
std::string head_name(const HeadOp& h);             // e.g. "sa_sdp", "dsc5"
std::optional<HeadOp> head_from_name(const std::string& name);

struct LayerConfig {
  int hidden = 128;
  std::vector<HeadOp> heads;
  std::vector<int> ff;  // feed-forward dims, one per stack element

  bool operator==(const LayerConfig& o) const;  // heads compared as multiset
};

struct TransformerConfig {
  std::vector<LayerConfig> layers;

  bool operator==(const TransformerConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Accelerator side
// ---------------------------------------------------------------------------

enum class Activation { ReLU, GeLU };

enum class MemType { RRAM, DRAM, HBM };

struct MemConfig {
  MemType type = MemType::RRAM;
  int banks = 16;
  int ranks = 2;
  int channels = 2;

  bool operator==(const MemConfig&) const = default;
};

struct AcceleratorConfig {
  int batch_tile = 1;       // b
  int spatial_tile = 8;     // x (= y)
  Activation activation = Activation::ReLU;
  int num_pes = 64;
  int mac_lanes_per_pe = 8;
  int macs_per_lane = 1;    // M
  int softmax_per_pe = 2;
  int batch_size = 4;
  int act_buffer_mb = 4;
  int weight_buffer_mb = 8;
  int mask_buffer_mb = 1;
  MemConfig mem;

  bool operator==(const AcceleratorConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Value sets (defaults can be overridden from a JSON file)
// ---------------------------------------------------------------------------

struct AcceleratorSpace {
  std::vector<int> batch_tile{1, 4};
  std::vector<int> spatial_tile{8, 16, 32};
  std::vector<Activation> activation{Activation::ReLU, Activation::GeLU};
  std::vector<int> num_pes{64, 128, 256, 512, 1024};
  std::vector<int> mac_lanes{8, 16, 32, 64, 128};
  std::vector<int> macs_per_lane{1, 16};
  std::vector<int> softmax_per_pe{2, 4, 8, 16, 32, 64};
  std::vector<int> batch_size{4, 16, 32};
  std::vector<int> act_buffer_mb{4, 8, 16, 32, 64};
  std::vector<int> weight_buffer_mb{8, 16, 32, 64, 128};
  std::vector<int> mask_buffer_mb{1, 2, 4, 8, 16};
  // Listing order is load-bearing: the memory-config embedding index is the
  // 1-based position in this list. Changing the order is a breaking change.
  std::vector<MemConfig> mem_configs{
      {MemType::RRAM, 16, 2, 2}, {MemType::RRAM, 8, 2, 4},  {MemType::RRAM, 4, 2, 8},
      {MemType::RRAM, 2, 2, 16}, {MemType::RRAM, 32, 2, 1}, {MemType::RRAM, 1, 2, 32},
      {MemType::DRAM, 16, 2, 2}, {MemType::DRAM, 8, 2, 4},  {MemType::DRAM, 32, 2, 1},
      {MemType::DRAM, 16, 4, 1}, {MemType::HBM, 32, 1, 4}};
};

struct TransformerSpace {
  std::vector<int> num_layers{2, 4, 6, 8, 10, 12};
  std::vector<int> num_heads{2, 4, 8, 12};
  std::vector<int> hidden_strict{128, 256};
  std::vector<int> hidden_extended{128, 256, 512};
  std::vector<int> ff_dims{256, 512, 1024, 2048, 3072, 4096};
  std::vector<int> ff_stack_lengths{1, 2, 3};
  std::vector<int> dsc_kernels_strict{5, 9};
  std::vector<int> dsc_kernels_extended{5, 9, 13};
};

struct DesignSpaces {
  AcceleratorSpace accelerator;
  TransformerSpace transformer;
};

// Loads value-set overrides from JSON; fields not present keep defaults.
DesignSpaces load_spaces(const std::string& path);
DesignSpaces parse_spaces(const std::string& json_text);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ValidationMode { Strict, Extended };

struct Violation {
  std::string field;
  std::string message;
};

struct ValidityReport {
  bool valid = true;
  std::vector<Violation> violations;

  void fail(const std::string& field, const std::string& message) {
    valid = false;
    violations.push_back({field, message});
  }
};

ValidityReport validate_accelerator(const AcceleratorConfig& cfg, const AcceleratorSpace& space);
ValidityReport validate_transformer(const TransformerConfig& cfg, const TransformerSpace& space,
                                    ValidationMode mode);

// ---------------------------------------------------------------------------
// Cardinality
// ---------------------------------------------------------------------------

uint64_t count_accelerator_space(const AcceleratorSpace& space);

// Exhaustive enumeration cross-check: walks every tuple and validates it.
// The parallel variant partitions the outermost axes across threads.
uint64_t enumerate_accelerator_space_serial(const AcceleratorSpace& space);
uint64_t enumerate_accelerator_space(const AcceleratorSpace& space);

// Unsigned big integer, enough for design-space cardinalities that overflow
// 64 bits (the strict transformer space has ~50 decimal digits).
struct BigUint {
  std::vector<uint32_t> limbs;  // base 1e9, little-endian

  static BigUint from_u64(uint64_t v);
  BigUint& mul_u64(uint64_t v);
  BigUint& add(const BigUint& o);
  std::string str() const;
};

BigUint count_transformer_space_strict(const TransformerSpace& space);

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

constexpr int kAccEmbedDims = 12;       // b,x,y,pes,lanes,macs,softmax,batch,3 buffers,mem idx
constexpr int kAccEmbedDimsExt = 13;    // + activation slot used by the optimizer
constexpr int kTxfSlots = 12;           // max encoder layers
constexpr int kTxfSlotWidth = 1 + kHeadCategories + 3;  // hidden, head counts, ff dims
constexpr int kTxfEmbedDims = kTxfSlots * kTxfSlotWidth;
constexpr int kEmbeddingLayoutVersion = 1;

// The memory-config slot is the 1-based index into the active space's
// listing, so encode and decode must use the same space.
std::vector<double> encode_accelerator(const AcceleratorConfig& cfg,
                                       const AcceleratorSpace& space = {});      // 12-dim
std::vector<double> encode_accelerator_ext(const AcceleratorConfig& cfg,
                                           const AcceleratorSpace& space = {});  // 13-dim
std::optional<AcceleratorConfig> decode_accelerator(const std::vector<double>& e,
                                                    const AcceleratorSpace& space);

std::vector<double> encode_transformer(const TransformerConfig& cfg);
std::optional<TransformerConfig> decode_transformer(const std::vector<double>& e,
                                                    const TransformerSpace& space);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

AcceleratorConfig sample_accelerator(DetRng& rng, const AcceleratorSpace& space);
TransformerConfig sample_transformer(DetRng& rng, const TransformerSpace& space,
                                     ValidationMode mode);
std::vector<std::pair<TransformerConfig, AcceleratorConfig>> sample_space(
    uint64_t seed, int n, ValidationMode mode, const DesignSpaces& spaces);

// ---------------------------------------------------------------------------
// JSON config files
// ---------------------------------------------------------------------------

std::string transformer_to_json(const TransformerConfig& cfg);
TransformerConfig transformer_from_json(const std::string& text);
std::string accelerator_to_json(const AcceleratorConfig& cfg);
AcceleratorConfig accelerator_from_json(const std::string& text);

std::string mem_type_name(MemType t);
std::string activation_name(Activation a);

}  // namespace txsim
