#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "blockprune/calibration.hpp"
#include "blockprune/model.hpp"
#include "blockprune/outcome.hpp"
#include "blockprune/thanos.hpp"

namespace blockprune {

enum class Method { Magnitude, Wanda, SparseGpt, Thanos };

std::string method_name(Method m);
Method parse_method(const std::string& s);

/// Everything that determines a pruning run.
struct RunConfig {
  Method method = Method::Thanos;
  double sparsity = 0.5;
  Pattern pattern = Pattern::Unstructured;
  std::size_t n = 2;
  std::size_t m = 4;
  /// 0 picks the method/pattern default.
  std::size_t block_size = 0;
  /// SparseGPT mask block; 0 uses the block size.
  std::size_t mask_block_size = 0;
  double alpha = kDefaultOutlierFraction;
  double lambda_rel = kDefaultDampingFraction;
  std::uint64_t seed = 0;
  std::size_t row_chunk = 256;
  /// Thanos only: prune with the Wanda row-wise mask instead of its own selection.
  bool inject_wanda_mask = false;
};

/// "unstructured", "structured" or "<n>:<m>".
std::string pattern_name(const RunConfig& cfg);
/// Parses a pattern string into cfg.pattern / cfg.n / cfg.m.
void parse_pattern(const std::string& s, RunConfig& cfg);

/// Fills defaults (block sizes) and rejects combinations the method does not
/// support. Throws ConfigError.
RunConfig resolve_config(RunConfig cfg);

PruneOutcome prune_layer(const DenseMatrix& w, const CalibrationSet& cal, const RunConfig& cfg);

struct LayerRecord {
  std::size_t block = 0;
  std::size_t layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pruned = 0;  // mask popcount
  std::size_t zeros = 0;   // exact zeros in the output weights
  double loss_before = 0.0;
  double loss_after = 0.0;
  double seconds = 0.0;
};

struct PruneReport {
  RunConfig config;
  std::vector<LayerRecord> layers;
};

struct PipelineResult {
  Model pruned;
  PruneReport report;
  /// Calibration input of every block: block 0 gets the given samples, block
  /// k > 0 the output of the already pruned block k - 1.
  std::vector<std::vector<DenseMatrix>> block_inputs;
};

/// Prunes every layer block by block. Layer inputs inside a block come from a
/// forward pass through the unpruned block; the next block sees the output of
/// the pruned one.
PipelineResult prune_model(const Model& model, const std::vector<DenseMatrix>& calibration, const RunConfig& cfg);

}  // namespace blockprune
