#include "blockprune/pipeline.hpp"

#include <chrono>
#include <string>

#include "blockprune/baselines.hpp"
#include "blockprune/error.hpp"

namespace blockprune {

std::string method_name(Method m) {
  switch (m) {
    case Method::Magnitude:
      return "magnitude";
    case Method::Wanda:
      return "wanda";
    case Method::SparseGpt:
      return "sparsegpt";
    case Method::Thanos:
      return "thanos";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "magnitude") return Method::Magnitude;
  if (s == "wanda") return Method::Wanda;
  if (s == "sparsegpt") return Method::SparseGpt;
  if (s == "thanos") return Method::Thanos;
  throw ConfigError("unknown method '" + s + "'");
}

std::string pattern_name(const RunConfig& cfg) {
  switch (cfg.pattern) {
    case Pattern::Unstructured:
      return "unstructured";
    case Pattern::Structured:
      return "structured";
    case Pattern::SemiStructured:
      return std::to_string(cfg.n) + ":" + std::to_string(cfg.m);
  }
  return "unknown";
}

void parse_pattern(const std::string& s, RunConfig& cfg) {
  if (s == "unstructured") {
    cfg.pattern = Pattern::Unstructured;
    return;
  }
  if (s == "structured") {
    cfg.pattern = Pattern::Structured;
    return;
  }
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("unknown pattern '" + s + "'");
  try {
    std::size_t used_n = 0, used_m = 0;
    const auto n = std::stoul(s.substr(0, colon), &used_n);
    const auto m = std::stoul(s.substr(colon + 1), &used_m);
    if (used_n != colon || used_m != s.size() - colon - 1) throw ConfigError("");
    cfg.pattern = Pattern::SemiStructured;
    cfg.n = n;
    cfg.m = m;
  } catch (const std::exception&) {
    throw ConfigError("pattern '" + s + "' is not of the form n:m");
  }
  if (cfg.n == 0 || cfg.n >= cfg.m) throw ConfigError("pattern " + s + " needs 0 < n < m");
}

RunConfig resolve_config(RunConfig cfg) {
  check_fraction(cfg.sparsity, "sparsity");
  check_fraction(cfg.alpha, "outlier fraction alpha");
  if (!(cfg.lambda_rel >= 0.0)) throw ConfigError("damping fraction must be non-negative");
  if (cfg.row_chunk == 0) throw ConfigError("row chunk must be positive");

  switch (cfg.method) {
    case Method::Magnitude:
    case Method::Wanda:
      if (cfg.pattern != Pattern::Unstructured) {
        throw ConfigError(method_name(cfg.method) + " supports only the unstructured pattern");
      }
      break;
    case Method::SparseGpt:
      if (cfg.pattern == Pattern::Structured) throw ConfigError("sparsegpt does not support the structured pattern");
      if (cfg.block_size == 0) cfg.block_size = kDefaultUnstructuredBlock;
      if (cfg.pattern == Pattern::SemiStructured) cfg.mask_block_size = cfg.m;
      if (cfg.mask_block_size == 0) cfg.mask_block_size = cfg.block_size;
      if (cfg.block_size % cfg.mask_block_size != 0) {
        throw ConfigError("mask block size must divide the block size");
      }
      break;
    case Method::Thanos:
      if (cfg.block_size == 0) {
        cfg.block_size =
            cfg.pattern == Pattern::SemiStructured ? kDefaultSemiStructuredBlock : kDefaultUnstructuredBlock;
      }
      if (cfg.inject_wanda_mask && cfg.pattern != Pattern::Unstructured) {
        throw ConfigError("an injected Wanda mask needs the unstructured pattern");
      }
      break;
  }
  if (cfg.inject_wanda_mask && cfg.method != Method::Thanos) {
    throw ConfigError("mask injection is only available for thanos");
  }
  return cfg;
}

PruneOutcome prune_layer(const DenseMatrix& w, const CalibrationSet& cal, const RunConfig& cfg) {
  switch (cfg.method) {
    case Method::Magnitude:
      return prune_magnitude(w, cal, cfg.sparsity);
    case Method::Wanda:
      return prune_wanda(w, cal, cfg.sparsity);
    case Method::SparseGpt: {
      SparseGptOptions opts;
      opts.target = cfg.pattern == Pattern::SemiStructured ? SparsityTarget::nm(cfg.n, cfg.m)
                                                           : SparsityTarget::unstructured(cfg.sparsity);
      opts.block_size = cfg.block_size;
      opts.mask_block_size = cfg.mask_block_size;
      opts.lambda_rel = cfg.lambda_rel;
      return prune_sparsegpt(w, cal, opts);
    }
    case Method::Thanos: {
      ThanosConfig tc;
      tc.pattern = cfg.pattern;
      tc.sparsity = cfg.sparsity;
      tc.n = cfg.n;
      tc.m = cfg.m;
      tc.block_size = cfg.block_size;
      tc.alpha = cfg.alpha;
      tc.lambda_rel = cfg.lambda_rel;
      tc.row_chunk = cfg.row_chunk;
      if (cfg.inject_wanda_mask) {
        const RowNorms norms = row_norms(cal);
        return prune_thanos_with_mask(w, cal, wanda_rowwise_mask(w, norms.values, cfg.sparsity), tc);
      }
      return prune_thanos(w, cal, tc);
    }
  }
  throw ConfigError("unknown method");
}

PipelineResult prune_model(const Model& model, const std::vector<DenseMatrix>& calibration, const RunConfig& config) {
  const RunConfig cfg = resolve_config(config);
  validate_chain(model);
  if (calibration.empty()) throw DataError("calibration tensor holds no samples");
  if (calibration.front().rows() != model.input_dim) {
    throw DataError("calibration inputs have " + std::to_string(calibration.front().rows()) +
                    " features but the model expects " + std::to_string(model.input_dim));
  }

  PipelineResult result;
  result.pruned.input_dim = model.input_dim;
  result.report.config = cfg;
  std::vector<DenseMatrix> inputs = calibration;

  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const Block& block = model.blocks[b];
    result.block_inputs.push_back(inputs);
    const auto captured = trace_block(block, inputs);

    Block pruned_block;
    for (std::size_t l = 0; l < block.size(); ++l) {
      const Layer& layer = block[l];
      const auto start = std::chrono::steady_clock::now();
      PruneOutcome outcome;
      try {
        outcome = prune_layer(layer.weights, CalibrationSet(captured[l]), cfg);
      } catch (const NumericalError& e) {
        throw NumericalError("block " + std::to_string(b) + " layer " + std::to_string(l) + ": " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError("block " + std::to_string(b) + " layer " + std::to_string(l) + ": " + e.what());
      }
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

      LayerRecord rec;
      rec.block = b;
      rec.layer = l;
      rec.rows = layer.weights.rows();
      rec.cols = layer.weights.cols();
      rec.pruned = outcome.mask.popcount();
      for (double v : outcome.pruned.values()) rec.zeros += v == 0.0 ? 1 : 0;
      rec.loss_before = outcome.loss_before;
      rec.loss_after = outcome.loss_after;
      rec.seconds = elapsed.count();
      result.report.layers.push_back(rec);

      pruned_block.push_back(Layer{std::move(outcome.pruned), layer.activation, layer.dtype});
    }

    inputs = forward_block(pruned_block, inputs);
    result.pruned.blocks.push_back(std::move(pruned_block));
  }
  return result;
}

}  // namespace blockprune
