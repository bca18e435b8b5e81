#pragma once

// Toy multi-block models: every block is a sequential chain of bias-free
// linear layers y = act(W x), described by a JSON manifest that points at one
// tensor file per layer. Example manifest (paths relative to the manifest):
//
//   {
//     "format": "blockprune-model",
//     "version": 1,
//     "input_dim": 64,
//     "blocks": [
//       [ { "weights": "block0_layer0.thns", "activation": "relu" },
//         { "weights": "block0_layer1.thns", "activation": "identity" } ]
//     ]
//   }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blockprune/matrix.hpp"
#include "blockprune/tensor_io.hpp"

namespace blockprune {

enum class Activation { Identity, Relu };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& s);

struct Layer {
  DenseMatrix weights;  // out x in
  Activation activation = Activation::Identity;
  DType dtype = DType::F64;
};

using Block = std::vector<Layer>;

struct Model {
  std::size_t input_dim = 0;
  std::vector<Block> blocks;
};

inline constexpr int kManifestVersion = 1;

/// Throws DataError naming the first block/layer whose input width breaks the chain.
void validate_chain(const Model& model);

Model load_model(const std::filesystem::path& manifest);
/// Writes one tensor file per layer plus `manifest_name` into `dir` and
/// returns the manifest path.
std::filesystem::path save_model(const std::filesystem::path& dir, const Model& model,
                                 const std::string& manifest_name = "model.json");

DenseMatrix forward_layer(const Layer& layer, const DenseMatrix& x);
/// Input of every layer of `block` for each sample, followed by the block output.
/// result[l][s] is the input of layer l for sample s; result.back() is the output.
std::vector<std::vector<DenseMatrix>> trace_block(const Block& block, std::span<const DenseMatrix> inputs);
std::vector<DenseMatrix> forward_block(const Block& block, std::span<const DenseMatrix> inputs);

struct GenOptions {
  std::size_t blocks = 2;
  std::size_t layers = 2;
  std::size_t dim = 64;
  std::size_t samples = 8;
  std::size_t tokens = 128;
  std::uint64_t seed = 0;
};

struct ToyProblem {
  Model model;
  std::vector<DenseMatrix> calibration;  // samples x (dim x tokens)
};

/// Gaussian weights and calibration inputs whose features have log-normal
/// scales, so activation-aware and magnitude criteria disagree.
ToyProblem generate_toy_problem(const GenOptions& options);

}  // namespace blockprune
