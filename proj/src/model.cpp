#include "blockprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "blockprune/error.hpp"

namespace blockprune {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string activation_name(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw DataError("unknown activation '" + s + "'");
}

void validate_chain(const Model& model) {
  if (model.input_dim == 0) throw DataError("manifest input_dim must be positive");
  std::size_t width = model.input_dim;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    if (model.blocks[b].empty()) throw DataError("block " + std::to_string(b) + " has no layers");
    for (std::size_t l = 0; l < model.blocks[b].size(); ++l) {
      const auto& w = model.blocks[b][l].weights;
      if (w.cols() != width) {
        throw DataError("block " + std::to_string(b) + " layer " + std::to_string(l) + ": weights " + w.shape() +
                        " expect inputs of width " + std::to_string(w.cols()) + ", chain provides " +
                        std::to_string(width));
      }
      width = w.rows();
    }
  }
}

Model load_model(const fs::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw DataError("cannot open manifest " + manifest.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest.string() + " is not valid JSON: " + e.what());
  }

  Model model;
  const fs::path base = manifest.parent_path();
  try {
    if (doc.value("version", 0) != kManifestVersion) {
      throw DataError("manifest " + manifest.string() + " has unsupported version");
    }
    model.input_dim = doc.at("input_dim").get<std::size_t>();
    for (const auto& jb : doc.at("blocks")) {
      Block block;
      for (const auto& jl : jb) {
        Layer layer;
        layer.weights = load_matrix(base / jl.at("weights").get<std::string>(), &layer.dtype);
        layer.activation = parse_activation(jl.value("activation", std::string("identity")));
        block.push_back(std::move(layer));
      }
      model.blocks.push_back(std::move(block));
    }
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest.string() + ": " + e.what());
  }
  validate_chain(model);
  return model;
}

fs::path save_model(const fs::path& dir, const Model& model, const std::string& manifest_name) {
  fs::create_directories(dir);
  json doc;
  doc["format"] = "blockprune-model";
  doc["version"] = kManifestVersion;
  doc["input_dim"] = model.input_dim;
  doc["blocks"] = json::array();
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    json jb = json::array();
    for (std::size_t l = 0; l < model.blocks[b].size(); ++l) {
      const auto& layer = model.blocks[b][l];
      const std::string file = "block" + std::to_string(b) + "_layer" + std::to_string(l) + ".thns";
      save_matrix(dir / file, layer.weights, layer.dtype);
      jb.push_back({{"weights", file}, {"activation", activation_name(layer.activation)}});
    }
    doc["blocks"].push_back(std::move(jb));
  }
  const fs::path path = dir / manifest_name;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write manifest " + path.string());
  f << doc.dump(2) << '\n';
  return path;
}

DenseMatrix forward_layer(const Layer& layer, const DenseMatrix& x) {
  DenseMatrix y = matmul(layer.weights, x);
  if (layer.activation == Activation::Relu) {
    for (double& v : y.values()) v = std::max(v, 0.0);
  }
  return y;
}

std::vector<std::vector<DenseMatrix>> trace_block(const Block& block, std::span<const DenseMatrix> inputs) {
  std::vector<std::vector<DenseMatrix>> trace;
  trace.emplace_back(inputs.begin(), inputs.end());
  for (const auto& layer : block) {
    std::vector<DenseMatrix> next;
    next.reserve(trace.back().size());
    for (const auto& x : trace.back()) next.push_back(forward_layer(layer, x));
    trace.push_back(std::move(next));
  }
  return trace;
}

std::vector<DenseMatrix> forward_block(const Block& block, std::span<const DenseMatrix> inputs) {
  return std::move(trace_block(block, inputs).back());
}

ToyProblem generate_toy_problem(const GenOptions& options) {
  if (options.blocks == 0 || options.layers == 0 || options.dim == 0 || options.samples == 0 || options.tokens == 0) {
    throw ConfigError("generated model dimensions must all be positive");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = options.dim;

  ToyProblem out;
  out.model.input_dim = dim;
  const double wscale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t b = 0; b < options.blocks; ++b) {
    Block block;
    for (std::size_t l = 0; l < options.layers; ++l) {
      Layer layer;
      layer.weights = DenseMatrix(dim, dim);
      for (double& v : layer.weights.values()) v = normal(rng) * wscale;
      layer.activation = l + 1 < options.layers ? Activation::Relu : Activation::Identity;
      block.push_back(std::move(layer));
    }
    out.model.blocks.push_back(std::move(block));
  }

  std::vector<double> feature_scale(dim);
  for (double& s : feature_scale) s = std::exp(0.75 * normal(rng));
  for (std::size_t s = 0; s < options.samples; ++s) {
    DenseMatrix x(dim, options.tokens);
    for (std::size_t q = 0; q < dim; ++q)
      for (double& v : x.row(q)) v = normal(rng) * feature_scale[q];
    out.calibration.push_back(std::move(x));
  }
  return out;
}

}  // namespace blockprune
