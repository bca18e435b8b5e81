#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "blockprune/calibration.hpp"
#include "blockprune/error.hpp"
#include "blockprune/model.hpp"
#include "blockprune/oracle.hpp"
#include "blockprune/pipeline.hpp"
#include "blockprune/report.hpp"
#include "blockprune/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace blockprune;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

constexpr std::size_t kVerifyMaxWidth = 1024;

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot open " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

struct PruneArgs {
  std::string model, calib, out, report, report_csv;
  std::string method = "thanos";
  std::string pattern = "unstructured";
  std::string mask_from = "own";
  RunConfig cfg;
  bool no_timings = false;
};

int run_prune(const PruneArgs& a, bool alpha_given) {
  RunConfig cfg = a.cfg;
  cfg.method = parse_method(a.method);
  parse_pattern(a.pattern, cfg);
  cfg.inject_wanda_mask = a.mask_from == "wanda";
  if (alpha_given && (cfg.method != Method::Thanos || cfg.pattern == Pattern::Unstructured)) {
    throw ConfigError("--alpha applies only to thanos with an n:m or structured pattern");
  }

  const Model model = load_model(a.model);
  const auto calib = load_samples(a.calib);
  const PipelineResult result = prune_model(model, calib, cfg);

  const fs::path manifest = save_model(a.out, result.pruned);
  const ReportOptions ropts{!a.no_timings};
  const fs::path report_path = a.report.empty() ? fs::path(a.out) / "report.json" : fs::path(a.report);
  write_text(report_path, emit_report(result.report, ropts));
  if (!a.report_csv.empty()) write_text(a.report_csv, emit_report_csv(result.report, ropts));

  const ReportTotals t = report_totals(result.report);
  std::printf("pruned %zu layers with %s (%s): sparsity %.4f, loss %.6g -> %.6g\n", result.report.layers.size(),
              method_name(result.report.config.method).c_str(), pattern_name(result.report.config).c_str(),
              t.sparsity(), t.loss_before, t.loss_after);
  std::printf("wrote %s and %s\n", manifest.string().c_str(), report_path.string().c_str());
  return kOk;
}

struct GenArgs {
  GenOptions gen;
  std::string out;
  std::string dtype = "f64";
};

int run_gen(const GenArgs& a) {
  const DType dtype = a.dtype == "f32" ? DType::F32 : DType::F64;
  ToyProblem toy = generate_toy_problem(a.gen);
  for (auto& block : toy.model.blocks)
    for (auto& layer : block) layer.dtype = dtype;
  const fs::path manifest = save_model(a.out, toy.model);
  const fs::path calib = fs::path(a.out) / "calib.thns";
  save_samples(calib, toy.calibration, dtype);
  std::printf("wrote %s and %s\n", manifest.string().c_str(), calib.string().c_str());
  return kOk;
}

struct VerifyArgs {
  std::string original, pruned, calib, report;
  double tolerance = 1e-8;
};

// Re-derives every layer's calibration input the way the pipeline does and
// checks each pruned row against the brute-force constrained optimum for its
// zero pattern: no row may beat the optimum, and the Gram-based loss must
// agree with the directly evaluated one.
int run_verify(const VerifyArgs& a) {
  const Model original = load_model(a.original);
  const Model pruned = load_model(a.pruned);
  if (original.input_dim != pruned.input_dim || original.blocks.size() != pruned.blocks.size()) {
    throw DataError("pruned model does not have the structure of the original");
  }
  std::vector<DenseMatrix> inputs = load_samples(a.calib);

  std::size_t violations = 0;
  std::vector<std::size_t> zero_counts;
  for (std::size_t b = 0; b < original.blocks.size(); ++b) {
    const Block& ob = original.blocks[b];
    const Block& pb = pruned.blocks[b];
    if (ob.size() != pb.size()) throw DataError("block " + std::to_string(b) + " has a different layer count");
    const auto captured = trace_block(ob, inputs);
    for (std::size_t l = 0; l < ob.size(); ++l) {
      const DenseMatrix& w = ob[l].weights;
      const DenseMatrix& p = pb[l].weights;
      if (w.rows() != p.rows() || w.cols() != p.cols()) {
        throw DataError("block " + std::to_string(b) + " layer " + std::to_string(l) + " changed shape");
      }
      if (w.cols() > kVerifyMaxWidth) {
        throw ConfigError("verify handles layers up to width " + std::to_string(kVerifyMaxWidth));
      }
      const CalibrationSet cal(captured[l]);
      DenseMatrix delta(w.rows(), w.cols());
      for (std::size_t k = 0; k < delta.values().size(); ++k) delta.values()[k] = p.values()[k] - w.values()[k];

      const double direct = oracle::loss_eval(delta, cal);
      const double via_gram = reconstruction_loss(delta, accumulate_gram(cal));
      bool ok = std::abs(direct - via_gram) <= a.tolerance * std::max(1.0, direct);

      double optimum = 0.0;
      std::size_t zeros = 0;
      for (std::size_t i = 0; i < w.rows(); ++i) {
        std::vector<std::size_t> q;
        for (std::size_t j = 0; j < w.cols(); ++j)
          if (p(i, j) == 0.0) q.push_back(j);
        zeros += q.size();
        DenseMatrix row_delta(1, w.cols());
        if (q.size() == w.cols()) {
          for (std::size_t j = 0; j < w.cols(); ++j) row_delta(0, j) = -w(i, j);
        } else if (!q.empty()) {
          const auto best = oracle::constrained_lsq(w.row(i), IndexSet(q, w.cols()), cal);
          for (std::size_t j = 0; j < w.cols(); ++j) row_delta(0, j) = best[j];
        }
        const double row_opt = oracle::loss_eval(row_delta, cal);
        for (std::size_t j = 0; j < w.cols(); ++j) row_delta(0, j) = delta(i, j);
        const double row_real = oracle::loss_eval(row_delta, cal);
        if (row_real < row_opt - a.tolerance * std::max(1.0, row_opt)) ok = false;
        optimum += row_opt;
      }
      zero_counts.push_back(zeros);
      std::printf("[%s] block %zu layer %zu: zeros %zu/%zu, loss %.6g, optimum for its zeros %.6g\n",
                  ok ? "ok" : "FAIL", b, l, zeros, w.rows() * w.cols(), direct, optimum);
      if (!ok) ++violations;
    }
    inputs = forward_block(pb, inputs);
  }

  if (!a.report.empty()) {
    const std::string text = read_text(a.report);
    validate_report(text);
    const auto doc = nlohmann::json::parse(text);
    const auto& layers = doc.at("layers");
    bool ok = layers.size() == zero_counts.size();
    for (std::size_t k = 0; ok && k < layers.size(); ++k) ok = layers[k].at("zeros").get<std::size_t>() == zero_counts[k];
    std::printf("[%s] report %s matches the pruned weights\n", ok ? "ok" : "FAIL", a.report.c_str());
    if (!ok) ++violations;
  }

  if (violations != 0) {
    std::fprintf(stderr, "verify: %zu check(s) failed\n", violations);
    return kNumerical;
  }
  std::printf("all checks passed\n");
  return kOk;
}

int run_report(const std::string& path, bool check_only) {
  const std::string text = read_text(path);
  validate_report(text);
  if (!check_only) std::cout << format_report(text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-training pruning of toy multi-block models"};
  app.require_subcommand(1);

  PruneArgs prune;
  auto* p = app.add_subcommand("prune", "Prune every layer of a model block by block");
  p->add_option("--model", prune.model, "Model manifest")->required()->check(CLI::ExistingFile);
  p->add_option("--calib", prune.calib, "Calibration tensor (samples x features x tokens)")
      ->required()
      ->check(CLI::ExistingFile);
  p->add_option("--method", prune.method, "magnitude | wanda | sparsegpt | thanos")
      ->check(CLI::IsMember({"magnitude", "wanda", "sparsegpt", "thanos"}));
  p->add_option("--sparsity", prune.cfg.sparsity, "Fraction of weights to remove");
  p->add_option("--pattern", prune.pattern, "unstructured | n:m | structured");
  p->add_option("--blocksize", prune.cfg.block_size, "Columns per block (0: method default)");
  p->add_option("--mask-blocksize", prune.cfg.mask_block_size, "SparseGPT mask selection block (0: block size)");
  auto* alpha = p->add_option("--alpha", prune.cfg.alpha, "Fraction of outlier rows kept intact");
  p->add_option("--damp", prune.cfg.lambda_rel, "Damping as a fraction of the mean Hessian diagonal");
  p->add_option("--seed", prune.cfg.seed, "Seed recorded with the run");
  p->add_option("--row-chunk", prune.cfg.row_chunk, "Rows per batched solve");
  p->add_option("--out", prune.out, "Output directory")->required();
  p->add_option("--report", prune.report, "Report path (default: <out>/report.json)");
  p->add_option("--report-csv", prune.report_csv, "Also write the report as CSV");
  p->add_option("--mask-from", prune.mask_from, "own | wanda (thanos only)")->check(CLI::IsMember({"own", "wanda"}));
  p->add_flag("--no-timings", prune.no_timings, "Leave wall times out of the report");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a random toy model and calibration data");
  g->add_option("--blocks", gen.gen.blocks, "Number of blocks");
  g->add_option("--layers", gen.gen.layers, "Layers per block");
  g->add_option("--dims", gen.gen.dim, "Width of every layer");
  g->add_option("--samples", gen.gen.samples, "Calibration samples");
  g->add_option("--tokens", gen.gen.tokens, "Tokens per sample");
  g->add_option("--seed", gen.gen.seed, "Random seed");
  g->add_option("--dtype", gen.dtype, "f32 | f64")->check(CLI::IsMember({"f32", "f64"}));
  g->add_option("--out", gen.out, "Output directory")->required();

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "Check a pruned model against brute-force optima");
  v->add_option("--original", verify.original, "Manifest of the unpruned model")->required()->check(CLI::ExistingFile);
  v->add_option("--pruned", verify.pruned, "Manifest of the pruned model")->required()->check(CLI::ExistingFile);
  v->add_option("--calib", verify.calib, "Calibration tensor used for pruning")->required()->check(CLI::ExistingFile);
  v->add_option("--report", verify.report, "Report to cross-check")->check(CLI::ExistingFile);
  v->add_option("--tolerance", verify.tolerance, "Relative tolerance");

  std::string report_path;
  bool check_only = false;
  auto* r = app.add_subcommand("report", "Pretty-print a report");
  r->add_option("path", report_path, "Report JSON")->required()->check(CLI::ExistingFile);
  r->add_flag("--check", check_only, "Only validate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (p->parsed()) return run_prune(prune, alpha->count() > 0);
    if (g->parsed()) return run_gen(gen);
    if (v->parsed()) return run_verify(verify);
    if (r->parsed()) return run_report(report_path, check_only);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
