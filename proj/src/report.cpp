#include "blockprune/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "blockprune/error.hpp"

namespace blockprune {

namespace {

using json = nlohmann::ordered_json;

double layer_sparsity(const LayerRecord& r) {
  const std::size_t cells = r.rows * r.cols;
  return cells == 0 ? 0.0 : static_cast<double>(r.zeros) / static_cast<double>(cells);
}

json config_json(const RunConfig& c) {
  json j;
  j["method"] = method_name(c.method);
  j["sparsity"] = c.sparsity;
  j["pattern"] = pattern_name(c);
  j["block_size"] = c.block_size;
  j["mask_block_size"] = c.mask_block_size;
  j["alpha"] = c.alpha;
  j["damping"] = c.lambda_rel;
  j["seed"] = c.seed;
  j["row_chunk"] = c.row_chunk;
  j["mask_from"] = c.inject_wanda_mask ? "wanda" : "own";
  return j;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); }

json parse_report(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("report is not valid JSON: ") + e.what());
  }
}

}  // namespace

ReportTotals report_totals(const PruneReport& report) {
  ReportTotals t;
  for (const auto& r : report.layers) {
    t.cells += r.rows * r.cols;
    t.pruned += r.pruned;
    t.zeros += r.zeros;
    t.loss_before += r.loss_before;
    t.loss_after += r.loss_after;
    t.seconds += r.seconds;
  }
  return t;
}

std::string emit_report(const PruneReport& report, const ReportOptions& options) {
  json doc;
  doc["schema"] = "blockprune-report";
  doc["schema_version"] = kReportSchemaVersion;
  doc["config"] = config_json(report.config);
  doc["layers"] = json::array();
  const std::string method = method_name(report.config.method);
  for (const auto& r : report.layers) {
    json j;
    j["block"] = r.block;
    j["layer"] = r.layer;
    j["method"] = method;
    j["rows"] = r.rows;
    j["cols"] = r.cols;
    j["pruned"] = r.pruned;
    j["zeros"] = r.zeros;
    j["sparsity"] = layer_sparsity(r);
    j["loss_before"] = r.loss_before;
    j["loss_after"] = r.loss_after;
    if (options.include_timings) j["seconds"] = r.seconds;
    doc["layers"].push_back(std::move(j));
  }
  const ReportTotals t = report_totals(report);
  json jt;
  jt["layers"] = report.layers.size();
  jt["cells"] = t.cells;
  jt["pruned"] = t.pruned;
  jt["zeros"] = t.zeros;
  jt["sparsity"] = t.sparsity();
  jt["loss_before"] = t.loss_before;
  jt["loss_after"] = t.loss_after;
  if (options.include_timings) jt["seconds"] = t.seconds;
  doc["totals"] = std::move(jt);
  return doc.dump(2) + "\n";
}

std::string emit_report_csv(const PruneReport& report, const ReportOptions& options) {
  std::ostringstream out;
  out.precision(17);
  out << "block,layer,method,rows,cols,pruned,zeros,sparsity,loss_before,loss_after";
  if (options.include_timings) out << ",seconds";
  out << '\n';
  const std::string method = method_name(report.config.method);
  for (const auto& r : report.layers) {
    out << r.block << ',' << r.layer << ',' << method << ',' << r.rows << ',' << r.cols << ',' << r.pruned << ','
        << r.zeros << ',' << layer_sparsity(r) << ',' << r.loss_before << ',' << r.loss_after;
    if (options.include_timings) out << ',' << r.seconds;
    out << '\n';
  }
  return out.str();
}

void validate_report(const std::string& json_text) {
  const json doc = parse_report(json_text);
  try {
    if (doc.at("schema").get<std::string>() != "blockprune-report") throw DataError("report has the wrong schema tag");
    if (doc.at("schema_version").get<int>() != kReportSchemaVersion) throw DataError("unsupported report version");
    const auto& cfg = doc.at("config");
    parse_method(cfg.at("method").get<std::string>());
    const auto& layers = doc.at("layers");
    if (!layers.is_array()) throw DataError("report layers must be an array");

    std::size_t cells = 0, zeros = 0, pruned = 0;
    double before = 0.0, after = 0.0;
    for (const auto& l : layers) {
      const auto rows = l.at("rows").get<std::size_t>();
      const auto cols = l.at("cols").get<std::size_t>();
      const auto z = l.at("zeros").get<std::size_t>();
      const auto p = l.at("pruned").get<std::size_t>();
      const double lb = l.at("loss_before").get<double>();
      const double la = l.at("loss_after").get<double>();
      if (z > rows * cols || p > rows * cols) throw DataError("layer counts exceed its size");
      if (!std::isfinite(lb) || !std::isfinite(la) || lb < 0.0 || la < 0.0) {
        throw DataError("layer losses must be finite and non-negative");
      }
      if (!close(l.at("sparsity").get<double>(), rows * cols == 0 ? 0.0 : static_cast<double>(z) / (rows * cols))) {
        throw DataError("layer sparsity disagrees with its zero count");
      }
      cells += rows * cols;
      zeros += z;
      pruned += p;
      before += lb;
      after += la;
    }
    const auto& t = doc.at("totals");
    if (t.at("layers").get<std::size_t>() != layers.size()) throw DataError("totals count the wrong number of layers");
    if (t.at("cells").get<std::size_t>() != cells || t.at("zeros").get<std::size_t>() != zeros ||
        t.at("pruned").get<std::size_t>() != pruned) {
      throw DataError("totals are not the sum of the layer counts");
    }
    if (!close(t.at("loss_before").get<double>(), before) || !close(t.at("loss_after").get<double>(), after)) {
      throw DataError("totals are not the sum of the layer losses");
    }
    if (!close(t.at("sparsity").get<double>(), cells == 0 ? 0.0 : static_cast<double>(zeros) / cells)) {
      throw DataError("total sparsity disagrees with the zero count");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

std::string format_report(const std::string& json_text) {
  const json doc = parse_report(json_text);
  std::ostringstream out;
  char line[256];
  try {
    const auto& c = doc.at("config");
    out << "method " << c.at("method").get<std::string>() << ", pattern " << c.at("pattern").get<std::string>()
        << ", target sparsity " << c.at("sparsity").get<double>() << "\n\n";
    std::snprintf(line, sizeof line, "%5s %5s %9s %8s %9s %14s %14s %9s\n", "block", "layer", "shape", "zeros",
                  "sparsity", "loss_before", "loss_after", "seconds");
    out << line;
    for (const auto& l : doc.at("layers")) {
      const std::string shape =
          std::to_string(l.at("rows").get<std::size_t>()) + "x" + std::to_string(l.at("cols").get<std::size_t>());
      const std::string secs = l.contains("seconds") ? std::to_string(l["seconds"].get<double>()) : "-";
      std::snprintf(line, sizeof line, "%5zu %5zu %9s %8zu %9.4f %14.6g %14.6g %9.9s\n",
                    l.at("block").get<std::size_t>(), l.at("layer").get<std::size_t>(), shape.c_str(),
                    l.at("zeros").get<std::size_t>(), l.at("sparsity").get<double>(),
                    l.at("loss_before").get<double>(), l.at("loss_after").get<double>(), secs.c_str());
      out << line;
    }
    const auto& t = doc.at("totals");
    std::snprintf(line, sizeof line, "%5s %5s %9s %8zu %9.4f %14.6g %14.6g\n", "total", "", "",
                  t.at("zeros").get<std::size_t>(), t.at("sparsity").get<double>(), t.at("loss_before").get<double>(),
                  t.at("loss_after").get<double>());
    out << line;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return out.str();
}

}  // namespace blockprune
