#include "gslab/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "gslab/errors.hpp"

namespace gslab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor::from(j.at("shape").get<std::vector<int>>(),
                      j.at("data").get<std::vector<double>>());
}

json update_to_json(const GradientUpdate& g) {
  json arr = json::array();
  for (const auto& [name, t] : g.entries) arr.push_back({{"name", name}, {"tensor", tensor_to_json(t)}});
  return arr;
}

GradientUpdate update_from_json(const json& j) {
  GradientUpdate g;
  for (const auto& e : j)
    g.entries.push_back({e.at("name").get<std::string>(), tensor_from_json(e.at("tensor"))});
  return g;
}

json model_to_json(const Model& m) {
  json layers = json::array();
  for (const Layer& l : m.layers)
    layers.push_back({{"name", l.name},
                      {"weight", tensor_to_json(l.weight)},
                      {"bias", tensor_to_json(l.bias)}});
  return json{{"input_dim", m.input_dim}, {"num_classes", m.num_classes}, {"layers", layers}};
}

Model model_from_json(const json& j) {
  Model m;
  m.input_dim = j.at("input_dim").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  for (const auto& e : j.at("layers"))
    m.layers.push_back({e.at("name").get<std::string>(), tensor_from_json(e.at("weight")),
                        tensor_from_json(e.at("bias"))});
  return m;
}

json examples_to_json(const std::vector<LabeledExample>& v) {
  json arr = json::array();
  for (const auto& ex : v) arr.push_back({{"image", tensor_to_json(ex.image)}, {"label", ex.label}});
  return arr;
}

std::vector<LabeledExample> examples_from_json(const json& j) {
  std::vector<LabeledExample> v;
  for (const auto& e : j)
    v.push_back({tensor_from_json(e.at("image")), e.at("label").get<int>()});
  return v;
}

const char* fallback_name(CensorConfig::Fallback f) {
  return f == CensorConfig::Fallback::kPaperFaithful ? "prefer_original" : "strict_privacy";
}
CensorConfig::Fallback fallback_from(const std::string& s) {
  if (s == "prefer_original") return CensorConfig::Fallback::kPaperFaithful;
  if (s == "strict_privacy") return CensorConfig::Fallback::kStrictPrivacy;
  throw ParseError("unknown fallback mode '" + s + "'");
}
const char* source_name(CensorConfig::Source s) {
  return s == CensorConfig::Source::kGaussian ? "gaussian" : "decoy";
}
CensorConfig::Source source_from(const std::string& s) {
  if (s == "gaussian") return CensorConfig::Source::kGaussian;
  if (s == "decoy") return CensorConfig::Source::kDecoy;
  throw ParseError("unknown sampling source '" + s + "'");
}
const char* loss_ref_name(CensorConfig::LossReference r) {
  return r == CensorConfig::LossReference::kCurrentModel ? "current_model" : "original_applied";
}
CensorConfig::LossReference loss_ref_from(const std::string& s) {
  if (s == "current_model") return CensorConfig::LossReference::kCurrentModel;
  if (s == "original_applied") return CensorConfig::LossReference::kOriginalApplied;
  throw ParseError("unknown loss reference '" + s + "'");
}

DefenseConfig::Kind kind_from(const std::string& s) {
  if (s == "none") return DefenseConfig::Kind::kNone;
  if (s == "censor") return DefenseConfig::Kind::kCensor;
  if (s == "noise") return DefenseConfig::Kind::kNoise;
  if (s == "clip") return DefenseConfig::Kind::kClip;
  if (s == "topk") return DefenseConfig::Kind::kTopK;
  if (s == "soteria") return DefenseConfig::Kind::kSoteria;
  throw ParseError("unknown defense kind '" + s + "'");
}

json defense_to_json(const DefenseConfig& d) {
  return json{{"kind", defense_kind_name(d.kind)},
              {"censor",
               {{"trials", d.censor.trials},
                {"temperature", d.censor.temperature},
                {"perturbation_scale", d.censor.perturbation_scale},
                {"fallback", fallback_name(d.censor.fallback)},
                {"source", source_name(d.censor.source)},
                {"decoy_examples", examples_to_json(d.censor.decoy_examples)},
                {"learning_rate", d.censor.learning_rate},
                {"loss_reference", loss_ref_name(d.censor.loss_reference)}}},
              {"decoy_count", d.decoy_count},
              {"noise_sigma", d.noise_sigma},
              {"clip_bound", d.clip_bound},
              {"topk_ratio", d.topk_ratio},
              {"topk_per_layer", d.topk_per_layer},
              {"soteria_ratio", d.soteria_ratio},
              {"soteria_layer", d.soteria_layer}};
}

DefenseConfig defense_from_json(const json& j) {
  DefenseConfig d;
  d.kind = kind_from(j.at("kind").get<std::string>());
  const json& c = j.at("censor");
  d.censor.trials = c.at("trials").get<int>();
  d.censor.temperature = c.at("temperature").get<double>();
  d.censor.perturbation_scale = c.at("perturbation_scale").get<double>();
  d.censor.fallback = fallback_from(c.at("fallback").get<std::string>());
  d.censor.source = source_from(c.at("source").get<std::string>());
  d.censor.decoy_examples = examples_from_json(c.at("decoy_examples"));
  d.censor.learning_rate = c.at("learning_rate").get<double>();
  d.censor.loss_reference = loss_ref_from(c.at("loss_reference").get<std::string>());
  d.decoy_count = j.at("decoy_count").get<int>();
  d.noise_sigma = j.at("noise_sigma").get<double>();
  d.clip_bound = j.at("clip_bound").get<double>();
  d.topk_ratio = j.at("topk_ratio").get<double>();
  d.topk_per_layer = j.at("topk_per_layer").get<bool>();
  d.soteria_ratio = j.at("soteria_ratio").get<double>();
  d.soteria_layer = j.at("soteria_layer").get<std::string>();
  return d;
}

json config_to_json(const FLConfig& c) {
  return json{{"num_clients", c.num_clients},
              {"clients_per_round", c.clients_per_round},
              {"rounds", c.rounds},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"dirichlet_alpha", c.dirichlet_alpha},
              {"hidden_dims", c.hidden_dims},
              {"defense", defense_to_json(c.defense)},
              {"seed", c.seed},
              {"victim_client", c.victim_client},
              {"victim_rounds", c.victim_rounds},
              {"workers", c.workers}};
}

FLConfig config_from_json(const json& j) {
  FLConfig c;
  c.num_clients = j.at("num_clients").get<int>();
  c.clients_per_round = j.at("clients_per_round").get<int>();
  c.rounds = j.at("rounds").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.defense = defense_from_json(j.at("defense"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.victim_client = j.at("victim_client").get<int>();
  c.victim_rounds = j.at("victim_rounds").get<std::vector<int>>();
  c.workers = j.at("workers").get<int>();
  return c;
}

json batch_to_json(const Batch& b) {
  return json{{"x", tensor_to_json(b.x)}, {"y", b.y}};
}

Batch batch_from_json(const json& j) {
  Batch b;
  b.x = tensor_from_json(j.at("x"));
  b.y = j.at("y").get<std::vector<int>>();
  return b;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("report: cannot open '" + path.string() + "' for writing");
  f << text;
}

}  // namespace

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n\r") == std::string::npos) return raw;
  std::string out = "\"";
  for (char ch : raw) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string run_record_to_json(const RunRecord& record) {
  json rounds = json::array();
  for (const RoundMetrics& r : record.rounds)
    rounds.push_back({{"round", r.round},
                      {"accuracy", r.test_accuracy},
                      {"loss", r.test_loss},
                      {"elapsed_ms", r.elapsed_ms}});

  json captures = json::array();
  for (const VictimCapture& c : record.captures)
    captures.push_back({{"round", c.round},
                        {"client_id", c.client_id},
                        {"batch", batch_to_json(c.batch)},
                        {"transmitted", update_to_json(c.transmitted)},
                        {"model_before", model_to_json(c.model_before)}});

  json j{{"config", config_to_json(record.config)},
         {"root_seed", record.root_seed},
         {"rounds", rounds},
         {"captures", captures},
         {"final_accuracy", record.final_accuracy},
         {"final_loss", record.final_loss},
         {"final_model", model_to_json(record.final_model)}};
  return j.dump(2);
}

RunRecord run_record_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
  try {
    RunRecord r;
    r.config = config_from_json(j.at("config"));
    r.root_seed = j.at("root_seed").get<std::uint64_t>();
    for (const auto& e : j.at("rounds")) {
      RoundMetrics m;
      m.round = e.at("round").get<int>();
      m.test_accuracy = e.at("accuracy").get<double>();
      m.test_loss = e.at("loss").get<double>();
      m.elapsed_ms = e.at("elapsed_ms").get<double>();
      r.rounds.push_back(m);
    }
    for (const auto& e : j.at("captures")) {
      VictimCapture c;
      c.round = e.at("round").get<int>();
      c.client_id = e.at("client_id").get<int>();
      c.batch = batch_from_json(e.at("batch"));
      c.transmitted = update_from_json(e.at("transmitted"));
      c.model_before = model_from_json(e.at("model_before"));
      r.captures.push_back(std::move(c));
    }
    r.final_accuracy = j.at("final_accuracy").get<double>();
    r.final_loss = j.at("final_loss").get<double>();
    r.final_model = model_from_json(j.at("final_model"));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

void write_pgm(const std::string& path, const Tensor& image) {
  int rows = 0, cols = 0;
  if (image.rank() == 2) {
    rows = image.rows();
    cols = image.cols();
  } else if (image.rank() == 1) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(image.numel()))));
    if (static_cast<std::int64_t>(side) * side != image.numel())
      throw ShapeError("write_pgm: rank-1 image with non-square pixel count " +
                       std::to_string(image.numel()));
    rows = cols = side;
  } else {
    throw ShapeError("write_pgm: expected rank 1 or 2, got " + shape_str(image.shape()));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("write_pgm: cannot open '" + path + "'");
  f << "P5\n" << cols << " " << rows << "\n255\n";
  for (std::int64_t i = 0; i < image.numel(); ++i) {
    const double v = std::min(1.0, std::max(0.0, image.at(i)));
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

void report_emit(const RunRecord& record, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  write_text(dir / "record.json", run_record_to_json(record));

  std::string csv = "round,accuracy,loss,elapsed_ms\n";
  std::string acc_tsv, loss_tsv;
  for (const RoundMetrics& r : record.rounds) {
    csv += std::to_string(r.round) + "," + format_double(r.test_accuracy) + "," +
           format_double(r.test_loss) + "," + format_double(r.elapsed_ms) + "\n";
    acc_tsv += std::to_string(r.round) + "\t" + format_double(r.test_accuracy) + "\n";
    loss_tsv += std::to_string(r.round) + "\t" + format_double(r.test_loss) + "\n";
  }
  write_text(dir / "rounds.csv", csv);
  write_text(dir / "accuracy_curve.tsv", acc_tsv);
  write_text(dir / "loss_curve.tsv", loss_tsv);
}

void report_emit(const RunRecord& record, const std::vector<AttackReportRow>& rows,
                 const std::vector<Tensor>& reconstructions,
                 const std::vector<Tensor>& truths, const std::string& out_dir) {
  if (reconstructions.size() != rows.size() || truths.size() != rows.size())
    throw ContractError("report_emit: rows, reconstructions, and truths must align");
  report_emit(record, out_dir);
  const fs::path dir(out_dir);

  std::string csv = "image_index,label_true,label_inferred,mse,psnr,ssim,lpips,distance\n";
  double sum_mse = 0.0, sum_psnr = 0.0, sum_ssim = 0.0, sum_dist = 0.0;
  for (const AttackReportRow& r : rows) {
    csv += std::to_string(r.image_index) + "," + std::to_string(r.label_true) + "," +
           std::to_string(r.label_inferred) + "," + format_double(r.metrics.mse) + "," +
           format_double(r.metrics.psnr) + "," + format_double(r.metrics.ssim) + "," +
           csv_field(r.lpips) + "," + format_double(r.final_distance) + "\n";
    sum_mse += r.metrics.mse;
    sum_psnr += r.metrics.psnr;
    sum_ssim += r.metrics.ssim;
    sum_dist += r.final_distance;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    csv += "mean,,," + format_double(sum_mse / n) + "," + format_double(sum_psnr / n) + "," +
           format_double(sum_ssim / n) + ",," + format_double(sum_dist / n) + "\n";
  }
  write_text(dir / "attack.csv", csv);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    write_pgm((dir / ("recon_" + std::to_string(i) + ".pgm")).string(), reconstructions[i]);
    write_pgm((dir / ("truth_" + std::to_string(i) + ".pgm")).string(), truths[i]);
  }
}

}  // namespace gslab
