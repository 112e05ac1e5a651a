#pragma once

#include <string>
#include <vector>

#include "gslab/fl.hpp"
#include "gslab/metrics.hpp"
#include "gslab/tensor.hpp"

namespace gslab {

// One scored reconstruction. `lpips` stays empty: the column is reserved but
// computing it needs a pretrained perceptual network this library does not
// ship.
struct AttackReportRow {
  int image_index = 0;
  int label_true = -1;
  int label_inferred = -1;
  MetricsBundle metrics;
  double final_distance = 0.0;
  std::string lpips;
};

// RFC-4180 field encoding: quotes the field when it contains a comma, quote,
// or newline, doubling embedded quotes.
std::string csv_field(const std::string& raw);

// Formats +/-infinity as "inf"/"-inf" for CSV and JSON string cells.
std::string format_double(double v);

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const std::string& text);

// Writes record.json, rounds.csv, accuracy_curve.tsv and loss_curve.tsv
// under out_dir (created if missing).
void report_emit(const RunRecord& record, const std::string& out_dir);

// Additionally writes attack.csv (one row per reconstruction plus a mean
// row) and PGM image pairs recon_<i>.pgm / truth_<i>.pgm.
void report_emit(const RunRecord& record, const std::vector<AttackReportRow>& rows,
                 const std::vector<Tensor>& reconstructions,
                 const std::vector<Tensor>& truths, const std::string& out_dir);

// 8-bit binary PGM (P5, maxval 255); pixels are clamped to [0,1] then scaled.
// Rank-1 tensors must have a perfect-square pixel count.
void write_pgm(const std::string& path, const Tensor& image);

}  // namespace gslab
