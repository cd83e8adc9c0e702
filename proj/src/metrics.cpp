#include "odcs/metrics.hpp"

#include <cmath>

#include "odcs/errors.hpp"
#include "odcs/text.hpp"

namespace odcs {

namespace {

bool in_class(MaskClass label, MaskClass cls) {
  if (cls == MaskClass::disc) return label == MaskClass::disc || label == MaskClass::cup;
  return label == cls;
}

}  // namespace

double hard_dice(const SegmentationMask& pred, const SegmentationMask& truth, MaskClass cls) {
  if (pred.width != truth.width || pred.height != truth.height) {
    throw DimensionError("hard_dice: mask sizes " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + " and " + std::to_string(truth.width) +
                         "x" + std::to_string(truth.height) + " differ");
  }
  std::int64_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool ip = in_class(pred.labels[i], cls);
    const bool it = in_class(truth.labels[i], cls);
    p += ip;
    t += it;
    both += ip && it;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

double vertical_cdr(const SegmentationMask& mask) {
  int cup_rows = 0, disc_rows = 0;
  for (int y = 0; y < mask.height; ++y) {
    bool has_cup = false, has_disc = false;
    for (int x = 0; x < mask.width && !(has_cup && has_disc); ++x) {
      const MaskClass c = mask.labels[static_cast<std::size_t>(y) * mask.width + x];
      has_cup = has_cup || c == MaskClass::cup;
      has_disc = has_disc || c == MaskClass::cup || c == MaskClass::disc;
    }
    cup_rows += has_cup;
    disc_rows += has_disc;
  }
  if (disc_rows == 0) throw CdrUndefinedError("vertical_cdr: disc region is empty");
  if (cup_rows == 0) return 0.0;
  return static_cast<double>(cup_rows) / disc_rows;
}

std::string EvalReport::to_csv() const {
  std::string out = "id,dice_cup,dice_disc,cdr_pred,cdr_true\n";
  for (const EvalRow& r : rows) {
    out += r.id;
    out += ',';
    out += format_double(r.dice_cup);
    out += ',';
    out += format_double(r.dice_disc);
    out += ',';
    out += r.cdr_defined ? format_double(r.cdr_pred) : std::string();
    out += ',';
    out += r.cdr_defined ? format_double(r.cdr_true) : std::string();
    out += '\n';
  }
  return out;
}

std::string EvalReport::summary() const {
  std::string out = "images: " + std::to_string(rows.size());
  out += "\nmean dice_cup:  " + format_double(dice_cup);
  out += "\nmean dice_disc: " + format_double(dice_disc);
  out += "\ncdr mae:        " + format_double(cdr_mae);
  if (cdr_excluded > 0) {
    out += " (" + std::to_string(cdr_excluded) + " image(s) with undefined CDR excluded)";
  }
  out += '\n';
  return out;
}

EvalReport evaluate(const std::vector<std::pair<std::string, SegmentationMask>>& preds,
                    const std::vector<std::pair<std::string, SegmentationMask>>& truths) {
  if (preds.empty()) throw ContractError("evaluate: no images");
  if (preds.size() != truths.size()) {
    throw ContractError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(truths.size()) + " truths");
  }
  EvalReport report;
  double sum_cup = 0.0, sum_disc = 0.0, sum_mae = 0.0;
  int defined = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].first != truths[i].first) {
      throw ContractError("evaluate: id mismatch at row " + std::to_string(i) + ": '" +
                          preds[i].first + "' vs '" + truths[i].first + "'");
    }
    EvalRow row;
    row.id = preds[i].first;
    row.dice_cup = hard_dice(preds[i].second, truths[i].second, MaskClass::cup);
    row.dice_disc = hard_dice(preds[i].second, truths[i].second, MaskClass::disc);
    try {
      row.cdr_pred = vertical_cdr(preds[i].second);
      row.cdr_true = vertical_cdr(truths[i].second);
      row.cdr_defined = true;
    } catch (const CdrUndefinedError&) {
      row.cdr_defined = false;
      ++report.cdr_excluded;
    }
    sum_cup += row.dice_cup;
    sum_disc += row.dice_disc;
    if (row.cdr_defined) {
      sum_mae += std::abs(row.cdr_pred - row.cdr_true);
      ++defined;
    }
    report.rows.push_back(std::move(row));
  }
  report.dice_cup = sum_cup / static_cast<double>(report.rows.size());
  report.dice_disc = sum_disc / static_cast<double>(report.rows.size());
  report.cdr_mae = defined > 0 ? sum_mae / defined : 0.0;
  return report;
}

}  // namespace odcs
