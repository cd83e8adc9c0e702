#pragma once

#include <string>
#include <utility>
#include <vector>

#include "odcs/image.hpp"

namespace odcs {

/// 2|P∩T| / (|P|+|T|) over the binary indicator of cls. The disc indicator
/// includes cup pixels (anatomically the disc contains the cup). Returns 1.0
/// when both indicators are empty.
double hard_dice(const SegmentationMask& pred, const SegmentationMask& truth, MaskClass cls);

/// Rows containing at least one cup pixel over rows containing at least one
/// disc-or-cup pixel. Returns 0 for an empty cup; throws CdrUndefinedError
/// when the disc region is empty.
double vertical_cdr(const SegmentationMask& mask);

struct EvalRow {
  std::string id;
  double dice_cup = 0.0;
  double dice_disc = 0.0;
  double cdr_pred = 0.0;
  double cdr_true = 0.0;
  bool cdr_defined = false;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double dice_cup = 0.0;   // mean over rows
  double dice_disc = 0.0;  // mean over rows
  double cdr_mae = 0.0;    // mean |cdr_pred - cdr_true| over defined rows
  int cdr_excluded = 0;    // rows with undefined CDR

  std::string to_csv() const;
  std::string summary() const;
};

/// Per-image metrics plus aggregate means. Ids must align pairwise; images
/// whose CDR is undefined on either side are excluded from the MAE and
/// counted. Throws ContractError on empty or misaligned inputs.
EvalReport evaluate(const std::vector<std::pair<std::string, SegmentationMask>>& preds,
                    const std::vector<std::pair<std::string, SegmentationMask>>& truths);

}  // namespace odcs
