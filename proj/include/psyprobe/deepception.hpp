#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psyprobe/image.hpp"
#include "psyprobe/oracle.hpp"
#include "psyprobe/probing.hpp"

namespace psyprobe {

struct AttackConfig {
  double tau = 4.0;
  int grid_cols = 4;
  int grid_rows = 4;
  /// 0 means one decoy per grid cell.
  int max_decoys = 0;
  /// Per-target query allowance, on top of the oracle's own budget.
  std::uint64_t query_budget = OracleBudget::kUnlimited;
  /// Workers for candidate evaluation inside one attack, or across images in
  /// a campaign.
  int jobs = 1;
};

enum class StopReason {
  kFooled,
  kNoImprovement,
  kMaxDecoys,
  kBudgetExhausted,
};

std::string_view to_string(StopReason reason);

struct AttackResult {
  bool fooled = false;
  int decoys_used = 0;
  std::vector<Rect> placements;
  std::vector<int> placement_cells;
  std::string target_class;
  double p_target_initial = 0.0;
  double p_target_final = 0.0;
  /// P_t after each accepted placement; strictly decreasing.
  std::vector<double> p_target_trace;
  std::optional<std::string> adversarial_class;
  std::uint64_t queries_consumed = 0;
  Image perturbed_image;
  StopReason stop_reason = StopReason::kNoImprovement;
  bool budget_exhausted() const { return stop_reason == StopReason::kBudgetExhausted; }
};

/// Highest probability x std(normalized patch); ties go to the smallest patch id.
Decoy select_decoy(std::span<const Patch> pool, double tau);

/// Decoy resampled to w x h; values stay within [0, 1/tau].
Decoy fit_decoy(const Decoy& decoy, int w, int h);

/// Greedy decoy insertion that minimizes the probability of the clean top-1
/// class and stops as soon as another class overtakes it.
///
/// Each step applies the decoy to every free cell, keeps the cell with the
/// lowest target probability (row-major on ties) if it strictly lowers the
/// current value, and re-classifies the accepted image to test for fooling.
/// Query count = 1 + candidates evaluated + accepted placements.
AttackResult attack(const Image& target, const Decoy& decoy, const AttackConfig& cfg, Oracle& oracle);

struct CampaignRow {
  std::string image_id;
  std::optional<AttackResult> result;
  std::string error;  // set when the attack failed for this image
};

struct CampaignAggregate {
  int total = 0;
  int fooled = 0;
  int failures = 0;
  int budget_exhausted = 0;
  double fooling_ratio = 0.0;
  /// Images fooled by their first placement.
  int single_placement_fooled = 0;
  /// Entry k-1: images fooled with at most k decoys.
  std::vector<int> fooled_by_decoy_budget;
  /// Mean initial target probability keyed by the number of foolings.
  std::map<int, double> initial_probability_by_fool_count;
};

struct CampaignReport {
  std::string oracle_id;
  AttackConfig config;
  std::string decoy_id;
  double decoy_std = 0.0;
  std::vector<CampaignRow> rows;
  CampaignAggregate aggregate;
};

/// Attacks every image; per-image errors become failure rows.
CampaignReport fooling_campaign(std::span<const SourceImage> images, const Decoy& decoy,
                                const AttackConfig& cfg, Oracle& oracle);

/// Mean of p_initial grouped by fool count.
std::map<int, double> initial_probability_by_fool_count(std::span<const int> fool_counts,
                                                        std::span<const double> p_initial);

struct TransparencyRow {
  double tau = 0.0;
  std::string decoy_id;
  int fooled = 0;
  int total = 0;
  double fooling_ratio = 0.0;
};

/// One campaign per tau; the decoy is re-selected and rebuilt for each tau.
std::vector<TransparencyRow> transparency_study(std::span<const SourceImage> images,
                                                std::span<const Patch> decoy_pool,
                                                std::span<const double> taus,
                                                const AttackConfig& cfg, Oracle& oracle);

struct DecoyStudyRow {
  std::string decoy_id;
  double std = 0.0;
  int fooled_count = 0;
  bool baseline = false;
};

struct DecoyStudy {
  std::vector<DecoyStudyRow> rows;           // sorted by std ascending
  std::vector<DecoyStudyRow> baseline_rows;  // Gaussian noise, sorted by std
  /// Per image, how many pool decoys fooled it.
  std::vector<int> fool_counts;
  std::map<int, double> initial_probability_by_fool_count;
};

/// Gaussian-noise decoy of the grid cell size.
Decoy gaussian_baseline_decoy(int cell_w, int cell_h, double std_255, double tau, std::uint64_t seed);

/// Campaign per pool decoy at cfg.tau, plus Gaussian baselines.
DecoyStudy decoy_std_study(std::span<const SourceImage> images, std::span<const Patch> decoy_pool,
                           const AttackConfig& cfg, Oracle& oracle,
                           const std::vector<double>& gaussian_stds_255 = {100.0, 150.0},
                           std::uint64_t noise_seed = 0);

}  // namespace psyprobe
