#include "psyprobe/deepception.hpp"

#include <algorithm>
#include <atomic>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "psyprobe/error.hpp"
#include "psyprobe/parallel.hpp"

namespace psyprobe {
namespace {

/// Charges the per-attack allowance before forwarding to the oracle.
class MeteredOracle {
 public:
  MeteredOracle(Oracle& oracle, std::uint64_t allowance) : oracle_(oracle), allowance_(allowance) {}

  ClassProbabilities classify(const Image& img) {
    allowance_.consume();
    ClassProbabilities probs = oracle_.classify(img);
    ++answered_;
    return probs;
  }
  std::uint64_t answered() const { return answered_.load(); }

 private:
  Oracle& oracle_;
  OracleBudget allowance_;
  std::atomic<std::uint64_t> answered_{0};
};

double normalized_std(const Patch& p) {
  return population_std(normalize_patch(to_channels(p.image, 1)).data());
}

}  // namespace

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kFooled: return "fooled";
    case StopReason::kNoImprovement: return "no_improvement";
    case StopReason::kMaxDecoys: return "max_decoys";
    case StopReason::kBudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

Decoy select_decoy(std::span<const Patch> pool, double tau) {
  if (pool.empty()) throw EmptyError("decoy pool is empty");
  std::size_t best = 0;
  double best_score = pool[0].probability * normalized_std(pool[0]);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double score = pool[i].probability * normalized_std(pool[i]);
    if (score > best_score || (score == best_score && pool[i].id() < pool[best].id())) {
      best = i;
      best_score = score;
    }
  }
  return make_decoy(to_channels(pool[best].image, 1), tau, pool[best].id());
}

Decoy fit_decoy(const Decoy& decoy, int w, int h) {
  if (decoy.pixels.width() == w && decoy.pixels.height() == h) return decoy;
  Decoy fitted = decoy;
  fitted.pixels = resize(decoy.pixels, w, h);
  fitted.std = population_std(fitted.pixels.data());
  return fitted;
}

AttackResult attack(const Image& target, const Decoy& decoy, const AttackConfig& cfg, Oracle& oracle) {
  const InputDims dims = oracle.input_dims();
  if (target.width() != dims.width || target.height() != dims.height ||
      target.channels() != dims.channels) {
    throw InputError(fmt::format("target {}x{}x{} does not match oracle input {}x{}x{}", target.width(),
                                 target.height(), target.channels(), dims.width, dims.height,
                                 dims.channels));
  }
  const Grid grid = Grid::covering(target.width(), target.height(), cfg.grid_cols, cfg.grid_rows);
  const auto cells = grid.cells();
  const int max_decoys = cfg.max_decoys <= 0 ? grid.cell_count() : cfg.max_decoys;
  if (max_decoys > grid.cell_count()) {
    throw ParameterError(fmt::format("max_decoys {} exceeds the {} grid cells", max_decoys,
                                     grid.cell_count()));
  }
  const Decoy fitted = fit_decoy(decoy, grid.cell_w, grid.cell_h);

  MeteredOracle metered(oracle, cfg.query_budget);
  AttackResult result;
  const ClassProbabilities clean = metered.classify(target);
  result.target_class = clean.top1();
  result.p_target_initial = clean.at(result.target_class);
  result.p_target_final = result.p_target_initial;
  result.perturbed_image = target;

  std::vector<bool> occupied(cells.size(), false);
  double p_current = result.p_target_initial;
  result.stop_reason = StopReason::kMaxDecoys;
  try {
    while (result.decoys_used < max_decoys) {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!occupied[i]) free.push_back(i);
      }
      std::vector<Image> candidates(free.size());
      const auto p_t = parallel_map(free.size(), cfg.jobs, [&](std::size_t k) {
        candidates[k] = apply_decoy(result.perturbed_image, fitted, cells[free[k]]);
        return metered.classify(candidates[k]).at(result.target_class);
      });
      std::size_t pick = 0;
      for (std::size_t k = 1; k < p_t.size(); ++k) {
        if (p_t[k] < p_t[pick]) pick = k;
      }
      if (!(p_t[pick] < p_current)) {
        result.stop_reason = StopReason::kNoImprovement;
        break;
      }
      const std::size_t cell = free[pick];
      occupied[cell] = true;
      result.perturbed_image = std::move(candidates[pick]);
      result.placements.push_back(cells[cell]);
      result.placement_cells.push_back(static_cast<int>(cell));
      result.p_target_trace.push_back(p_t[pick]);
      result.p_target_final = p_current = p_t[pick];
      ++result.decoys_used;

      const ClassProbabilities check = metered.classify(result.perturbed_image);
      if (check.overtaken(result.target_class)) {
        result.fooled = true;
        result.adversarial_class = check.top1();
        result.stop_reason = StopReason::kFooled;
        break;
      }
    }
  } catch (const BudgetError& e) {
    spdlog::debug("attack stopped: {}", e.what());
    result.stop_reason = StopReason::kBudgetExhausted;
  }
  result.queries_consumed = metered.answered();
  return result;
}

std::map<int, double> initial_probability_by_fool_count(std::span<const int> fool_counts,
                                                        std::span<const double> p_initial) {
  if (fool_counts.size() != p_initial.size()) {
    throw DimensionError("fool counts and initial probabilities differ in length");
  }
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < fool_counts.size(); ++i) {
    auto& [sum, n] = acc[fool_counts[i]];
    sum += p_initial[i];
    ++n;
  }
  std::map<int, double> out;
  for (const auto& [count, sn] : acc) out[count] = sn.first / sn.second;
  return out;
}

CampaignReport fooling_campaign(std::span<const SourceImage> images, const Decoy& decoy,
                                const AttackConfig& cfg, Oracle& oracle) {
  if (images.empty()) throw EmptyError("campaign needs at least one image");
  CampaignReport report;
  report.oracle_id = oracle.id();
  report.config = cfg;
  report.decoy_id = decoy.source_patch_id;
  report.decoy_std = decoy.std;

  AttackConfig per_image = cfg;
  per_image.jobs = 1;
  report.rows = parallel_map(images.size(), cfg.jobs, [&](std::size_t i) {
    CampaignRow row;
    row.image_id = images[i].id;
    try {
      row.result = attack(images[i].image, decoy, per_image, oracle);
    } catch (const Error& e) {
      row.error = e.what();
    }
    return row;
  });

  CampaignAggregate& agg = report.aggregate;
  agg.total = static_cast<int>(report.rows.size());
  const int cells = cfg.grid_cols * cfg.grid_rows;
  const int budget = cfg.max_decoys <= 0 ? cells : cfg.max_decoys;
  agg.fooled_by_decoy_budget.assign(static_cast<std::size_t>(std::max(budget, 0)), 0);
  std::vector<int> counts;
  std::vector<double> p_init;
  for (const auto& row : report.rows) {
    if (!row.result) {
      ++agg.failures;
      continue;
    }
    const AttackResult& r = *row.result;
    if (r.budget_exhausted()) ++agg.budget_exhausted;
    counts.push_back(r.fooled ? 1 : 0);
    p_init.push_back(r.p_target_initial);
    if (!r.fooled) continue;
    ++agg.fooled;
    if (r.decoys_used == 1) ++agg.single_placement_fooled;
    for (int k = r.decoys_used; k <= budget; ++k) ++agg.fooled_by_decoy_budget[k - 1];
  }
  agg.fooling_ratio = static_cast<double>(agg.fooled) / agg.total;
  agg.initial_probability_by_fool_count = initial_probability_by_fool_count(counts, p_init);
  return report;
}

std::vector<TransparencyRow> transparency_study(std::span<const SourceImage> images,
                                                std::span<const Patch> decoy_pool,
                                                std::span<const double> taus,
                                                const AttackConfig& cfg, Oracle& oracle) {
  if (taus.empty()) throw EmptyError("transparency study needs at least one tau");
  std::vector<TransparencyRow> rows;
  for (double tau : taus) {
    AttackConfig run = cfg;
    run.tau = tau;
    const Decoy decoy = select_decoy(decoy_pool, tau);
    const CampaignReport report = fooling_campaign(images, decoy, run, oracle);
    rows.push_back({tau, decoy.source_patch_id, report.aggregate.fooled, report.aggregate.total,
                    report.aggregate.fooling_ratio});
  }
  return rows;
}

Decoy gaussian_baseline_decoy(int cell_w, int cell_h, double std_255, double tau, std::uint64_t seed) {
  return make_noise_decoy(gaussian_noise_image(cell_w, cell_h, std_255, seed), tau,
                          fmt::format("gaussian-std{}", std_255));
}

DecoyStudy decoy_std_study(std::span<const SourceImage> images, std::span<const Patch> decoy_pool,
                           const AttackConfig& cfg, Oracle& oracle,
                           const std::vector<double>& gaussian_stds_255, std::uint64_t noise_seed) {
  if (decoy_pool.empty()) throw EmptyError("decoy pool is empty");
  if (images.empty()) throw EmptyError("decoy study needs at least one image");
  DecoyStudy study;
  study.fool_counts.assign(images.size(), 0);
  std::vector<double> p_init(images.size(), 0.0);

  for (const Patch& patch : decoy_pool) {
    const Decoy decoy = make_decoy(to_channels(patch.image, 1), cfg.tau, patch.id());
    const CampaignReport report = fooling_campaign(images, decoy, cfg, oracle);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& r = report.rows[i].result;
      if (!r) continue;
      p_init[i] = r->p_target_initial;
      if (r->fooled) ++study.fool_counts[i];
    }
    study.rows.push_back({decoy.source_patch_id, decoy.std, report.aggregate.fooled, false});
  }

  const Grid grid = Grid::covering(images[0].image.width(), images[0].image.height(), cfg.grid_cols,
                                   cfg.grid_rows);
  for (double std_255 : gaussian_stds_255) {
    const Decoy noise = gaussian_baseline_decoy(grid.cell_w, grid.cell_h, std_255, cfg.tau, noise_seed);
    const CampaignReport report = fooling_campaign(images, noise, cfg, oracle);
    study.baseline_rows.push_back({noise.source_patch_id, noise.std, report.aggregate.fooled, true});
  }

  auto by_std = [](const DecoyStudyRow& a, const DecoyStudyRow& b) {
    return a.std != b.std ? a.std < b.std : a.decoy_id < b.decoy_id;
  };
  std::sort(study.rows.begin(), study.rows.end(), by_std);
  std::sort(study.baseline_rows.begin(), study.baseline_rows.end(), by_std);
  study.initial_probability_by_fool_count = initial_probability_by_fool_count(study.fool_counts, p_init);
  return study;
}

}  // namespace psyprobe
