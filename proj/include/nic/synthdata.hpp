#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nic/image.hpp"
#include "nic/survival.hpp"
#include "nic/training.hpp"

namespace nic {

enum class MotifKind { dots, stripes, checker, gradient };

// Texture recipe; rendering is a pure function of (spec, patch coordinates,
// seed) so grids can be generated in any order
struct MotifSpec {
  MotifKind kind = MotifKind::dots;
  double density = 0.5;      // dots per area / stripe duty
  double orientation = 0.0;  // radians; 0 = horizontal structure
  double scale = 8.0;        // feature size in pixels
  std::array<double, 3> base_color{0.8, 0.8, 0.8};
  std::array<double, 3> accent_color{0.3, 0.3, 0.3};
};

// the mini-WSI motif alphabet; index 0 is the designated "proliferative"
// motif and doubles as colorectal class 0
const std::vector<MotifSpec>& motif_alphabet();

void render_motif(const MotifSpec& spec, uint64_t seed, int patch_row, int patch_col,
                  int patch_size, double* out);

// Four balanced patch-classification datasets with class counts (2,2,2,9):
// brightness pair, dot-density pair, stripe-orientation pair, and the
// 9-motif alphabet task. 20% of each class is held out for validation.
std::vector<PatchDataset> gen_patch_tasks(uint64_t seed, int patches_per_task,
                                          int patch_size = 64);

struct MiniWsi {
  Image image;
  int grid_n = 0;                  // grid_n x grid_n patches of patch_size
  int patch_size = 64;
  double regression_target = 0.0;  // fraction covered by the proliferative region
  int binary_class = 0;            // regression_target > 0.5
  double latent_risk = 0.0;        // drives survival sampling
  std::vector<uint8_t> region_mask;  // grid_n*grid_n, 1 = proliferative region
};

// Assembles a grid of motif patches with one connected "proliferative"
// region plus a few isolated distractor cells of the same motif. The
// regression target counts only the connected region, so it is a global
// property of the layout rather than a per-patch statistic.
MiniWsi gen_mini_wsi(uint64_t seed, int grid_n, int patch_size = 64,
                     std::optional<double> coverage_override = std::nullopt);

// t ~ exponential with hazard proportional to exp(latent risk); each subject
// is independently censored with probability censor_rate at a uniform
// fraction of its death time
std::vector<SurvivalRecord> gen_survival(uint64_t seed,
                                         const std::vector<double>& latent_risks,
                                         double censor_rate);

}  // namespace nic
