#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "nic/synthdata.hpp"

using namespace nic;

namespace {

// quantize a rendered [0,1] patch to the 8-bit values the WSI assembler writes
std::vector<uint8_t> quantize_patch(const std::vector<double>& patch) {
  std::vector<uint8_t> q(patch.size());
  for (size_t i = 0; i < patch.size(); ++i)
    q[i] = static_cast<uint8_t>(std::lround(std::clamp(patch[i], 0.0, 1.0) * 255.0));
  return q;
}

// extract one grid cell from an assembled image
std::vector<uint8_t> cell_pixels(const Image& img, int r, int c, int p) {
  std::vector<uint8_t> out(static_cast<size_t>(p) * p * 3);
  for (int y = 0; y < p; ++y)
    std::memcpy(out.data() + static_cast<size_t>(y) * p * 3,
                img.row(r * p + y) + static_cast<size_t>(c) * p * 3,
                static_cast<size_t>(p) * 3);
  return out;
}

}  // namespace

TEST_CASE("motif alphabet layout") {
  const auto& a = motif_alphabet();
  REQUIRE(a.size() == 9);
  CHECK(a[0].kind == MotifKind::dots);  // designated proliferative motif
  CHECK(a[0].density > a[1].density);   // denser than the sparse-dot motif
}

TEST_CASE("motif rendering is a pure function of spec, seed and coordinates") {
  const auto& a = motif_alphabet();
  const int p = 32;
  std::vector<double> x(static_cast<size_t>(p) * p * 3), y(x.size());

  for (size_t m = 0; m < a.size(); ++m) {
    render_motif(a[m], 99, 3, 5, p, x.data());
    render_motif(a[m], 99, 3, 5, p, y.data());
    CHECK(x == y);
    for (double v : x) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }

  // different coordinates or seed give different textures
  render_motif(a[0], 99, 3, 5, p, x.data());
  render_motif(a[0], 99, 3, 6, p, y.data());
  CHECK(x != y);
  render_motif(a[0], 100, 3, 5, p, y.data());
  CHECK(x != y);
}

TEST_CASE("patch task generator produces four balanced datasets") {
  const auto ds = gen_patch_tasks(7, 90, 32);
  REQUIRE(ds.size() == 4);
  const int expected_classes[4] = {2, 2, 2, 9};
  for (size_t t = 0; t < 4; ++t) {
    CHECK(ds[t].class_count == expected_classes[t]);
    CHECK(ds[t].patch_size == 32);
    const int per_class = 90 / ds[t].class_count;
    std::vector<int> counts(static_cast<size_t>(ds[t].class_count), 0);
    for (int lab : ds[t].labels) {
      REQUIRE(lab >= 0);
      REQUIRE(lab < ds[t].class_count);
      ++counts[static_cast<size_t>(lab)];
    }
    for (int c : counts) CHECK(c == per_class);
    for (const auto& patch : ds[t].patches) {
      REQUIRE(patch.size() == static_cast<size_t>(32) * 32 * 3);
    }
  }
}

TEST_CASE("patch tasks hold out 20% of each class for validation") {
  const auto ds = gen_patch_tasks(11, 90, 32);
  for (const auto& d : ds) {
    const size_t n = d.labels.size();
    // disjoint and exhaustive split
    std::vector<int> all = d.train_idx;
    all.insert(all.end(), d.val_idx.begin(), d.val_idx.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == n);
    for (size_t i = 0; i < n; ++i) CHECK(all[i] == static_cast<int>(i));

    // per-class validation counts equal floor(per_class / 5)
    const int per_class = static_cast<int>(n) / d.class_count;
    std::vector<int> val_per_class(static_cast<size_t>(d.class_count), 0);
    for (int i : d.val_idx) ++val_per_class[static_cast<size_t>(d.labels[static_cast<size_t>(i)])];
    for (int c : val_per_class) CHECK(c == per_class / 5);
  }
}

TEST_CASE("patch tasks are deterministic in the seed") {
  const auto a = gen_patch_tasks(21, 40, 16);
  const auto b = gen_patch_tasks(21, 40, 16);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].patches == b[t].patches);
    CHECK(a[t].labels == b[t].labels);
    CHECK(a[t].train_idx == b[t].train_idx);
    CHECK(a[t].val_idx == b[t].val_idx);
  }
  const auto c = gen_patch_tasks(22, 40, 16);
  CHECK(a[0].patches != c[0].patches);
}

TEST_CASE("brightness task is separable by a pixel-mean threshold") {
  const auto ds = gen_patch_tasks(5, 200, 32);
  const auto& d = ds[0];
  int correct = 0;
  for (size_t i = 0; i < d.patches.size(); ++i) {
    const double mean =
        std::accumulate(d.patches[i].begin(), d.patches[i].end(), 0.0) /
        static_cast<double>(d.patches[i].size());
    const int pred = mean > 0.5 ? 1 : 0;
    if (pred == d.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(d.patches.size()) > 0.9);
}

TEST_CASE("patch task generator rejects degenerate sizes") {
  CHECK_THROWS(gen_patch_tasks(1, 5, 32));
}

TEST_CASE("mini-WSI coverage extremes") {
  const auto empty = gen_mini_wsi(3, 8, 16, 0.0);
  CHECK(empty.regression_target == 0.0);
  CHECK(empty.binary_class == 0);
  CHECK(empty.latent_risk == doctest::Approx(-1.5));
  for (uint8_t m : empty.region_mask) CHECK(m == 0);

  const auto full = gen_mini_wsi(3, 8, 16, 1.0);
  CHECK(full.regression_target == 1.0);
  CHECK(full.binary_class == 1);
  CHECK(full.latent_risk == doctest::Approx(1.5));
  for (uint8_t m : full.region_mask) CHECK(m == 1);

  CHECK_THROWS(gen_mini_wsi(3, 8, 16, 1.5));
  CHECK_THROWS(gen_mini_wsi(3, 1, 16));
}

TEST_CASE("mini-WSI label arithmetic and mask consistency") {
  for (uint64_t seed : {1ULL, 2ULL, 17ULL, 99ULL}) {
    const auto w = gen_mini_wsi(seed, 12, 16);
    const int cells = w.grid_n * w.grid_n;
    REQUIRE(w.region_mask.size() == static_cast<size_t>(cells));
    const int on = static_cast<int>(
        std::count(w.region_mask.begin(), w.region_mask.end(), uint8_t{1}));
    CHECK(w.regression_target == doctest::Approx(static_cast<double>(on) / cells).epsilon(1e-15));
    CHECK(w.binary_class == (w.regression_target > 0.5 ? 1 : 0));
    CHECK(w.latent_risk == doctest::Approx(3.0 * (w.regression_target - 0.5)).epsilon(1e-15));
    CHECK(w.image.width == w.grid_n * w.patch_size);
    CHECK(w.image.height == w.grid_n * w.patch_size);
  }
}

TEST_CASE("mini-WSI target matches an independent pixel-space recount") {
  // Oracle: re-render the proliferative motif at every grid cell and count the
  // cells whose pixels match exactly. Isolated distractor cells carry the same
  // motif but are excluded from the target, so the pixel count may exceed the
  // connected-region count by at most the distractor budget.
  const auto& a = motif_alphabet();
  for (uint64_t seed : {4ULL, 5ULL, 6ULL, 31ULL}) {
    const int grid_n = 10, p = 16;
    const auto w = gen_mini_wsi(seed, grid_n, p);
    std::vector<double> patch(static_cast<size_t>(p) * p * 3);
    int pixel_count = 0;
    for (int r = 0; r < grid_n; ++r)
      for (int c = 0; c < grid_n; ++c) {
        render_motif(a[0], seed, r, c, p, patch.data());
        const bool is_motif0 = quantize_patch(patch) == cell_pixels(w.image, r, c, p);
        if (is_motif0) ++pixel_count;
        // every cell the mask marks must carry the proliferative motif
        if (w.region_mask[static_cast<size_t>(r) * grid_n + c]) CHECK(is_motif0);
      }
    const int cells = grid_n * grid_n;
    const double recount_upper = static_cast<double>(pixel_count) / cells;
    CHECK(w.regression_target <= recount_upper + 1e-12);
    CHECK(recount_upper - w.regression_target <= 3.0 / cells + 1e-12);  // <= 3 distractors
  }
}

TEST_CASE("mini-WSI region is 4-connected") {
  for (uint64_t seed : {8ULL, 13ULL, 44ULL}) {
    const int grid_n = 12;
    const auto w = gen_mini_wsi(seed, grid_n, 8);
    const int on = static_cast<int>(
        std::count(w.region_mask.begin(), w.region_mask.end(), uint8_t{1}));
    REQUIRE(on >= 2);
    // flood fill from the first marked cell must reach every marked cell
    std::vector<uint8_t> seen(w.region_mask.size(), 0);
    int start = -1;
    for (size_t i = 0; i < w.region_mask.size(); ++i)
      if (w.region_mask[i]) {
        start = static_cast<int>(i);
        break;
      }
    std::vector<int> stack = {start};
    seen[static_cast<size_t>(start)] = 1;
    int reached = 0;
    while (!stack.empty()) {
      const int cell = stack.back();
      stack.pop_back();
      ++reached;
      const int r = cell / grid_n, c = cell % grid_n;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= grid_n || n[1] < 0 || n[1] >= grid_n) continue;
        const size_t j = static_cast<size_t>(n[0]) * grid_n + n[1];
        if (w.region_mask[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(static_cast<int>(j));
        }
      }
    }
    CHECK(reached == on);
  }
}

TEST_CASE("mini-WSI generation is deterministic") {
  const auto a = gen_mini_wsi(77, 8, 16);
  const auto b = gen_mini_wsi(77, 8, 16);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.region_mask == b.region_mask);
  CHECK(a.regression_target == b.regression_target);
  const auto c = gen_mini_wsi(78, 8, 16);
  CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("survival generator censoring semantics") {
  std::vector<double> risks(2000, 0.0);

  const auto all_events = gen_survival(9, risks, 0.0);
  REQUIRE(all_events.size() == risks.size());
  for (const auto& rec : all_events) {
    CHECK(rec.event);
    CHECK(rec.follow_up > 0.0);
  }

  const auto mixed = gen_survival(9, risks, 0.3);
  int censored = 0;
  for (const auto& rec : mixed) {
    CHECK(rec.follow_up >= 0.0);
    if (!rec.event) ++censored;
  }
  const double frac = static_cast<double>(censored) / static_cast<double>(mixed.size());
  CHECK(frac > 0.25);  // binomial(2000, 0.3): +-0.05 is > 4.8 sigma
  CHECK(frac < 0.35);

  CHECK_THROWS(gen_survival(9, risks, -0.1));
  CHECK_THROWS(gen_survival(9, risks, 1.0));

  const auto r1 = gen_survival(123, risks, 0.2);
  const auto r2 = gen_survival(123, risks, 0.2);
  for (size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].follow_up == r2[i].follow_up);
    CHECK(r1[i].event == r2[i].event);
  }
}

TEST_CASE("doubling latent risk stochastically shortens follow-up") {
  std::vector<double> base(10000, 0.5), doubled(10000, 1.0);
  const auto lo = gen_survival(55, base, 0.0);
  const auto hi = gen_survival(55, doubled, 0.0);
  auto mean_t = [](const std::vector<SurvivalRecord>& v) {
    double s = 0.0;
    for (const auto& r : v) s += r.follow_up;
    return s / static_cast<double>(v.size());
  };
  // exp(0.5) hazard ratio halves the expected time up to Monte-Carlo noise;
  // a 10% one-sided margin is ~ 13 sigma away from equality at N = 10^4
  CHECK(mean_t(hi) < 0.9 * mean_t(lo));
}

TEST_CASE("latent risk and death order agree on a generated cohort") {
  // Kendall-style concordance between risk and death time over all
  // comparable event pairs must be well above chance at N = 500
  Rng rng(31);
  std::vector<double> risks(500);
  for (auto& r : risks) r = rng.uniform(-1.5, 1.5);
  const auto recs = gen_survival(66, risks, 0.0);
  long concordant = 0, discordant = 0;
  for (size_t i = 0; i < recs.size(); ++i)
    for (size_t j = i + 1; j < recs.size(); ++j) {
      if (risks[i] == risks[j]) continue;
      const bool higher_risk_died_first = (risks[i] > risks[j]) ==
                                          (recs[i].follow_up < recs[j].follow_up);
      (higher_risk_died_first ? concordant : discordant) += 1;
    }
  const double c_index = static_cast<double>(concordant) /
                         static_cast<double>(concordant + discordant);
  CHECK(c_index > 0.6);
}
