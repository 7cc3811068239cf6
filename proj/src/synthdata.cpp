#include "nic/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nic {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t h = seed;
  h ^= a * 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 29)) * 0xbf58476d1ce4e5b9ULL;
  h ^= b * 0xc2b2ae3d27d4eb4fULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= c * 0xd6e8feb86659fd93ULL;
  return h ^ (h >> 31);
}

void fill_base(double* out, int p, const std::array<double, 3>& color, Rng& rng) {
  for (int i = 0; i < p * p; ++i)
    for (int c = 0; c < 3; ++c) out[i * 3 + c] = color[c] + rng.uniform(-0.03, 0.03);
}

void draw_disc(double* out, int p, double cx, double cy, double radius,
               const std::array<double, 3>& color) {
  const int y0 = std::max(0, static_cast<int>(cy - radius) - 1);
  const int y1 = std::min(p - 1, static_cast<int>(cy + radius) + 1);
  const int x0 = std::max(0, static_cast<int>(cx - radius) - 1);
  const int x1 = std::min(p - 1, static_cast<int>(cx + radius) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius)
        for (int c = 0; c < 3; ++c) out[(y * p + x) * 3 + c] = color[c];
    }
}

}  // namespace

const std::vector<MotifSpec>& motif_alphabet() {
  static const std::vector<MotifSpec> alphabet = [] {
    std::vector<MotifSpec> m(9);
    // 0: proliferative — dense magenta dots
    m[0] = {MotifKind::dots, 1.6, 0.0, 5.0, {0.95, 0.85, 0.90}, {0.72, 0.12, 0.52}};
    // 1: sparse cyan dots
    m[1] = {MotifKind::dots, 0.35, 0.0, 7.0, {0.90, 0.95, 0.95}, {0.10, 0.55, 0.68}};
    // 2/3: green stripes, horizontal / vertical
    m[2] = {MotifKind::stripes, 0.5, 0.0, 8.0, {0.92, 0.95, 0.88}, {0.25, 0.55, 0.30}};
    m[3] = {MotifKind::stripes, 0.5, 1.5707963267948966, 8.0, {0.92, 0.95, 0.88},
            {0.25, 0.55, 0.30}};
    // 4/5: checkerboards, small blue / large red
    m[4] = {MotifKind::checker, 0.5, 0.0, 6.0, {0.93, 0.93, 0.98}, {0.30, 0.35, 0.70}};
    m[5] = {MotifKind::checker, 0.5, 0.0, 14.0, {0.98, 0.92, 0.92}, {0.72, 0.28, 0.25}};
    // 6/7: gradients, horizontal / vertical
    m[6] = {MotifKind::gradient, 0.5, 0.0, 8.0, {0.95, 0.90, 0.80}, {0.55, 0.45, 0.30}};
    m[7] = {MotifKind::gradient, 0.5, 1.5707963267948966, 8.0, {0.80, 0.88, 0.95},
            {0.30, 0.45, 0.58}};
    // 8: plain beige
    m[8] = {MotifKind::dots, 0.0, 0.0, 8.0, {0.88, 0.84, 0.78}, {0.88, 0.84, 0.78}};
    return m;
  }();
  return alphabet;
}

void render_motif(const MotifSpec& spec, uint64_t seed, int patch_row, int patch_col,
                  int patch_size, double* out) {
  const int p = patch_size;
  Rng rng(mix_seed(seed, static_cast<uint64_t>(patch_row) + 1,
                   static_cast<uint64_t>(patch_col) + 1));
  fill_base(out, p, spec.base_color, rng);
  switch (spec.kind) {
    case MotifKind::dots: {
      const double cell_area = static_cast<double>(p) * p;
      const int n = static_cast<int>(spec.density * cell_area / (spec.scale * spec.scale));
      for (int i = 0; i < n; ++i)
        draw_disc(out, p, rng.uniform(0.0, p), rng.uniform(0.0, p), spec.scale * 0.45,
                  spec.accent_color);
      break;
    }
    case MotifKind::stripes: {
      const double phase = rng.uniform(0.0, 2.0 * spec.scale);
      const double cs = std::cos(spec.orientation), sn = std::sin(spec.orientation);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const double u = x * sn + y * cs + phase;
          if (std::fmod(u, 2.0 * spec.scale) < 2.0 * spec.scale * spec.density)
            for (int c = 0; c < 3; ++c) out[(y * p + x) * 3 + c] = spec.accent_color[c];
        }
      break;
    }
    case MotifKind::checker: {
      const int off = static_cast<int>(rng.uniform_int(2));
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const int cell = (static_cast<int>(x / spec.scale) +
                            static_cast<int>(y / spec.scale) + off) % 2;
          if (cell)
            for (int c = 0; c < 3; ++c) out[(y * p + x) * 3 + c] = spec.accent_color[c];
        }
      break;
    }
    case MotifKind::gradient: {
      const double cs = std::cos(spec.orientation), sn = std::sin(spec.orientation);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const double t = (x * sn + y * cs) / p;
          for (int c = 0; c < 3; ++c)
            out[(y * p + x) * 3 + c] =
                spec.base_color[c] * (1.0 - t) + spec.accent_color[c] * t +
                out[(y * p + x) * 3 + c] - spec.base_color[c];  // keep the base noise
        }
      break;
    }
  }
  for (int i = 0; i < p * p * 3; ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
}

namespace {

std::vector<double> quantized(const std::vector<double>& patch) {
  std::vector<double> out(patch.size());
  for (size_t i = 0; i < patch.size(); ++i)
    out[i] = std::round(std::clamp(patch[i], 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

MotifSpec jitter_motif(MotifSpec spec, Rng& rng) {
  spec.density *= rng.uniform(0.85, 1.15);
  for (auto& c : spec.base_color) c = std::clamp(c + rng.uniform(-0.04, 0.04), 0.0, 1.0);
  for (auto& c : spec.accent_color) c = std::clamp(c + rng.uniform(-0.04, 0.04), 0.0, 1.0);
  return spec;
}

}  // namespace

std::vector<PatchDataset> gen_patch_tasks(uint64_t seed, int patches_per_task,
                                          int patch_size) {
  if (patches_per_task < 10) throw std::invalid_argument("gen_patch_tasks: too few patches");
  const auto& alphabet = motif_alphabet();
  const auto tasks = canonical_tasks();
  std::vector<PatchDataset> out;

  for (size_t t = 0; t < tasks.size(); ++t) {
    PatchDataset ds;
    ds.name = tasks[t].name;
    ds.patch_size = patch_size;
    ds.class_count = tasks[t].class_count;
    const int per_class = patches_per_task / ds.class_count;

    for (int k = 0; k < ds.class_count; ++k) {
      for (int i = 0; i < per_class; ++i) {
        Rng rng(mix_seed(seed, t + 1, static_cast<uint64_t>(k) + 1,
                         static_cast<uint64_t>(i) + 1));
        MotifSpec spec;
        switch (t) {
          case 0:  // lymph: brightness pair, pixel-mean separable
            spec = alphabet[8];
            {
              const double base = k == 0 ? 0.35 : 0.65;
              spec.base_color = {base, base * 0.95, base * 0.9};
              spec.accent_color = spec.base_color;
            }
            break;
          case 1:  // mitosis: dot-density pair on a shared background
            spec = alphabet[0];
            spec.accent_color = {0.35, 0.15, 0.35};
            spec.base_color = {0.85, 0.80, 0.85};
            spec.density = k == 0 ? 0.25 : 1.4;
            break;
          case 2:  // prostate: stripe orientation pair
            spec = alphabet[k == 0 ? 2 : 3];
            break;
          default:  // colorectal: the full 9-motif alphabet
            spec = alphabet[static_cast<size_t>(k)];
            break;
        }
        spec = jitter_motif(spec, rng);
        std::vector<double> patch(static_cast<size_t>(patch_size) * patch_size * 3);
        render_motif(spec, rng.next_u64(), 0, 0, patch_size, patch.data());
        ds.patches.push_back(quantized(patch));
        ds.labels.push_back(k);
      }
    }

    // 20% per class held out for validation, seeded shuffle
    Rng split_rng(mix_seed(seed, t + 1, 0xabcdef));
    for (int k = 0; k < ds.class_count; ++k) {
      std::vector<int> idx;
      for (size_t i = 0; i < ds.labels.size(); ++i)
        if (ds.labels[i] == k) idx.push_back(static_cast<int>(i));
      split_rng.shuffle(idx);
      const size_t val_count = idx.size() / 5;
      for (size_t i = 0; i < idx.size(); ++i)
        (i < val_count ? ds.val_idx : ds.train_idx).push_back(idx[i]);
    }
    std::sort(ds.train_idx.begin(), ds.train_idx.end());
    std::sort(ds.val_idx.begin(), ds.val_idx.end());
    out.push_back(std::move(ds));
  }
  return out;
}

MiniWsi gen_mini_wsi(uint64_t seed, int grid_n, int patch_size,
                     std::optional<double> coverage_override) {
  if (grid_n < 2) throw std::invalid_argument("gen_mini_wsi: grid too small");
  const int cells = grid_n * grid_n;
  Rng rng(mix_seed(seed, 0x6d77, 0));

  // connected proliferative region grown cell by cell
  const double coverage =
      coverage_override ? *coverage_override : rng.uniform(0.05, 0.90);
  if (coverage < 0.0 || coverage > 1.0)
    throw std::invalid_argument("gen_mini_wsi: coverage out of range");
  int want = static_cast<int>(std::lround(coverage * cells));
  if (!coverage_override) want = std::max(want, 2);

  std::vector<uint8_t> region(static_cast<size_t>(cells), 0);
  if (want > 0) {
    std::vector<int> frontier;
    auto try_add_frontier = [&](int r, int c) {
      if (r < 0 || r >= grid_n || c < 0 || c >= grid_n) return;
      if (!region[static_cast<size_t>(r) * grid_n + c]) frontier.push_back(r * grid_n + c);
    };
    const int sr = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(grid_n)));
    const int sc = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(grid_n)));
    region[static_cast<size_t>(sr) * grid_n + sc] = 1;
    try_add_frontier(sr - 1, sc);
    try_add_frontier(sr + 1, sc);
    try_add_frontier(sr, sc - 1);
    try_add_frontier(sr, sc + 1);
    int have = 1;
    while (have < want && !frontier.empty()) {
      const size_t pick = rng.uniform_int(frontier.size());
      const int cell = frontier[pick];
      frontier[pick] = frontier.back();
      frontier.pop_back();
      if (region[static_cast<size_t>(cell)]) continue;
      region[static_cast<size_t>(cell)] = 1;
      ++have;
      try_add_frontier(cell / grid_n - 1, cell % grid_n);
      try_add_frontier(cell / grid_n + 1, cell % grid_n);
      try_add_frontier(cell / grid_n, cell % grid_n - 1);
      try_add_frontier(cell / grid_n, cell % grid_n + 1);
    }
    want = have;
  }

  // isolated distractor cells carrying the same motif; they do not count
  // toward the target, which makes it a property of the connected layout
  std::vector<uint8_t> proliferative = region;
  auto clear_of_proliferative = [&](int r, int c) {
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= grid_n || cc < 0 || cc >= grid_n) continue;
        if (proliferative[static_cast<size_t>(rr) * grid_n + cc]) return false;
      }
    return true;
  };
  if (want > 0 && want < cells) {
    const int distractors = static_cast<int>(rng.uniform_int(4));
    for (int d = 0; d < distractors; ++d) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const int r = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(grid_n)));
        const int c = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(grid_n)));
        if (clear_of_proliferative(r, c)) {
          proliferative[static_cast<size_t>(r) * grid_n + c] = 1;
          break;
        }
      }
    }
  }

  MiniWsi wsi;
  wsi.grid_n = grid_n;
  wsi.patch_size = patch_size;
  wsi.region_mask = region;
  wsi.regression_target = static_cast<double>(want) / cells;
  wsi.binary_class = wsi.regression_target > 0.5 ? 1 : 0;
  wsi.latent_risk = 3.0 * (wsi.regression_target - 0.5);

  const auto& alphabet = motif_alphabet();
  static const int background_ids[] = {2, 4, 5, 6, 7, 8};
  const int p = patch_size;
  wsi.image.width = grid_n * p;
  wsi.image.height = grid_n * p;
  wsi.image.pixels.resize(static_cast<size_t>(wsi.image.width) * wsi.image.height * 3);

  std::vector<double> patch(static_cast<size_t>(p) * p * 3);
  for (int r = 0; r < grid_n; ++r)
    for (int c = 0; c < grid_n; ++c) {
      int motif_id;
      if (proliferative[static_cast<size_t>(r) * grid_n + c]) {
        motif_id = 0;
      } else {
        Rng cell_rng(mix_seed(seed, 0xb6, static_cast<uint64_t>(r) + 1,
                              static_cast<uint64_t>(c) + 1));
        motif_id = background_ids[cell_rng.uniform_int(6)];
      }
      render_motif(alphabet[static_cast<size_t>(motif_id)], seed, r, c, p, patch.data());
      for (int y = 0; y < p; ++y) {
        uint8_t* row = wsi.image.row(r * p + y) + static_cast<size_t>(c) * p * 3;
        for (int i = 0; i < p * 3; ++i)
          row[i] = static_cast<uint8_t>(
              std::lround(std::clamp(patch[static_cast<size_t>(y) * p * 3 + i], 0.0, 1.0) *
                          255.0));
      }
    }
  return wsi;
}

std::vector<SurvivalRecord> gen_survival(uint64_t seed,
                                         const std::vector<double>& latent_risks,
                                         double censor_rate) {
  if (censor_rate < 0.0 || censor_rate >= 1.0)
    throw std::invalid_argument("gen_survival: censor_rate must be in [0,1)");
  constexpr double kBaseHazard = 0.02;  // per month
  Rng rng(mix_seed(seed, 0x5c, 0));
  std::vector<SurvivalRecord> out;
  out.reserve(latent_risks.size());
  for (double risk : latent_risks) {
    const double u = std::max(rng.uniform(), 1e-300);
    const double death = -std::log(u) / (kBaseHazard * std::exp(risk));
    SurvivalRecord rec;
    if (rng.uniform() < censor_rate) {
      rec.event = false;
      rec.follow_up = death * rng.uniform();
    } else {
      rec.event = true;
      rec.follow_up = death;
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace nic
