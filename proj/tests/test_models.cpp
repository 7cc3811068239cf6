#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nic/checkpoint.hpp"
#include "nic/models.hpp"
#include "test_common.hpp"

using namespace nic;
using nic::testing::random_tensor;

namespace {

EncoderSpec tiny_encoder() {
  EncoderSpec spec;
  spec.input_size = 8;
  spec.conv_layers = 2;
  spec.filters = 3;
  spec.code_size = 4;
  return spec;
}

void zero_all(ParamStore& store) {
  for (auto& [name, t] : store.entries()) {
    const double keep = name.find(".running_var") != std::string::npos ? 1.0 : 0.0;
    std::fill(t->data.begin(), t->data.end(), keep);
  }
}

}  // namespace

TEST_CASE("encoder spatial reduction and output shape") {
  EncoderSpec full;  // defaults: 64x64, 4 stride-2 layers
  CHECK(full.final_spatial() == 4);
  EncoderSpec tiny = tiny_encoder();
  CHECK(tiny.final_spatial() == 2);

  ParamStore store;
  Rng rng(51);
  init_encoder_params(store, tiny, rng);
  auto batch = random_tensor({3, 8, 8, 3}, rng, 0.5);
  Tape tape;
  auto code = encoder_forward(tape, tiny, store, batch, Mode::infer);
  CHECK(code->shape == std::vector<int>{3, 4});
  CHECK(code->all_finite());
}

TEST_CASE("parameter inventory matches the layer arithmetic") {
  EncoderSpec tiny = tiny_encoder();
  ParamStore store;
  Rng rng(52);
  init_encoder_params(store, tiny, rng);
  // conv1: 3*3*3*3 kernel + 3 bias; conv2: 3*3*3*3 + 3; bn gamma/beta 2*3 each
  // layer; fc: (2*2*3)x4 + 4
  const int64_t expect = (81 + 3) + (81 + 3) + 2 * (3 + 3) + (12 * 4 + 4);
  CHECK(store.trainable_count() == expect);

  HeadSpec head;
  head.classes = 9;
  init_head_params(store, "head0", head, tiny.code_size, rng);
  const int64_t head_expect = (4 * 256 + 256) + (256 * 9 + 9);
  CHECK(store.trainable_count() == expect + head_expect);
}

TEST_CASE("head produces a probability row per sample") {
  ParamStore store;
  Rng rng(53);
  HeadSpec head;
  head.classes = 5;
  init_head_params(store, "head0", head, 6, rng);
  auto emb = random_tensor({4, 6}, rng);
  Tape tape;
  Rng drop(1);
  auto probs = head_forward(tape, head, store, "head0", emb, Mode::infer, drop);
  CHECK(probs->shape == std::vector<int>{4, 5});
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) {
      const double p = probs->data[static_cast<size_t>(r * 5 + c)];
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("multitask loss with uniform heads equals the uniform-entropy mean") {
  EncoderSpec enc = tiny_encoder();
  ParamStore store;
  Rng rng(54);
  init_encoder_params(store, enc, rng);

  std::vector<HeadSpec> heads;
  std::vector<TaskBatch> batches;
  const auto tasks = canonical_tasks();
  REQUIRE(tasks.size() == 4);
  for (size_t t = 0; t < 4; ++t) {
    HeadSpec h;
    h.classes = tasks[t].class_count;
    heads.push_back(h);
    init_head_params(store, "head" + std::to_string(t), h, enc.code_size, rng);
    TaskBatch b;
    b.patches = random_tensor({2, 8, 8, 3}, rng, 0.5);
    b.labels = {0, 1};
    batches.push_back(b);
  }
  // zero head weights force uniform predictions regardless of the encoder
  for (size_t t = 0; t < 4; ++t) {
    const std::string p = "head" + std::to_string(t);
    for (const char* leaf : {".fc1.weight", ".fc1.bias", ".fc2.weight", ".fc2.bias"}) {
      auto w = store.get(p + leaf);
      std::fill(w->data.begin(), w->data.end(), 0.0);
    }
  }
  Tape tape;
  Rng drop(2);
  auto loss = multitask_loss(tape, enc, store, heads, batches, Mode::infer, drop);
  const double expect = (3.0 * std::log(2.0) + std::log(9.0)) / 4.0;
  CHECK(loss->data[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(1.0692).epsilon(1e-4));
}

TEST_CASE("confident single-task predictions cost nothing") {
  EncoderSpec enc = tiny_encoder();
  ParamStore store;
  Rng rng(55);
  init_encoder_params(store, enc, rng);
  HeadSpec head;
  head.classes = 2;
  init_head_params(store, "head0", head, enc.code_size, rng);

  // zero everything, then bias the output layer hard toward class 1
  for (const char* leaf : {"head0.fc1.weight", "head0.fc1.bias", "head0.fc2.weight"}) {
    auto w = store.get(leaf);
    std::fill(w->data.begin(), w->data.end(), 0.0);
  }
  auto out_bias = store.get("head0.fc2.bias");
  out_bias->data = {-50.0, 50.0};

  TaskBatch b;
  b.patches = random_tensor({2, 8, 8, 3}, rng, 0.5);
  b.labels = {1, 1};
  Tape tape;
  Rng drop(3);
  auto loss = multitask_loss(tape, enc, store, {head}, {b}, Mode::infer, drop);
  CHECK(loss->data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("multitask loss is the mean of per-task cross entropies") {
  EncoderSpec enc = tiny_encoder();
  ParamStore store;
  Rng rng(56);
  init_encoder_params(store, enc, rng);

  std::vector<HeadSpec> heads;
  std::vector<TaskBatch> batches;
  const auto tasks = canonical_tasks();
  for (size_t t = 0; t < 4; ++t) {
    HeadSpec h;
    h.classes = tasks[t].class_count;
    heads.push_back(h);
    init_head_params(store, "head" + std::to_string(t), h, enc.code_size, rng);
    TaskBatch b;
    b.patches = random_tensor({3, 8, 8, 3}, rng, 0.5);
    b.labels = {0, 1, 0};
    batches.push_back(b);
  }
  Tape tape;
  Rng drop(4);
  auto joint = multitask_loss(tape, enc, store, heads, batches, Mode::infer, drop);

  double mean = 0.0;
  for (size_t t = 0; t < 4; ++t) {
    Tape tp;
    Rng d2(4);
    auto code = encoder_forward(tp, enc, store, batches[t].patches, Mode::infer);
    auto probs =
        head_forward(tp, heads[t], store, "head" + std::to_string(t), code, Mode::infer, d2);
    mean += cross_entropy(tp, probs, batches[t].labels)->data[0];
  }
  mean /= 4.0;
  CHECK(joint->data[0] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("multitask gradient averages the single-task gradients") {
  EncoderSpec enc = tiny_encoder();
  ParamStore store;
  Rng rng(57);
  init_encoder_params(store, enc, rng);

  std::vector<HeadSpec> heads;
  std::vector<TaskBatch> batches;
  const auto tasks = canonical_tasks();
  for (size_t t = 0; t < 4; ++t) {
    HeadSpec h;
    h.classes = tasks[t].class_count;
    heads.push_back(h);
    init_head_params(store, "head" + std::to_string(t), h, enc.code_size, rng);
    TaskBatch b;
    b.patches = random_tensor({2, 8, 8, 3}, rng, 0.5);
    b.labels = {1, 0};
    batches.push_back(b);
  }

  store.zero_grad();
  {
    Tape tape;
    Rng drop(5);
    tape.backward(multitask_loss(tape, enc, store, heads, batches, Mode::infer, drop));
  }
  auto kernel = store.get("enc.conv1.kernel");
  const std::vector<double> joint_grad = kernel->grad;

  store.zero_grad();
  for (size_t t = 0; t < 4; ++t) {
    Tape tape;
    Rng drop(5);
    auto code = encoder_forward(tape, enc, store, batches[t].patches, Mode::infer);
    auto probs = head_forward(tape, heads[t], store, "head" + std::to_string(t), code,
                              Mode::infer, drop);
    auto loss = scale(tape, cross_entropy(tape, probs, batches[t].labels), 0.25);
    tape.backward(loss);
  }
  for (size_t i = 0; i < joint_grad.size(); ++i)
    CHECK(std::abs(kernel->grad[i] - joint_grad[i]) <= 1e-10);
}

TEST_CASE("image-level network reduces a 64-cell grid to one unit") {
  WsiCnnSpec spec;
  CHECK(spec.final_spatial() == 1);

  WsiCnnSpec small;
  small.code_size = 3;
  small.filters = 4;
  small.grid_size = 64;
  small.output = WsiOutput::regression;
  ParamStore store;
  Rng rng(58);
  init_wsi_params(store, small, rng);
  auto grid = random_tensor({2, 64, 64, 3}, rng, 0.3);
  Tape tape;
  Rng drop(6);
  auto out = wsi_forward(tape, small, store, grid, Mode::infer, drop);
  CHECK(out->shape == std::vector<int>{2});
  CHECK(out->all_finite());
}

TEST_CASE("zero grid through zeroed parameters yields the output bias") {
  WsiCnnSpec small;
  small.code_size = 2;
  small.filters = 3;
  small.grid_size = 16;
  small.strides = {2, 2, 2, 2, 1, 1, 1, 1};
  small.output = WsiOutput::regression;
  REQUIRE(small.final_spatial() == 1);
  ParamStore store;
  Rng rng(59);
  init_wsi_params(store, small, rng);
  zero_all(store);
  store.get("wsi.out.bias")->data[0] = 0.37;

  auto grid = make_tensor({1, 16, 16, 2});
  Tape tape;
  Rng drop(7);
  auto out = wsi_forward(tape, small, store, grid, Mode::infer, drop);
  CHECK(out->data[0] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("classification output is a probability row") {
  WsiCnnSpec small;
  small.code_size = 2;
  small.filters = 3;
  small.grid_size = 16;
  small.strides = {2, 2, 2, 2, 1, 1, 1, 1};
  small.output = WsiOutput::classification;
  small.classes = 2;
  ParamStore store;
  Rng rng(60);
  init_wsi_params(store, small, rng);
  auto grid = random_tensor({3, 16, 16, 2}, rng, 0.3);
  Tape tape;
  Rng drop(8);
  auto out = wsi_forward(tape, small, store, grid, Mode::infer, drop);
  CHECK(out->shape == std::vector<int>{3, 2});
  for (int r = 0; r < 3; ++r)
    CHECK(out->data[static_cast<size_t>(2 * r)] + out->data[static_cast<size_t>(2 * r + 1)] ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weight-decay set covers conv and dense weights only") {
  WsiCnnSpec small;
  small.code_size = 2;
  small.filters = 3;
  small.grid_size = 16;
  ParamStore store;
  Rng rng(61);
  init_wsi_params(store, small, rng);
  auto weights = wsi_l2_weights(small, store);
  // 8 depth + 8 point kernels, the hidden dense weight, and the output weight
  CHECK(weights.size() == 18);

  double manual = 0.0;
  for (const auto& [name, t] : store.entries()) {
    const bool in_set = name.ends_with(".depth") || name.ends_with(".point") ||
                        name.ends_with(".weight");
    if (!in_set) continue;
    for (double v : t->data) manual += v * v;
  }
  Tape tape;
  auto pen = l2_penalty(tape, weights, 1e-5);
  CHECK(pen->data[0] == doctest::Approx(1e-5 * manual).epsilon(1e-12));
}

TEST_CASE("grid padding preserves content and pads with zeros") {
  Rng rng(62);
  auto grid = random_tensor({5, 7, 3}, rng);
  auto padded = pad_grid(grid, 4);
  CHECK(padded->shape == std::vector<int>{8, 8, 3});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = padded->data[static_cast<size_t>((y * 8 + x) * 3 + c)];
        if (y < 5 && x < 7)
          CHECK(v == grid->data[static_cast<size_t>((y * 7 + x) * 3 + c)]);
        else
          CHECK(v == 0.0);
      }

  auto exact = random_tensor({4, 4, 2}, rng);
  auto same = pad_grid(exact, 4);
  CHECK(same->shape == exact->shape);
  CHECK(same->data == exact->data);

  std::vector<uint8_t> mask = {1, 0, 1, 1, 1, 0};  // 2x3
  auto pm = pad_mask(mask, 2, 3, 4);
  REQUIRE(pm.size() == 16);
  CHECK(pm[0] == 1);
  CHECK(pm[1] == 0);
  CHECK(pm[4] == 1);
  CHECK(pm[3] == 0);   // padded column
  CHECK(pm[12] == 0);  // padded row
}

TEST_CASE("checkpoint round trip preserves every bit and the trainability rule") {
  EncoderSpec enc = tiny_encoder();
  ParamStore store;
  Rng rng(63);
  init_encoder_params(store, enc, rng);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nic_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "enc.nicp").string();
  write_nicp(store, path);
  auto back = read_nicp(path);

  REQUIRE(back.entries().size() == store.entries().size());
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& [name, t] = store.entries()[i];
    const auto& [bname, bt] = back.entries()[i];
    CHECK(bname == name);
    CHECK(bt->shape == t->shape);
    CHECK(bt->data == t->data);  // bit-exact
    CHECK(bt->requires_grad == t->requires_grad);
  }

  CHECK(hex_digest(sha256_params(store)) == hex_digest(sha256_params(back)));
  CHECK(hex_digest(sha256_file(path)).size() == 64);

  // any value change must change the digest
  auto mutated = read_nicp(path);
  mutated.entries()[0].second->data[0] += 1e-9;
  CHECK(hex_digest(sha256_params(mutated)) != hex_digest(sha256_params(store)));

  // corrupt magic
  {
    std::ofstream f(path, std::ios::binary | std::ios::in);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS(read_nicp(path));
  fs::remove_all(dir);
}
