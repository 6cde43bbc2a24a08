#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "structmark/features.hpp"
#include "structmark/layers.hpp"
#include "structmark/struct_io.hpp"

using namespace structmark;
using net::Adam;
using net::AdamConfig;
using net::FeaturePlan;
using net::LayerMode;
using net::Parameter;
using net::Tape;
using net::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double sd = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = sd * rng.normal();
  return t;
}

const LayerMode kTrain{true, nullptr};

}  // namespace

TEST_CASE("linear identity forward") {
  Rng rng(1);
  net::LinearLayer lin("id", 3, 3, rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) lin.W.value.at(i, j) = i == j ? 1.0 : 0.0;
  std::fill(lin.b.value.data.begin(), lin.b.value.data.end(), 0.0);

  Tape t;
  const Tensor x = random_tensor({4, 3}, 7);
  const auto y = lin.forward(t, t.constant(x), kTrain);
  for (size_t i = 0; i < x.data.size(); ++i)
    CHECK(t.val(y).data[i] == doctest::Approx(x.data[i]).epsilon(1e-15));
}

TEST_CASE("attention with a single token reduces to the value path") {
  Rng rng(3);
  net::AttentionLayer attn("a", 8, 2, 4, rng);
  const Tensor x = random_tensor({1, 8}, 11);

  Tape t;
  const auto out = attn.forward(t, t.constant(x), kTrain);

  // softmax over one logit is 1, so out = o(v(x)) regardless of q/k/bias
  Tape t2;
  const auto vproj = attn.v.forward(t2, t2.constant(x), kTrain);
  const auto direct = attn.o.forward(t2, vproj, kTrain);
  for (int j = 0; j < 8; ++j)
    CHECK(t.val(out).at(0, j) == doctest::Approx(t2.val(direct).at(0, j)).epsilon(1e-14));
}

TEST_CASE("two-layer MLP matches hand arithmetic") {
  // hand case: x = (0.5, -1), W1 = [[1, 2], [0, -1]], b1 = (0.1, 0.2),
  // tanh, W2 = [[1, 1]], b2 = (-0.3)
  Rng rng(5);
  net::LinearLayer l1("l1", 2, 2, rng), l2("l2", 2, 1, rng);
  l1.W.value.data = {1.0, 2.0, 0.0, -1.0};
  l1.b.value.data = {0.1, 0.2};
  l2.W.value.data = {1.0, 1.0};
  l2.b.value.data = {-0.3};

  Tape t;
  Tensor x({1, 2});
  x.data = {0.5, -1.0};
  const auto h = t.tanh_(l1.forward(t, t.constant(x), kTrain));
  const auto y = l2.forward(t, h, kTrain);

  const double h1 = std::tanh(0.5 * 1.0 + (-1.0) * 2.0 + 0.1);
  const double h2 = std::tanh(0.5 * 0.0 + (-1.0) * (-1.0) + 0.2);
  const double expect = h1 + h2 - 0.3;
  CHECK(std::abs(t.val(y).data[0] - expect) < 1e-12);
}

TEST_CASE("backward trivial cases") {
  SUBCASE("constant function has zero gradients") {
    Parameter p("p", random_tensor({3, 3}, 13));
    Tape t;
    (void)t.param(&p);
    const auto c = t.constant(Tensor::scalar(2.5));
    const auto loss = t.weighted_sum({{c, 1.0}});
    t.backward(loss);
    for (double g : p.grad.data) CHECK(g == 0.0);
  }

  SUBCASE("gradient of squared norm") {
    Parameter p("x", Tensor({1, 2}));
    p.value.data = {1.0, 2.0};
    Tape t;
    const auto x = t.param(&p);
    const auto loss = t.scale(t.mse_rows(x, t.constant(Tensor({1, 2}))), 1.0);
    t.backward(loss);
    CHECK(p.grad.data[0] == doctest::Approx(2.0));
    CHECK(p.grad.data[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("random three-layer net matches finite differences") {
  Rng rng(17);
  net::LinearLayer l1("g1", 5, 7, rng), l2("g2", 7, 6, rng), l3("g3", 6, 4, rng);
  const Tensor x = random_tensor({3, 5}, 19);
  const Tensor target = random_tensor({3, 4}, 23);

  std::vector<Parameter*> params;
  l1.collect(params);
  l2.collect(params);
  l3.collect(params);

  auto run = [&](bool grads) {
    Tape t;
    auto h = t.tanh_(l1.forward(t, t.constant(x), kTrain));
    h = t.tanh_(l2.forward(t, h, kTrain));
    const auto y = l3.forward(t, h, kTrain);
    const auto loss = t.mse_rows(y, t.constant(target));
    if (grads) t.backward(loss);
    return t.val(loss).data[0];
  };
  const auto res = gradcheck::check(params, run, 31);
  CHECK(res.checked > 50);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("every tape op passes finite-difference checks") {
  // exercises each op's backward on randomized shapes, capped by a fixed
  // quadratic head so the loss is scalar
  struct OpCase {
    const char* name;
    std::function<Tape::Id(Tape&, Tape::Id)> apply;
    std::vector<int> in_shape;
  };
  const FeaturePlan tiny_plan{.k_half = 2, .n_rbf = 16};
  std::vector<geom::Mat3> frames;
  for (int i = 0; i < 4; ++i) {
    const auto g = geom::random_rigid(100 + i);
    frames.push_back(g.rotation);
  }
  const auto rigid = geom::random_rigid(55);

  std::vector<OpCase> cases;
  cases.push_back({"tanh", [](Tape& t, Tape::Id x) { return t.tanh_(x); }, {3, 4}});
  cases.push_back({"scale", [](Tape& t, Tape::Id x) { return t.scale(x, -1.7); }, {3, 4}});
  cases.push_back({"softmax", [](Tape& t, Tape::Id x) { return t.softmax_rows(x); }, {3, 5}});
  cases.push_back({"mean_rows", [](Tape& t, Tape::Id x) { return t.mean_rows(x); }, {6, 3}});
  cases.push_back({"col_slice", [](Tape& t, Tape::Id x) { return t.col_slice(x, 1, 3); }, {4, 6}});
  cases.push_back({"row_slice", [](Tape& t, Tape::Id x) { return t.row_slice(x, 2, 3); }, {6, 4}});
  cases.push_back(
      {"concat", [](Tape& t, Tape::Id x) {
         return t.concat_cols({t.col_slice(x, 0, 2), t.tanh_(t.col_slice(x, 2, 2))});
       },
       {4, 4}});
  cases.push_back(
      {"mul_self", [](Tape& t, Tape::Id x) { return t.mul(x, t.tanh_(x)); }, {3, 4}});
  cases.push_back(
      {"add_scaled", [](Tape& t, Tape::Id x) { return t.add_scaled(x, t.tanh_(x), 0.3); },
       {3, 4}});
  cases.push_back(
      {"row_broadcast", [](Tape& t, Tape::Id x) {
         return t.row_broadcast_add(t.tanh_(x), t.mean_rows(x));
       },
       {5, 4}});
  cases.push_back(
      {"row_scale", [](Tape& t, Tape::Id x) {
         const auto g = t.mean_rows(t.matmul(x, x, true));  // [1 x n] -> reuse row
         // build an [n] gate from the first column
         return t.row_scale(x, t.col_slice(t.matmul(x, x, true), 0, 1));
       },
       {4, 4}});
  cases.push_back(
      {"matmul_nt", [](Tape& t, Tape::Id x) { return t.matmul(x, t.tanh_(x), true); },
       {4, 5}});
  cases.push_back(
      {"rbf", [tiny_plan](Tape& t, Tape::Id x) { return t.rbf_features(x, tiny_plan); },
       {4, 3}});
  cases.push_back(
      {"frame_apply", [frames](Tape& t, Tape::Id x) { return t.frame_apply(x, frames); },
       {4, 3}});
  cases.push_back(
      {"rigid_apply", [rigid](Tape& t, Tape::Id x) {
         return t.rigid_apply(x, rigid.rotation, rigid.translation);
       },
       {4, 3}});
  cases.push_back(
      {"mean_row_norm_offset", [](Tape& t, Tape::Id x) {
         // keep rows away from zero so the norm is smooth
         Tensor off({4, 3});
         for (double& v : off.data) v = 2.0;
         const auto shifted = t.add(x, t.constant(off));
         const auto s = t.mean_row_norm(shifted);
         return s;
       },
       {4, 3}});

  int case_idx = 0;
  for (const auto& oc : cases) {
    CAPTURE(oc.name);
    Parameter p("x", random_tensor(oc.in_shape, 1000 + case_idx, 0.7));
    const Tensor target =
        random_tensor({1, 1}, 2000 + case_idx);  // placeholder, sized below
    auto run = [&](bool grads) {
      Tape t;
      const auto x = t.param(&p);
      const auto y = oc.apply(t, x);
      Tensor tgt(t.val(y).shape);
      Rng rng(3000 + case_idx);
      for (double& v : tgt.data) v = 0.5 * rng.normal();
      Tape::Id loss;
      if (t.val(y).data.size() == 1) {
        loss = t.weighted_sum({{y, 1.0}});
      } else {
        loss = t.mse_rows(y, t.constant(tgt));
      }
      if (grads) t.backward(loss);
      return t.val(loss).data[0];
    };
    const auto res = gradcheck::check({&p}, run, 4000 + case_idx);
    CHECK(res.max_rel_err <= 1e-4);
    ++case_idx;
  }
}

TEST_CASE("bce and pair_bias gradients") {
  SUBCASE("bce") {
    Parameter p("z", random_tensor({8}, 71, 1.5));
    Tensor targets({8});
    Rng rng(73);
    for (double& v : targets.data) v = rng.uniform_int(2);
    auto run = [&](bool grads) {
      Tape t;
      const auto loss = t.bce_with_logits(t.param(&p), targets);
      if (grads) t.backward(loss);
      return t.val(loss).data[0];
    };
    CHECK(gradcheck::check({&p}, run, 75).max_rel_err <= 1e-4);
  }

  SUBCASE("pair_bias table") {
    Parameter table("tab", random_tensor({2, 9}, 77, 0.5));
    const Tensor x = random_tensor({5, 5}, 79);
    auto run = [&](bool grads) {
      Tape t;
      const auto b = t.pair_bias(t.param(&table), 1, 5, 4);
      const auto y = t.softmax_rows(t.add(t.constant(x), b));
      const auto loss = t.mse_rows(y, t.constant(random_tensor({5, 5}, 81)));
      if (grads) t.backward(loss);
      return t.val(loss).data[0];
    };
    CHECK(gradcheck::check({&table}, run, 83).max_rel_err <= 1e-4);
  }
}

TEST_CASE("full attention layer gradients") {
  Rng rng(91);
  net::AttentionLayer attn("ga", 8, 2, 4, rng);
  const Tensor x = random_tensor({5, 8}, 93, 0.5);
  const Tensor target = random_tensor({5, 8}, 95, 0.5);
  std::vector<Parameter*> params;
  attn.collect(params);
  auto run = [&](bool grads) {
    Tape t;
    const auto y = attn.forward(t, t.constant(x), kTrain);
    const auto loss = t.mse_rows(y, t.constant(target));
    if (grads) t.backward(loss);
    return t.val(loss).data[0];
  };
  const auto res = gradcheck::check(params, run, 97);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("adam optimizer") {
  SUBCASE("zero gradient leaves parameter unchanged") {
    Parameter p("p", random_tensor({2, 2}, 101));
    const Tensor before = p.value;
    Adam adam({&p}, AdamConfig{});
    p.zero_grad();
    adam.step();
    for (size_t i = 0; i < before.data.size(); ++i)
      CHECK(p.value.data[i] == before.data[i]);
  }

  SUBCASE("first step with constant gradient moves by about lr") {
    AdamConfig cfg;
    cfg.lr = 1e-3;
    Parameter p("p", Tensor({3}));
    p.value.data = {1.0, -2.0, 0.5};
    Adam adam({&p}, cfg);
    p.grad.data = {0.7, -0.7, 0.01};
    const Tensor before = p.value;
    adam.step();
    // bias correction gives mhat/sqrt(vhat) = sign(g) on step one
    CHECK(p.value.data[0] == doctest::Approx(before.data[0] - cfg.lr).epsilon(1e-6));
    CHECK(p.value.data[1] == doctest::Approx(before.data[1] + cfg.lr).epsilon(1e-6));
    CHECK(p.value.data[2] == doctest::Approx(before.data[2] - cfg.lr).epsilon(1e-3));
    // grads zeroed after the step
    for (double g : p.grad.data) CHECK(g == 0.0);
  }

  SUBCASE("two identical runs are bitwise identical after 100 steps") {
    auto train = [&]() {
      Parameter p("p", random_tensor({4, 4}, 103));
      AdamConfig cfg;
      cfg.lr = 1e-2;
      Adam adam({&p}, cfg);
      const Tensor target = random_tensor({4, 4}, 104);
      for (int step = 0; step < 100; ++step) {
        Tape t;
        const auto loss = t.mse_rows(t.param(&p), t.constant(target));
        t.backward(loss);
        adam.step();
      }
      return p.value;
    };
    const Tensor a = train();
    const Tensor b = train();
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
  }
}

TEST_CASE("invariant features") {
  const auto s = structio::gen_synthetic(7, 24, structio::Topology::kMixed);

  SUBCASE("rigid invariance over 100 transforms") {
    const Tensor ref = net::invariant_features(s, 16);
    double worst = 0.0;
    for (uint64_t g = 0; g < 100; ++g) {
      auto moved = s;
      moved.set_coords(geom::apply_transform(s.coords(), geom::random_rigid(g)));
      const Tensor feats = net::invariant_features(moved, 16);
      for (size_t i = 0; i < ref.data.size(); ++i)
        worst = std::max(worst, std::abs(feats.data[i] - ref.data[i]));
    }
    CHECK(worst < 1e-9);
  }

  SUBCASE("distance exactly on a basis center gives channel 1.0") {
    const FeaturePlan plan{};  // centers at i * 20/15
    const double c3 = plan.center(3);
    structio::Structure two;
    two.residues.resize(4);
    for (int i = 0; i < 4; ++i) two.residues[i].seq_index = i + 1;
    two.residues[0].ca = {0, 0, 0};
    two.residues[1].ca = {c3, 0, 0};
    two.residues[2].ca = {c3, 4.0, 0};
    two.residues[3].ca = {0, 4.0, 0};
    const Tensor feats = net::invariant_features(two, 16);
    // residue 0, neighbor slot for offset +1 (slot index k_half), channel 3
    const int block = plan.n_rbf + 1;
    const int slot = plan.k_half;  // offsets -8..-1 then +1
    CHECK(feats.at(0, slot * block + 3) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("hand-built structure matches an independently scripted RBF") {
    structio::Structure four;
    four.residues.resize(4);
    const geom::Vec3 pts[4] = {{0, 0, 0}, {3.8, 0, 0}, {3.8, 3.8, 0}, {0, 3.8, 1.0}};
    for (int i = 0; i < 4; ++i) {
      four.residues[i].seq_index = i + 1;
      four.residues[i].ca = pts[i];
    }
    const int k = 4;  // k_half = 2
    const Tensor feats = net::invariant_features(four, k);
    const FeaturePlan plan = net::default_feature_plan(k);
    const int block = plan.n_rbf + 1;
    // independent computation, straight from the definition
    for (int i = 0; i < 4; ++i) {
      int slot = 0;
      for (int off = -2; off <= 2; ++off) {
        if (off == 0) continue;
        const int j = i + off;
        for (int c = 0; c < plan.n_rbf; ++c) {
          double expect = 0.0;
          if (j >= 0 && j < 4) {
            const double d = (pts[i] - pts[j]).norm();
            const double u = d - (0.0 + c * 20.0 / 15.0);
            expect = std::exp(-u * u / (2.0 * 1.25 * 1.25));
          }
          CHECK(feats.at(i, slot * block + c) == doctest::Approx(expect).epsilon(1e-12));
        }
        const double valid = (j >= 0 && j < 4) ? 1.0 : 0.0;
        CHECK(feats.at(i, slot * block + plan.n_rbf) == valid);
        ++slot;
      }
    }
  }

  SUBCASE("k_neighbors below 2 is rejected") {
    CHECK_THROWS_AS(net::invariant_features(s, 1), std::invalid_argument);
  }
}
