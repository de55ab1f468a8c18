#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "fd_check.hpp"
#include "kgcicam/guidance.hpp"

using namespace kgcicam;
using namespace kgcicam::testing;

TEST_CASE("soften analytic fixture") {
  auto p = soften({0.0, std::log(4.0)}, 1.0);
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("higher temperature moves the distribution toward uniform") {
  std::vector<double> z{2.0, 0.0, -1.0};
  auto sharp = soften(z, 1.0);
  auto soft = soften(z, 8.0);
  double d_sharp = 0.0, d_soft = 0.0;
  for (int i = 0; i < 3; ++i) {
    d_sharp += std::abs(sharp[static_cast<size_t>(i)] - 1.0 / 3.0);
    d_soft += std::abs(soft[static_cast<size_t>(i)] - 1.0 / 3.0);
  }
  CHECK(d_soft < d_sharp);
  CHECK_THROWS_AS(soften(z, 0.0), ConfigError);
}

TEST_CASE("logits guidance loss vanishes when student equals teacher") {
  Graph g;
  Tensor z({3}, {0.4, -0.7, 1.2});
  auto student = g.constant(z);
  CHECK(g.val(logits_guidance_loss(g, student, z, 3.0)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.val(logits_guidance_loss(g, student, z, 3.0, /*reverse_kl=*/true)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("logits guidance loss KL fixture") {
  // student logits (0,0) -> (.5,.5); teacher logits (ln 3, 0) -> (.75,.25)
  Graph g;
  auto student = g.constant(Tensor({2}));
  Tensor teacher({2}, {std::log(3.0), 0.0});
  double expect = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  CHECK(g.val(logits_guidance_loss(g, student, teacher, 1.0)).item() ==
        doctest::Approx(expect).epsilon(1e-9));
  // reversed direction: KL(teacher || student)
  double expect_rev = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  CHECK(g.val(logits_guidance_loss(g, student, teacher, 1.0, true)).item() ==
        doctest::Approx(expect_rev).epsilon(1e-9));
}

TEST_CASE("activation guidance loss vanishes on identical maps") {
  std::mt19937_64 rng(5);
  Tensor maps = random_tensor({2, 3, 3}, rng);
  Graph g;
  auto student = g.constant(maps);
  CHECK(g.val(activation_guidance_loss(g, student, maps, 2.0)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("activation guidance MSE fixture") {
  // 1 class, 2 positions: student (0,0) -> (.5,.5); teacher (ln 3, 0) -> (.75,.25)
  // mse = ((.25)^2 + (.25)^2)/2 = 0.0625
  Graph g;
  auto student = g.constant(Tensor({1, 1, 2}));
  Tensor teacher({1, 1, 2}, {std::log(3.0), 0.0});
  CHECK(g.val(activation_guidance_loss(g, student, teacher, 1.0)).item() ==
        doctest::Approx(0.0625).epsilon(1e-9));
}

TEST_CASE("guidance losses are differentiable") {
  std::mt19937_64 rng(7);
  Tensor teacher_z = random_tensor({4}, rng);
  Tensor teacher_m = random_tensor({2, 3, 3}, rng);
  auto build = [&](Graph& g, const std::vector<Graph::Id>& in) {
    auto a = logits_guidance_loss(g, in[0], teacher_z, 4.0);
    auto b = activation_guidance_loss(g, in[1], teacher_m, 4.0);
    return g.weighted_sum_scalars({a, b}, {1.0, 1.0});
  };
  auto rep = fd_check({random_tensor({4}, rng), random_tensor({2, 3, 3}, rng)},
                      build, 8, rng);
  CHECK(rep.max_rel_err < 1e-4);
}

namespace {

CiCamModel tiny_model(unsigned long long seed) {
  BackboneConfig cfg;
  cfg.in_h = 16;
  cfg.in_w = 16;
  cfg.stage_channels = {4, 8};
  cfg.stage_strides = {2, 2};
  cfg.nonlocal_after = {1};
  return CiCamModel(cfg, 3, 0.1, 1e-5, CiCamSettings{}, seed);
}

}  // namespace

TEST_CASE("guidance total loss composition and role check") {
  std::mt19937_64 rng(9);
  CiCamModel student = tiny_model(1);
  Tensor image = random_tensor({3, 16, 16}, rng, 0.5);
  Graph g;
  CiCamOutput out = student.forward_image(g, image, /*train=*/true);

  KnowledgeRecord cls_rec, loc_rec;
  cls_rec.teacher_logits = random_tensor({3}, rng);
  cls_rec.source_role = ExpertRole::classification;
  loc_rec.teacher_maps = random_tensor({3, 4, 4}, rng);
  loc_rec.source_role = ExpertRole::localization;

  GuidanceConfig cfg;
  auto total = guidance_total_loss(g, out, cls_rec, loc_rec, 0, cfg);
  double l_cls =
      g.val(logits_guidance_loss(g, out.logits2, cls_rec.teacher_logits, cfg.t_cls))
          .item();
  double l_loc =
      g.val(activation_guidance_loss(g, out.maps2, loc_rec.teacher_maps, cfg.t_loc))
          .item();
  double l_causal = g.val(causal_loss(g, out.logits1, out.logits2, 0, 0.0)).item();
  double expect = cfg.alpha * (l_cls + l_loc) + (1.0 - cfg.alpha) * l_causal;
  CHECK(g.val(total).item() == doctest::Approx(expect).epsilon(1e-12));

  // swapped roles must be rejected
  std::swap(cls_rec.source_role, loc_rec.source_role);
  CHECK_THROWS_AS(guidance_total_loss(g, out, cls_rec, loc_rec, 0, cfg), ConfigError);
}

TEST_CASE("t-squared scaling multiplies only the distillation terms") {
  std::mt19937_64 rng(11);
  CiCamModel student = tiny_model(2);
  Tensor image = random_tensor({3, 16, 16}, rng, 0.5);
  Graph g;
  CiCamOutput out = student.forward_image(g, image, /*train=*/true);
  KnowledgeRecord cls_rec, loc_rec;
  cls_rec.teacher_logits = random_tensor({3}, rng);
  cls_rec.source_role = ExpertRole::classification;
  loc_rec.teacher_maps = random_tensor({3, 4, 4}, rng);
  loc_rec.source_role = ExpertRole::localization;
  GuidanceConfig plain;
  GuidanceConfig scaled = plain;
  scaled.t_squared_scaling = true;
  double a = g.val(guidance_total_loss(g, out, cls_rec, loc_rec, 1, plain)).item();
  double b = g.val(guidance_total_loss(g, out, cls_rec, loc_rec, 1, scaled)).item();
  double l_causal = g.val(causal_loss(g, out.logits1, out.logits2, 1, 0.0)).item();
  double distill = a - (1.0 - plain.alpha) * l_causal;
  double expect_b = distill * plain.t_cls * plain.t_cls +
                    (1.0 - plain.alpha) * l_causal;
  CHECK(b == doctest::Approx(expect_b).epsilon(1e-9));
}

TEST_CASE("run_teachers leaves expert parameters untouched") {
  std::mt19937_64 rng(13);
  CiCamModel cls_e = tiny_model(3);
  CiCamModel loc_e = tiny_model(4);
  Tensor image = random_tensor({3, 16, 16}, rng, 0.5);
  auto checksum = [](const CiCamModel& m) {
    double s = 0.0;
    for (int i = 0; i < m.params().count(); ++i)
      for (long j = 0; j < m.params().value(i).numel(); ++j)
        s += m.params().value(i)[j] * static_cast<double>(j % 17 + 1);
    for (long j = 0; j < m.pool().q.numel(); ++j) s += m.pool().q[j];
    return s;
  };
  double c1 = checksum(cls_e), c2 = checksum(loc_e);
  auto [cr, lr] = run_teachers(cls_e, loc_e, image);
  CHECK(checksum(cls_e) == c1);
  CHECK(checksum(loc_e) == c2);
  CHECK(cr.source_role == ExpertRole::classification);
  CHECK(lr.source_role == ExpertRole::localization);
  CHECK(cr.teacher_logits.shape() == std::vector<int>{3});
  CHECK(lr.teacher_maps.shape() == std::vector<int>{3, 4, 4});
  // repeated runs are bit-identical
  auto [cr2, lr2] = run_teachers(cls_e, loc_e, image);
  for (long i = 0; i < cr.teacher_logits.numel(); ++i)
    CHECK(cr.teacher_logits[i] == cr2.teacher_logits[i]);
  for (long i = 0; i < lr.teacher_maps.numel(); ++i)
    CHECK(lr.teacher_maps[i] == lr2.teacher_maps[i]);
}

TEST_CASE("knowledge cache round trip") {
  std::mt19937_64 rng(15);
  KnowledgeCache cache;
  cache.cls_hash = 0xabcdef;
  cache.loc_hash = 0x123456;
  for (int i = 0; i < 3; ++i) {
    cache.ids.push_back("sample_" + std::to_string(i));
    KnowledgeRecord cr, lr;
    cr.teacher_logits = random_tensor({4}, rng);
    cr.source_role = ExpertRole::classification;
    lr.teacher_maps = random_tensor({4, 2, 2}, rng);
    lr.source_role = ExpertRole::localization;
    cache.cls_records.push_back(cr);
    cache.loc_records.push_back(lr);
  }
  std::string path = "kg_cache_test.bin";
  save_knowledge_cache(path, cache);
  KnowledgeCache loaded = load_knowledge_cache(path);
  std::remove(path.c_str());
  CHECK(loaded.cls_hash == cache.cls_hash);
  CHECK(loaded.loc_hash == cache.loc_hash);
  REQUIRE(loaded.ids == cache.ids);
  for (size_t i = 0; i < cache.ids.size(); ++i) {
    for (long j = 0; j < 4; ++j)
      CHECK(loaded.cls_records[i].teacher_logits[j] ==
            doctest::Approx(cache.cls_records[i].teacher_logits[j]).epsilon(1e-6));
    for (long j = 0; j < 16; ++j)
      CHECK(loaded.loc_records[i].teacher_maps[j] ==
            doctest::Approx(cache.loc_records[i].teacher_maps[j]).epsilon(1e-6));
  }
}

TEST_CASE("guidance config validation") {
  GuidanceConfig cfg;
  cfg.t_cls = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GuidanceConfig{};
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
