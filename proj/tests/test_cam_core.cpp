#include <cmath>
#include <random>

#include "doctest.h"
#include "kgcicam/cam_core.hpp"
#include "oracles.hpp"

using namespace kgcicam;
using namespace kgcicam::testing;

TEST_CASE("compute_cam fixture") {
  // X = {1,2} channels at one position, W = [1 3] -> M = 1*1 + 3*2 = 7
  Tensor x({2, 1, 1}, {1.0, 2.0});
  Tensor w({1, 2}, {1.0, 3.0});
  Tensor m = cam::compute_cam(x, w);
  CHECK(m.shape() == std::vector<int>{1, 1, 1});
  CHECK(m[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("compute_cam is linear in the features") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  Tensor x1({3, 2, 2}), x2({3, 2, 2}), w({2, 3});
  for (long i = 0; i < x1.numel(); ++i) x1[i] = d(rng);
  for (long i = 0; i < x2.numel(); ++i) x2[i] = d(rng);
  for (long i = 0; i < w.numel(); ++i) w[i] = d(rng);
  Tensor sum({3, 2, 2});
  for (long i = 0; i < sum.numel(); ++i) sum[i] = 2.0 * x1[i] + x2[i];
  Tensor lhs = cam::compute_cam(sum, w);
  Tensor m1 = cam::compute_cam(x1, w), m2 = cam::compute_cam(x2, w);
  for (long i = 0; i < lhs.numel(); ++i)
    CHECK(lhs[i] == doctest::Approx(2.0 * m1[i] + m2[i]).epsilon(1e-12));
}

TEST_CASE("gamma curves") {
  auto cosine = cam::GammaCurve::cosine(5);
  CHECK(cosine.weights[0] == doctest::Approx(1.0));
  CHECK(cosine.weights[2] == doctest::Approx(0.0));
  CHECK(cosine.weights[4] == doctest::Approx(-1.0));
  auto top1 = cam::GammaCurve::top1(4);
  CHECK(top1.weights == std::vector<double>{1, 0, 0, 0});
  auto uni = cam::GammaCurve::uniform(4);
  CHECK(uni.weights[3] == doctest::Approx(0.25));
  CHECK_THROWS_AS(cam::GammaCurve::by_name("nope", 3), ConfigError);
}

TEST_CASE("combinational_map fixture and rank handling") {
  // two 1x1 maps {2},{1}; cosine(2) = {+1,-1}; class 0 ranks first
  Tensor maps({2, 1, 1}, {2.0, 1.0});
  Tensor h = cam::combinational_map(maps, {0.6, 0.4}, cam::GammaCurve::cosine(2));
  CHECK(h[0] == doctest::Approx(1.0).epsilon(1e-15));
  // swapping scores swaps the ranks
  Tensor h2 = cam::combinational_map(maps, {0.4, 0.6}, cam::GammaCurve::cosine(2));
  CHECK(h2[0] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("ranking is invariant to monotone score transforms") {
  std::vector<double> scores{0.5, 0.1, 0.3, 0.08, 0.02};
  std::vector<double> scaled;
  for (double s : scores) scaled.push_back(2.0 * s + 1.0);
  auto gamma = cam::GammaCurve::cosine(5);
  CHECK(cam::gamma_by_class(scores, gamma) == cam::gamma_by_class(scaled, gamma));
}

TEST_CASE("gamma_by_class breaks score ties by lower class index") {
  auto gamma = cam::GammaCurve::cosine(3);
  auto by_class = cam::gamma_by_class({0.4, 0.4, 0.2}, gamma);
  CHECK(by_class[0] == doctest::Approx(gamma.weights[0]));
  CHECK(by_class[1] == doctest::Approx(gamma.weights[1]));
  CHECK(by_class[2] == doctest::Approx(gamma.weights[2]));
}

TEST_CASE("normalize_map fixture") {
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor n = cam::normalize_map(m);
  CHECK(n[0] == doctest::Approx(0.0));
  CHECK(n[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(n[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(n[3] == doctest::Approx(1.0));
  Tensor flat = cam::normalize_map(Tensor({2, 2}, {5, 5, 5, 5}));
  for (long i = 0; i < 4; ++i) CHECK(flat[i] == 0.0);
}

TEST_CASE("iou fixtures") {
  CHECK(cam::iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(cam::iou({0, 0, 2, 2}, {0, 0, 2, 2}) == doctest::Approx(1.0));
  CHECK(cam::iou({0, 0, 2, 2}, {2, 2, 4, 4}) == doctest::Approx(0.0));
  CHECK(cam::iou({0, 0, 4, 4}, {1, 1, 3, 3}) == doctest::Approx(0.25));
}

TEST_CASE("extract_box simple cases") {
  // single bright pixel
  Tensor m({3, 3});
  m.at(1, 2) = 1.0;
  CHECK(cam::extract_box(m, 0.5) == cam::Box{2, 1, 3, 2});
  // all-zero map has no strict foreground: whole image
  Tensor z({3, 4});
  CHECK(cam::extract_box(z, 0.2) == cam::Box{0, 0, 4, 3});
  // two components, larger one wins
  Tensor two({4, 6});
  two.at(0, 0) = 1.0;
  two.at(2, 3) = 1.0;
  two.at(2, 4) = 1.0;
  CHECK(cam::extract_box(two, 0.5) == cam::Box{3, 2, 5, 3});
}

TEST_CASE("extract_box equals the flood-fill oracle on all 3x3 masks") {
  for (int bits = 0; bits < 512; ++bits) {
    Tensor m({3, 3});
    for (int i = 0; i < 9; ++i) m[i] = (bits >> i) & 1 ? 1.0 : 0.0;
    CAPTURE(bits);
    CHECK(cam::extract_box(m, 0.5) == oracle_box(m, 0.5));
  }
}

TEST_CASE("extract_box equals the oracle on random 8x8 maps") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Tensor m({8, 8});
    for (long i = 0; i < 64; ++i) m[i] = u(rng);
    double frac = 0.1 + 0.8 * u(rng);
    CAPTURE(t);
    CHECK(cam::extract_box(m, frac) == oracle_box(m, frac));
  }
}

TEST_CASE("upsample_nearest replicates blocks") {
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor up = cam::upsample_nearest(m, 4, 4);
  CHECK(up.at(0, 0) == 1.0);
  CHECK(up.at(1, 1) == 1.0);
  CHECK(up.at(0, 2) == 2.0);
  CHECK(up.at(3, 3) == 4.0);
  // upsampling to the same size is the identity
  Tensor same = cam::upsample_nearest(m, 2, 2);
  for (long i = 0; i < 4; ++i) CHECK(same[i] == m[i]);
}

TEST_CASE("box extraction commutes with upsampling scale") {
  // a box found at feature scale maps to the scaled box at image scale
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Tensor m({4, 4});
    for (long i = 0; i < 16; ++i) m[i] = u(rng);
    cam::Box small = cam::extract_box(m, 0.5);
    cam::Box big = cam::extract_box(cam::upsample_nearest(m, 16, 16), 0.5);
    CHECK(big == cam::Box{small.x0 * 4, small.y0 * 4, small.x1 * 4, small.y1 * 4});
  }
}
