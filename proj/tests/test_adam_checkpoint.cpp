#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "formtree/checkpoint.hpp"
#include "formtree/param_store.hpp"
#include "formtree/rng.hpp"

using formtree::DType;
using formtree::Rng;
using formtree::Tensor;
using formtree::nn::AdamConfig;
using formtree::nn::Checkpoint;
using formtree::nn::GradMap;
using formtree::nn::ParamStore;

namespace {

std::string temp_path(const char* stem) {
  return std::string("/tmp/formtree_test_") + stem + "_" + std::to_string(::getpid()) + ".bin";
}

}  // namespace

TEST_CASE("adam first step matches the closed form") {
  // fresh moments, g = 1: mhat = vhat = 1 exactly, so
  // p' = p - lr * (1 / (1 + eps) + wd * p)
  ParamStore ps;
  Tensor p({1}, DType::F64);
  p.set(0, 0.5);
  ps.add("w", p);
  GradMap grads;
  grads["w"] = Tensor::scalar(1.0, DType::F64);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  ps.adam_step(grads, cfg, 1);
  const double want = 0.5 - 0.1 * (1.0 / (1.0 + cfg.eps) + 0.01 * 0.5);
  CHECK(ps.at("w").at(0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adam first step size is lr regardless of betas") {
  for (double b1 : {0.5, 0.9, 0.99}) {
    ParamStore ps;
    ps.add("w", Tensor::scalar(0.0, DType::F64));
    GradMap grads;
    grads["w"] = Tensor::scalar(3.7, DType::F64);
    AdamConfig cfg;
    cfg.lr = 0.25;
    cfg.beta1 = b1;
    cfg.weight_decay = 0.0;
    ps.adam_step(grads, cfg, 1);
    CHECK(std::fabs(ps.at("w").at(0) + cfg.lr) < 1e-8);  // step = -lr * sign(g)
  }
}

TEST_CASE("adam converges on a quadratic") {
  ParamStore ps;
  ps.add("w", Tensor::scalar(2.0, DType::F64));
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  for (long t = 1; t <= 400; ++t) {
    GradMap grads;
    grads["w"] = Tensor::scalar(ps.at("w").at(0), DType::F64);  // d/dw of w^2/2
    ps.adam_step(grads, cfg, t);
  }
  CHECK(std::fabs(ps.at("w").at(0)) < 1e-2);
}

TEST_CASE("adam skips parameters without gradients and keeps moments") {
  ParamStore ps;
  ps.add("a", Tensor::scalar(1.0, DType::F64));
  ps.add("b", Tensor::scalar(1.0, DType::F64));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  GradMap g1;
  g1["a"] = Tensor::scalar(1.0, DType::F64);
  ps.adam_step(g1, cfg, 1);
  CHECK(ps.at("b").at(0) == 1.0);
  const double after1 = ps.at("a").at(0);
  ps.adam_step(g1, cfg, 2);
  CHECK(ps.at("a").at(0) < after1);  // same-direction grad keeps moving
}

TEST_CASE("adam rejects non-finite gradients and bad shapes") {
  ParamStore ps;
  ps.add("w", Tensor::scalar(1.0, DType::F64));
  AdamConfig cfg;
  GradMap bad;
  bad["w"] = Tensor::scalar(std::numeric_limits<double>::quiet_NaN(), DType::F64);
  CHECK_THROWS_AS(ps.adam_step(bad, cfg, 1), std::runtime_error);
  GradMap wrong;
  wrong["w"] = Tensor({2}, DType::F64);
  CHECK_THROWS_AS(ps.adam_step(wrong, cfg, 1), std::invalid_argument);
  CHECK_THROWS_AS(ps.adam_step(GradMap{}, cfg, 0), std::invalid_argument);
}

TEST_CASE("param store preserves registration order and rejects duplicates") {
  ParamStore ps;
  ps.add("z", Tensor({1}, DType::F32));
  ps.add("a", Tensor({1}, DType::F32));
  ps.add("m", Tensor({1}, DType::F32));
  CHECK(ps.names() == std::vector<std::string>{"z", "a", "m"});
  CHECK_THROWS_AS(ps.add("a", Tensor({1}, DType::F32)), std::invalid_argument);
  CHECK_THROWS_AS(ps.at("missing"), std::out_of_range);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  Rng rng(99);
  ParamStore ps;
  Tensor a({3, 4}, DType::F32);
  Tensor b({7}, DType::F64);
  Tensor c({2, 2, 2}, DType::F32);
  for (auto* t : {&a, &c})
    for (std::size_t i = 0; i < t->numel(); ++i) t->set(i, rng.uniform(-10, 10));
  for (std::size_t i = 0; i < b.numel(); ++i) b.set(i, rng.normal());
  ps.add("enc.w", a);
  ps.add("enc.b", b);
  ps.add("dec.w", c);

  const std::string path = temp_path("ckpt");
  nlohmann::json meta;
  meta["d_model"] = 128;
  meta["labels"] = {"root", "intra-key"};
  formtree::nn::save_checkpoint(path, ps, meta);

  Checkpoint ck = formtree::nn::load_checkpoint(path);
  CHECK(ck.meta["d_model"] == 128);
  CHECK(ck.meta["labels"].size() == 2);
  REQUIRE(ck.entries.size() == 3);
  CHECK(ck.entries[0].first == "enc.w");  // file order = registration order
  CHECK(ck.entries[1].first == "enc.b");
  CHECK(ck.entries[2].first == "dec.w");
  for (const auto& [name, t] : ck.entries) {
    const Tensor& src = ps.at(name);
    REQUIRE(t.nbytes() == src.nbytes());
    CHECK(std::memcmp(t.raw(), src.raw(), t.nbytes()) == 0);
  }

  // save -> load -> save produces identical bytes
  const std::string path2 = temp_path("ckpt2");
  std::vector<std::pair<std::string, const Tensor*>> again;
  for (const auto& [name, t] : ck.entries) again.emplace_back(name, &t);
  formtree::nn::save_checkpoint(path2, again, ck.meta);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("load_into validates names, shapes and dtypes") {
  ParamStore src;
  src.add("w", Tensor({2, 2}, DType::F32));
  const std::string path = temp_path("ckpt3");
  formtree::nn::save_checkpoint(path, src, {});
  Checkpoint ck = formtree::nn::load_checkpoint(path);

  ParamStore ok;
  ok.add("w", Tensor({2, 2}, DType::F32));
  CHECK_NOTHROW(formtree::nn::load_into(ok, ck));

  ParamStore wrong_shape;
  wrong_shape.add("w", Tensor({4}, DType::F32));
  CHECK_THROWS_AS(formtree::nn::load_into(wrong_shape, ck), std::runtime_error);

  ParamStore wrong_dtype;
  wrong_dtype.add("w", Tensor({2, 2}, DType::F64));
  CHECK_THROWS_AS(formtree::nn::load_into(wrong_dtype, ck), std::runtime_error);

  ParamStore missing;
  missing.add("w", Tensor({2, 2}, DType::F32));
  missing.add("extra", Tensor({1}, DType::F32));
  CHECK_THROWS_AS(formtree::nn::load_into(missing, ck), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("malformed checkpoints are rejected") {
  const std::string path = temp_path("ckpt4");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"version\":1,\"entries\":[]}";  // no NUL terminator
  }
  CHECK_THROWS_AS(formtree::nn::load_checkpoint(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"version\":1,\"meta\":{},\"entries\":[{\"name\":\"w\",\"dtype\":\"f32\","
           "\"shape\":[4],\"offset\":0,\"nbytes\":16}]}";
    out.put('\0');
    out << "abc";  // payload too short
  }
  CHECK_THROWS_AS(formtree::nn::load_checkpoint(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"version\":7,\"meta\":{},\"entries\":[]}";
    out.put('\0');
  }
  CHECK_THROWS_AS(formtree::nn::load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(formtree::nn::load_checkpoint("/nonexistent/nope.bin"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("glorot init stays within its bound") {
  Rng rng(7);
  Tensor t = formtree::nn::glorot_uniform({16, 8}, DType::F32, rng);
  const double limit = std::sqrt(6.0 / (16 + 8));
  double mx = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) mx = std::max(mx, std::fabs(t.at(i)));
  CHECK(mx <= limit);
  CHECK(mx > limit * 0.5);  // actually spread out
}
