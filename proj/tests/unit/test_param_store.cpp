#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "cslsl/param_store.hpp"

using namespace cslsl::grad;

namespace {

ParamStore sample_store(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore s;
  s.add("emb", uniform_init(4, 3, 3, rng));
  s.add("gru.W", uniform_init(6, 3, 2, rng));
  s.add("bias", uniform_init(1, 5, 5, rng));
  for (auto& p : s) {
    p.grad = uniform_init(p.value.rows(), p.value.cols(), 1, rng);
  }
  s.adam_step({1e-3});
  return s;
}

}  // namespace

TEST_CASE("names are unique and values finite") {
  ParamStore s;
  s.add("a", Tensor2::Zero(2, 2));
  CHECK_THROWS(s.add("a", Tensor2::Zero(1, 1)));
  CHECK_THROWS(s.add("nan", Tensor2::Constant(1, 1, std::numeric_limits<double>::quiet_NaN())));
  CHECK(s.contains("a"));
  CHECK_FALSE(s.contains("b"));
  CHECK_THROWS(s.id("b"));
  CHECK(s.num_scalars() == 4);
  CHECK(s["a"].grad.rows() == 2);
  CHECK(s["a"].m.isZero());
}

TEST_CASE("uniform init respects the fan-in bound and the seed") {
  std::mt19937_64 r1(9), r2(9);
  const Tensor2 a = uniform_init(50, 40, 16, r1), b = uniform_init(50, 40, 16, r2);
  CHECK(a == b);
  CHECK(a.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(a.cwiseAbs().maxCoeff() > 0.2);
}

TEST_CASE("global norm clipping") {
  ParamStore s;
  const auto a = s.add("a", Tensor2::Zero(1, 2));
  const auto b = s.add("b", Tensor2::Zero(1, 1));
  s[a].grad << 3, 0;
  s[b].grad << 4;
  CHECK(s.grad_norm() == doctest::Approx(5.0));
  CHECK(s.clip_grad_norm(1.0) == doctest::Approx(5.0));
  CHECK(s.grad_norm() == doctest::Approx(1.0));
  CHECK(s[a].grad(0, 0) == doctest::Approx(0.6));
  s.clip_grad_norm(10.0);
  CHECK(s.grad_norm() == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const ParamStore src = sample_store(1);
  std::stringstream buf;
  CheckpointData data;
  data.rng_seed = 42;
  data.meta["config_hash"] = "abc";
  data.meta["epoch"] = "7";
  save_checkpoint(buf, src, data);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == "CSLSLCKP");

  ParamStore dst = sample_store(2);
  const auto back = load_checkpoint(buf, dst);
  CHECK(back.rng_seed == 42);
  CHECK(back.meta == data.meta);
  CHECK(dst.step() == src.step());
  auto it = dst.begin();
  for (const auto& p : src) {
    CHECK(it->value == p.value);
    CHECK(it->m == p.m);
    CHECK(it->v == p.v);
    ++it;
  }
  std::stringstream again;
  save_checkpoint(again, dst, data);
  CHECK(again.str() == bytes);
}

TEST_CASE("checkpoint mismatches are refused") {
  const ParamStore src = sample_store(1);
  std::stringstream buf;
  save_checkpoint(buf, src, {});
  ParamStore other;
  other.add("emb", Tensor2::Zero(4, 3));
  CHECK_THROWS_AS(load_checkpoint(buf, other), CheckpointError);

  std::stringstream bad("NOTACKPT");
  ParamStore s = sample_store(3);
  CHECK_THROWS_AS(load_checkpoint(bad, s), CheckpointError);

  std::stringstream truncated(buf.str().substr(0, 40));
  CHECK_THROWS_AS(load_checkpoint(truncated, s), CheckpointError);
}

TEST_CASE("checkpoint files and metadata") {
  const auto path = std::filesystem::temp_directory_path() / "cslsl_test_param_store.ckpt";
  const ParamStore src = sample_store(4);
  CheckpointData data;
  data.rng_seed = 5;
  data.meta["k"] = "v";
  save_checkpoint(path, src, data);
  const auto meta = read_checkpoint_meta(path);
  CHECK(meta.rng_seed == 5);
  CHECK(meta.meta.at("k") == "v");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_checkpoint_meta(path), CheckpointError);
}
