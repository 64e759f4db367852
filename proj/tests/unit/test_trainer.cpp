#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "cslsl/trainer.hpp"
#include "synthetic.hpp"

using namespace cslsl;
using namespace cslsl::trainer;
using model::Variant;
namespace fs = std::filesystem;

namespace {

model::ModelConfig small(Variant v, int hidden = 8) {
  model::ModelConfig c;
  c.dim_location = 4;
  c.dim_category = 3;
  c.dim_hour = 2;
  c.dim_day = 2;
  c.dim_user = 2;
  c.hidden = hidden;
  c.variant = v;
  return c;
}

model::VocabSizes sizes_of(const preprocess::ProcessedDataset& ds) {
  return {ds.vocab.num_users(), ds.vocab.num_locations(), ds.vocab.num_categories()};
}

preprocess::ProcessedDataset toy() {
  return testing::tiny_dataset({{{0, 1, 2}, {2, 1}, {0, 2, 1, 3}, {3, 1}},
                                {{1, 3}, {0, 1, 2}, {2, 3, 1}, {1, 0}},
                                {{3, 2, 1}, {0, 3}, {1, 2}}},
                               4, 2, 0.5);
}

TrainerOptions quick(std::uint64_t seed = 1) {
  TrainerOptions o;
  o.batch_size = 4;
  o.epochs = 4;
  o.patience = 10;
  o.adam.lr = 1e-2;
  o.seed = seed;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cslsl_trainer_" + name);
  fs::remove_all(p);
  return p;
}

bool same_params(const grad::ParamStore& a, const grad::ParamStore& b) {
  for (const auto& p : a)
    if (p.value != b[p.name].value) return false;
  return true;
}

}  // namespace

TEST_CASE("a session of n records yields n-1 instances") {
  const auto ds = testing::tiny_dataset({{{0, 1, 2}, {1, 0}}}, 3, 1, 0.5);
  auto all = make_instances(ds, Split::train);
  const auto test = make_instances(ds, Split::test);
  all.insert(all.end(), test.begin(), test.end());
  CHECK(all.size() == 3);
  CHECK(all[0] == TrainingInstance{0, 0, 1});
  CHECK(all[1] == TrainingInstance{0, 0, 2});
  CHECK(all[2] == TrainingInstance{0, 1, 1});
}

TEST_CASE("instance enumeration matches a brute-force count over random datasets") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::vector<int>>> spec(1 + rng() % 4);
    for (auto& user : spec) {
      user.resize(2 + rng() % 5);
      for (auto& s : user) s.assign(2 + rng() % 4, static_cast<int>(rng() % 5));
    }
    const auto ds = testing::tiny_dataset(spec, 5, 2, 0.6);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> expect_train, expect_test;
    for (std::size_t u = 0; u < ds.users.size(); ++u)
      for (std::size_t p = 0; p < ds.users[u].sessions.size(); ++p)
        for (std::size_t i = 1; i < ds.users[u].sessions[p].records.size(); ++i)
          (p < ds.users[u].split_point ? expect_train : expect_test).insert({u, p, i});
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> got_train, got_test;
    for (const auto& i : make_instances(ds, Split::train)) got_train.insert({i.user_slot, i.session, i.target});
    for (const auto& i : make_instances(ds, Split::test)) got_test.insert({i.user_slot, i.session, i.target});
    CHECK(got_train == expect_train);
    CHECK(got_test == expect_test);
  }
}

TEST_CASE("examples never contain the target or later records") {
  const auto ds = toy();
  for (auto split : {Split::train, Split::test}) {
    for (const auto& inst : make_instances(ds, split)) {
      const auto ex = make_example(ds, inst);
      const auto& user = ds.users[inst.user_slot];
      CHECK(ex.history.size() == inst.session);
      CHECK(ex.prefix.size() == inst.target);
      CHECK(ex.target == &user.sessions[inst.session].records[inst.target]);
      const auto t = ex.target->utc_seconds;
      for (const auto& s : ex.history)
        for (const auto& r : s) CHECK(r.utc_seconds < t);
      for (const auto& r : ex.prefix) CHECK(r.utc_seconds < t);
      if (split == Split::train) CHECK(inst.session < user.split_point);
      if (split == Split::test) CHECK(inst.session >= user.split_point);
    }
  }
  CHECK_THROWS(make_example(ds, {0, 0, 0}));
}

TEST_CASE("each batch is one optimizer step") {
  const auto ds = toy();
  model::Model m(small(Variant::CSLSL), sizes_of(ds), 2);
  const auto train = make_instances(ds, Split::train);
  auto o = quick();
  o.batch_size = 3;
  const auto r = train_epoch(m, ds, train, o, 1);
  CHECK(r.steps == (train.size() + 2) / 3);
  CHECK(m.params().step() == r.steps);
  CHECK(std::isfinite(r.losses.total));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto ds = toy();
  model::Model a(small(Variant::CSLSL), sizes_of(ds), 3), b(small(Variant::CSLSL), sizes_of(ds), 3);
  const auto ra = fit(a, ds, quick(9)), rb = fit(b, ds, quick(9));
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t k = 0; k < ra.history.size(); ++k) {
    CHECK(ra.history[k].losses.total == rb.history[k].losses.total);
    CHECK(ra.history[k].recall1 == rb.history[k].recall1);
  }
  CHECK(same_params(a.params(), b.params()));
  model::Model c(small(Variant::CSLSL), sizes_of(ds), 3);
  const auto rc = fit(c, ds, quick(10));
  CHECK(rc.history[0].losses.total != ra.history[0].losses.total);
}

TEST_CASE("a deterministic two-location sequence is fitted to near zero loss") {
  const auto ds = testing::tiny_dataset({{{0, 1}, {0, 1}, {0, 1}, {0, 1}}}, 2, 1, 0.5);
  model::Model m(small(Variant::LSL), sizes_of(ds), 4);
  auto o = quick();
  o.weights = {0.0, 0.0, 0.0};
  o.adam.lr = 1e-2;
  const auto train = make_instances(ds, Split::train);
  double first = 0.0, last = 0.0;
  for (int e = 1; e <= 200; ++e) {
    const auto r = train_epoch(m, ds, train, o, e);
    if (e == 1) first = r.losses.l_l;
    last = r.losses.l_l;
  }
  CHECK(first > 0.3);
  CHECK(last < 1e-2);
}

TEST_CASE("a non-finite loss aborts with the batch and parameter norms") {
  const auto ds = toy();
  model::Model m(small(Variant::CSLSL), sizes_of(ds), 5);
  m.params()["location.pred.b"].value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto train = make_instances(ds, Split::train);
  try {
    train_epoch(m, ds, train, quick(), 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite") != std::string::npos);
    CHECK(msg.find("location.pred.b") != std::string::npos);
  }
}

TEST_CASE("early stopping counts epochs without improvement") {
  const auto ds = toy();
  for (int patience : {0, 1, 3}) {
    model::Model m(small(Variant::LSL), sizes_of(ds), 6);
    auto o = quick();
    o.adam.lr = 0.0;  // recall never improves after the first epoch
    o.epochs = 10;
    o.patience = patience;
    const auto r = fit(m, ds, o);
    CHECK(r.history.size() == static_cast<std::size_t>(1 + std::max(patience, 1)));
    CHECK(r.best_epoch == 1);
    CHECK(r.stopped_early);
  }
}

TEST_CASE("fit returns the best epoch parameters and writes checkpoints and the log") {
  const auto ds = toy();
  const fs::path dir = scratch("best");
  model::Model m(small(Variant::CSLSL), sizes_of(ds), 7);
  auto o = quick(3);
  o.epochs = 6;
  const auto r = fit(m, ds, o, {dir, "abc123", false, nullptr});
  REQUIRE(fs::exists(dir / kBestCheckpoint));
  REQUIRE(fs::exists(dir / kLastCheckpoint));
  model::Model best(small(Variant::CSLSL), sizes_of(ds), 7);
  const auto meta = grad::load_checkpoint(dir / kBestCheckpoint, best.params());
  CHECK(same_params(m.params(), best.params()));
  CHECK(meta.meta.at("config_hash") == "abc123");
  CHECK(std::stoi(meta.meta.at("epoch")) == r.best_epoch);
  std::ifstream log(dir / kEpochLog);
  std::string text((std::istreambuf_iterator<char>(log)), {});
  CHECK(text.find("# config_hash=abc123") != std::string::npos);
  CHECK(text.find("# seed=3") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  const auto ds = toy();
  const fs::path full_dir = scratch("full"), part_dir = scratch("part");
  auto o = quick(11);
  o.epochs = 5;
  model::Model full(small(Variant::CSLSL), sizes_of(ds), 8);
  const auto rf = fit(full, ds, o, {full_dir, "h", false, nullptr});

  auto first = o;
  first.epochs = 2;
  model::Model part(small(Variant::CSLSL), sizes_of(ds), 8);
  fit(part, ds, first, {part_dir, "h", false, nullptr});
  model::Model resumed(small(Variant::CSLSL), sizes_of(ds), 8);
  const auto rr = fit(resumed, ds, o, {part_dir, "h", true, nullptr});

  REQUIRE(rr.history.size() == rf.history.size());
  for (std::size_t k = 0; k < rf.history.size(); ++k) {
    CHECK(rr.history[k].epoch == rf.history[k].epoch);
    CHECK(rr.history[k].losses.total == rf.history[k].losses.total);
    CHECK(rr.history[k].recall1 == rf.history[k].recall1);
  }
  CHECK(rr.best_epoch == rf.best_epoch);
  CHECK(same_params(resumed.params(), full.params()));

  model::Model other(small(Variant::CSLSL), sizes_of(ds), 8);
  CHECK_THROWS_AS(fit(other, ds, o, {part_dir, "different", true, nullptr}), TrainingError);
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}
