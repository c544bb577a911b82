#include <set>

#include "doctest.h"
#include "protoeeg/snapshot.hpp"
#include "support.hpp"

using namespace protoeeg;

TEST_CASE("nine color schemes in a fixed order") {
  const auto& s = color_schemes();
  REQUIRE(s.size() == 9);
  CHECK(s[0].id == "majority");
  CHECK(s[1].id == "prediction");
  CHECK(s[2].id == "uncertainty");
  CHECK(s[3].id == "prob_other");
  CHECK(s[8].id == "prob_grda");
  CHECK(s[0].kind == "class");
  CHECK(s[5].kind == "scalar");
}

TEST_CASE("min/max downsampling brackets every bin") {
  EegSample e;
  e.channels = 2;
  e.sample_rate = 10;
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 12; ++t) e.signal.push_back(float(c == 0 ? t : -t));
  std::vector<float> mins, maxs;
  downsample_minmax(e, 3, mins, maxs);
  CHECK(mins == std::vector<float>{0, 4, 8, -3, -7, -11});
  CHECK(maxs == std::vector<float>{3, 7, 11, 0, -4, -8});
}

TEST_CASE("snapshot covers the test split plus off-map prototype sources") {
  const auto& ds = testing::tiny_dataset();
  const auto& model = testing::tiny_trained().model;
  const auto& s = testing::tiny_snapshot();
  const auto test = ds.indices(Split::Test);
  CHECK(s.map_size() == test.size());
  std::set<std::string> sources;
  for (const auto& p : model.info) sources.insert(*p.source_sample_id);
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const auto& x = s.samples[i];
    CHECK(x.on_map == (i < s.map_size()));
    CHECK(x.on_map == (x.split == Split::Test));
    if (!x.on_map) CHECK(sources.count(x.id) == 1);
    CHECK(x.probabilities.sum() == doctest::Approx(1.0));
    CHECK(x.wave_min.size() == std::size_t(ds.channels) * 40);
    for (std::size_t k = 0; k < x.wave_min.size(); ++k) CHECK(x.wave_min[k] <= x.wave_max[k]);
  }
  for (const auto& id : sources) CHECK(s.find(id).has_value());
  CHECK_FALSE(s.find("missing").has_value());
  REQUIRE(s.prototypes.size() == 45);
  for (int j = 0; j < 45; ++j) {
    CHECK(s.prototypes[j].info == model.info[j]);
    CHECK(s.prototypes[j].class_connections ==
          model.class_connections.weights.row(j).transpose().cast<float>().cast<double>());
  }
  CHECK(s.model_config_hash == model.config_hash);
  CHECK(s.map_coordinates().rows() == Eigen::Index(s.map_size()));
}

TEST_CASE("snapshot building is deterministic and the hash covers the archive bytes") {
  const auto& a = testing::tiny_snapshot();
  const auto b = build_snapshot(testing::tiny_trained().model, testing::tiny_dataset(), testing::tiny_snapshot_config());
  CHECK(a.hash == b.hash);
  CHECK(a.hash.size() == 64);
  testing::TempDir tmp;
  a.save(tmp / "s.atlas");
  const auto back = AtlasSnapshot::load(tmp / "s.atlas");
  CHECK(back.hash == a.hash);
  CHECK(back.samples.size() == a.samples.size());
  CHECK(back.samples[3].x == a.samples[3].x);
  CHECK(back.samples[3].logits == a.samples[3].logits);
  CHECK(back.prototype_latents == a.prototype_latents);
  auto c = testing::tiny_snapshot_config();
  c.seed = 1;
  CHECK(build_snapshot(testing::tiny_trained().model, testing::tiny_dataset(), c).hash != a.hash);
}

TEST_CASE("ungrounded models cannot be snapshotted") {
  PrototypeModel m = testing::tiny_trained().model;
  m.info[4].source_sample_id.reset();
  CHECK_THROWS_AS(build_snapshot(m, testing::tiny_dataset(), testing::tiny_snapshot_config()), SnapshotError);
}

TEST_CASE("prototype panel: nearest and per-class modes") {
  const auto& s = testing::tiny_snapshot();
  const auto& id = s.samples[0].id;
  const auto nearest = prototype_panel(s, id, PanelMode::Nearest);
  REQUIRE(nearest.size() == 3);
  CHECK(nearest[0].sim >= nearest[1].sim);
  CHECK(nearest[1].sim >= nearest[2].sim);
  const auto per_class = prototype_panel(s, id, PanelMode::PerClass);
  REQUIRE(per_class.size() == 3);
  CHECK(per_class[0].designated_class == s.samples[0].predicted());
  // The panel reproduces stored logits: summing SIM x AFF for a class over all prototypes.
  for (int c = 0; c < kNumClasses; ++c) {
    double total = 0.0;
    for (const auto& r : prototype_panel(s, id, PanelMode::Nearest, 45, label_at(c))) total += r.score;
    CHECK(total == doctest::Approx(s.samples[0].logits[c]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(prototype_panel(s, "missing", PanelMode::Nearest), std::out_of_range);
  CHECK(parse_panel_mode("per_class") == PanelMode::PerClass);
  CHECK_FALSE(parse_panel_mode("all").has_value());
}

TEST_CASE("each prototype source has full similarity to its prototype") {
  const auto& s = testing::tiny_snapshot();
  const PrototypeModel layer = s.prototype_layer();
  for (int j = 0; j < 45; ++j) {
    const auto& src = s.samples[*s.find(*s.prototypes[j].info.source_sample_id)];
    CHECK(similarity(src.latent, layer.prototypes.row(j).transpose()) == doctest::Approx(64.0).epsilon(1e-9));
  }
}
