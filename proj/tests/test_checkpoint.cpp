#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "fttab/checkpoint.hpp"
#include "fttab/errors.hpp"

namespace {

using namespace fttab;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "fttab_checkpoint_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ModelConfig small() {
  ModelConfig mc;
  mc.d = 8;
  mc.layers = 2;
  mc.heads = 2;
  mc.ff_dim = 8;
  mc.max_features = 4;
  mc.max_classes = 3;
  return mc;
}

void expect_same_params(const ParameterList& a, const ParameterList& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    auto x = a[i].tensor.data(), y = b[i].tensor.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << a[i].name;
    EXPECT_EQ(a[i].tensor.requires_grad(), b[i].tensor.requires_grad()) << a[i].name;
  }
}

FtModel toy_finetuned(Variant v) {
  RawDataset d;
  d.columns = {{"x", FeatureKind::numerical}, {"c", FeatureKind::categorical}};
  d.cells = {{Cell{1.0}, Cell{std::string("a")}}, {Cell{3.0}, Cell{std::string("b")}}, {Cell{2.0}, Cell{}}};
  d.targets = {"u", "v", "u"};
  auto fitted = fit_schema(d);
  auto m = bind_model(PfnBackbone::initialize(small(), 2), fitted, class_vocabulary(d), v, 6);
  m.backbone.set_trainable(false);
  return m;
}

TEST(Checkpoint, BackboneRoundTripIsExact) {
  auto b = PfnBackbone::initialize(small(), 11);
  b.head_weight.set_requires_grad(false);
  const auto path = scratch("backbone.ckpt");
  save_backbone(path, b, {{"seed", "11"}});
  CheckpointMetadata meta;
  auto loaded = load_backbone(path, &meta);
  EXPECT_EQ(loaded.config, b.config);
  EXPECT_EQ(meta.at("seed"), "11");
  expect_same_params(b.parameters(), loaded.parameters());
  EXPECT_EQ(checkpoint_kind(path), "backbone");
}

TEST(Checkpoint, SameModelGivesIdenticalBytes) {
  const auto p1 = scratch("a.ckpt"), p2 = scratch("b.ckpt");
  save_backbone(p1, PfnBackbone::initialize(small(), 4));
  save_backbone(p2, PfnBackbone::initialize(small(), 4));
  EXPECT_EQ(bytes(p1), bytes(p2));
}

TEST(Checkpoint, FinetunedRoundTripKeepsSchemaAndFlags) {
  for (Variant v : {Variant::full, Variant::no_identifiers}) {
    auto m = toy_finetuned(v);
    const auto path = scratch("ft.ckpt");
    save_finetuned(path, m, v);
    Variant loaded_variant{};
    auto l = load_finetuned(path, &loaded_variant);
    EXPECT_EQ(loaded_variant, v);
    EXPECT_EQ(l.classes, m.classes);
    EXPECT_EQ(l.fitted.stats.means, m.fitted.stats.means);
    EXPECT_EQ(l.fitted.schema.vocabularies(), m.fitted.schema.vocabularies());
    EXPECT_EQ(l.tokenizer.table().offsets(), m.tokenizer.table().offsets());
    EXPECT_EQ(l.tokenizer.identifiers() != nullptr, v == Variant::full);
    EXPECT_FALSE(l.tokenizer.numerical_weights().requires_grad());
    expect_same_params(m.all_parameters(), l.all_parameters());
    EXPECT_EQ(checkpoint_kind(path), "finetuned");
  }
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  const auto junk = scratch("junk.ckpt");
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_THROW(load_backbone(junk), ParseError);
  EXPECT_THROW(load_backbone(scratch("missing.ckpt")), ParseError);

  const auto good = scratch("good.ckpt");
  save_backbone(good, PfnBackbone::initialize(small(), 1));
  auto data = bytes(good);
  const auto cut = scratch("cut.ckpt");
  std::ofstream(cut, std::ios::binary) << data.substr(0, data.size() - 9);
  EXPECT_THROW(load_backbone(cut), ParseError);
  EXPECT_THROW(load_finetuned(good), ParseError);
}

}  // namespace
