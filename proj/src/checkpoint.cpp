#include "fttab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "fttab/errors.hpp"

namespace fttab {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'F', 'T', 'T', 'A', 'B', 'P', 'F', 'N'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Loaded {
  json header;
  std::map<std::string, Tensor> tensors;
};

json config_json(const ModelConfig& c) {
  return {{"d", c.d},           {"layers", c.layers},           {"heads", c.heads},
          {"ff_dim", c.ff_dim}, {"max_classes", c.max_classes}, {"max_features", c.max_features}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_classes = j.at("max_classes").get<std::size_t>();
  c.max_features = j.at("max_features").get<std::size_t>();
  c.validate();
  return c;
}

void write_file(const std::filesystem::path& path, json header, const ParameterList& params) {
  json dir = json::array();
  for (const auto& p : params) {
    dir.push_back({{"name", p.name},
                   {"shape", p.tensor.shape()},
                   {"frozen", !p.tensor.requires_grad()},
                   {"frozen_rows", p.frozen_rows}});
  }
  header["tensors"] = std::move(dir);
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto d = p.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!out) throw ParseError("failed writing " + path.string());
}

json read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path.string() + " is not a checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || version != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (!in.read(reinterpret_cast<char*>(&length), sizeof length) || length > (1ULL << 32)) {
    throw ParseError(path.string() + ": corrupt header length");
  }
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw ParseError(path.string() + ": truncated header");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  }
}

Loaded read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  Loaded l;
  l.header = read_header(in, path);
  try {
    for (const auto& entry : l.header.at("tensors")) {
      const auto shape = entry.at("shape").get<Shape>();
      std::size_t n = 1;
      for (auto s : shape) n *= s;
      std::vector<double> values(n);
      if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
        throw ParseError(path.string() + ": truncated tensor data");
      }
      Tensor t(shape, std::move(values), !entry.at("frozen").get<bool>());
      l.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad tensor directory: " + e.what());
  }
  return l;
}

// Copies loaded values into the tensors of `params` by name.
void assign(const ParameterList& params, const Loaded& l, const std::filesystem::path& path) {
  for (const auto& p : params) {
    auto it = l.tensors.find(p.name);
    if (it == l.tensors.end()) throw ParseError(path.string() + ": missing tensor " + p.name);
    if (it->second.shape() != p.tensor.shape()) {
      throw ParseError(path.string() + ": tensor " + p.name + " has shape " + shape_string(it->second.shape()) +
                       ", expected " + shape_string(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    auto src = it->second.data();
    auto dst = t.data();
    std::copy(src.begin(), src.end(), dst.begin());
    t.set_requires_grad(it->second.requires_grad());
  }
}

CheckpointMetadata metadata_from(const json& header) {
  CheckpointMetadata m;
  if (header.contains("metadata")) m = header.at("metadata").get<CheckpointMetadata>();
  return m;
}

PfnBackbone backbone_from(const Loaded& l, const std::filesystem::path& path) {
  auto backbone = PfnBackbone::initialize(config_from(l.header.at("model")), 0);
  assign(backbone.parameters(), l, path);
  return backbone;
}

}  // namespace

void save_backbone(const std::filesystem::path& path, const PfnBackbone& backbone, const CheckpointMetadata& metadata) {
  json header = {{"kind", "backbone"}, {"model", config_json(backbone.config)}, {"metadata", metadata}};
  write_file(path, std::move(header), backbone.parameters());
}

PfnBackbone load_backbone(const std::filesystem::path& path, CheckpointMetadata* metadata) {
  const auto l = read_file(path);
  try {
    if (metadata) *metadata = metadata_from(l.header);
    return backbone_from(l, path);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  }
}

void save_finetuned(const std::filesystem::path& path, const FtModel& model, Variant variant,
                    const CheckpointMetadata& metadata) {
  const auto& schema = model.fitted.schema;
  json columns = json::array();
  for (const auto& c : schema.columns()) {
    columns.push_back({{"name", c.name}, {"kind", c.kind == FeatureKind::numerical ? "numerical" : "categorical"}});
  }
  json header = {{"kind", "finetuned"},
                 {"model", config_json(model.backbone.config)},
                 {"metadata", metadata},
                 {"variant", variant_name(variant)},
                 {"classes", model.classes},
                 {"schema",
                  {{"columns", columns},
                   {"vocabularies", schema.vocabularies()},
                   {"means", model.fitted.stats.means},
                   {"stds", model.fitted.stats.stds}}}};
  write_file(path, std::move(header), model.all_parameters());
}

FtModel load_finetuned(const std::filesystem::path& path, Variant* variant, CheckpointMetadata* metadata) {
  const auto l = read_file(path);
  try {
    if (l.header.at("kind") != "finetuned") throw ParseError(path.string() + " is not a fine-tuned checkpoint");
    if (metadata) *metadata = metadata_from(l.header);
    const Variant v = parse_variant(l.header.at("variant").get<std::string>());
    if (variant) *variant = v;
    FtModel m;
    m.backbone = backbone_from(l, path);
    const auto& s = l.header.at("schema");
    std::vector<ColumnSpec> columns;
    for (const auto& c : s.at("columns")) {
      columns.push_back({c.at("name").get<std::string>(),
                         c.at("kind") == "numerical" ? FeatureKind::numerical : FeatureKind::categorical});
    }
    m.fitted.schema = FeatureSchema(columns, s.at("vocabularies").get<std::vector<std::vector<std::string>>>());
    m.fitted.stats.means = s.at("means").get<std::vector<double>>();
    m.fitted.stats.stds = s.at("stds").get<std::vector<double>>();
    m.classes = l.header.at("classes").get<std::vector<std::string>>();

    auto get = [&](const std::string& name) -> Tensor {
      auto it = l.tensors.find(name);
      if (it == l.tensors.end()) throw ParseError(path.string() + ": missing tensor " + name);
      return it->second;
    };
    std::vector<std::size_t> offsets, sizes;
    std::size_t next = 1;
    for (const auto& vocab : m.fitted.schema.vocabularies()) {
      offsets.push_back(next);
      sizes.push_back(vocab.size());
      next += vocab.size();
    }
    CategoricalTokenTable table(get("ft.category_table"), offsets, sizes);
    std::optional<FeatureIdentifiers> ids;
    if (l.tensors.count("ft.identifiers")) ids = FeatureIdentifiers{get("ft.identifiers")};
    m.tokenizer = FeatureTokenizer(get("ft.numerical_weights"), std::move(table), std::move(ids));
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  } catch (const SchemaError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const auto header = read_header(in, path);
  if (!header.contains("kind") || !header.at("kind").is_string()) throw ParseError(path.string() + ": no kind");
  return header.at("kind").get<std::string>();
}

}  // namespace fttab
