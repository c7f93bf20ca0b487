#include <doctest.h>

#include "mvl/checkpoint.hpp"
#include "mvl/errors.hpp"
#include "test_util.hpp"

using namespace mvl;
using mvl::testing::read_file;
using mvl::testing::TempDir;
using mvl::testing::write_file;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder.image_size = 16;
  c.encoder.patch_size = 8;
  c.encoder.d_vision = 8;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.lm.d_model = 16;
  c.lm.n_layers = 1;
  c.lm.n_heads = 2;
  c.lm.context_length = 64;
  c.seed = 4;
  return c;
}

ErrorKind load_kind(const std::filesystem::path& path) {
  try {
    load_checkpoint(path);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kContract;
}

}  // namespace

TEST_CASE("save, load, save is byte identical and keeps the header") {
  TempDir dir("ckpt");
  const auto model = MultimodalModel<float>::init(tiny_config());
  CheckpointMeta meta{2, 123, 77, {{"final_loss", 0.25}}};
  save_checkpoint(dir / "a.ckpt", model, meta);
  CheckpointMeta loaded_meta;
  const auto loaded = load_checkpoint(dir / "a.ckpt", &loaded_meta);
  CHECK(loaded_meta == meta);
  CHECK(loaded.config() == model.config());
  save_checkpoint(dir / "b.ckpt", loaded, loaded_meta);
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));

  const auto a = model.named_parameters();
  const auto b = loaded.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
}

TEST_CASE("loading into a different config is rejected") {
  TempDir dir("ckpt");
  save_checkpoint(dir / "a.ckpt", MultimodalModel<float>::init(tiny_config()), {});
  auto other = tiny_config();
  other.lm.d_model = 32;
  auto model = MultimodalModel<float>::init(other);
  try {
    load_into(model, dir / "a.ckpt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  // A different seed is the same architecture.
  auto reseeded = tiny_config();
  reseeded.seed = 99;
  auto same = MultimodalModel<float>::init(reseeded);
  CHECK_NOTHROW(load_into(same, dir / "a.ckpt"));
}

TEST_CASE("corrupt files are format errors") {
  TempDir dir("ckpt");
  save_checkpoint(dir / "a.ckpt", MultimodalModel<float>::init(tiny_config()), {});
  const auto bytes = read_file(dir / "a.ckpt");

  write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 7));
  CHECK(load_kind(dir / "trunc.ckpt") == ErrorKind::kCheckpointFormat);

  write_file(dir / "long.ckpt", bytes + "x");
  CHECK(load_kind(dir / "long.ckpt") == ErrorKind::kCheckpointFormat);

  std::string bad = bytes;
  bad[0] = 'X';
  write_file(dir / "magic.ckpt", bad);
  CHECK(load_kind(dir / "magic.ckpt") == ErrorKind::kCheckpointFormat);

  write_file(dir / "tiny.ckpt", "MV");
  CHECK(load_kind(dir / "tiny.ckpt") == ErrorKind::kCheckpointFormat);

  CHECK(load_kind(dir / "absent.ckpt") == ErrorKind::kIo);
}

TEST_CASE("config json round trip") {
  auto cfg = tiny_config();
  cfg.projector = ProjectorVariant::kLinear;
  cfg.lm.tie_embeddings = true;
  CHECK(config_from_json(config_to_json(cfg)) == cfg);
}
