#include <doctest.h>

#include <cmath>
#include <vector>

#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/model.hpp"
#include "mvl/trainer.hpp"

using namespace mvl;

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
  c.lm.context_length = 128;
  c.seed = 3;
  return c;
}

ConversationSample caption_sample(const std::string& id, const std::string& caption) {
  ProceduralImage spec{"square", "red", 1, 1, 0, 0, 6};
  return caption_to_single_turn(id, ImageRef::from_spec(spec), caption, "en");
}

}  // namespace

TEST_CASE("assembled length arithmetic") {
  RenderedSample r;
  r.ids.assign(10, 50);
  r.loss_mask.assign(10, 0);
  r.image_slot = 3;
  CHECK(assembled_length(r, 36) == 45);
  r.image_slot.reset();
  CHECK(assembled_length(r, 36) == 10);
  // 576 visual tokens at context 4096 leave 3520 text positions.
  r.ids.assign(3521, 50);
  r.image_slot = 0;
  CHECK(assembled_length(r, 576) == 4096);
}

TEST_CASE("assembly splices visual rows at the image slot") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  const auto prepared = prepare_samples(std::vector{caption_sample("a", "a red square")}, model.config());
  const auto& r = prepared[0].rendered;
  const auto seq = assemble(model, r, prepared[0].image.get());
  const std::size_t count = model.config().encoder.token_count();
  CHECK(seq.ids.size() == r.ids.size() - 1 + count);
  CHECK(seq.embeddings.shape() == Shape{seq.ids.size(), 16});
  CHECK(seq.visual_begin == *r.image_slot);
  CHECK(seq.visual_count == count);
  for (std::size_t i = 0; i < count; ++i) {
    CHECK(seq.ids[seq.visual_begin + i] == vocab::kImg);
    CHECK(seq.loss_mask[seq.visual_begin + i] == 0);
  }
}

TEST_CASE("text-only sample assembles to its text rows") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  ConversationSample s;
  s.id = "t";
  s.language = "en";
  s.turns = {{Role::kUser, "hi"}, {Role::kAssistant, "there"}};
  const auto r = render_conversation(s, true);
  const auto seq = assemble<float>(model, r, nullptr);
  CHECK(seq.ids == r.ids);
  CHECK(seq.visual_count == 0);
}

TEST_CASE("over-budget samples fail before encoding") {
  auto cfg = tiny_config();
  cfg.lm.context_length = 16;
  const auto model = MultimodalModel<float>::init(cfg);
  try {
    prepare_samples(std::vector{caption_sample("long", "a red square in the middle of the picture")}, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContextOverflow);
    CHECK(std::string(e.what()).find("long") != std::string::npos);
  }
}

TEST_CASE("untrained loss is close to ln(vocab)") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  const auto prepared = prepare_samples(std::vector{caption_sample("a", "a red square")}, model.config());
  const double loss = forward_sample(model, prepared[0]).loss.item();
  CHECK(std::abs(loss - std::log(260.0)) < 0.05 * std::log(260.0));
}

TEST_CASE("duplicating every sample leaves the batch loss unchanged") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  const auto one = prepare_samples(std::vector{caption_sample("a", "a red square"), caption_sample("b", "blue")},
                                   model.config());
  std::vector<PreparedSample> doubled{one[0], one[1], one[0], one[1]};
  const double l1 = compute_loss<float>(model, one).item();
  const double l2 = compute_loss<float>(model, doubled).item();
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-6));
}

TEST_CASE("visual-position logit rows get zero gradient") {
  auto model = MultimodalModel<float>::init(tiny_config());
  model.set_requires_grad(ParamGroup::kProjector, true);
  const auto prepared = prepare_samples(std::vector{caption_sample("a", "a red square")}, model.config());
  auto fwd = forward_sample(model, prepared[0]);
  backward(fwd.loss);
  REQUIRE(fwd.logits.has_grad());
  const std::size_t v = fwd.logits.cols();
  const std::size_t begin = *prepared[0].rendered.image_slot;
  for (std::size_t t = begin; t < begin + model.config().encoder.token_count(); ++t)
    for (std::size_t j = 0; j < v; ++j) REQUIRE(fwd.logits.grad()[t * v + j] == 0.0f);
}

TEST_CASE("sample without supervision is rejected by name") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  ConversationSample s;
  s.id = "quiet";
  s.language = "en";
  s.turns = {{Role::kUser, "hi"}};
  const auto r = render_conversation(s, true);
  PreparedSample p{"quiet", r, nullptr};
  try {
    forward_sample<float>(model, p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptySupervision);
    CHECK(std::string(e.what()).find("quiet") != std::string::npos);
  }
}

TEST_CASE("answer") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  const auto img = preprocess(render_procedural({"circle", "blue", 0, 2, 0, 0, 6}), 16);
  CHECK(answer(model, &img, "What is this?", 0).empty());
  const auto a = answer(model, &img, "What is this?", 8);
  CHECK(a == answer(model, &img, "What is this?", 8));
  CHECK(a == answer(model, &img, "<image>\nWhat is this?", 8));
}

TEST_CASE("parameter groups are disjoint and cover every parameter") {
  const auto model = MultimodalModel<float>::init(tiny_config());
  const auto all = model.named_parameters();
  std::size_t total = 0;
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kProjector, ParamGroup::kLm}) {
    for (const auto& p : model.parameters(g)) {
      CHECK(p.name.rfind(std::string(to_string(g)) + ".", 0) == 0);
      ++total;
    }
  }
  CHECK(total == all.size());
}

TEST_CASE("model config validation") {
  auto cfg = tiny_config();
  cfg.lm.context_length = cfg.encoder.token_count() + 1;
  try {
    cfg.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContextOverflow);
  }
  cfg = tiny_config();
  cfg.lm.n_heads = 3;
  CHECK_THROWS_AS(MultimodalModel<float>::init(cfg), Error);
}
