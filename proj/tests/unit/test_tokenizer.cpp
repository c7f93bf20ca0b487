#include <doctest.h>

#include <string>
#include <vector>

#include "mvl/errors.hpp"
#include "mvl/rng.hpp"
#include "mvl/tokenizer.hpp"

using namespace mvl;

namespace {

std::vector<TokenId> bytes_of(std::string_view s) {
  std::vector<TokenId> out;
  for (unsigned char c : s) out.push_back(vocab::kByteOffset + c);
  return out;
}

ConversationSample dialog(std::vector<Turn> turns, bool with_image) {
  ConversationSample s;
  s.id = "t";
  s.language = "en";
  s.turns = std::move(turns);
  if (with_image) s.image = ImageRef::from_path("x.ppm");
  return s;
}

}  // namespace

TEST_CASE("encode") {
  CHECK(encode("").empty());
  CHECK(encode("ab") == std::vector<TokenId>{101, 102});
}

TEST_CASE("decode") {
  CHECK(decode(std::vector<TokenId>{}).empty());
  CHECK(decode(std::vector<TokenId>{101, 102}) == "ab");
  try {
    decode(std::vector<TokenId>{260});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kVocabulary);
  }
}

TEST_CASE("decode(encode(s)) round-trips valid UTF-8") {
  for (std::string s : {"", "hello", "తెలుగు", "a\nb\tc", "mixed हिन्दी text 123", "\xF0\x9F\x98\x80"}) {
    CHECK(decode(encode(s)) == s);
  }
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(0x20 + rng.below(0x5F)));
    CHECK(decode(encode(s)) == s);
  }
}

TEST_CASE("decode replaces invalid byte sequences") {
  const auto text = decode(bytes_of("a\xFF" "b"));
  CHECK(text == "a\xEF\xBF\xBD" "b");
}

TEST_CASE("single-turn caption render masks caption bytes and EOS only") {
  const auto s = dialog({{Role::kUser, "<image>\nDescribe."}, {Role::kAssistant, "a red square"}}, true);
  const auto r = render_conversation(s, true);

  std::vector<TokenId> expect{vocab::kBos};
  auto append = [&](std::string_view t) {
    const auto b = bytes_of(t);
    expect.insert(expect.end(), b.begin(), b.end());
  };
  append("USER: ");
  const std::size_t slot = expect.size();
  expect.push_back(vocab::kImg);
  append("\nDescribe.\nASSISTANT: ");
  const std::size_t caption_begin = expect.size();
  append("a red square");
  expect.push_back(vocab::kEos);

  CHECK(r.ids == expect);
  REQUIRE(r.image_slot.has_value());
  CHECK(*r.image_slot == slot);
  REQUIRE(r.loss_mask.size() == expect.size());
  std::size_t supervised = 0;
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(r.loss_mask[i] == (i >= caption_begin ? 1 : 0));
    supervised += r.loss_mask[i];
  }
  CHECK(supervised == 13);
}

TEST_CASE("image without placeholder goes at the start of the first user turn") {
  const auto s = dialog({{Role::kUser, "Describe."}, {Role::kAssistant, "ok"}}, true);
  const auto r = render_conversation(s, true);
  REQUIRE(r.image_slot.has_value());
  CHECK(*r.image_slot == 1 + std::string("USER: ").size());
}

TEST_CASE("text-only sample has no image slot and the same masking law") {
  const auto s = dialog({{Role::kUser, "hi"}, {Role::kAssistant, "yo"}}, false);
  const auto r = render_conversation(s, true);
  CHECK_FALSE(r.image_slot.has_value());
  std::size_t supervised = 0;
  for (auto m : r.loss_mask) supervised += m;
  CHECK(supervised == 3);
  CHECK(r.ids.back() == vocab::kEos);
  CHECK(r.loss_mask.back() == 1);
}

TEST_CASE("two-turn dialog has two supervised spans separated by zeros") {
  const auto s = dialog({{Role::kUser, "<image>\nq1"},
                         {Role::kAssistant, "a1"},
                         {Role::kUser, "q2"},
                         {Role::kAssistant, "a2"}},
                        true);
  const auto r = render_conversation(s, true);
  std::size_t spans = 0;
  for (std::size_t i = 0; i < r.loss_mask.size(); ++i) {
    if (r.loss_mask[i] == 1 && (i == 0 || r.loss_mask[i - 1] == 0)) ++spans;
  }
  CHECK(spans == 2);
  std::size_t supervised = 0;
  for (auto m : r.loss_mask) supervised += m;
  CHECK(supervised == 6);
}

TEST_CASE("generation prompt drops the final answer and ends with the assistant tag") {
  const auto s = dialog({{Role::kUser, "q"}, {Role::kAssistant, "a"}}, false);
  const auto r = render_conversation(s, false);
  const auto tail = bytes_of("ASSISTANT: ");
  REQUIRE(r.ids.size() > tail.size());
  CHECK(std::vector<TokenId>(r.ids.end() - static_cast<std::ptrdiff_t>(tail.size()), r.ids.end()) == tail);
  for (auto m : r.loss_mask) CHECK(m == 0);
}

TEST_CASE("system prompt is rendered after BOS and never supervised") {
  const auto s = dialog({{Role::kUser, "q"}, {Role::kAssistant, "a"}}, false);
  const auto r = render_conversation(s, true, RenderOptions{"be brief"});
  const auto sys = bytes_of("SYSTEM: be brief\n");
  CHECK(std::vector<TokenId>(r.ids.begin() + 1, r.ids.begin() + 1 + static_cast<std::ptrdiff_t>(sys.size())) == sys);
  for (std::size_t i = 0; i <= sys.size(); ++i) CHECK(r.loss_mask[i] == 0);
}

TEST_CASE("schema violations") {
  SUBCASE("assistant first") {
    CHECK_THROWS_AS(render_conversation(dialog({{Role::kAssistant, "a"}}, false), true), Error);
  }
  SUBCASE("placeholder without an image") {
    try {
      render_conversation(dialog({{Role::kUser, "<image> q"}, {Role::kAssistant, "a"}}, false), true);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kSchema);
    }
  }
  SUBCASE("two placeholders") {
    try {
      render_conversation(dialog({{Role::kUser, "<image><image>"}, {Role::kAssistant, "a"}}, true), true);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUnsupportedModality);
    }
  }
  SUBCASE("no turns") {
    CHECK_THROWS_AS(render_conversation(dialog({}, false), true), Error);
  }
}
