#include <gtest/gtest.h>

#include "probetraj/errors.hpp"
#include "probetraj/kv_config.hpp"

using namespace probetraj;

TEST(KvConfig, ParsesCommentsCaseAndDashes) {
  const auto kv = parse_kv_config("# header\n\nSeed = 7   # trailing\nPCA-Dim=16\n  widths = [4, 8] \n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"seed", "7"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"pca_dim", "16"}));
  EXPECT_EQ(kv[2].second, "[4, 8]");
}

TEST(KvConfig, LaterDuplicatesWin) {
  const auto kv = parse_kv_config("seed=1\nlr=0.1\nseed=2\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].second, "2");
}

TEST(KvConfig, MalformedLinesNameTheLine) {
  try {
    parse_kv_config("seed=1\nnonsense\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_kv_config(" = 3"), Error);
}

TEST(KvConfig, Lists) {
  EXPECT_EQ(split_list("[4, 8,16]"), (std::vector<std::string>{"4", "8", "16"}));
  EXPECT_EQ(split_list("a"), (std::vector<std::string>{"a"}));
  EXPECT_TRUE(split_list(" [ ] ").empty());
}

TEST(KvConfig, Numbers) {
  EXPECT_EQ(parse_u64("seed", "18446744073709551615"), 18446744073709551615ULL);
  EXPECT_EQ(parse_u32("w", "64"), 64u);
  EXPECT_DOUBLE_EQ(parse_real("lr", "1e-3"), 1e-3);
  EXPECT_THROW(parse_u64("seed", "-1"), Error);
  EXPECT_THROW(parse_u64("seed", "12x"), Error);
  EXPECT_THROW(parse_u32("w", "4294967296"), Error);
  EXPECT_THROW(parse_real("lr", "nan"), Error);
  EXPECT_THROW(parse_real("lr", ""), Error);
}

TEST(KvConfig, NormalizeKey) { EXPECT_EQ(normalize_key("  Max-Iter "), "max_iter"); }
