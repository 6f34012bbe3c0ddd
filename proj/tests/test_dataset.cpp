#include <gtest/gtest.h>

#include "probetraj/binary_io.hpp"
#include "probetraj/dataset.hpp"
#include "probetraj/digest.hpp"
#include "probetraj/errors.hpp"
#include "probetraj/synth.hpp"
#include "test_util.hpp"

using namespace probetraj;
using probetraj::testing::random_dataset;

namespace {

ActivationDataset one_record() {
  ActivationDataset ds;
  ds.dim = 3;
  Matrix s(2, 3);
  s << 1, 2, 3, 4, 5, 6;
  ds.records.push_back(probetraj::testing::make_record(s, Label::kHarmful, "sorry"));
  return ds;
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kArgument;
}

}  // namespace

TEST(Dataset, EmptyDatasetHasTwentyByteHeader) {
  ActivationDataset ds;
  ds.dim = 4;
  const auto bytes = encode_dataset(ds);
  EXPECT_EQ(bytes.size(), 20u);
  const auto back = decode_dataset(bytes);
  EXPECT_EQ(back.records.size(), 0u);
  EXPECT_EQ(back.dim, 4u);
}

TEST(Dataset, SingleRecordRoundTrip) {
  const auto dir = probetraj::testing::scratch("single");
  const auto ds = one_record();
  save_dataset(ds, dir / "a.hst");
  const auto back = load_dataset(dir / "a.hst");
  ASSERT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.records[0].label, Label::kHarmful);
  EXPECT_EQ(back.records[0].source, "sorry");
  EXPECT_EQ(back.records[0].states(1, 2), 6.0);
  EXPECT_EQ(back, ds);
}

TEST(Dataset, SavingTwiceGivesSameDigest) {
  const auto dir = probetraj::testing::scratch("digest");
  Rng rng(5);
  const auto ds = random_dataset(rng, 100, 6);
  save_dataset(ds, dir / "a.hst");
  save_dataset(ds, dir / "b.hst");
  EXPECT_EQ(sha256_file(dir / "a.hst"), sha256_file(dir / "b.hst"));
}

TEST(Dataset, RandomRoundTripsAreIdentity) {
  Rng rng(11);
  for (int i = 0; i < 30; ++i) {
    const auto ds = random_dataset(rng, uniform_int(rng, 0, 20), static_cast<std::uint32_t>(uniform_int(rng, 1, 9)));
    EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds) << "case " << i;
  }
}

TEST(Dataset, SplitTagAndLayerTagSurvive) {
  auto ds = one_record();
  ds.split = SplitTag::kTrain;
  ds.layer_tag = "L14";
  const auto back = decode_dataset(encode_dataset(ds));
  EXPECT_EQ(back.split, SplitTag::kTrain);
  EXPECT_EQ(back.layer_tag, "L14");
}

TEST(Dataset, AlteredMagicIsFormatError) {
  auto bytes = encode_dataset(one_record());
  bytes[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_dataset(bytes); }), ErrorKind::kFormat);
}

TEST(Dataset, WrongVersionIsFormatError) {
  auto bytes = encode_dataset(one_record());
  bytes[4] = 2;
  EXPECT_EQ(kind_of([&] { decode_dataset(bytes); }), ErrorKind::kFormat);
}

TEST(Dataset, TruncationIsCorruptionWithOffset) {
  const auto full = encode_dataset(one_record());
  for (std::size_t cut = 21; cut < full.size(); ++cut) {
    std::vector<std::uint8_t> part(full.begin(), full.begin() + static_cast<long>(cut));
    try {
      decode_dataset(part);
      FAIL() << "accepted a file cut at " << cut;
    } catch (const CorruptionError& e) {
      EXPECT_LE(e.byte_offset(), cut);
    }
  }
}

TEST(Dataset, DeclaredCountMustMatchPayload) {
  auto bytes = encode_dataset(one_record());
  bytes[12] = 2;  // claims two records
  EXPECT_THROW(decode_dataset(bytes), CorruptionError);
  bytes[12] = 0;  // claims none, leaving a trailing record
  EXPECT_THROW(decode_dataset(bytes), CorruptionError);
}

TEST(Dataset, NonFiniteStateNamesTheRecord) {
  auto ds = one_record();
  ds.records.push_back(ds.records[0]);
  auto bytes = encode_dataset(ds);
  // last f32 of the second record
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
  try {
    decode_dataset(bytes);
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_EQ(e.record_index(), 1u);
  }
}

TEST(Dataset, ValidationRejectsBadRecords) {
  auto ds = one_record();
  ds.records[0].token_ids = std::vector<std::uint32_t>{1};
  EXPECT_THROW(validate_dataset(ds), RecordError);
  ds = one_record();
  ds.records[0].user_window = TokenWindow{1, 1};
  EXPECT_THROW(validate_dataset(ds), RecordError);
  ds = one_record();
  ds.records[0].user_window = TokenWindow{0, 3};
  EXPECT_THROW(validate_dataset(ds), RecordError);
  ds = one_record();
  ds.dim = 4;
  EXPECT_THROW(validate_dataset(ds), RecordError);
}

TEST(Dataset, FailedSaveLeavesNothing) {
  const auto dir = probetraj::testing::scratch("failed_save");
  auto ds = one_record();
  ds.records[0].states(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(save_dataset(ds, dir / "x.hst"), RecordError);
  EXPECT_TRUE(std::filesystem::is_empty(dir));
  EXPECT_THROW(save_dataset(one_record(), dir / "missing" / "x.hst"), Error);
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([] { load_dataset("/nonexistent/file.hst"); }), ErrorKind::kIo);
}

TEST(Filter, LabelFilterKeepsOrder) {
  ActivationDataset ds;
  ds.dim = 1;
  for (auto [l, s] : {std::pair{Label::kHarmful, "a"}, {Label::kBenign, "b"}, {Label::kHarmful, "c"}}) {
    ds.records.push_back(probetraj::testing::make_record(Matrix::Constant(1, 1, 1.0), l, s));
  }
  const auto h = filter_records(ds, Label::kHarmful);
  ASSERT_EQ(h.records.size(), 2u);
  EXPECT_EQ(h.records[0].source, "a");
  EXPECT_EQ(h.records[1].source, "c");
  EXPECT_TRUE(filter_records(ds, std::nullopt, "xstest").records.empty());
}

TEST(Filter, SyntheticCountsMatchConfig) {
  SynthConfig c;
  c.counts = {7, 11, 5, 3};
  const auto ds = generate(c);
  EXPECT_EQ(filter_records(ds, Label::kBenign, "synth_benign").records.size(), 11u);
  EXPECT_EQ(filter_records(ds, Label::kBenign).records.size() + filter_records(ds, Label::kHarmful).records.size(),
            ds.records.size());
}
