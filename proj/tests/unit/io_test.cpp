#include <gtest/gtest.h>

#include <tiffio.h>

#include "denseed/io/container.hpp"
#include "denseed/io/kv.hpp"
#include "denseed/io/png.hpp"
#include "denseed/io/tiff.hpp"
#include "test_util.hpp"

using namespace denseed;
using namespace denseed::io;

TEST(KeyValues, ParsesCommentsAndOverrides) {
  const auto kv = parse_key_values("# header\n\nlr = 3e-4  # inline\nepochs=10\nepochs = 20\n");
  EXPECT_EQ(kv.get("lr").value(), "3e-4");
  EXPECT_EQ(kv.get("epochs").value(), "20");
  EXPECT_FALSE(kv.contains("batch_size"));
  EXPECT_EQ(kv.entries.size(), 2u);
}

TEST(KeyValues, LineWithoutEqualsIsFormatError) {
  try {
    parse_key_values("lr 3e-4\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
  }
}

TEST(KeyValues, RoundTripsThroughText) {
  KeyValues kv;
  kv.set("a", "1");
  kv.set("b", "x,y");
  const auto back = parse_key_values(kv.str());
  EXPECT_EQ(back.entries, kv.entries);
}

TEST(Checksum, KnownCrc32) { EXPECT_EQ(hex32(crc32_of("123456789")), "cbf43926"); }

TEST(Container, RoundTrip) {
  Container c;
  c.add<float>("w", {2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  c.add("steps", std::vector<std::int64_t>{7});
  c.add_text("note", "hello");
  const auto bytes = c.serialize();
  const auto back = Container::parse(bytes);
  EXPECT_EQ(back.entries, c.entries);
  EXPECT_EQ(back.get<float>("w")[5], 6.0f);
  EXPECT_EQ(back.get_text("note"), "hello");
  EXPECT_EQ(back.at("w").offset, c.at("w").offset);
}

TEST(Container, TruncationAndWrongTypeAreIntegrityErrors) {
  Container c;
  c.add("x", std::vector<double>{1.0, 2.0});
  const auto bytes = c.serialize();
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{3}}) {
    try {
      Container::parse(std::string_view(bytes).substr(0, cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::integrity);
    }
  }
  try {
    Container::parse(bytes).get<float>("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::integrity);
  }
}

TEST(Tiff, SixteenBitMultiPageRoundTrip) {
  testutil::TempDir dir;
  std::vector<Image<std::uint16_t>> pages = {testutil::random_u16(5, 7, 1), testutil::random_u16(5, 7, 2)};
  write_tiff16(dir / "s.tif", pages);
  EXPECT_EQ(read_tiff_pages(dir / "s.tif"), pages);
}

TEST(Tiff, EightBitIsWidenedUnscaled) {
  testutil::TempDir dir;
  const auto path = dir / "g8.tif";
  TIFF* t = TIFFOpen(path.c_str(), "w");
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, 3);
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, 1);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 8);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  std::uint8_t row[3] = {0, 7, 255};
  TIFFWriteScanline(t, row, 0, 0);
  TIFFClose(t);
  const auto img = read_tiff(path);
  EXPECT_EQ(img.pixels, (std::vector<std::uint16_t>{0, 7, 255}));
}

TEST(Tiff, RgbIsFormatError) {
  testutil::TempDir dir;
  const auto path = dir / "rgb.tif";
  TIFF* t = TIFFOpen(path.c_str(), "w");
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, 2);
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, 1);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 3);
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 8);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_RGB);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  std::uint8_t row[6] = {};
  TIFFWriteScanline(t, row, 0, 0);
  TIFFClose(t);
  try {
    read_tiff(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
  }
}

TEST(Tiff, MissingFileIsIoError) {
  try {
    read_tiff("/nonexistent/x.tif");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
}

TEST(Png, WritesDeterministicBytes) {
  testutil::TempDir dir;
  Image<std::uint8_t> img(4, 6);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 10);
  write_png(dir / "a.png", img);
  write_png(dir / "b.png", img);
  const auto a = read_file(dir / "a.png");
  EXPECT_EQ(a.substr(1, 3), "PNG");
  EXPECT_EQ(a, read_file(dir / "b.png"));
}
