#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "stress/csv.hpp"
#include "stress/error.hpp"
#include "stress/format.hpp"

using namespace stress;

TEST(Format, ShortestDoubleRoundTrips) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(0.88 - 0.87), "0.010000000000000009");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
}

TEST(Format, FloatNineDigitsRoundTrips) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 5000; ++i) {
    const float v = u(rng);
    EXPECT_EQ(static_cast<float>(*parse_double(format_float(v))), v);
  }
  EXPECT_EQ(format_float(0.5f), "0.5");
}

TEST(Format, FixedDropsNegativeZero) {
  EXPECT_EQ(format_fixed(-0.0001, 2), "0.00");
  EXPECT_EQ(format_fixed(1.005, 1), "1.0");
  EXPECT_EQ(format_fixed(-2.5, 1), "-2.5");
}

TEST(Format, ParseRejectsJunk) {
  EXPECT_FALSE(parse_double(""));
  EXPECT_FALSE(parse_double("abc"));
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_EQ(*parse_double(" 2.5 "), 2.5);
  EXPECT_EQ(*parse_double("+3"), 3.0);
  EXPECT_EQ(*parse_int("-7"), -7);
  EXPECT_FALSE(parse_int("7.0"));
}

TEST(Format, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Csv, QuotedFieldsAndCrlf) {
  std::vector<std::size_t> lines;
  const auto rows = csv::parse("a,b,c\r\n\"x,1\",\"say \"\"hi\"\"\",\n\n\"multi\nline\",2,3\n", &lines);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "x,1");
  EXPECT_EQ(rows[1][1], "say \"hi\"");
  EXPECT_EQ(rows[1][2], "");
  EXPECT_EQ(rows[2][0], "multi\nline");
  EXPECT_EQ(lines, (std::vector<std::size_t>{1, 2, 4}));
}

TEST(Csv, UnterminatedQuoteIsAnError) {
  EXPECT_THROW(csv::parse("a\n\"open\n"), ManifestError);
}

TEST(Csv, WriteThenParseRoundTrips) {
  const std::vector<csv::Row> rows = {{"id", "note"}, {"a,b", "q\"uote"}, {"", "line\nbreak"}};
  std::ostringstream os;
  for (const auto& r : rows) csv::write_row(os, r);
  EXPECT_EQ(csv::parse(os.str()), rows);
  EXPECT_EQ(csv::escape("plain"), "plain");
  EXPECT_EQ(csv::escape("a,b"), "\"a,b\"");
}
