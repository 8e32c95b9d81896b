#include <gtest/gtest.h>

#include <filesystem>

#include "llpf/io.hpp"

using namespace llpf;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Checkpoint, RoundTripWithBuffers) {
  const auto g = make_model("resnet-micro", {1, 6, 6}, 3);
  auto s = init_state<float>(g, 4);
  for (std::size_t i = 0; i < s.buffers.size(); ++i) s.buffers[i] = 0.25f * i;
  const auto bytes = encode_checkpoint(g, s);
  EXPECT_EQ(bytes.substr(0, 4), "LLPF");
  EXPECT_EQ(decode_checkpoint<float>(g, bytes), s);

  const auto wide = decode_checkpoint<double>(g, bytes);
  EXPECT_EQ(wide.params, s.params.cast<double>());
}

TEST(Checkpoint, Errors) {
  const auto g = make_model("mlp2", {6, 1, 1}, 3);
  const auto bytes = encode_checkpoint(g, init_state<float>(g, 1));

  EXPECT_EQ(error_of([&] { decode_checkpoint<float>(g, "XXXX" + bytes.substr(4)); }),
            "not a checkpoint: bad magic at offset 0");

  const auto other = make_model("mlp2", {6, 1, 1}, 4);
  EXPECT_EQ(error_of([&] { decode_checkpoint<float>(other, bytes); }), "model/checkpoint mismatch");

  auto flipped = bytes;
  flipped[flipped.size() - 20] ^= 0x40;
  EXPECT_EQ(error_of([&] { decode_checkpoint<float>(g, flipped); }), "corrupt payload");

  const auto cut = bytes.substr(0, bytes.size() - 3);
  EXPECT_NE(error_of([&] { decode_checkpoint<float>(g, cut); }).find("truncated checkpoint at offset"),
            std::string::npos);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto g = make_model("mlp2", {6, 1, 1}, 3);
  const auto s = init_state<float>(g, 9);
  const auto path = std::filesystem::temp_directory_path() / "llpf_ckpt_test.ckpt";
  save_checkpoint(g, s, path);
  EXPECT_EQ(load_checkpoint<float>(g, path), s);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint<float>(g, path), ValidationError);
}

TEST(Csv, RoundTripWithQuoting) {
  Table t{{"a", "b,c", "q"}, {{"1", "x\"y", "line\nbreak"}, {"", "2.5", "plain"}}};
  const auto text = to_csv(t);
  EXPECT_NE(text.find("\r\n"), std::string::npos);
  EXPECT_NE(text.find("\"b,c\""), std::string::npos);
  EXPECT_NE(text.find("\"x\"\"y\""), std::string::npos);
  EXPECT_EQ(parse_csv(text), t);
}

TEST(Csv, AcceptsLfAndReportsLines) {
  const auto t = parse_csv("a,b\n1,2\n3,4\n");
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
  const auto msg = error_of([] { parse_csv("a,b\n1,2\n3\n"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_THROW(parse_csv(""), ValidationError);
  EXPECT_THROW(parse_csv("a\n\"open\n"), ValidationError);
}

TEST(Svg, LogScaleClampsNonPositive) {
  const std::vector<Series> s = {{"loss", {0, 1, 2, 3}, {1.0, 0.1, 0.0, -1.0}}};
  ChartOptions opt;
  opt.log_y = true;
  std::vector<std::string> warnings;
  const auto svg = render_svg(s, opt, &warnings);
  EXPECT_EQ(svg.rfind("<svg", 0) == 0 || svg.find("<svg") != std::string::npos, true);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("2 value(s)"), std::string::npos);

  opt.log_y = false;
  warnings.clear();
  render_svg(s, opt, &warnings);
  EXPECT_TRUE(warnings.empty());
}

TEST(Svg, TableSeriesSelectsColumns) {
  Table t{{"iteration", "dist:fc1.weight", "dist:fc2.weight", "test_loss"},
          {{"0", "3", "2", "0.1"}, {"1", "2", "1", "0.2"}}};
  const std::vector<std::string> cols = {"dist:fc1.weight", "dist:fc2.weight"};
  const auto series = table_series(t, "iteration", cols);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[1].name, "dist:fc2.weight");
  EXPECT_EQ(series[0].y, (std::vector<double>{3, 2}));
  const std::vector<std::string> bad = {"nope"};
  EXPECT_THROW(table_series(t, "iteration", bad), ValidationError);
}
