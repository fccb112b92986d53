#include <filesystem>
#include <fstream>
#include <regex>

#include <gtest/gtest.h>

#include "hicross/gui/boxes.hpp"
#include "hicross/gui/dataset.hpp"
#include "hicross/gui/font.hpp"
#include "hicross/gui/page.hpp"
#include "hicross/gui/render.hpp"
#include "hicross/numerics/rng.hpp"

using namespace hicross;
using namespace hicross::gui;

namespace {

const std::regex kBoxGrammar(R"(\[\[\d{3},\d{3},\d{3},\d{3}(;\d{3},\d{3},\d{3},\d{3})*\]\])");

BoxCoord random_box(Rng& rng) {
  int c[4];
  for (int& v : c) v = static_cast<int>(rng.uniform_int(0, 999));
  return {std::min(c[0], c[2]), std::min(c[1], c[3]), std::max(c[0], c[2]), std::max(c[1], c[3])};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hicross_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Boxes, NormalizeExamples) {
  EXPECT_EQ(normalize_box({0, 0, 1120, 1120}, 1120, 1120), (BoxCoord{0, 0, 999, 999}));
  EXPECT_EQ(format_boxes(normalize_box({0, 0, 640, 480}, 640, 480)), "[[000,000,999,999]]");
  EXPECT_EQ(format_boxes(normalize_box({112, 56, 224, 112}, 1120, 1120)), "[[100,050,200,100]]");
}

TEST(Boxes, NormalizeRejectsBadBoxes) {
  EXPECT_THROW(normalize_box({10, 0, 5, 5}, 100, 100), std::invalid_argument);
  EXPECT_THROW(normalize_box({0, 0, 101, 5}, 100, 100), std::invalid_argument);
  EXPECT_THROW(normalize_box({0, 0, 1, 1}, 0, 100), std::invalid_argument);
}

TEST(Boxes, RoundTripWithinOneBucket) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const int W = static_cast<int>(rng.uniform_int(1, 2000)), H = static_cast<int>(rng.uniform_int(1, 2000));
    int x0 = static_cast<int>(rng.uniform_int(0, W)), x1 = static_cast<int>(rng.uniform_int(0, W));
    int y0 = static_cast<int>(rng.uniform_int(0, H)), y1 = static_cast<int>(rng.uniform_int(0, H));
    const PixelBox b{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
    const PixelBox d = denormalize_box(normalize_box(b, W, H), W, H);
    const double bx = W / 1000.0, by = H / 1000.0;
    for (auto [orig, back, bucket] : {std::tuple{b.left, d.left, bx}, std::tuple{b.right, d.right, bx},
                                      std::tuple{b.top, d.top, by}, std::tuple{b.bottom, d.bottom, by}}) {
      // the 999 clamp folds the last pixel column of the extent into its bucket
      EXPECT_LE(std::abs(orig - back), std::max(1.0, bucket) + (orig == W || orig == H ? 1 : 0))
          << orig << " -> " << back << " in " << W << "x" << H;
    }
  }
}

TEST(Boxes, GrammarHoldsOnGeneratedStrings) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    std::vector<BoxCoord> group;
    const auto n = rng.uniform_int(1, 4);
    for (int k = 0; k < n; ++k) group.push_back(random_box(rng));
    const auto s = format_boxes({group});
    ASSERT_TRUE(std::regex_match(s, kBoxGrammar)) << s;
    const auto back = parse_boxes(s);
    ASSERT_EQ(back.size(), 1u);
    ASSERT_EQ(back[0], group);
  }
}

TEST(Boxes, FormatExamples) {
  EXPECT_EQ(format_boxes(BoxCoord{13, 568, 802, 188}), "[[013,568,802,188]]");
  EXPECT_EQ(format_boxes({{BoxCoord{1, 2, 3, 4}, BoxCoord{5, 6, 7, 8}}}), "[[001,002,003,004;005,006,007,008]]");
  EXPECT_EQ(format_boxes({{BoxCoord{1, 2, 3, 4}}, {BoxCoord{5, 6, 7, 8}}}), "[[001,002,003,004]] [[005,006,007,008]]");
  EXPECT_THROW(format_boxes(std::vector<std::vector<BoxCoord>>{}), std::invalid_argument);
}

TEST(Boxes, ParseRejectsMalformed) {
  for (const std::string bad : {"", "[[1,2,3,4]]", "[[001,002,003]]", "[[001,002,003,004;]]", "[001,002,003,004]",
                                "[[001,002,003,004]]x", "hello", "[[001,002,003,0045]]"})
    EXPECT_THROW(parse_boxes(bad), BoxParseError) << bad;
}

TEST(Font, KnownGlyphs) {
  const auto& f = BitmapFont::instance();
  for (char c : std::string("ABCXYZ0189")) EXPECT_TRUE(f.has(c)) << c;
  EXPECT_TRUE(f.has('a'));
}

TEST(Render, Deterministic) {
  TextRenderSpec s;
  s.noise = 0.05;
  s.blur_radius = 0.6;
  s.rotation_deg = 10;
  s.runs = 3;
  const auto a = render_ocr_screen(s, 42), b = render_ocr_screen(s, 42);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.elements, b.elements);
  EXPECT_NE(render_ocr_screen(s, 43).image, a.image);
}

TEST(Render, CleanScreenIsExactComposite) {
  TextRenderSpec s;
  s.runs = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = render_ocr_detailed(s, seed);
    encoder::ImageGrid img(112, 112, 1, r.background);
    for (const auto& p : r.placements) composite(img, p.mask, p.x, p.y, r.foreground);
    EXPECT_EQ(img, r.screen.image);
  }
}

TEST(Render, LabelBoxesContainInk) {
  TextRenderSpec s;
  s.glyph_px = 6;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = render_ocr_detailed(s, seed);
    ASSERT_FALSE(r.screen.elements.empty());
    for (const auto& e : r.screen.elements) {
      int ink = 0;
      for (int y = e.box.top; y < e.box.bottom; ++y)
        for (int x = e.box.left; x < e.box.right; ++x)
          ink += r.screen.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) != r.background;
      EXPECT_GE(ink, 1) << "seed " << seed;
    }
  }
}

TEST(Render, EveryGlyphKeepsAllFiveColumnsAtSmallSizes) {
  for (int px : {6, 7, 8, 12}) {
    const auto m = draw_text("M", px);
    for (int col = 0; col < m.width; ++col) {
      bool any = false;
      for (int y = 0; y < m.height; ++y) any = any || m.at(col, y);
      EXPECT_TRUE(any) << "glyph px " << px << " column " << col;
    }
  }
}

TEST(Render, FixedAnchorPlacesFirstRun) {
  TextRenderSpec s;
  s.fixed_anchor = true;
  s.anchor_x = 5;
  s.anchor_y = 30;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sc = render_ocr_screen(s, seed);
    EXPECT_EQ(sc.elements.at(0).box.left, 5);
    EXPECT_EQ(sc.elements.at(0).box.top, 30);
  }
}

TEST(Render, RejectsTinyGlyphs) {
  TextRenderSpec s;
  s.glyph_px = 2;
  EXPECT_THROW(render_ocr_screen(s, 0), std::invalid_argument);
}

TEST(Page, CountsAndNoOverlap) {
  PageSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto& res = device_resolutions()[seed % device_resolutions().size()];
    const auto p = gen_page(seed, res, spec);
    EXPECT_GE(static_cast<int>(p.elements.size()), 1);
    EXPECT_LE(static_cast<int>(p.elements.size()), spec.max_elements);
    if (p.log.empty()) EXPECT_GE(static_cast<int>(p.elements.size()), spec.min_elements);
    for (std::size_t i = 0; i < p.elements.size(); ++i) {
      const auto& b = p.elements[i].box;
      EXPECT_TRUE(b.left >= 0 && b.top >= 0 && b.right <= res.width && b.bottom <= res.height);
      for (std::size_t j = i + 1; j < p.elements.size(); ++j) EXPECT_EQ(iou(b, p.elements[j].box), 0.0);
    }
  }
}

TEST(Page, HtmlRoundTripAndCleanAttributes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = gen_page(seed, std::uint64_t{seed % 4});
    for (const auto& e : p.elements) {
      for (const auto& [k, v] : e.attributes) EXPECT_TRUE(attribute_whitelist().count(k)) << k;
      const auto back = parse_html(to_html(e));
      EXPECT_EQ(back.tag, e.tag);
      EXPECT_EQ(back.attributes, e.attributes);
      EXPECT_EQ(back.text, e.text);
    }
  }
}

TEST(Page, CleaningDropsUnlistedAttributes) {
  const auto c = clean_attributes({{"class", "x"}, {"style", "color:red"}, {"id", "a1"}, {"href", "/home"}, {"title", "t"}});
  EXPECT_EQ(c, (std::map<std::string, std::string>{{"href", "/home"}, {"title", "t"}}));
}

TEST(Page, EscapingRoundTrip) {
  ScreenElement e{"a", {{"title", "a<b & \"c\""}}, "x > y", {}};
  const auto back = parse_html(to_html(e));
  EXPECT_EQ(back.attributes, e.attributes);
  EXPECT_EQ(back.text, e.text);
  EXPECT_THROW(parse_html("<a href=\"x\">unterminated"), HtmlParseError);
}

TEST(Page, DeterministicUnderSeed) {
  const auto a = gen_page(7, std::uint64_t{1}), b = gen_page(7, std::uint64_t{1});
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.elements, b.elements);
}

TEST(RecReg, InverseTasksAndCounts) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = gen_page(seed, std::uint64_t{seed % 4});
    const auto rec = make_rec(p);
    const auto reg = make_reg(p);
    EXPECT_EQ(rec.size() + reg.size(), 2 * p.elements.size());
    const int W = static_cast<int>(p.image.width), H = static_cast<int>(p.image.height);
    for (std::size_t i = 0; i < rec.size(); ++i) {
      EXPECT_EQ(rec[i].prompt.rfind(kRecPrefix, 0), 0u);
      EXPECT_EQ(parse_boxes(rec[i].answer)[0][0], rec[i].box);
      EXPECT_EQ(reg[i].prompt, kRegPrefix + rec[i].answer);
      EXPECT_EQ(reg[i].answer, rec[i].html);
      const auto px = denormalize_box(rec[i].box, W, H);
      const auto& b = p.elements[i].box;
      const int bx = W / 1000 + 1, by = H / 1000 + 1;
      EXPECT_TRUE(px.left >= b.left - bx && px.right <= b.right + bx && px.top >= b.top - by &&
                  px.bottom <= b.bottom + by);
    }
  }
  EXPECT_THROW(make_rec(SyntheticScreen{}), std::invalid_argument);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = scratch_dir("dataset");
  std::vector<Sample> xs{{"images/a.png", "ocr", "OCR:", "HELLO", 1}, {"images/b.png", "rec", "REC:<a>x</a>", "[[001,002,003,004]]", 2}};
  const auto path = (dir / "d.jsonl").string();
  write_dataset(xs, path);
  EXPECT_EQ(read_dataset(path), xs);
  std::ifstream is(path);
  std::string first;
  std::getline(is, first);
  EXPECT_EQ(first.find("{\"image_path\""), 0u);
  EXPECT_LT(first.find("\"task\""), first.find("\"prompt\""));
  EXPECT_LT(first.find("\"answer\""), first.find("\"seed\""));
  EXPECT_THROW(read_dataset((dir / "missing.jsonl").string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, GenerateWritesImagesAndLines) {
  const auto dir = scratch_dir("gen");
  for (const std::string task : {"ocr", "rec", "reg"}) {
    GenDataOptions o;
    o.task = task;
    o.count = 3;
    o.seed = 5;
    o.resolution = 448;
    o.out = (dir / task).string();
    const auto samples = generate_dataset(o);
    const auto back = read_dataset((dir / task / "data.jsonl").string());
    EXPECT_EQ(back, samples);
    for (const auto& s : samples) {
      EXPECT_TRUE(std::filesystem::exists(dir / task / s.image_path)) << s.image_path;
      EXPECT_EQ(s.task, task);
    }
    if (task == "ocr") EXPECT_EQ(samples.size(), 3u);
  }
  std::filesystem::remove_all(dir);
}
