#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "platoon/random.hpp"
#include "platoon/series.hpp"
#include "platoon/trace.hpp"

using namespace platoon;
using namespace platoon::signals;

namespace {

SignalSeries make_series(std::vector<double> values, Stage stage = Stage::kRaw,
                         double dt = 0.1) {
  SignalSeries s;
  s.name = "test";
  s.dt = dt;
  s.stage = stage;
  s.values = std::move(values);
  return s;
}

std::vector<TraceRecord> ramp_records(int n, double dt = 0.1) {
  std::vector<TraceRecord> out;
  for (int k = 0; k < n; ++k) {
    TraceRecord r;
    r.t = k * dt;
    r.x = 2.0 * k;
    r.y = 0.1 * k;
    r.speed = 20.0 + 0.01 * k;
    r.heading = 0.001 * k;
    r.swa = 0.5 * k;
    r.yaw_rate = 0.002 * k;
    r.ax = 0.1;
    r.ay = 0.2;
    r.az = 0.3;
    r.len = 4.5;
    r.width = 1.8;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("dead-band smoothing holds until the threshold is crossed") {
  const auto s = make_series({10.00, 10.04, 10.07, 10.20});
  const auto out = smooth(s, 0.1);
  REQUIRE(out.stage == Stage::kSmoothed);
  CHECK(out.values == std::vector<double>{10.00, 10.00, 10.00, 10.20});

  // A move exactly at the threshold snaps.
  const auto edge = smooth(make_series({0.0, 0.1}), 0.1);
  CHECK(edge.values[1] == 0.1);

  // Non-positive threshold passes the signal through but still advances.
  const auto pass = smooth(make_series({1.0, 1.5, 0.2}), 0.0);
  CHECK(pass.values == std::vector<double>{1.0, 1.5, 0.2});
  CHECK(pass.stage == Stage::kSmoothed);
}

TEST_CASE("smoothing re-holds from the snapped value") {
  // After snapping to 1.0, excursions are measured from 1.0, not from 0.
  const auto out = smooth(make_series({0.0, 1.0, 1.05, 1.2}), 0.15);
  CHECK(out.values == std::vector<double>{0.0, 1.0, 1.0, 1.2});
}

TEST_CASE("channel-specific smoothing thresholds") {
  CHECK(default_smooth_threshold(SignalKind::kSwa) == 3.0);
  CHECK(default_smooth_threshold(SignalKind::kHeading) == 0.1);
  CHECK(default_smooth_threshold(SignalKind::kSpeed) == 0.1);
  CHECK(default_smooth_threshold(SignalKind::kAccelLong) == 0.1);
  CHECK(default_smooth_threshold(SignalKind::kYawRate) == 0.1);
  CHECK(default_smooth_threshold(SignalKind::kX) == 0.0);
  CHECK(default_smooth_threshold(SignalKind::kY) == 0.0);
}

TEST_CASE("normalization maps the fitted range onto [-1, 1]") {
  auto s = smooth(make_series({0.0, 5.0, 10.0}), 0.0);
  const auto n = normalize(s, NormBounds{0.0, 10.0});
  REQUIRE(n.stage == Stage::kNormalized);
  CHECK(n.values[0] == Catch::Approx(-1.0));
  CHECK(n.values[1] == Catch::Approx(0.0));
  CHECK(n.values[2] == Catch::Approx(1.0));
  CHECK(n.bounds.lo == 0.0);
  CHECK(n.bounds.hi == 10.0);

  const auto back = denormalize(n);
  CHECK(back.stage == Stage::kSmoothed);
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    CHECK(back.values[k] == Catch::Approx(s.values[k]).margin(1e-12));
  }
}

TEST_CASE("normalization clamps out-of-range values when asked") {
  auto s = smooth(make_series({-4.0, 14.0}), 0.0);
  const auto loose = normalize(s, NormBounds{0.0, 10.0}, false);
  CHECK(loose.values[0] == Catch::Approx(-1.8));
  const auto tight = normalize(s, NormBounds{0.0, 10.0}, true);
  CHECK(tight.values[0] == Catch::Approx(-1.05));
  CHECK(tight.values[1] == Catch::Approx(1.05));

  CHECK(normalize_value(14.0, NormBounds{0.0, 10.0}, true) ==
        Catch::Approx(1.05));
  CHECK(denormalize_value(0.0, NormBounds{0.0, 10.0}) == Catch::Approx(5.0));
}

TEST_CASE("degenerate normalization bounds are rejected") {
  auto s = smooth(make_series({1.0, 2.0}), 0.0);
  CHECK_THROWS_AS(normalize(s, NormBounds{3.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(normalize(s, NormBounds{5.0, 2.0}), ConfigError);
}

TEST_CASE("difference then reconstruct is lossless") {
  Rng rng(11);
  std::vector<double> walk{0.3};
  for (int k = 0; k < 200; ++k) walk.push_back(walk.back() + rng.normal());
  auto s = normalize(smooth(make_series(walk), 0.0), NormBounds{-50.0, 50.0});
  const auto d = difference(s);
  REQUIRE(d.stage == Stage::kDifferenced);
  REQUIRE(d.values.size() == s.values.size() - 1);
  const auto r = reconstruct(d, s.values.front());
  REQUIRE(r.stage == Stage::kNormalized);
  REQUIRE(r.values.size() == s.values.size());
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    CHECK(r.values[k] == Catch::Approx(s.values[k]).margin(1e-9));
  }
}

TEST_CASE("stage gating rejects out-of-order transforms") {
  const auto raw = make_series({1.0, 2.0, 3.0});
  CHECK_THROWS_AS(normalize(raw, NormBounds{0.0, 5.0}), SchemaError);
  CHECK_THROWS_AS(difference(raw), SchemaError);
  CHECK_THROWS_AS(denormalize(raw), SchemaError);

  const auto sm = smooth(raw, 0.0);
  CHECK_THROWS_AS(smooth(sm, 0.0), SchemaError);
  CHECK_THROWS_AS(difference(sm), SchemaError);

  const auto no = normalize(sm, NormBounds{0.0, 5.0});
  CHECK_THROWS_AS(normalize(no, NormBounds{0.0, 5.0}), SchemaError);
  const auto di = difference(no);
  CHECK_THROWS_AS(reconstruct(no, 0.0), SchemaError);
  CHECK_THROWS_AS(difference(di), SchemaError);
}

TEST_CASE("channel extraction picks the right column") {
  const auto recs = ramp_records(5);
  const auto x = extract_channel(recs, SignalKind::kX);
  CHECK(x.name == "x");
  CHECK(x.dt == Catch::Approx(0.1));
  CHECK(x.values == std::vector<double>{0.0, 2.0, 4.0, 6.0, 8.0});
  const auto swa = extract_channel(recs, SignalKind::kSwa);
  CHECK(swa.values[3] == Catch::Approx(1.5));

  CHECK_THROWS_AS(extract_channel({recs[0]}, SignalKind::kX),
                  InsufficientDataError);
}

TEST_CASE("bounds fitting pads and opens up flat channels") {
  const auto a = smooth(make_series({1.0, 3.0}), 0.0);
  const auto b = smooth(make_series({-2.0, 0.5}), 0.0);
  const auto fitted = fit_bounds({&a, &b});
  CHECK(fitted.lo == Catch::Approx(-2.0));
  CHECK(fitted.hi == Catch::Approx(3.0));

  const auto padded = fit_bounds({&a, &b}, 0.1);
  CHECK(padded.lo == Catch::Approx(-2.5));
  CHECK(padded.hi == Catch::Approx(3.5));

  const auto flat = smooth(make_series({7.0, 7.0, 7.0}), 0.0);
  const auto opened = fit_bounds({&flat});
  CHECK(opened.lo == Catch::Approx(6.5));
  CHECK(opened.hi == Catch::Approx(7.5));

  CHECK_THROWS_AS(fit_bounds({}), InsufficientDataError);
}

TEST_CASE("trace CSV round trip preserves every column") {
  const auto recs = ramp_records(7);
  std::ostringstream out;
  write_trace_csv(out, recs);
  std::istringstream in(out.str());
  const auto back = parse_trace_csv(in);
  REQUIRE(back.size() == recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    CHECK(back[k].t == Catch::Approx(recs[k].t));
    CHECK(back[k].x == Catch::Approx(recs[k].x));
    CHECK(back[k].y == Catch::Approx(recs[k].y));
    CHECK(back[k].speed == Catch::Approx(recs[k].speed));
    CHECK(back[k].swa == Catch::Approx(recs[k].swa));
    CHECK(back[k].yaw_rate == Catch::Approx(recs[k].yaw_rate));
    CHECK(back[k].ax == Catch::Approx(recs[k].ax));
    CHECK(back[k].len == Catch::Approx(recs[k].len));
    CHECK(back[k].width == Catch::Approx(recs[k].width));
  }
}

TEST_CASE("trace parsing rejects malformed input") {
  SECTION("empty input") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_trace_csv(in), FormatError);
  }
  SECTION("wrong header name") {
    std::istringstream in(
        "t, x, y, elev, speed, heading, swa, yaw_rate, ax, ay, az, len, "
        "girth\n");
    CHECK_THROWS_AS(parse_trace_csv(in), FormatError);
  }
  SECTION("missing column") {
    std::istringstream in(std::string(kTraceHeader) +
                          "\n0,1,2,3,4,5,6,7,8,9,10,11\n");
    CHECK_THROWS_AS(parse_trace_csv(in), FormatError);
  }
  SECTION("extra column") {
    std::istringstream in(std::string(kTraceHeader) +
                          "\n0,1,2,3,4,5,6,7,8,9,10,11,12,13\n");
    CHECK_THROWS_AS(parse_trace_csv(in), FormatError);
  }
  SECTION("unparseable field names its location") {
    std::istringstream in(std::string(kTraceHeader) +
                          "\n0,1,2,3,4,oops,6,7,8,9,10,11,12\n");
    try {
      parse_trace_csv(in);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string what = e.what();
      CHECK(what.find("line 2") != std::string::npos);
      CHECK(what.find("column 6") != std::string::npos);
      CHECK(what.find("oops") != std::string::npos);
    }
  }
  SECTION("non-monotone time") {
    std::istringstream in(std::string(kTraceHeader) +
                          "\n0,0,0,0,0,0,0,0,0,0,0,4,2\n"
                          "0.1,0,0,0,0,0,0,0,0,0,0,4,2\n"
                          "0.1,0,0,0,0,0,0,0,0,0,0,4,2\n");
    CHECK_THROWS_AS(parse_trace_csv(in), SchemaError);
  }
  SECTION("blank lines are skipped") {
    std::istringstream in(std::string(kTraceHeader) +
                          "\n0,0,0,0,0,0,0,0,0,0,0,4,2\n\n"
                          "0.1,0,0,0,0,0,0,0,0,0,0,4,2\n");
    CHECK(parse_trace_csv(in).size() == 2);
  }
}

TEST_CASE("gap splitting cuts where the recording drops out") {
  std::vector<TraceRecord> recs;
  for (double t : {0.0, 0.1, 0.2, 0.9, 1.0, 1.1, 1.2}) {
    TraceRecord r;
    r.t = t;
    recs.push_back(r);
  }
  const auto segs = split_on_gaps(recs, 0.3);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].size() == 3);
  CHECK(segs[1].size() == 4);
  CHECK(segs[1].front().t == Catch::Approx(0.9));

  CHECK(split_on_gaps(recs, 10.0).size() == 1);
  CHECK(split_on_gaps({}, 0.3).empty());
}
