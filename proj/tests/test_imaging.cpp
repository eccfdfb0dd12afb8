#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "umfl/errors.hpp"
#include "umfl/image.hpp"
#include "umfl/ppm.hpp"
#include "umfl/synth.hpp"

using namespace umfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("umfl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

SynthConfig quiet_config() {
  SynthConfig cfg;
  cfg.num_identities = 10;
  cfg.samples_per_identity = 3;
  cfg.noise_sigma = 0.0;
  cfg.max_shift = 0;
  cfg.brightness_jitter = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("image shape and validation") {
  Image img(2, 3, 3, 0.25);
  CHECK(img.size() == 18);
  img.at(1, 2, 0) = 0.75;
  CHECK(img.data()[(1 * 3 + 2) * 3] == 0.75);
  CHECK_NOTHROW(img.validate());
  img.at(0, 0, 1) = 1.5;
  CHECK_THROWS_AS(img.validate(), PreconditionError);
  img.at(0, 0, 1) = NAN;
  CHECK_THROWS_AS(img.validate(), PreconditionError);
  CHECK_THROWS_AS(Image(0, 3, 3), PreconditionError);
  CHECK_THROWS_AS(Image(2, 3, 2), PreconditionError);
}

TEST_CASE("dataset validation") {
  Dataset ds;
  ds.num_identities = 2;
  ds.samples.push_back({Image(1, 1, 1), 0, 0});
  CHECK_THROWS_AS(ds.validate(), PreconditionError);  // identity 1 has no sample
  ds.samples.push_back({Image(1, 1, 1), 1, 0});
  CHECK_THROWS_AS(ds.validate(), PreconditionError);  // duplicate id
  ds.samples.back().sample_id = 1;
  CHECK_NOTHROW(ds.validate());
  ds.samples.push_back({Image(1, 1, 1), 2, 2});
  CHECK_THROWS_AS(ds.validate(), PreconditionError);
}

TEST_CASE("stripe bands") {
  CHECK(stripe_band(32, 8, 3) == RowBand{12, 16});
  CHECK(stripe_band(50, 6, 5) == RowBand{40, 50});
  CHECK(stripe_band(50, 6, 0) == RowBand{0, 8});
  int covered = 0;
  for (int i = 0; i < 7; ++i) covered += stripe_band(48, 7, i).rows();
  CHECK(covered == 48);
  CHECK_THROWS_AS(stripe_band(10, 3, 3), PreconditionError);
  CHECK_THROWS_AS(stripe_band(10, 0, 0), PreconditionError);
}

TEST_CASE("ppm encoding") {
  Image zero(2, 2, 3, 0.0);
  const std::string bytes = encode_ppm(zero);
  const std::string payload = bytes.substr(bytes.size() - 12);
  CHECK(payload == std::string(12, '\0'));
  CHECK(bytes.starts_with("P6"));

  Image img(1, 2, 3, 0.4);
  img.at(0, 1, 2) = 1.0;
  const std::string enc = encode_ppm(img);
  CHECK(static_cast<unsigned char>(enc[enc.size() - 6]) == 102);
  CHECK(static_cast<unsigned char>(enc.back()) == 255);
  const Image back = decode_ppm(enc);
  CHECK(back.at(0, 0, 0) == 0.4);
  CHECK(back.at(0, 1, 2) == 1.0);

  SplitMix64 rng(3);
  Image noise(5, 4, 1);
  for (auto& v : noise.data()) v = uniform_f64(rng, 0.0, 1.0);
  const Image round = decode_ppm(encode_ppm(noise));
  CHECK(round.channels() == 1);
  CHECK((round.data() - noise.data()).abs().maxCoeff() <= 1.0 / 510.0 + 1e-15);
}

TEST_CASE("ppm header parsing and errors") {
  const Image c = decode_ppm(std::string("P5\n# comment\n2 1\n# another\n255\n") + std::string("\x00\xff", 2));
  CHECK(c.width() == 2);
  CHECK(c.at(0, 1, 0) == 1.0);
  CHECK(message_of([] { decode_ppm("P3\n1 1\n255\n..."); }).find("magic") != std::string::npos);
  CHECK(message_of([] { decode_ppm("P6\nx 1\n255\n"); }).find("width") != std::string::npos);
  CHECK(message_of([] { decode_ppm("P6\n1 y\n255\n"); }).find("height") != std::string::npos);
  CHECK(message_of([] { decode_ppm("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06"); }).find("maxval") != std::string::npos);
  CHECK(message_of([] { decode_ppm("P6\n2 2\n255\nabc"); }).find("truncated") != std::string::npos);
  CHECK_THROWS_AS(decode_ppm(""), FormatError);
}

TEST_CASE("ppm file round trip") {
  const fs::path dir = scratch("ppm");
  Image img(3, 2, 3, 0.4);
  save_ppm(img, dir / "a.ppm");
  CHECK(load_ppm(dir / "a.ppm") == img);
  CHECK_THROWS_AS(load_ppm(dir / "missing.ppm"), FormatError);
}

TEST_CASE("mean pixel") {
  Dataset one{{{Image(2, 2, 3, 0.5), 0, 0}}, 1};
  CHECK(mean_pixel(one).isApproxToConstant(0.5));
  Dataset two{{{Image(2, 2, 3, 0.0), 0, 0}, {Image(2, 2, 3, 1.0), 0, 1}}, 1};
  CHECK(mean_pixel(two).isApproxToConstant(0.5));
  Image px(1, 2, 3, 0.0);
  px.at(0, 1, 0) = 1.0;
  px.at(0, 1, 1) = 0.5;
  const Eigen::VectorXd m = mean_pixel(Dataset{{{px, 0, 0}}, 1});
  CHECK(m[0] == 0.5);
  CHECK(m[1] == 0.25);
  CHECK(m[2] == 0.0);
  CHECK_THROWS_AS(mean_pixel(Dataset{}), PreconditionError);
}

TEST_CASE("synthetic dataset size and determinism") {
  SynthConfig cfg;
  cfg.num_identities = 40;
  SplitMix64 a(11), b(11);
  const Dataset da = gen_synthetic_dataset(cfg, a);
  const Dataset db = gen_synthetic_dataset(cfg, b);
  CHECK(da.samples.size() == 320);
  CHECK(da.num_identities == 40);
  CHECK_NOTHROW(da.validate());
  for (std::size_t i = 0; i < da.samples.size(); ++i) {
    CHECK(da.samples[i].image == db.samples[i].image);
    CHECK(da.samples[i].sample_id == static_cast<std::int64_t>(i));
    CHECK(da.samples[i].identity == static_cast<int>(i / 8));
    CHECK_NOTHROW(da.samples[i].image.validate());
  }
}

TEST_CASE("noise-free samples of an identity are bit-identical") {
  const SynthConfig cfg = quiet_config();
  SplitMix64 rng(4);
  const Dataset ds = gen_synthetic_dataset(cfg, rng);
  for (const auto& s : ds.samples) {
    CHECK(s.image == ds.samples[static_cast<std::size_t>(s.identity * cfg.samples_per_identity)].image);
  }
}

TEST_CASE("confusable pairs differ in exactly one stripe band") {
  SynthConfig cfg = quiet_config();
  cfg.num_identities = 20;
  SplitMix64 rng(8);
  const auto parts = draw_identity_parts(cfg, rng);
  int paired = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].partner < 0) continue;
    ++paired;
    const auto& other = parts[static_cast<std::size_t>(parts[i].partner)];
    CHECK(other.partner == static_cast<int>(i));
    CHECK(other.differing_part == parts[i].differing_part);
    const Image a = render_identity(cfg, parts[i]);
    const Image b = render_identity(cfg, other);
    std::set<int> differing_bands;
    for (int r = 0; r < cfg.height; ++r)
      for (int c = 0; c < cfg.width; ++c)
        for (int ch = 0; ch < 3; ++ch)
          if (a.at(r, c, ch) != b.at(r, c, ch)) {
            for (int k = 0; k < cfg.num_parts; ++k) {
              const RowBand band = stripe_band(cfg.height, cfg.num_parts, k);
              if (r >= band.begin && r < band.end) differing_bands.insert(k);
            }
          }
    CHECK(differing_bands == std::set<int>{parts[i].differing_part});
  }
  CHECK(paired == 10);  // floor(0.5 * 20 / 2) pairs
}

TEST_CASE("pair count rounds down") {
  SynthConfig cfg = quiet_config();
  cfg.num_identities = 7;
  cfg.confusable_fraction = 1.0;
  SplitMix64 rng(1);
  int paired = 0;
  for (const auto& p : draw_identity_parts(cfg, rng)) paired += p.partner >= 0;
  CHECK(paired == 6);
}

TEST_CASE("synth config errors name the key") {
  SynthConfig cfg;
  cfg.num_parts = 1;
  CHECK(message_of([&] { cfg.validate(); }).find("synth.num_parts") != std::string::npos);
  cfg = SynthConfig{};
  cfg.palette_size = 1;
  CHECK(message_of([&] { cfg.validate(); }).find("synth.palette_size") != std::string::npos);
  cfg = SynthConfig{};
  cfg.confusable_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset directory round trip") {
  SynthConfig cfg = quiet_config();
  cfg.num_identities = 4;
  cfg.noise_sigma = 0.05;
  SplitMix64 rng(2);
  const Dataset ds = gen_synthetic_dataset(cfg, rng);
  const fs::path dir = scratch("dataset");
  write_dataset(ds, dir);
  std::ifstream manifest(dir / "manifest.csv");
  std::string header;
  std::getline(manifest, header);
  CHECK(header == "sample_id,identity,relative_path");
  const Dataset back = read_dataset(dir / "manifest.csv");
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.num_identities == 4);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].identity == ds.samples[i].identity);
    CHECK(back.samples[i].sample_id == ds.samples[i].sample_id);
    CHECK((back.samples[i].image.data() - ds.samples[i].image.data()).abs().maxCoeff() <= 1.0 / 510.0 + 1e-15);
  }
}
