#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "alprobe/io.hpp"

using namespace alp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ALPROBE_TEST_DATA;

fs::path temp_file(const std::string &name) { return fs::temp_directory_path() / ("alprobe_io_" + name); }

ErrorCode code_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected an alp::Error");
    return ErrorCode::InvalidArgument;
}

void check_fixture(const HdrImage &img) {
    REQUIRE(img.width() == 2);
    REQUIRE(img.height() == 2);
    // Stored bottom-up; (x, y) has y = 0 at the top.
    CHECK(img.at(0, 0).x == 1.0);
    CHECK(img.at(0, 0).y == 2.0);
    CHECK(img.at(0, 0).z == 3.0);
    CHECK(img.at(1, 0).z == 0.125);
    CHECK(img.at(0, 1).x == 0.0);
    CHECK(img.at(1, 1).y == 8.0);
    CHECK(img.at(1, 1).z == 16.0);
}

} // namespace

TEST_CASE("hand-written PFM fixtures in both byte orders") {
    check_fixture(load_hdr(kData / "le_2x2.pfm"));
    check_fixture(load_hdr(kData / "be_2x2.pfm"));
}

TEST_CASE("grayscale PFM replicates to RGB") {
    HdrImage g = load_hdr(kData / "gray_3x1.pfm");
    REQUIRE(g.width() == 3);
    CHECK(g.at(1, 0).x == doctest::Approx(0.2));
    CHECK(g.at(1, 0).y == g.at(1, 0).x);
    CHECK(g.at(1, 0).z == g.at(1, 0).x);
}

TEST_CASE("PFM save/load is bit-exact for float-representable data") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> u(0.0f, 100.0f);
    HdrImage img(17, 9);
    for (auto &v : img.data()) v = static_cast<double>(u(rng));
    fs::path p = temp_file("roundtrip.pfm");
    save_hdr(img, p);
    HdrImage back = load_hdr(p);
    CHECK(back.width() == 17);
    CHECK(back.height() == 9);
    CHECK(back.data() == img.data());
    fs::remove(p);
}

TEST_CASE("1x1 PFM size is header plus twelve payload bytes") {
    HdrImage img(1, 1);
    img.set(0, 0, {0.5, 0.25, 1.0});
    std::string bytes = encode_pfm(img);
    std::string header = "PF\n1 1\n-1.0\n";
    CHECK(bytes.size() == header.size() + 12);
    CHECK(bytes.substr(0, header.size()) == header);
    HdrImage back = decode_pfm(bytes);
    CHECK(back.at(0, 0).y == 0.25);
}

TEST_CASE("malformed and truncated PFM inputs") {
    CHECK(code_of([] { load_hdr(kData / "bad_magic.pfm"); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { load_hdr(kData / "truncated.pfm"); }) == ErrorCode::TruncatedPayload);
    CHECK(code_of([] { decode_pfm("PF\n2\n-1.0\n"); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { decode_pfm("PF\n-2 2\n-1.0\n"); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { decode_pfm("PF\n2 2\n0\n"); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { load_hdr(kData / "does_not_exist.pfm"); }) == ErrorCode::IoError);
}

TEST_CASE("negative PFM channels are clamped with a warning") {
    HdrImage img(2, 1);
    std::string bytes = encode_pfm(img);
    float neg = -3.0f;
    std::memcpy(&bytes[bytes.size() - 4], &neg, 4);
    std::vector<std::string> warnings;
    set_warning_sink([&](const std::string &m) { warnings.push_back(m); });
    HdrImage back = decode_pfm(bytes);
    set_warning_sink(nullptr);
    CHECK(back.at(1, 0).z == 0.0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("NegativeChannel") != std::string::npos);
}

TEST_CASE("mask PNG round trip and anti-aliased values") {
    MaskImage m(5, 3);
    for (int y = 0; y < 3; y++)
        for (int x = 0; x < 5; x++) m.set(x, y, (x * 3 + y * 7) % 11 / 10.0);
    fs::path p = temp_file("mask.png");
    save_mask(m, p);
    MaskImage back = load_mask(p);
    REQUIRE(back.width() == 5);
    for (size_t i = 0; i < m.values().size(); i++) CHECK(std::abs(back.values()[i] - m.values()[i]) <= 0.5 / 255 + 1e-12);
    fs::remove(p);

    MaskImage aa = load_mask(kData / "mask_aa.png");
    CHECK(aa.at(1, 0) == doctest::Approx(128.0 / 255));
    CHECK(aa.at(0, 1) == doctest::Approx(64.0 / 255));
    CHECK(aa.at(1, 1) == doctest::Approx(1.0 / 255));
    CHECK(aa.at(2, 0) == 1.0);
}

TEST_CASE("all-zero mask loads as empty") {
    fs::path p = temp_file("zero.png");
    save_mask(MaskImage(4, 4), p);
    MaskImage back = load_mask(p);
    CHECK(back.sum() == 0.0);
    fs::remove(p);
}

TEST_CASE("mask PNG format errors") {
    CHECK(code_of([] { load_mask(kData / "mask16.png"); }) == ErrorCode::UnsupportedBitDepth);
    CHECK(code_of([] { load_mask(kData / "rgb.png"); }) == ErrorCode::UnsupportedColorType);
    CHECK(code_of([] { load_mask(kData / "le_2x2.pfm"); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("reinhard tone map stays in [0, 1)") {
    Rgb c = reinhard({0.0, 1.0, 1000.0});
    CHECK(c.x == 0.0);
    // x / (1 + x) followed by display gamma 2.2.
    CHECK(c.y == doctest::Approx(std::pow(0.5, 1 / 2.2)));
    CHECK(c.z < 1.0);
}
