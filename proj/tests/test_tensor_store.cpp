#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "robmrag/error.hpp"
#include "robmrag/tensor_store.hpp"
#include "test_support.hpp"

using namespace robmrag;
using robmrag::testkit::Rng;
using robmrag::testkit::TempDir;

namespace {

std::string bytes_of(const TensorFile& t) {
    std::ostringstream out;
    write_tensor(t, out);
    return out.str();
}

TensorFile parse(const std::string& bytes) {
    std::istringstream in(bytes);
    return read_tensor(in);
}

}  // namespace

TEST(TensorStore, ScalarTensorSize) {
    // magic + version + dtype + ndim + one u64 dim + one f32
    const TensorFile t{{1}, {0.0f}};
    EXPECT_EQ(bytes_of(t).size(), 8u + 4 + 4 + 4 + 8 + 4);
    EXPECT_EQ(bytes_of(t).size(), 32u);
    EXPECT_EQ(tensor_byte_size(t.dims), 32u);
}

TEST(TensorStore, HeaderLayout) {
    const auto bytes = bytes_of({{2, 3}, {1, 2, 3, 4, 5, 6}});
    ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 16 + 24);
    EXPECT_EQ(bytes.substr(0, 8), "MRAGTENS");
    std::uint32_t u32;
    std::memcpy(&u32, bytes.data() + 8, 4);
    EXPECT_EQ(u32, 1u);
    std::memcpy(&u32, bytes.data() + 12, 4);
    EXPECT_EQ(u32, 1u);
    std::memcpy(&u32, bytes.data() + 16, 4);
    EXPECT_EQ(u32, 2u);
    std::uint64_t u64;
    std::memcpy(&u64, bytes.data() + 20, 8);
    EXPECT_EQ(u64, 2u);
    std::memcpy(&u64, bytes.data() + 28, 8);
    EXPECT_EQ(u64, 3u);
    float f;
    std::memcpy(&f, bytes.data() + 36, 4);
    EXPECT_EQ(f, 1.0f);
}

TEST(TensorStore, RoundtripIsByteIdentical) {
    const TensorFile t{{2, 2}, {1, 2, 3, 4}};
    const auto bytes = bytes_of(t);
    const auto back = parse(bytes);
    EXPECT_EQ(back.dims, t.dims);
    EXPECT_EQ(back.data, t.data);
    EXPECT_EQ(bytes_of(back), bytes);
}

TEST(TensorStore, ReadsWhatWasWritten) {
    std::ostringstream out;
    const std::uint64_t dims[] = {3};
    const float data[] = {1, 2, 3};
    write_tensor(dims, data, out);
    const auto t = parse(out.str());
    EXPECT_EQ(t.dims, std::vector<std::uint64_t>{3});
    EXPECT_EQ(t.data, (std::vector<float>{1, 2, 3}));
}

TEST(TensorStore, LengthMismatchIsRejected) {
    std::ostringstream out;
    EXPECT_THROW(write_tensor(TensorFile{{2}, {1.0f}}, out), ValidationError);
}

TEST(TensorStore, BadMagic) {
    auto bytes = bytes_of({{1}, {0.0f}});
    bytes.replace(0, 8, "XXXXXXXX");
    try {
        parse(bytes);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST(TensorStore, TruncatedPayload) {
    auto bytes = bytes_of({{4}, {1, 2, 3, 4}});
    bytes.pop_back();
    try {
        parse(bytes);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST(TensorStore, TrailingBytesRejected) {
    EXPECT_THROW(parse(bytes_of({{1}, {1.0f}}) + "x"), FormatError);
}

TEST(TensorStore, UnsupportedVersionAndDtype) {
    auto bytes = bytes_of({{1}, {1.0f}});
    auto v2 = bytes;
    v2[8] = 2;
    EXPECT_THROW(parse(v2), FormatError);
    auto d2 = bytes;
    d2[12] = 2;
    EXPECT_THROW(parse(d2), FormatError);
}

TEST(TensorStore, NonFiniteAndZeroExtentRejected) {
    std::ostringstream out;
    EXPECT_THROW(write_tensor(TensorFile{{1}, {std::numeric_limits<float>::quiet_NaN()}}, out), ValidationError);
    EXPECT_THROW(write_tensor(TensorFile{{0}, {}}, out), ValidationError);
    EXPECT_THROW(write_tensor(TensorFile{{}, {}}, out), ValidationError);
}

TEST(TensorStore, FileRoundtripAndErrorsNameThePath) {
    TempDir dir;
    const auto path = dir / "a.tensor";
    write_tensor_file(path, {{2, 1}, {5, 6}});
    EXPECT_EQ(read_tensor_file(path).data, (std::vector<float>{5, 6}));
    EXPECT_THROW(read_tensor_file(dir / "missing.tensor"), NotFoundError);

    auto bytes = testkit::slurp(path);
    bytes.resize(bytes.size() - 2);
    testkit::spit(path, bytes);
    try {
        read_tensor_file(path);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
    }
}

TEST(TensorStoreProperty, RandomRoundtrips) {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        TensorFile t;
        const int ndim = rng.integer(1, 4);
        std::size_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            t.dims.push_back(static_cast<std::uint64_t>(rng.integer(1, 5)));
            count *= t.dims.back();
        }
        for (std::size_t i = 0; i < count; ++i) t.data.push_back(static_cast<float>(rng.uniform(-1e6, 1e6)));
        const auto bytes = bytes_of(t);
        ASSERT_EQ(bytes.size(), tensor_byte_size(t.dims));
        const auto back = parse(bytes);
        ASSERT_EQ(back.dims, t.dims);
        ASSERT_EQ(std::memcmp(back.data.data(), t.data.data(), count * sizeof(float)), 0);
        // Any strict prefix fails.
        const auto cut = static_cast<std::size_t>(rng.integer(0, static_cast<int>(bytes.size()) - 1));
        ASSERT_THROW(parse(bytes.substr(0, cut)), FormatError);
    }
}

namespace {

const char* kLine1 =
    R"({"id":"drawer_001","source":"simulation","instruction":"open the drawer","object_name":"drawer",)"
    R"("contact_frame_features":"f.tensor","contact_frame_embedding":"e.tensor","contact_point":[0.5,0.5],)"
    R"("dir_up":[0,0,1],"dir_forward":[1,0,0]})";
const char* kLine2 =
    R"({"id":"web_1","source":"internet","instruction":"open it","object_name":"box",)"
    R"("contact_frame_features":"/abs/f.tensor","contact_frame_embedding":"e2.tensor"})";

}  // namespace

TEST(Manifest, TwoValidLines) {
    std::istringstream in(std::string(kLine1) + "\n\n" + kLine2 + "\n");
    const auto records = load_manifest(in, "/base", "m.jsonl");
    ASSERT_EQ(records.size(), 2u);
    EXPECT_EQ(records[0].id, "drawer_001");
    EXPECT_EQ(records[0].line, 1u);
    EXPECT_EQ(records[1].line, 3u);
    EXPECT_EQ(records[0].contact_frame_features, std::filesystem::path("/base/f.tensor"));
    EXPECT_EQ(records[1].contact_frame_features, std::filesystem::path("/abs/f.tensor"));
    EXPECT_EQ(records[1].source, Source::internet);
}

TEST(Manifest, DuplicateIdNamesBothLines) {
    std::istringstream in(std::string(kLine1) + "\n" + kLine2 + "\n" + kLine1 + "\n");
    try {
        load_manifest(in);
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("drawer_001"), std::string::npos);
        EXPECT_NE(msg.find("lines 1 and 3"), std::string::npos);
    }
}

TEST(Manifest, SimulationRecordNeedsDirUp) {
    std::string line = kLine1;
    line.replace(line.find(R"("dir_up":[0,0,1],)"), std::strlen(R"("dir_up":[0,0,1],)"), "");
    std::istringstream in(line);
    EXPECT_THROW(load_manifest(in), ValidationError);
}

TEST(Manifest, MalformedLineReportsLineNumber) {
    std::istringstream in(std::string(kLine1) + "\n{not json\n");
    try {
        load_manifest(in, {}, "m.jsonl");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("m.jsonl:2:"), std::string::npos);
    }
}

TEST(Manifest, RecordInvariants) {
    ManifestRecord r;
    r.id = "x";
    r.source = Source::robotic;
    r.contact_frame_features = "f";
    r.contact_frame_embedding = "e";
    EXPECT_NO_THROW(validate_record(r));
    r.dir_up = Eigen::Vector3d(0, 0, 2);
    EXPECT_THROW(validate_record(r), ValidationError);
    r.dir_up.reset();
    r.contact_point = Eigen::Vector2d(1.5, 0);
    EXPECT_THROW(validate_record(r), ValidationError);
    r.contact_point.reset();
    r.intrinsics = Intrinsics{100, 100, 200, 10, 128, 96};
    EXPECT_THROW(validate_record(r), ValidationError);
}

TEST(Manifest, LineRoundtrip) {
    std::istringstream in(kLine1);
    const auto records = load_manifest(in, "/base");
    const auto line = manifest_line(records[0], "/base");
    EXPECT_NE(line.find(R"("contact_frame_features":"f.tensor")"), std::string::npos);
    std::istringstream again(line);
    const auto back = load_manifest(again, "/base");
    EXPECT_EQ(back[0].contact_frame_features, records[0].contact_frame_features);
    EXPECT_EQ(*back[0].dir_up, *records[0].dir_up);
    EXPECT_EQ(manifest_line(back[0], "/base"), line);
}
