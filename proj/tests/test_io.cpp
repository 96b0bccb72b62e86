#include <gtest/gtest.h>

#include <cstdio>

#include "fixture.hpp"
#include "netred/error.hpp"
#include "netred/io.hpp"
#include "netred/pipeline.hpp"

using namespace netred;
using io::Json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::kInvalidArgument;
}

ReducedNetwork fixture_reduced() {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix S = Vector::LinSpaced(4, -1.0, -4.0).asDiagonal();
  const Matrix G = Matrix::Zero(4, 1);
  return build_reduced(sys, S, G, fixtures::fixture_L(), fixtures::fixture_orders());
}

}  // namespace

TEST(Json, MatrixRoundTripIsExact) {
  Matrix M(2, 3);
  M << 0.1, -1e-300, 3.0, 1.0 / 3.0, 2.5e17, -0.0;
  const Matrix back = io::matrix_from_json(Json::parse(io::matrix_to_json(M).dump()), "M", 2, 3);
  EXPECT_TRUE(back == M);
  EXPECT_EQ(io::matrix_from_json(Json::array(), "E", 0, 3).cols(), 3);
}

TEST(Json, SystemRoundTripIsByteIdentical) {
  const std::string a = io::dump(io::system_to_json(fixtures::fixture_network()));
  const NetworkSystem sys = io::system_from_json(io::parse_json(a, "a"));
  EXPECT_EQ(io::dump(io::system_to_json(sys)), a);
}

TEST(Json, ReducedRoundTripIsByteIdentical) {
  const NetworkSystem sys = fixtures::fixture_network();
  const ReducedNetwork red = fixture_reduced();
  const ConstraintReport cr = check_problem_constraints(sys, red);
  const std::string a = io::dump(io::reduced_to_json(red, 0.25, cr));
  const ReducedNetwork back = io::reduced_from_json(io::parse_json(a, "a"), sys);
  EXPECT_TRUE(back.S == red.S);
  EXPECT_TRUE(back.H == red.H);
  EXPECT_EQ(io::dump(io::reduced_to_json(back, 0.25, cr)), a);
  EXPECT_EQ(io::dump(io::parse_json(a, "a")), a);
}

TEST(Json, TamperedHIsKept) {
  const NetworkSystem sys = fixtures::fixture_network();
  Json j = io::reduced_to_json(fixture_reduced(), 0.0, {});
  j["H"][0][0] = j["H"][0][0].get<double>() + 1e-3;
  const ReducedNetwork back = io::reduced_from_json(j, sys);
  EXPECT_EQ(back.H(0, 0), j["H"][0][0].get<double>());
  EXPECT_FALSE(verify_moment_matching(sys, back).passed);
}

TEST(Json, UnstableReducedModelLoadsWithWarning) {
  const NetworkSystem sys = fixtures::fixture_network();
  Json j = io::reduced_to_json(fixture_reduced(), 0.0, {});
  j["S"][0][0] = 0.5;
  const ReducedNetwork back = io::reduced_from_json(j, sys);
  EXPECT_FALSE(back.warnings.empty());
  EXPECT_FALSE(check_problem_constraints(sys, back).stable);
}

TEST(Json, SchemaAndDimensionErrors) {
  Json j = io::system_to_json(fixtures::fixture_network());
  Json missing = j;
  missing.erase("A");
  EXPECT_EQ(code_of([&] { io::system_from_json(missing); }), ErrorCode::kSchema);
  Json wrong = j;
  wrong["B"] = Json::array({Json::array({1.0})});
  EXPECT_EQ(code_of([&] { io::system_from_json(wrong); }), ErrorCode::kDimension);
  Json ragged = j;
  ragged["A"][1] = Json::array({1.0});
  EXPECT_EQ(code_of([&] { io::system_from_json(ragged); }), ErrorCode::kSchema);
  Json text = j;
  text["C"][0][0] = "x";
  EXPECT_EQ(code_of([&] { io::system_from_json(text); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([&] { io::parse_json("{\"N\": ", "inline"); }), ErrorCode::kSchema);
  Json bad_neighbors = j;
  bad_neighbors["state_neighbors"][0] = Json::array({0, 7});
  EXPECT_THROW(io::system_from_json(bad_neighbors), Error);
}

TEST(Checksum, KnownSha256Vectors) {
  EXPECT_EQ(io::sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(io::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Files, AtomicWriteAndRead) {
  const std::string path = ::testing::TempDir() + "netred_io_test.json";
  io::write_file_atomic(path, "first\n");
  io::write_file_atomic(path, "second\n");
  EXPECT_EQ(io::read_file(path), "second\n");
  std::remove(path.c_str());
  EXPECT_EQ(code_of([&] { io::read_file(path); }), ErrorCode::kIo);
  EXPECT_EQ(code_of([&] { io::write_file_atomic("/nonexistent-dir/x.json", "x"); }),
            ErrorCode::kIo);
}
