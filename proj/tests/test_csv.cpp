#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "nmqi/csv.hpp"
#include "nmqi/errors.hpp"

using namespace nmqi;

TEST_CASE("numbers use 12 significant digits") {
  CHECK(format_number(0.1 + 0.2) == "0.3");
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(-2.5e-17) == "-2.5e-17");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(123456789012345.0) == "1.23456789012e+14");
}

TEST_CASE("table text round trip") {
  CsvTable t;
  t.metadata = {"version: nmqi test", "two\nlines"};
  t.header = {"t", "p1", "abs_rho14"};
  t.rows = {{0, 1, 0}, {0.5, 0.25, 1.0 / 7.0}};
  const std::string text = to_csv(t);
  CHECK(text ==
        "# version: nmqi test\n# two\n# lines\nt,p1,abs_rho14\n0,1,0\n0.5,0.25,0.142857142857\n");
  const CsvTable back = parse_csv(text);
  CHECK(back.metadata == std::vector<std::string>{"version: nmqi test", "two", "lines"});
  CHECK(back.header == t.header);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1][2] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(back.column("p1") == 1);
  CHECK(back.column("p9") == -1);
  // Re-emitting the parsed table is stable.
  CHECK(to_csv(back) == text);
}

TEST_CASE("parser tolerates spaces and CRLF") {
  const CsvTable t = parse_csv("#meta\r\n t , p1 \r\n\r\n 1 , 2 \r\n");
  CHECK(t.metadata == std::vector<std::string>{"meta"});
  CHECK(t.header == std::vector<std::string>{"t", "p1"});
  CHECK(t.rows == std::vector<std::vector<double>>{{1, 2}});
}

TEST_CASE("malformed tables are rejected") {
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2,3\n"), "csv line 2 has 3 fields, expected 2", Error);
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,x\n"), "csv line 2: 'x' is not a number", Error);
  CHECK_THROWS_WITH_AS(parse_csv("# only metadata\n"), "csv has no header row", Error);
  CHECK_THROWS_AS(parse_csv(""), Error);
  CHECK_THROWS_AS(read_csv("/nonexistent/table.csv"), Error);
}

TEST_CASE("file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "nmqi_test_csv_roundtrip.csv";
  CsvTable t;
  t.header = {"ratio", "p4"};
  t.rows = {{0.5, 0.1}, {4, std::numeric_limits<double>::min()}};
  write_csv(path.string(), t);
  const CsvTable back = read_csv(path.string());
  CHECK(back.header == t.header);
  CHECK(back.rows[0] == t.rows[0]);
  CHECK(back.rows[1][1] == doctest::Approx(std::numeric_limits<double>::min()).epsilon(1e-11));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_csv("/nonexistent/dir/x.csv", t), Error);
}
