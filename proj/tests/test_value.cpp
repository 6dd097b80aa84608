#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "nv/errors.hpp"
#include "nv/value.hpp"

using namespace nv;

TEST_CASE("canonical encoding basics") {
  CHECK(canonical_encode(Value(1)) == "1");
  CHECK(canonical_encode(Value(0)) == "0");
  CHECK(canonical_encode(Value(Value::Map{{"b", Value(1)}, {"a", Value(2)}})) == R"({"a":2,"b":1})");
  CHECK(canonical_encode(Value(0.1 + 0.2)) == "0.30000000000000004");
  CHECK(canonical_encode(Value(1.0)) == "1.0");
  CHECK(canonical_encode(Value(Sentinel::timeout)) == "#TIMEOUT");
  CHECK(canonical_encode(Value("a\"b")) == R"("a\"b")");
  CHECK(canonical_encode(Value(std::nan(""))) == "NaN");
}

TEST_CASE("shortest float text matches the C library round-trip printer") {
  // Independent oracle: the smallest %.Ng precision that round-trips.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    double d = i % 3 == 0 ? dist(rng) : dist(rng) / 1e9;
    std::string ours = canonical_encode(Value(d));
    CHECK(std::stod(ours) == d);
    int shortest = 17;
    for (int p = 1; p <= 17; ++p) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.*g", p, d);
      if (std::strtod(buf, nullptr) == d) {
        shortest = p;
        break;
      }
    }
    std::size_t digits = 0;
    bool leading = true;
    for (char c : ours.substr(0, ours.find('e'))) {
      if (c >= '1' && c <= '9') leading = false;
      if (std::isdigit(static_cast<unsigned char>(c)) && !leading) ++digits;
    }
    // Trailing zeros of an integral mantissa ("120.0") are not significant.
    std::string mant = ours.substr(0, ours.find('e'));
    if (mant.size() > 2 && mant.compare(mant.size() - 2, 2, ".0") == 0) {
      digits -= 1;
      auto intpart = mant.substr(0, mant.size() - 2);
      while (!intpart.empty() && intpart.back() == '0') {
        intpart.pop_back();
        --digits;
      }
    }
    CHECK(static_cast<int>(digits) == shortest);
  }
}

TEST_CASE("canonical encoding is injective and decodable on a generated corpus") {
  std::vector<Value> corpus = {Value(Null{}), Value(true), Value(false), Value(0), Value(1), Value(-1),
                               Value(0.0), Value(-0.0), Value(1.0), Value("1"), Value("true"), Value(""),
                               Value(Value::List{}), Value(Value::Map{}), Value(Sentinel::error),
                               Value(Sentinel::crash), Value(Sentinel::timeout), Value("#ERROR"),
                               Value(INFINITY), Value(-INFINITY), Value(NAN)};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Value::List l;
    for (int j = 0; j < static_cast<int>(rng() % 3); ++j) l.push_back(Value(static_cast<std::int64_t>(rng() % 5)));
    corpus.push_back(Value(l));
    corpus.push_back(Value(Value::Map{{std::string(1, static_cast<char>('a' + rng() % 3)), Value(l)}}));
    corpus.push_back(Value(static_cast<double>(rng() % 1000) / 7.0));
  }
  std::map<std::string, Value> seen;
  for (const auto& v : corpus) {
    auto enc = canonical_encode(v);
    auto [it, inserted] = seen.emplace(enc, v);
    if (!inserted) CHECK(it->second == v);
    CHECK(canonical_decode(enc) == v);
  }
  CHECK_THROWS_AS(canonical_decode("{\"b\":1,\"a\":2}"), FormatError);
  CHECK_THROWS_AS(canonical_decode("1.50"), FormatError);
}

TEST_CASE("values_match tolerance") {
  CHECK(values_match(Value(1.0000001), Value(1.0), 1e-6));
  CHECK_FALSE(values_match(Value(1.0000001), Value(1.0)));
  CHECK(values_match(Value(1), Value(1)));
  CHECK_FALSE(values_match(Value(1), Value(1.0)));
}
