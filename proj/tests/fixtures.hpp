#pragma once

#include <string>
#include <vector>

#include "nv/matrix.hpp"
#include "nv/sheets.hpp"

namespace fixtures {

inline const char* kGcdPrompt = R"(def gcd(a: int, b: int) -> int:
    """Return the greatest common divisor of a and b.

    >>> gcd(3, 7)
    1
    >>> gcd(10, 15)
    5
    """
)";

inline const char* kEuclid = R"(def gcd(a, b):
    while b:
        a, b = b, a % b
    return abs(a)
)";

inline const char* kRecursive = R"(def gcd(a, b):
    if b == 0:
        return abs(a)
    return gcd(b, a % b)
)";

inline const char* kReturnsA = R"(def gcd(a, b):
    return a
)";

inline const char* kSwappedMod = R"(def gcd(a, b):
    while b:
        a, b = b, b % a
    return abs(a)
)";

inline const char* kOffByOne = R"(def gcd(a, b):
    for d in range(min(a, b) - 1, 0, -1):
        if a % d == 0 and b % d == 0:
            return d
    return 1
)";

inline const char* kNoAbs = R"(def gcd(a, b):
    while b:
        a, b = b, a % b
    return a
)";

inline nv::MethodSignature gcd_signature() { return nv::parse_signature("gcd(int,int)->int"); }

inline nv::SequenceSheet gcd_sheet(std::string id, std::int64_t a, std::int64_t b,
                                   std::optional<std::int64_t> expected = std::nullopt) {
  nv::SequenceSheet s;
  s.sheet_id = std::move(id);
  s.signature = gcd_signature();
  s.rows.push_back({1, "gcd", {nv::Value(a), nv::Value(b)}});
  if (expected) s.expected.push_back({1, nv::Value(*expected)});
  return s;
}

inline nv::ModuleVersion version(const char* source, std::string id = "") {
  nv::ModuleVersion v;
  v.version_id = std::move(id);
  v.source = source;
  v.entry = "gcd";
  return v;
}

// 2 correct + 4 seeded bugs over the two prompt tests and two extra tests.
inline nv::StimulusMatrix gcd_kill_sm() {
  std::vector<nv::SequenceSheet> tests = {gcd_sheet("p1", 3, 7, 1), gcd_sheet("p2", 10, 15, 5),
                                          gcd_sheet("g1", 6, 18), gcd_sheet("g2", 4, -6)};
  std::vector<nv::ModuleVersion> versions = {version(kEuclid),    version(kRecursive), version(kReturnsA),
                                             version(kSwappedMod), version(kOffByOne), version(kNoAbs)};
  return nv::build_sm("gcd", gcd_signature(), tests, versions);
}

// SRM with one single-row int test per entry of `columns[v]`.
inline nv::StimulusResponseMatrix srm_from_outputs(const std::vector<std::vector<nv::Value>>& columns) {
  nv::MethodSignature sig{"f", {nv::TypeTag::int_}, nv::TypeTag::int_};
  std::vector<nv::SequenceSheet> tests;
  for (std::size_t t = 0; t < columns.at(0).size(); ++t) {
    nv::SequenceSheet s;
    s.sheet_id = "t" + std::to_string(t + 1);
    s.signature = sig;
    s.rows.push_back({1, "f", {nv::Value(static_cast<std::int64_t>(t))}});
    tests.push_back(s);
  }
  std::vector<nv::ModuleVersion> versions;
  for (std::size_t v = 0; v < columns.size(); ++v) {
    nv::ModuleVersion mv;
    mv.source = "def f(x):\n    return " + std::to_string(v) + "\n";
    mv.entry = "f";
    versions.push_back(mv);
  }
  nv::StimulusResponseMatrix srm(nv::build_sm("fixture", sig, tests, versions));
  for (std::size_t v = 0; v < columns.size(); ++v) {
    for (std::size_t t = 0; t < columns[v].size(); ++t) {
      nv::Observation obs;
      const auto& out = columns[v][t];
      if (out.is_sentinel()) {
        nv::Status st = out.as_sentinel() == nv::Sentinel::error     ? nv::Status::error
                        : out.as_sentinel() == nv::Sentinel::timeout ? nv::Status::timeout
                                                                     : nv::Status::crash;
        obs = nv::make_failed_observation(st, 1, {}, {}, 100);
      } else {
        obs.row_outputs = {out};
        obs.per_row_wall_us = {100};
        obs.wall_us = 100 + static_cast<std::int64_t>(v);
      }
      srm.set(t, v, obs);
    }
  }
  return srm;
}

// Voting fixture: 5 versions x 4 tests.
inline nv::StimulusResponseMatrix voting_fixture() {
  auto col = [](std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return std::vector<nv::Value>{nv::Value(a), nv::Value(b), nv::Value(c), nv::Value(d)};
  };
  return srm_from_outputs({col(1, 7, 6, 4), col(1, 5, 9, 4), col(1, 5, 6, 0), col(2, 5, 6, 4), col(2, 5, 6, 4)});
}

}  // namespace fixtures
