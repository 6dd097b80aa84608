#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "nv/pysub.hpp"

using nv::Value;
using namespace nv::pysub;

namespace {

CallResult run(const std::string& src, const std::string& fn, std::vector<Value> args = {},
               Limits limits = {}) {
  Interpreter in(compile(src));
  auto loaded = in.load(limits);
  if (loaded.outcome != Outcome::ok) return loaded;
  return in.call(fn, args, limits);
}

std::string eval_canon(const std::string& expr) {
  auto r = run("def f():\n    return " + expr + "\n", "f");
  if (r.outcome != Outcome::ok) return "!" + r.error_type;
  return nv::canonical_encode(r.value);
}

}  // namespace

TEST_CASE("arithmetic follows Python floor semantics") {
  CHECK(eval_canon("-7 // 2") == "-4");
  CHECK(eval_canon("-7 % 2") == "1");
  CHECK(eval_canon("7 % -2") == "-1");
  CHECK(eval_canon("7 / 2") == "3.5");
  CHECK(eval_canon("-7.5 // 2") == "-4.0");
  CHECK(eval_canon("2 ** 10") == "1024");
  CHECK(eval_canon("2 ** -1") == "0.5");
  CHECK(eval_canon("0.1 + 0.2") == "0.30000000000000004");
  CHECK(eval_canon("1 / 0") == "!ZeroDivisionError");
  CHECK(eval_canon("2 ** 64") == "!OverflowError");
  CHECK(eval_canon("True + True") == "2");
}

TEST_CASE("containers, comprehensions and builtins") {
  CHECK(eval_canon("[x * x for x in range(5) if x % 2 == 0]") == "[0,4,16]");
  CHECK(eval_canon("sorted([3, 1, 2], reverse=True)") == "[3,2,1]");
  CHECK(eval_canon("sorted(['bb', 'a', 'ccc'], key=len)") == "[\"a\",\"bb\",\"ccc\"]");
  CHECK(eval_canon("{'b': 1, 'a': [1, 2]}") == "{\"a\":[1,2],\"b\":1}");
  CHECK(eval_canon("(1, 'x')") == "[1,\"x\"]");
  CHECK(eval_canon("'a,b,,c'.split(',')") == "[\"a\",\"b\",\"\",\"c\"]");
  CHECK(eval_canon("'-'.join(str(i) for i in range(3))") == "\"0-1-2\"");
  CHECK(eval_canon("[1, 2, 3, 4][::-2]") == "[4,2]");
  CHECK(eval_canon("'hello'[1:3]") == "\"el\"");
  CHECK(eval_canon("max([4, 9, 2], key=lambda v: -v)") == "2");
  CHECK(eval_canon("sum(range(101))") == "5050");
  CHECK(eval_canon("list(zip([1, 2], 'ab'))") == "[[1,\"a\"],[2,\"b\"]]");
  CHECK(eval_canon("divmod(-7, 2)") == "[-4,1]");
  CHECK(eval_canon("round(2.5)") == "2");
  CHECK(eval_canon("str(1e16) + str(0.0001) + str(1e-05)") == "\"1e+160.00011e-05\"");
  CHECK(eval_canon("len({1: 'a', 1.0: 'b', True: 'c'})") == "1");
  CHECK(eval_canon("{1: 2}") == "!TypeError");  // non-string keys cannot be returned
  CHECK(eval_canon("[1][5]") == "!IndexError");
  CHECK(eval_canon("{}['k']") == "!KeyError");
  CHECK(eval_canon("int('12x')") == "!ValueError");
  CHECK(eval_canon("None") == "null");
}

TEST_CASE("statements, closures, exceptions") {
  const char* src = R"(
import math
counter = 0

def bump():
    global counter
    counter += 1
    return counter

def make_adder(n):
    def add(x):
        return x + n
    return add

def f(a, b):
    try:
        return a // b
    except ZeroDivisionError as e:
        return -1
    except Exception:
        return -2

def g(n):
    out = []
    i = 0
    while True:
        i += 1
        if i % 2:
            continue
        if i > n:
            break
        out.append(i)
    return out

def h():
    bump()
    return bump() + make_adder(10)(5) + math.gcd(12, 18)
)";
  CHECK(nv::canonical_encode(run(src, "f", {Value(7), Value(2)}).value) == "3");
  CHECK(nv::canonical_encode(run(src, "f", {Value(7), Value(0)}).value) == "-1");
  CHECK(nv::canonical_encode(run(src, "g", {Value(7)}).value) == "[2,4,6]");
  CHECK(nv::canonical_encode(run(src, "h").value) == "23");
}

TEST_CASE("limits: timeout, recursion, memory, crash") {
  Limits short_wall;
  short_wall.wall = std::chrono::milliseconds(100);
  auto t = run("def f():\n    while True:\n        pass\n", "f", {}, short_wall);
  CHECK(t.outcome == Outcome::timeout);

  auto s = run("import time\ndef f():\n    time.sleep(5)\n", "f", {}, short_wall);
  CHECK(s.outcome == Outcome::timeout);

  auto r = run("def f(n):\n    return f(n + 1)\n", "f", {Value(0)});
  CHECK(r.outcome == Outcome::error);
  CHECK(r.error_type == "RecursionError");

  // Depth below the limit succeeds.
  auto ok = run("def f(n):\n    return 0 if n == 0 else 1 + f(n - 1)\n", "f", {Value(900)});
  REQUIRE(ok.outcome == Outcome::ok);
  CHECK(ok.value.as_int() == 900);

  Limits small;
  small.mem_mb = 16;
  auto m = run("def f():\n    x = [0] * 10\n    while True:\n        x = x + x\n", "f", {}, small);
  CHECK(m.outcome == Outcome::error);
  CHECK(m.error_type == "MemoryError");

  auto c = run("import os\ndef f():\n    os._exit(3)\n", "f");
  CHECK(c.outcome == Outcome::crash);
  CHECK(c.exit_code == 3);
}

TEST_CASE("unsupported syntax is a compile error") {
  CHECK_THROWS_AS(compile("class A:\n    pass\n"), CompileError);
  CHECK_THROWS_AS(compile("def f(:\n"), CompileError);
  CHECK_THROWS_AS(compile("x = f'{1}'\n"), CompileError);
}

// Differential check against a real CPython when one is on PATH.
TEST_CASE("agrees with CPython on a snippet corpus") {
  if (std::system("python3 -c 'pass' >/dev/null 2>&1") != 0) {
    MESSAGE("python3 not available; skipped");
    return;
  }
  const std::vector<std::string> exprs = {
      "[(-x) // 3 for x in range(-7, 8)]",
      "[x % -3 for x in range(-7, 8)]",
      "[round(x / 4, 1) for x in range(-9, 9)]",
      "[str(1.0 / x) for x in range(1, 12)]",
      "[repr(x * 1.1) for x in range(12)]",
      "sorted({'b': 2, 'a': 1}.items())",
      "'  Hello World  '.strip().lower().replace('o', '0')",
      "[int(x) for x in ['7', ' -3 ', '+4', '1_000']]",
      "[abs(-3), max(1, 5, 3), min('b', 'a'), pow(3, 4, 5), 7 ** 2]",
      "list(enumerate('abc', 1))",
      "[x for row in [[1, 2], [3]] for x in row]",
      "[s.isdigit() for s in ['12', 'a1', '']]",
      "'%s' % 'x' if False else 'a b  c'.split()",
      "[7 >> 1, -7 >> 1, 5 & 3, 5 | 3, 5 ^ 3, ~5, 1 << 10]",
      "str([1.5, 'x', None, True, (1,), {'k': 2}])",
      "([1, 2] < [1, 3], (2,) > (1, 9), 'abc' < 'abd')",
      "[float('inf') > 1e308, 1e308 * 10 == float('inf')]",
      "str(2.0 ** 0.5) + str(10 ** 15 * 1.0) + str(123456789.123)",
  };
  std::string script = "import json\n";
  for (const auto& e : exprs) script += "print(repr(" + e + "))\n";
  const std::string path = "/tmp/nv_pysub_diff.py";
  {
    std::ofstream out(path);
    out << script;
  }
  std::string expected;
  FILE* pipe = popen(("python3 " + path).c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) expected += buf;
  pclose(pipe);

  std::string program = "def f():\n";
  for (const auto& e : exprs) program += "    print(repr(" + e + "))\n";
  Interpreter in(compile(program));
  REQUIRE(in.load({}).outcome == Outcome::ok);
  auto r = in.call("f", {}, {});
  const std::string why = r.error_type + ": " + r.message;
  REQUIRE_MESSAGE(r.outcome == Outcome::ok, why);
  CHECK(in.take_output() == expected);
}
