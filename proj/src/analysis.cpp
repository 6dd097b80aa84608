#include "nv/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "nv/errors.hpp"

namespace nv {

namespace {

std::size_t require_version(const StimulusResponseMatrix& srm, std::string_view id) {
  auto v = srm.stimulus().find_version(id);
  if (!v) throw UnknownVersionError("no version '" + std::string(id) + "' in the matrix");
  return *v;
}

KillMatrix skeleton(const StimulusResponseMatrix& srm) {
  KillMatrix km;
  for (const auto& t : srm.stimulus().tests) km.test_ids.push_back(t.sheet_id);
  for (const auto& v : srm.stimulus().versions) km.version_ids.push_back(v.version_id);
  km.kills.assign(srm.test_count(), std::vector<bool>(srm.version_count(), false));
  return km;
}

void fill_equivalents(KillMatrix& km) {
  auto base = km.base_index();
  for (std::size_t v = 0; v < km.version_ids.size(); ++v) {
    if (base && *base == v) continue;
    bool killed = false;
    for (const auto& row : km.kills) killed = killed || row[v];
    if (!killed) km.equivalent_versions.push_back(km.version_ids[v]);
  }
}

std::string fmt_double(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", d);
  return buf;
}

}  // namespace

std::optional<std::size_t> KillMatrix::base_index() const {
  if (reference != Reference::base_version) return std::nullopt;
  for (std::size_t v = 0; v < version_ids.size(); ++v)
    if (version_ids[v] == base_id) return v;
  return std::nullopt;
}

std::vector<bool> KillMatrix::killed_by(const std::vector<std::size_t>& tests) const {
  std::vector<bool> out(version_ids.size(), false);
  for (auto t : tests)
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = out[v] || kills.at(t)[v];
  return out;
}

KillMatrix kill_matrix(const StimulusResponseMatrix& srm, const OracleVerdict& verdict) {
  if (verdict.per_test.size() != srm.test_count())
    throw UsageError("verdict covers " + std::to_string(verdict.per_test.size()) + " tests, matrix has " +
                     std::to_string(srm.test_count()));
  for (std::size_t t = 0; t < verdict.per_test.size(); ++t)
    if (!verdict.per_test[t].expectation.decided())
      throw UndecidedOracleError("oracle is undecided on test '" + srm.stimulus().tests[t].sheet_id + "'");
  auto km = skeleton(srm);
  km.reference = KillMatrix::Reference::oracle;
  for (std::size_t t = 0; t < srm.test_count(); ++t)
    for (std::size_t v = 0; v < srm.version_count(); ++v)
      km.kills[t][v] = !verdict.per_test[t].expectation.matches(output_vector(srm, t, v));
  fill_equivalents(km);
  return km;
}

KillMatrix kill_matrix(const StimulusResponseMatrix& srm, std::string_view base_version_id) {
  auto base = require_version(srm, base_version_id);
  auto km = skeleton(srm);
  km.reference = KillMatrix::Reference::base_version;
  km.base_id = std::string(base_version_id);
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    auto ref = output_vector(srm, t, base);
    for (std::size_t v = 0; v < srm.version_count(); ++v) km.kills[t][v] = output_vector(srm, t, v) != ref;
  }
  fill_equivalents(km);
  return km;
}

KillScore kill_score(const KillMatrix& km, const std::vector<std::size_t>& tests) {
  KillScore s;
  auto killed = km.killed_by(tests);
  auto base = km.base_index();
  for (std::size_t v = 0; v < killed.size(); ++v) {
    if (base && *base == v) continue;
    ++s.candidates;
    if (killed[v]) ++s.killed;
  }
  s.killable = s.candidates - km.equivalent_versions.size();
  s.raw = s.candidates ? static_cast<double>(s.killed) / static_cast<double>(s.candidates) : 0.0;
  if (s.killable) s.adjusted = static_cast<double>(s.killed) / static_cast<double>(s.killable);
  return s;
}

KillScore kill_score(const KillMatrix& km) {
  std::vector<std::size_t> all(km.test_ids.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return kill_score(km, all);
}

std::vector<std::size_t> minimize_tests(const KillMatrix& km) {
  const auto nv = km.version_ids.size();
  std::vector<bool> covered(nv, false);
  std::vector<std::size_t> picked;
  while (true) {
    std::size_t best = km.kills.size(), best_gain = 0;
    for (std::size_t t = 0; t < km.kills.size(); ++t) {
      std::size_t gain = 0;
      for (std::size_t v = 0; v < nv; ++v) gain += km.kills[t][v] && !covered[v];
      if (gain > best_gain) {
        best_gain = gain;
        best = t;
      }
    }
    if (best_gain == 0) break;
    picked.push_back(best);
    for (std::size_t v = 0; v < nv; ++v) covered[v] = covered[v] || km.kills[best][v];
  }
  // Later picks can make an earlier one redundant.
  for (std::size_t i = picked.size(); i-- > 0;) {
    auto without = picked;
    without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
    if (km.killed_by(without) == covered) picked = std::move(without);
  }
  return picked;
}

DiffReport diff_report(const StimulusResponseMatrix& srm, std::string_view base_version_id) {
  auto base = require_version(srm, base_version_id);
  DiffReport r;
  r.base_id = std::string(base_version_id);
  std::vector<std::size_t> counts(srm.version_count(), 0);
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    auto ref = output_vector(srm, t, base);
    for (std::size_t v = 0; v < srm.version_count(); ++v) {
      if (v == base) continue;
      auto out = output_vector(srm, t, v);
      if (out == ref) continue;
      ++counts[v];
      r.entries.push_back({srm.stimulus().tests[t].sheet_id, srm.stimulus().versions[v].version_id, ref, out});
    }
  }
  for (std::size_t v = 0; v < srm.version_count(); ++v)
    if (v != base) r.per_version.emplace_back(srm.stimulus().versions[v].version_id, counts[v]);
  return r;
}

nlohmann::ordered_json diff_to_json(const DiffReport& r) {
  nlohmann::ordered_json j;
  j["base"] = r.base_id;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    nlohmann::ordered_json ej;
    ej["test"] = e.test_id;
    ej["version"] = e.version_id;
    ej["base_outputs"] = e.base_outputs;
    ej["version_outputs"] = e.version_outputs;
    entries.push_back(std::move(ej));
  }
  j["discrepancies"] = std::move(entries);
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (const auto& [id, n] : r.per_version) summary[id] = n;
  j["summary"] = std::move(summary);
  return j;
}

std::string diff_to_text(const DiffReport& r) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " | " : "") + v[i];
    return s;
  };
  std::vector<std::array<std::string, 4>> rows = {{"test", "version", "base " + r.base_id, "version output"}};
  for (const auto& e : r.entries) rows.push_back({e.test_id, e.version_id, join(e.base_outputs), join(e.version_outputs)});
  std::array<std::size_t, 4> width{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 4; ++c) {
      out += row[c];
      if (c < 3) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  }
  if (r.entries.empty()) out += "no discrepancies\n";
  out += "differing tests per version:";
  for (const auto& [id, n] : r.per_version) out += " " + id + "=" + std::to_string(n);
  out += '\n';
  return out;
}

void validate_weights(const RankingWeights& w) {
  for (double x : {w.w_prompt_pass, w.w_oracle_agree, w.w_speed, w.w_static})
    if (!(x >= 0) || !std::isfinite(x)) throw UsageError("ranking weights must be non-negative");
  double sum = w.w_prompt_pass + w.w_oracle_agree + w.w_speed + w.w_static;
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("ranking weights must sum to 1 (got " + fmt_double(sum) + ")");
}

bool passes_assertions(const StimulusResponseMatrix& srm, std::size_t t, std::size_t v, const SequenceSheet& sheet) {
  const auto& obs = srm.cell(t, v);
  for (const auto& a : sheet.expected) {
    auto row = static_cast<std::size_t>(a.row_index - 1);
    if (row >= obs.row_outputs.size() || obs.row_outputs[row].is_sentinel()) return false;
    if (canonical_encode(obs.row_outputs[row]) != canonical_encode(a.expected)) return false;
  }
  return true;
}

std::vector<RankEntry> rank_versions(const StimulusResponseMatrix& srm, const std::vector<SequenceSheet>& prompt_tests,
                                     const OracleVerdict* verdict, const RankingWeights& weights) {
  validate_weights(weights);
  if (verdict && verdict->per_test.size() != srm.test_count())
    throw UsageError("verdict does not cover the matrix tests");
  const auto& tests = srm.stimulus().tests;
  std::vector<std::pair<std::size_t, const SequenceSheet*>> prompt_cols;
  for (const auto& p : prompt_tests) {
    auto it = std::find_if(tests.begin(), tests.end(), [&](const SequenceSheet& s) { return s.sheet_id == p.sheet_id; });
    if (it == tests.end()) throw UsageError("prompt test '" + p.sheet_id + "' is not in the matrix");
    prompt_cols.emplace_back(static_cast<std::size_t>(it - tests.begin()), &p);
  }

  std::vector<std::size_t> survivors;
  for (std::size_t v = 0; v < srm.version_count(); ++v) {
    bool ok = std::all_of(prompt_cols.begin(), prompt_cols.end(),
                          [&](const auto& pc) { return passes_assertions(srm, pc.first, v, *pc.second); });
    if (ok) survivors.push_back(v);
  }
  if (survivors.empty()) throw NoSurvivorsError("no version passed the prompt tests");

  auto total_wall = [&](std::size_t v) {
    std::int64_t sum = 0;
    for (std::size_t t = 0; t < srm.test_count(); ++t) sum += srm.cell(t, v).wall_us;
    return static_cast<double>(std::max<std::int64_t>(sum, 1));
  };
  auto bytes = [&](std::size_t v) {
    return static_cast<double>(std::max<std::int64_t>(srm.stimulus().versions[v].static_metrics.source_bytes, 1));
  };
  double min_wall = INFINITY, min_bytes = INFINITY;
  for (auto v : survivors) {
    min_wall = std::min(min_wall, total_wall(v));
    min_bytes = std::min(min_bytes, bytes(v));
  }

  std::vector<RankEntry> out;
  for (auto v : survivors) {
    RankEntry e;
    e.version_id = srm.stimulus().versions[v].version_id;
    e.prompt_pass = 1.0;
    if (verdict) {
      std::size_t decided = 0, matched = 0;
      for (std::size_t t = 0; t < srm.test_count(); ++t) {
        const auto& exp = verdict->per_test[t].expectation;
        if (!exp.decided()) continue;
        ++decided;
        matched += exp.matches(output_vector(srm, t, v));
      }
      e.oracle_agree = decided ? static_cast<double>(matched) / static_cast<double>(decided) : 0.0;
    }
    e.speed = min_wall / total_wall(v);
    e.static_size = min_bytes / bytes(v);
    e.score = weights.w_prompt_pass * e.prompt_pass + weights.w_oracle_agree * e.oracle_agree +
              weights.w_speed * e.speed + weights.w_static * e.static_size;
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return natural_less(a.version_id, b.version_id);
  });
  return out;
}

nlohmann::ordered_json kill_matrix_to_json(const KillMatrix& km) {
  nlohmann::ordered_json j;
  j["reference"] = km.reference == KillMatrix::Reference::oracle ? "oracle" : "base_version";
  if (km.reference == KillMatrix::Reference::base_version) j["base"] = km.base_id;
  j["tests"] = km.test_ids;
  j["versions"] = km.version_ids;
  auto grid = nlohmann::ordered_json::array();
  for (const auto& row : km.kills) {
    auto r = nlohmann::ordered_json::array();
    for (bool b : row) r.push_back(b);
    grid.push_back(std::move(r));
  }
  j["kills"] = std::move(grid);
  j["equivalent_versions"] = km.equivalent_versions;
  return j;
}

nlohmann::ordered_json kill_score_to_json(const KillScore& s) {
  nlohmann::ordered_json j;
  j["raw"] = s.raw;
  j["adjusted"] = s.adjusted ? nlohmann::ordered_json(*s.adjusted) : nlohmann::ordered_json(nullptr);
  j["killed"] = s.killed;
  j["candidates"] = s.candidates;
  j["killable"] = s.killable;
  return j;
}

nlohmann::ordered_json ranking_to_json(const std::vector<RankEntry>& ranking) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : ranking) {
    nlohmann::ordered_json j;
    j["version_id"] = e.version_id;
    j["score"] = e.score;
    j["components"] = {{"prompt_pass", e.prompt_pass},
                       {"oracle_agree", e.oracle_agree},
                       {"speed", e.speed},
                       {"static", e.static_size}};
    arr.push_back(std::move(j));
  }
  return arr;
}

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < a.size() && j < b.size()) {
    if (digit(a[i]) && digit(b[j])) {
      std::size_t i2 = i, j2 = j;
      while (i2 < a.size() && a[i2] == '0') ++i2;
      while (j2 < b.size() && b[j2] == '0') ++j2;
      std::size_t ie = i2, je = j2;
      while (ie < a.size() && digit(a[ie])) ++ie;
      while (je < b.size() && digit(b[je])) ++je;
      if (ie - i2 != je - j2) return ie - i2 < je - j2;
      auto c = a.substr(i2, ie - i2).compare(b.substr(j2, je - j2));
      if (c != 0) return c < 0;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

}  // namespace nv
