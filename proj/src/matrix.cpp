#include "nv/matrix.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nv/errors.hpp"

namespace nv {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::prompt_base: return "prompt_base";
    case Origin::provider: return "provider";
    case Origin::manual: return "manual";
  }
  return "manual";
}

Origin parse_origin(std::string_view text) {
  if (text == "prompt_base") return Origin::prompt_base;
  if (text == "provider") return Origin::provider;
  if (text == "manual") return Origin::manual;
  throw FormatError("unknown version origin '" + std::string(text) + "'");
}

StaticMetrics measure_source(std::string_view source) {
  StaticMetrics m;
  m.source_bytes = static_cast<std::int64_t>(source.size());
  m.line_count = static_cast<std::int64_t>(std::count(source.begin(), source.end(), '\n'));
  if (!source.empty() && source.back() != '\n') ++m.line_count;
  return m;
}

std::optional<std::size_t> StimulusMatrix::find_version(std::string_view version_id) const {
  for (std::size_t i = 0; i < versions.size(); ++i)
    if (versions[i].version_id == version_id) return i;
  return std::nullopt;
}

StimulusMatrix build_sm(std::string problem_id, MethodSignature signature,
                        std::vector<SequenceSheet> tests,
                        std::vector<ModuleVersion> versions) {
  if (!is_identifier(problem_id))
    throw FormatError("problem id '" + problem_id + "' is not an identifier");
  std::set<std::string> sheet_ids;
  for (const auto& sheet : tests) {
    validate_sheet(sheet);
    if (sheet.signature != signature)
      throw SignatureMismatchError("sheet '" + sheet.sheet_id + "' has signature " +
                                   render_signature(sheet.signature) + ", matrix expects " +
                                   render_signature(signature));
    if (!sheet_ids.insert(sheet.sheet_id).second)
      throw DuplicateIdError("duplicate test id '" + sheet.sheet_id + "'");
  }
  std::set<std::string> version_ids;
  for (std::size_t i = 0; i < versions.size(); ++i) {
    auto& v = versions[i];
    if (v.version_id.empty()) v.version_id = "V" + std::to_string(i + 1);
    if (!is_identifier(v.version_id))
      throw FormatError("version id '" + v.version_id + "' is not an identifier");
    if (!version_ids.insert(v.version_id).second)
      throw DuplicateIdError("duplicate version id '" + v.version_id + "'");
    if (v.source.empty())
      throw FormatError("version '" + v.version_id + "' has empty source");
    if (v.entry.empty()) v.entry = signature.name;
    if (v.entry != signature.name)
      throw SignatureMismatchError("version '" + v.version_id + "' entry '" + v.entry +
                                   "' does not match '" + signature.name + "'");
    if (v.static_metrics == StaticMetrics{}) v.static_metrics = measure_source(v.source);
  }
  return {std::move(problem_id), std::move(signature), std::move(tests), std::move(versions)};
}

std::string_view to_string(Status status) {
  switch (status) {
    case Status::ok: return "ok";
    case Status::error: return "error";
    case Status::timeout: return "timeout";
    case Status::crash: return "crash";
  }
  return "error";
}

bool parse_status(std::string_view text, Status& out) {
  if (text == "ok") out = Status::ok;
  else if (text == "error") out = Status::error;
  else if (text == "timeout") out = Status::timeout;
  else if (text == "crash") out = Status::crash;
  else return false;
  return true;
}

Sentinel sentinel_for(Status status) {
  switch (status) {
    case Status::timeout: return Sentinel::timeout;
    case Status::crash: return Sentinel::crash;
    default: return Sentinel::error;
  }
}

Observation make_failed_observation(Status status, std::size_t rows,
                                    std::vector<Value> outputs,
                                    std::vector<std::int64_t> per_row_wall_us,
                                    std::int64_t wall_us) {
  Observation obs;
  obs.status = status;
  obs.wall_us = wall_us;
  obs.row_outputs = std::move(outputs);
  obs.per_row_wall_us = std::move(per_row_wall_us);
  if (status != Status::ok && obs.row_outputs.size() >= rows && rows > 0)
    obs.row_outputs.resize(rows - 1);
  obs.row_outputs.resize(std::min(obs.row_outputs.size(), rows));
  while (obs.row_outputs.size() < rows) obs.row_outputs.emplace_back(sentinel_for(status));
  obs.per_row_wall_us.resize(rows, 0);
  return obs;
}

StimulusResponseMatrix::StimulusResponseMatrix(StimulusMatrix stimulus)
    : stimulus_(std::move(stimulus)),
      cells_(stimulus_.test_count() * stimulus_.version_count()) {}

const Observation& StimulusResponseMatrix::cell(std::size_t test, std::size_t version) const {
  if (test >= test_count() || version >= version_count())
    throw IndexError("cell (" + std::to_string(test) + "," + std::to_string(version) +
                     ") outside " + std::to_string(test_count()) + "x" +
                     std::to_string(version_count()) + " matrix");
  return cells_[test * version_count() + version];
}

void StimulusResponseMatrix::set(std::size_t test, std::size_t version, Observation obs) {
  if (test >= test_count() || version >= version_count())
    throw IndexError("cell (" + std::to_string(test) + "," + std::to_string(version) +
                     ") outside matrix");
  cells_[test * version_count() + version] = std::move(obs);
}

StimulusResponseMatrix StimulusResponseMatrix::with_scaled_timing(std::int64_t factor) const {
  StimulusResponseMatrix out = *this;
  for (auto& c : out.cells_) {
    c.wall_us *= factor;
    for (auto& r : c.per_row_wall_us) r *= factor;
  }
  return out;
}

std::vector<std::string> output_vector(const StimulusResponseMatrix& srm, std::size_t test,
                                       std::size_t version) {
  const auto& obs = srm.cell(test, version);
  std::vector<std::string> out;
  out.reserve(obs.row_outputs.size());
  for (const auto& v : obs.row_outputs) out.push_back(canonical_encode(v));
  return out;
}

std::string behavior_signature(const StimulusResponseMatrix& srm, std::size_t version) {
  // '\x1f' and '\x1e' cannot occur unescaped in canonical encodings.
  std::string sig;
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    for (const auto& o : output_vector(srm, t, version)) {
      sig += o;
      sig += '\x1f';
    }
    sig += '\x1e';
  }
  return sig;
}

bool same_behavior(const StimulusResponseMatrix& a, const StimulusResponseMatrix& b) {
  if (!(a.stimulus() == b.stimulus())) return false;
  for (std::size_t t = 0; t < a.test_count(); ++t)
    for (std::size_t v = 0; v < a.version_count(); ++v) {
      const auto& x = a.cell(t, v);
      const auto& y = b.cell(t, v);
      if (x.status != y.status || !(x.row_outputs == y.row_outputs)) return false;
      if (x.per_row_wall_us.size() != y.per_row_wall_us.size()) return false;
    }
  return true;
}

ojson sm_to_json(const StimulusMatrix& sm) {
  ojson header;
  header["format"] = kSrmFormat;
  header["problem"] = sm.problem_id;
  header["signature"] = render_signature(sm.signature);
  header["tests"] = ojson::array();
  for (const auto& t : sm.tests) header["tests"].push_back(render_sheet(t));
  header["versions"] = ojson::array();
  for (const auto& v : sm.versions) {
    ojson jv;
    jv["id"] = v.version_id;
    jv["language"] = v.language_tag;
    jv["source"] = v.source;
    jv["entry"] = v.entry;
    jv["origin"] = to_string(v.origin);
    jv["static_metrics"] = {{"source_bytes", v.static_metrics.source_bytes},
                            {"line_count", v.static_metrics.line_count}};
    header["versions"].push_back(std::move(jv));
  }
  return header;
}

StimulusMatrix sm_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format"))
    throw FormatVersionError("header record lacks a 'format' field");
  if (j.at("format") != kSrmFormat)
    throw FormatVersionError("unsupported format " + j.at("format").dump() + ", expected \"" +
                             std::string(kSrmFormat) + "\"");
  try {
    auto signature = parse_signature(j.at("signature").get<std::string>());
    std::vector<SequenceSheet> tests;
    for (const auto& t : j.at("tests")) tests.push_back(parse_sheet(t.get<std::string>()));
    std::vector<ModuleVersion> versions;
    for (const auto& jv : j.at("versions")) {
      ModuleVersion v;
      v.version_id = jv.at("id").get<std::string>();
      v.language_tag = jv.at("language").get<std::string>();
      v.source = jv.at("source").get<std::string>();
      v.entry = jv.at("entry").get<std::string>();
      v.origin = parse_origin(jv.at("origin").get<std::string>());
      v.static_metrics.source_bytes = jv.at("static_metrics").at("source_bytes").get<std::int64_t>();
      v.static_metrics.line_count = jv.at("static_metrics").at("line_count").get<std::int64_t>();
      versions.push_back(std::move(v));
    }
    return build_sm(j.at("problem").get<std::string>(), std::move(signature), std::move(tests),
                    std::move(versions));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed matrix header: ") + e.what());
  }
}

std::string srm_to_jsonl(const StimulusResponseMatrix& srm) {
  std::string out = sm_to_json(srm.stimulus()).dump();
  out += '\n';
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    for (std::size_t v = 0; v < srm.version_count(); ++v) {
      const auto& obs = srm.cell(t, v);
      ojson rec;
      rec["t"] = t;
      rec["v"] = v;
      rec["status"] = to_string(obs.status);
      rec["outputs"] = output_vector(srm, t, v);
      rec["wall_us"] = obs.wall_us;
      rec["per_row_wall_us"] = obs.per_row_wall_us;
      if (!obs.extra.is_null()) rec["extra"] = ojson::parse(obs.extra.dump());
      out += rec.dump();
      out += '\n';
    }
  }
  return out;
}

StimulusResponseMatrix srm_from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::optional<StimulusResponseMatrix> srm;
  std::vector<bool> seen;
  std::size_t filled = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!srm) {
      srm.emplace(sm_from_json(rec));
      seen.assign(srm->test_count() * srm->version_count(), false);
      continue;
    }
    try {
      auto t = rec.at("t").get<std::size_t>();
      auto v = rec.at("v").get<std::size_t>();
      if (t >= srm->test_count() || v >= srm->version_count())
        throw FormatError("line " + std::to_string(line_no) + ": cell index out of range");
      auto flag = seen[t * srm->version_count() + v];
      if (flag) throw FormatError("line " + std::to_string(line_no) + ": duplicate cell record");
      flag = true;
      ++filled;
      Observation obs;
      if (!parse_status(rec.at("status").get<std::string>(), obs.status))
        throw FormatError("line " + std::to_string(line_no) + ": unknown status");
      for (const auto& o : rec.at("outputs")) obs.row_outputs.push_back(canonical_decode(o.get<std::string>()));
      obs.wall_us = rec.at("wall_us").get<std::int64_t>();
      obs.per_row_wall_us = rec.at("per_row_wall_us").get<std::vector<std::int64_t>>();
      if (rec.contains("extra")) obs.extra = rec.at("extra");
      const auto rows = srm->stimulus().tests[t].rows.size();
      if (obs.row_outputs.size() != rows || obs.per_row_wall_us.size() != rows)
        throw FormatError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(rows) + " row outputs");
      const bool has_sentinel = std::any_of(obs.row_outputs.begin(), obs.row_outputs.end(),
                                            [](const Value& x) { return x.is_sentinel(); });
      if (has_sentinel == (obs.status == Status::ok))
        throw FormatError("line " + std::to_string(line_no) +
                          ": status and sentinel outputs disagree");
      srm->set(t, v, std::move(obs));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!srm) throw FormatError("empty SRM file");
  if (filled != seen.size())
    throw FormatError("SRM file has " + std::to_string(filled) + " of " +
                      std::to_string(seen.size()) + " cell records");
  return std::move(*srm);
}

void save_srm(const StimulusResponseMatrix& srm, const std::filesystem::path& path) {
  write_text_file(path, srm_to_jsonl(srm));
}

StimulusResponseMatrix load_srm(const std::filesystem::path& path) {
  return srm_from_jsonl(read_text_file(path));
}

bool TestExpectation::matches(const std::vector<std::string>& outputs) const {
  if (!expected) return false;
  if (rows.empty()) return outputs == *expected;
  if (rows.size() != expected->size()) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= outputs.size() || outputs[rows[i]] != (*expected)[i]) return false;
  }
  return true;
}

namespace {

void append_csv_rows(std::string& out, const StimulusResponseMatrix& srm,
                     const std::vector<TestExpectation>* expectations) {
  const auto& sm = srm.stimulus();
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    for (std::size_t v = 0; v < srm.version_count(); ++v) {
      const auto& obs = srm.cell(t, v);
      out += sm.problem_id + ',' + sm.tests[t].sheet_id + ',' + sm.versions[v].version_id + ',' +
             std::string(to_string(obs.status)) + ',' + std::to_string(obs.wall_us) + ',';
      if (expectations && t < expectations->size() && (*expectations)[t].decided())
        out += (*expectations)[t].matches(output_vector(srm, t, v)) ? '1' : '0';
      out += '\n';
    }
  }
}

constexpr std::string_view kCsvHeader = "problem,test,version,status,wall_us,oracle_match\n";

}  // namespace

std::string export_csv(const StimulusResponseMatrix& srm,
                       const std::vector<TestExpectation>* expectations) {
  std::string out(kCsvHeader);
  append_csv_rows(out, srm, expectations);
  return out;
}

std::string export_csv(std::span<const CsvSource> sources) {
  std::string out(kCsvHeader);
  for (const auto& s : sources) append_csv_rows(out, *s.srm, s.expectations);
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace nv
