#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sophia/errors.hpp"
#include "sophia/experiment.hpp"

namespace sophia {

const char* const kCsvHeader =
    "step,loss,eval_loss,lr,unclipped_frac,h_norm,grad_norm,grad_clip_triggered";

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::filesystem::path* path) {
  try {
    size_t pos = 0;
    double v = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad CSV field '" + field + "'" +
                  (path ? " in " + path->string() : std::string()));
  }
}

RunRecord parse_csv_impl(std::istream& in, const std::filesystem::path* path) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw IoError("missing or unexpected CSV header" +
                  (path ? " in " + path->string() : std::string()));
  RunRecord record;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw IoError("expected 8 CSV fields, got " + std::to_string(fields.size()));
    RunRow row;
    row.step = static_cast<int64_t>(parse_double(fields[0], path));
    row.loss = parse_double(fields[1], path);
    row.eval_loss = parse_double(fields[2], path);
    row.lr = parse_double(fields[3], path);
    row.unclipped_frac = parse_double(fields[4], path);
    row.h_norm = parse_double(fields[5], path);
    row.grad_norm = parse_double(fields[6], path);
    row.grad_clip_triggered = fields[7] == "1";
    record.rows.push_back(row);
  }
  return record;
}

}  // namespace

std::string csv_to_string(const RunRecord& record) {
  std::string out = kCsvHeader;
  out += "\n";
  for (const RunRow& r : record.rows) {
    out += std::to_string(r.step);
    out += ",";
    out += fmt(r.loss);
    out += ",";
    out += fmt(r.eval_loss);
    out += ",";
    out += fmt(r.lr);
    out += ",";
    out += fmt(r.unclipped_frac);
    out += ",";
    out += fmt(r.h_norm);
    out += ",";
    out += fmt(r.grad_norm);
    out += ",";
    out += r.grad_clip_triggered ? "1" : "0";
    out += "\n";
  }
  return out;
}

void emit_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << csv_to_string(record);
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

RunRecord parse_csv_string(const std::string& text) {
  std::stringstream ss(text);
  return parse_csv_impl(ss, nullptr);
}

RunRecord parse_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv_impl(in, &path);
}

}  // namespace sophia
