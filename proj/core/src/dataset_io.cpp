#include <fstream>
#include <sstream>

#include <json.hpp>

#include "d3pr/data.hpp"
#include "d3pr/errors.hpp"

namespace d3pr {

namespace {

using nlohmann::json;

template <int Dim>
json pose_to_json(const PoseSeq<Dim>& x) {
  json frames = json::array();
  for (std::size_t n = 0; n < x.frames(); ++n) {
    json joints = json::array();
    for (std::size_t j = 0; j < x.joints(); ++j) {
      json p = json::array();
      for (int c = 0; c < Dim; ++c) p.push_back(x(n, j, static_cast<std::size_t>(c)));
      joints.push_back(std::move(p));
    }
    frames.push_back(std::move(joints));
  }
  return frames;
}

const json& require_field(const json& doc, const char* field) {
  auto it = doc.find(field);
  if (it == doc.end()) throw SchemaError(field, "missing");
  return *it;
}

std::size_t require_count(const json& doc, const char* field) {
  const json& v = require_field(doc, field);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw SchemaError(field, "expected a non-negative integer");
  return v.get<std::size_t>();
}

template <int Dim>
PoseSeq<Dim> pose_from_json(const json& v, const char* field, std::size_t frames, std::size_t joints) {
  if (!v.is_array() || v.size() != frames) throw SchemaError(field, "expected " + std::to_string(frames) + " frames");
  PoseSeq<Dim> x(frames, joints);
  for (std::size_t n = 0; n < frames; ++n) {
    const json& fr = v[n];
    if (!fr.is_array() || fr.size() != joints) {
      throw SchemaError(field, "frame " + std::to_string(n) + ": expected " + std::to_string(joints) + " joints");
    }
    for (std::size_t j = 0; j < joints; ++j) {
      const json& p = fr[j];
      if (!p.is_array() || p.size() != static_cast<std::size_t>(Dim)) {
        throw SchemaError(field, "frame " + std::to_string(n) + " joint " + std::to_string(j) + ": expected " +
                                     std::to_string(Dim) + " numbers");
      }
      for (int c = 0; c < Dim; ++c) {
        const json& num = p[static_cast<std::size_t>(c)];
        if (!num.is_number()) throw SchemaError(field, "non-numeric coordinate");
        x(n, j, static_cast<std::size_t>(c)) = num.get<double>();
      }
    }
  }
  return x;
}

}  // namespace

std::string record_to_json_line(const SequenceRecord& record) {
  json doc;
  doc["id"] = record.id;
  doc["frames"] = record.frames();
  doc["joints"] = record.joints();
  if (record.gt3d) doc["gt3d"] = pose_to_json(*record.gt3d);
  doc["pose2d"] = pose_to_json(record.pose2d);
  doc["noisy3d"] = pose_to_json(record.noisy3d);
  return doc.dump();
}

SequenceRecord record_from_json_line(const std::string& line, std::size_t line_number) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, e.what());
  }
  if (!doc.is_object()) throw ParseError(line_number, "expected a JSON object");
  try {
    SequenceRecord r;
    const json& id = require_field(doc, "id");
    if (!id.is_string()) throw SchemaError("id", "expected a string");
    r.id = id.get<std::string>();
    const std::size_t frames = require_count(doc, "frames");
    const std::size_t joints = require_count(doc, "joints");
    r.pose2d = pose_from_json<2>(require_field(doc, "pose2d"), "pose2d", frames, joints);
    r.noisy3d = pose_from_json<3>(require_field(doc, "noisy3d"), "noisy3d", frames, joints);
    if (auto it = doc.find("gt3d"); it != doc.end() && !it->is_null()) {
      r.gt3d = pose_from_json<3>(*it, "gt3d", frames, joints);
    }
    return r;
  } catch (const SchemaError& e) {
    throw SchemaError(e.field(), e.detail() + " (line " + std::to_string(line_number) + ")");
  }
}

void save_dataset(const std::vector<SequenceRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

std::vector<SequenceRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<SequenceRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(record_from_json_line(line, number));
    if (records.size() > 1 && records.back().joints() != records.front().joints()) {
      throw SchemaError("joints", "line " + std::to_string(number) + ": joint count differs within dataset");
    }
  }
  return records;
}

}  // namespace d3pr
