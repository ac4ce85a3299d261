#include "procrit/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "procrit/errors.hpp"

namespace procrit {

namespace {

using ojson = nlohmann::ordered_json;

template <typename T>
ojson optional_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

const ojson& require(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'");
  return *it;
}

template <typename T>
std::optional<T> optional_field(const ojson& obj, const char* key) {
  const ojson& v = require(obj, key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

}  // namespace

std::string sample_to_json_line(const EpisodeSample& s) {
  ojson j;
  j["sample_id"] = s.sample_id;
  j["task_info"] = s.task_info;
  j["phi_init"] = optional_json(s.phi_init);
  j["phi_seq"] = optional_json(s.phi_seq);
  j["phi_curr"] = optional_json(s.phi_curr);
  j["instruction_embedding"] = s.instruction_embedding;
  j["modality_mask"] = {s.modality_mask.init, s.modality_mask.seq, s.modality_mask.curr};
  j["progress_gt"] = s.progress_gt;
  j["failure_gt"] = s.failure_gt;
  j["frame_index"] = s.frame_index;
  j["media_refs"] = optional_json(s.media_refs);
  return j.dump();
}

EpisodeSample sample_from_json_line(const std::string& line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  try {
    EpisodeSample s;
    s.sample_id = require(j, "sample_id").get<std::string>();
    s.task_info = require(j, "task_info").get<std::string>();
    s.phi_init = optional_field<std::vector<double>>(j, "phi_init");
    s.phi_seq = optional_field<std::vector<std::vector<double>>>(j, "phi_seq");
    s.phi_curr = optional_field<std::vector<double>>(j, "phi_curr");
    s.instruction_embedding = require(j, "instruction_embedding").get<std::vector<double>>();
    const auto mask = require(j, "modality_mask").get<std::vector<bool>>();
    if (mask.size() != 3) throw ParseError("modality_mask must hold three booleans");
    s.modality_mask = {mask[0], mask[1], mask[2]};
    const ojson& progress = require(j, "progress_gt");
    if (!progress.is_number()) throw ParseError("progress_gt must be a number");
    s.progress_gt = progress.get<double>();
    s.failure_gt = require(j, "failure_gt").get<bool>();
    s.frame_index = require(j, "frame_index").get<int>();
    s.media_refs = optional_field<std::vector<std::string>>(j, "media_refs");
    return s;
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("schema violation: ") + e.what());
  }
}

void write_manifest(const std::vector<EpisodeSample>& samples, std::ostream& out) {
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
}

void write_manifest(const std::vector<EpisodeSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open manifest for writing: " + path.string());
  write_manifest(samples, out);
  if (!out) throw ConfigError("failed writing manifest: " + path.string());
}

std::vector<EpisodeSample> read_manifest(std::istream& in) {
  std::vector<EpisodeSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      samples.push_back(sample_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

std::vector<EpisodeSample> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest: " + path.string());
  return read_manifest(in);
}

}  // namespace procrit
