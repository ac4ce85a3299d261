#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "procrit/trajectory.hpp"

namespace procrit {

/// JSON-lines manifest, one EpisodeSample per line. Doubles are written in
/// shortest round-trip form, so read_manifest(write_manifest(x)) == x.
void write_manifest(const std::vector<EpisodeSample>& samples, const std::filesystem::path& path);
void write_manifest(const std::vector<EpisodeSample>& samples, std::ostream& out);

/// Throws ParseError naming the 1-based line number on malformed records.
std::vector<EpisodeSample> read_manifest(const std::filesystem::path& path);
std::vector<EpisodeSample> read_manifest(std::istream& in);

std::string sample_to_json_line(const EpisodeSample& sample);
EpisodeSample sample_from_json_line(const std::string& line);

}  // namespace procrit
