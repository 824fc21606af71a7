#ifndef IDSBD_IO_H_
#define IDSBD_IO_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace idsbd {

// Shortest decimal form that parses back to the same double.
std::string FormatDouble(double v);

// Parses the whole of `text` as a double; throws ParseError with `context`.
double ParseDouble(std::string_view text, std::string_view context);
long long ParseInt(std::string_view text, std::string_view context);

std::vector<std::string_view> SplitCsvLine(std::string_view line);

std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, std::string_view text);

nlohmann::ordered_json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const std::filesystem::path& path,
                   const nlohmann::ordered_json& j, int indent = 2);

}  // namespace idsbd

#endif  // IDSBD_IO_H_
