#pragma once

#include <string>
#include <vector>

namespace copydet {

// Split one CSV line into fields. Double quotes guard embedded commas,
// "" inside a quoted field is a literal quote.
std::vector<std::string> csv_split(const std::string& line);

// Quote a field if it contains a comma, quote, or newline.
std::string csv_escape(const std::string& field);

// Read all non-empty lines of a text file. Throws IoFailure if unreadable.
std::vector<std::string> read_lines(const std::string& path);

} // namespace copydet
