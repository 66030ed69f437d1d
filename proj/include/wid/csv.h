#ifndef WID_CSV_H
#define WID_CSV_H

#include <string>
#include <vector>

namespace wid {

// Minimal RFC-4180-style CSV: quoted fields, doubled quotes, one record per
// line. Lines starting with '#' are returned separately as comments.
struct CsvFile {
    std::vector<std::string> comments;
    std::vector<std::vector<std::string>> rows;  // rows[0] is the header if present
};

CsvFile read_csv(const std::string& path);
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);
std::string join_csv(const std::vector<std::string>& fields);

}  // namespace wid

#endif
