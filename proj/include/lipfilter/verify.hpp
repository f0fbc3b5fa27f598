#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lipfilter {

struct ReportRow {
    std::string id;
    /// Name of the result the property comes from.
    std::string anchor;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::uint64_t seed = 0;
    std::string witness;
};

struct VerifyOptions {
    std::uint64_t seed = 7;
    /// Filter constants used by the filter properties.
    double epsilon = 0.5;
    double c = 0.5;
    double c_prime = 1.0;
    /// Property ids to run; empty runs everything.
    std::vector<std::string> only;
};

/// Every property id, sorted.
std::vector<std::string> property_ids();

/// Run the property suite. Rows are sorted by id; failing rows end with a reproducer command.
std::vector<ReportRow> run_verify(const VerifyOptions& options);

/// id,anchor,status,measured,tolerance,seed,witness
std::string report_to_csv(const std::vector<ReportRow>& rows);

}  // namespace lipfilter
