#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmflow/grid.hpp"
#include "tmflow/ricci.hpp"
#include "tmflow/torusflow.hpp"

namespace tmflow {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary snapshot layout (all little-endian):
//   bytes 0..7   magic "TMFLOWSN"
//   u32          format version (1)
//   u32          flags, bit 0 set for cylinder data
//   u64 x 3      rows, cols, target components
//   f64 x 3      a, b, time   (torus: modulus; cylinder: a = X0, b = ell)
//   f64 ...      row-major nodal values
struct Snapshot {
    bool cylinder = false;
    double a = 0.0;
    double b = 1.0;
    double time = 0.0;
    SphereMapField u;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<unsigned char> encode_snapshot(const Snapshot& s);
Snapshot decode_snapshot(const std::vector<unsigned char>& bytes);
void write_snapshot(const std::string& path, const Snapshot& s);
Snapshot read_snapshot(const std::string& path);

// Snapshot files (*.bin) in a directory, sorted by file name.
std::vector<std::string> list_snapshots(const std::string& dir);

// %.17g, with "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double x);

std::string history_csv(const FlowHistory& h);
FlowHistory parse_history_csv(const std::string& text);
FlowHistory read_history_csv(const std::string& path);

std::string ricci_csv(const RicciRun& run);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& content);
void ensure_directory(const std::string& dir);

}  // namespace tmflow
