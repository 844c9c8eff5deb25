#include "tmflow/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tmflow {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'F', 'L', 'O', 'W', 'S', 'N'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<unsigned char>((bits >> (8 * k)) & 0xffu));
}

template <typename T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if (pos + sizeof(T) > in.size()) throw IoError("snapshot truncated");
    U bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<U>(in[pos + k]) << (8 * k);
    pos += sizeof(T);
    return std::bit_cast<T>(bits);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw IoError("malformed number '" + s + "'");
    }
    if (used != s.size()) throw IoError("malformed number '" + s + "'");
    return v;
}

}  // namespace

std::vector<unsigned char> encode_snapshot(const Snapshot& s) {
    std::vector<unsigned char> out(kMagic, kMagic + 8);
    put_le<std::uint32_t>(out, kSnapshotVersion);
    put_le<std::uint32_t>(out, s.cylinder ? 1u : 0u);
    put_le<std::uint64_t>(out, s.u.rows);
    put_le<std::uint64_t>(out, s.u.cols);
    put_le<std::uint64_t>(out, s.u.dim);
    put_le<double>(out, s.a);
    put_le<double>(out, s.b);
    put_le<double>(out, s.time);
    out.reserve(out.size() + 8 * s.u.data.size());
    for (double x : s.u.data) put_le<double>(out, x);
    return out;
}

Snapshot decode_snapshot(const std::vector<unsigned char>& in) {
    if (in.size() < 16 || std::memcmp(in.data(), kMagic, 8) != 0) throw IoError("not a snapshot file (bad magic)");
    std::size_t pos = 8;
    const auto version = get_le<std::uint32_t>(in, pos);
    if (version != kSnapshotVersion) throw IoError("unsupported snapshot version " + std::to_string(version));
    const auto flags = get_le<std::uint32_t>(in, pos);
    Snapshot s;
    s.cylinder = (flags & 1u) != 0;
    const auto rows = get_le<std::uint64_t>(in, pos);
    const auto cols = get_le<std::uint64_t>(in, pos);
    const auto dim = get_le<std::uint64_t>(in, pos);
    s.a = get_le<double>(in, pos);
    s.b = get_le<double>(in, pos);
    s.time = get_le<double>(in, pos);
    if (rows == 0 || cols == 0 || dim == 0 || rows > (1u << 20) || cols > (1u << 20) || dim > 64)
        throw IoError("snapshot header has implausible dimensions");
    if (in.size() != pos + 8 * rows * cols * dim) throw IoError("snapshot payload size does not match its header");
    s.u = SphereMapField(rows, cols, dim);
    for (double& x : s.u.data) x = get_le<double>(in, pos);
    return s;
}

void write_snapshot(const std::string& path, const Snapshot& s) {
    const auto bytes = encode_snapshot(s);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

Snapshot read_snapshot(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open snapshot '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_snapshot(bytes);
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

std::vector<std::string> list_snapshots(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("snapshot directory '" + dir + "' does not exist");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".bin") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string history_csv(const FlowHistory& h) {
    std::string out = "t,E,tension_l2,projection_l2,a,b,inj,speed_l2,arc_length\n";
    for (const auto& s : h.samples) {
        const double v[] = {s.t, s.E, s.tension_l2, s.projection_l2, s.a, s.b, s.inj, s.speed_l2, s.arc_length};
        for (std::size_t k = 0; k < std::size(v); ++k) {
            if (k) out += ',';
            out += format_double(v[k]);
        }
        out += '\n';
    }
    return out;
}

FlowHistory parse_history_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw IoError("history is empty");
    const auto header = split(line, ',');
    const std::vector<std::string> required = {"t", "E", "tension_l2", "projection_l2", "a", "b", "inj", "speed_l2"};
    std::vector<int> col(9, -1);
    const std::vector<std::string> names = {"t", "E", "tension_l2", "projection_l2", "a", "b", "inj", "speed_l2", "arc_length"};
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find(header.begin(), header.end(), names[k]);
        if (it != header.end()) col[k] = static_cast<int>(it - header.begin());
        else if (k < required.size()) throw IoError("history header lacks column '" + names[k] + "'");
    }
    FlowHistory h;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size()) throw IoError("history line " + std::to_string(lineno) + " has wrong field count");
        double v[9];
        for (std::size_t k = 0; k < 9; ++k)
            v[k] = col[k] < 0 ? std::numeric_limits<double>::quiet_NaN() : parse_double(f[static_cast<std::size_t>(col[k])]);
        h.samples.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]});
    }
    return h;
}

FlowHistory read_history_csv(const std::string& path) { return parse_history_csv(read_text(path)); }

std::string ricci_csv(const RicciRun& run) {
    std::string out = "t,area,minK,maxK,normalized_deviation\n";
    for (const auto& s : run.samples) {
        out += format_double(s.t) + ',' + format_double(s.area) + ',' + format_double(s.min_K) + ',' +
               format_double(s.max_K) + ',' + format_double(s.deviation) + '\n';
    }
    return out;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw IoError("failed writing '" + path + "'");
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace tmflow
