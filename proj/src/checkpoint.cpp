#include "svfm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "svfm/errors.hpp"

namespace svfm {

namespace {

constexpr const char* kMagic = "SVFM1";
constexpr int kFormatVersion = 1;

struct Slot {
    std::string name;
    Shape shape;
    std::span<const double> src;  // writing
    std::span<double> dst;        // reading
};

std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out.empty() ? "scalar" : out;
}

void put_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return std::bit_cast<double>(bits);
}

template <class State>
std::vector<Slot> slots(State& state) {
    std::vector<Slot> out;
    auto add_store = [&](const std::string& prefix, auto& store) {
        for (std::size_t i = 0; i < store.size(); ++i) {
            auto& e = store.entry(i);
            Slot s{prefix + "/" + e.name, e.value.shape(), {}, {}};
            if constexpr (std::is_const_v<State>) s.src = e.value.data();
            else s.dst = std::span<double>(e.value.storage());
            out.push_back(std::move(s));
        }
    };
    add_store("velocity", state.velocity->params());
    if (state.posterior) add_store("posterior", state.posterior->params());
    auto add_vec = [&](const std::string& name, auto& vec) {
        Slot s{name, Shape{vec.size()}, {}, {}};
        if constexpr (std::is_const_v<State>) s.src = std::span<const double>(vec);
        else s.dst = std::span<double>(vec);
        out.push_back(std::move(s));
    };
    add_vec("adam/m", state.adam.m);
    add_vec("adam/v", state.adam.v);
    return out;
}

[[noreturn]] void corrupt(const std::string& path, const std::string& why) {
    throw CheckpointError("corrupt checkpoint '" + path + "': " + why);
}

std::string expect_kv(std::istream& in, const std::string& path, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) corrupt(path, "header ends before '" + key + "'");
    const std::string prefix = key + " = ";
    if (line.rfind(prefix, 0) != 0) corrupt(path, "expected '" + key + "', got '" + line + "'");
    return line.substr(prefix.size());
}

std::size_t parse_count(const std::string& path, const std::string& text) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) corrupt(path, "bad integer '" + text + "'");
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        corrupt(path, "bad integer '" + text + "'");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& cfg, const TrainState& state) {
    // The output location is not part of the experiment, so it is not recorded.
    ExperimentConfig snapshot = cfg;
    snapshot.output_dir = ExperimentConfig{}.output_dir;
    const std::string config_text = serialize_config(snapshot);
    const auto lines = static_cast<std::size_t>(std::count(config_text.begin(), config_text.end(), '\n'));

    std::ostringstream header;
    header << kMagic << "\n";
    header << "format_version = " << kFormatVersion << "\n";
    header << "step = " << state.step << "\n";
    header << "adam_step = " << state.adam.step << "\n";
    header << "config_lines = " << lines << "\n" << config_text;
    std::size_t offset = 0;
    std::string payload;
    for (const Slot& s : slots(state)) {
        header << "tensor " << s.name << " " << shape_token(s.shape) << " " << offset << " " << s.src.size() << "\n";
        for (double v : s.src) put_le(payload, v);
        offset += s.src.size() * 8;
    }
    header << "payload_bytes = " << payload.size() << "\n";
    header << "header_end\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::stringstream buf;
    buf << file.rdbuf();
    const std::string bytes = buf.str();

    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line) || line != kMagic) corrupt(path, "bad magic");
    if (expect_kv(in, path, "format_version") != std::to_string(kFormatVersion)) corrupt(path, "unsupported version");
    const std::size_t step = parse_count(path, expect_kv(in, path, "step"));
    const std::size_t adam_step = parse_count(path, expect_kv(in, path, "adam_step"));
    const std::size_t config_lines = parse_count(path, expect_kv(in, path, "config_lines"));
    std::string config_text;
    for (std::size_t i = 0; i < config_lines; ++i) {
        if (!std::getline(in, line)) corrupt(path, "truncated config block");
        config_text += line + "\n";
    }

    LoadedCheckpoint ck;
    try {
        ck.config = parse_config(config_text);
        ck.config.train.validate();
    } catch (const ConfigError& e) {
        corrupt(path, std::string("config block: ") + e.what());
    }
    ck.state = TrainState::create(ck.config.train);
    ck.state.step = step;
    ck.state.adam.step = adam_step;

    const auto expected = slots(ck.state);
    struct Entry {
        std::size_t offset, count;
    };
    std::vector<Entry> entries;
    for (const Slot& s : expected) {
        if (!std::getline(in, line)) corrupt(path, "header ends before tensor '" + s.name + "'");
        std::istringstream ls(line);
        std::string tag, name, shape, off, cnt, extra;
        if (!(ls >> tag >> name >> shape >> off >> cnt) || (ls >> extra) || tag != "tensor") {
            corrupt(path, "malformed tensor line '" + line + "'");
        }
        if (name != s.name || shape != shape_token(s.shape)) {
            corrupt(path, "tensor '" + name + "' " + shape + " does not match expected '" + s.name + "' " +
                              shape_token(s.shape));
        }
        entries.push_back({parse_count(path, off), parse_count(path, cnt)});
        if (entries.back().count != s.dst.size()) corrupt(path, "count mismatch for '" + s.name + "'");
    }
    const std::size_t payload_bytes = parse_count(path, expect_kv(in, path, "payload_bytes"));
    if (!std::getline(in, line) || line != "header_end") corrupt(path, "missing header_end");

    // Offsets must tile the payload exactly, in order, without overlap.
    std::size_t cursor = 0;
    for (const Entry& e : entries) {
        if (e.offset != cursor) corrupt(path, "tensor offsets overlap or leave gaps");
        cursor += e.count * 8;
    }
    if (cursor != payload_bytes) corrupt(path, "payload_bytes disagrees with tensor table");
    const auto start = static_cast<std::size_t>(in.tellg());
    if (bytes.size() - start != payload_bytes) {
        corrupt(path, "payload is " + std::to_string(bytes.size() - start) + " bytes, header says " +
                          std::to_string(payload_bytes));
    }
    const char* payload = bytes.data() + start;
    for (std::size_t k = 0; k < expected.size(); ++k) {
        const char* p = payload + entries[k].offset;
        for (std::size_t i = 0; i < entries[k].count; ++i) expected[k].dst[i] = get_le(p + 8 * i);
    }
    return ck;
}

}  // namespace svfm
