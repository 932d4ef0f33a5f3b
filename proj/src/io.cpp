#include "bridgelab/io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace bridgelab {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f32(std::ostream& out, float v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error("io: truncated file (u32)");
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw std::runtime_error("io: truncated file (u64)");
    return v;
}

float read_f32(std::istream& in) {
    float v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error("io: truncated file (f32)");
    return v;
}

double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw std::runtime_error("io: truncated file (f64)");
    return v;
}

void write_tensor_record(std::ostream& out, const std::string& name, const std::vector<std::uint64_t>& extents,
                         const std::vector<double>& values) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(extents.size()));
    std::uint64_t n = 1;
    for (std::uint64_t e : extents) {
        write_u64(out, e);
        n *= e;
    }
    if (n != values.size()) throw std::logic_error("io: tensor record size mismatch");
    for (double v : values) write_f32(out, static_cast<float>(v));
}

// Matrices are exported row-major regardless of in-memory layout.
void write_matrix_record(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    write_tensor_record(out, name,
                        {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, values);
}

struct RawTensor {
    std::vector<std::uint64_t> extents;
    std::vector<double> values;
};

std::map<std::string, RawTensor> read_tensor_records(std::istream& in) {
    std::map<std::string, RawTensor> records;
    while (true) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        if (in.eof()) break;
        if (!in) throw std::runtime_error("io: truncated tensor record");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("io: truncated tensor name");
        RawTensor t;
        const std::uint32_t rank = read_u32(in);
        if (rank > 8) throw std::runtime_error("io: implausible tensor rank");
        std::uint64_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            t.extents.push_back(read_u64(in));
            n *= t.extents.back();
        }
        if (n > (1ull << 32)) throw std::runtime_error("io: implausible tensor size");
        t.values.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) t.values[i] = read_f32(in);
        records.emplace(std::move(name), std::move(t));
    }
    return records;
}

Eigen::MatrixXd matrix_from_raw(const RawTensor& t, const std::string& name) {
    if (t.extents.size() != 2) throw std::runtime_error("io: tensor '" + name + "' is not a matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.extents[0]), static_cast<Eigen::Index>(t.extents[1]));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[i++];
    return m;
}

const RawTensor& require_record(const std::map<std::string, RawTensor>& records, const std::string& name) {
    auto it = records.find(name);
    if (it == records.end()) throw std::runtime_error("io: checkpoint is missing tensor '" + name + "'");
    return it->second;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserParams& params, const AdamState* adam, long step) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot open " + path + " for writing");
    out.write("BLCP", 4);
    write_u32(out, kCheckpointVersion);

    const DenoiserConfig& c = params.config;
    write_tensor_record(out, "meta.config", {9},
                        {static_cast<double>(c.channels), static_cast<double>(c.height),
                         static_cast<double>(c.width), static_cast<double>(static_cast<int>(c.cond_mode)),
                         static_cast<double>(static_cast<int>(c.objective)),
                         static_cast<double>(c.hidden_width), static_cast<double>(c.time_embed_dim),
                         static_cast<double>(c.cond_dim), static_cast<double>(c.max_timestep)});
    write_tensor_record(out, "meta.step", {1}, {static_cast<double>(step)});

    visit_tensors(const_cast<DenoiserTensors&>(params.tensors), [&](const char* name, Eigen::MatrixXd& m) {
        write_matrix_record(out, std::string("param.") + name, m);
    });
    if (adam != nullptr) {
        write_tensor_record(out, "adam.step", {1}, {static_cast<double>(adam->step)});
        write_tensor_record(out, "adam.hyper", {3},
                            {adam->config.beta1, adam->config.beta2, adam->config.eps_hat});
        visit_tensors(const_cast<DenoiserTensors&>(adam->m), [&](const char* name, Eigen::MatrixXd& m) {
            write_matrix_record(out, std::string("adam.m.") + name, m);
        });
        visit_tensors(const_cast<DenoiserTensors&>(adam->v), [&](const char* name, Eigen::MatrixXd& m) {
            write_matrix_record(out, std::string("adam.v.") + name, m);
        });
    }
    if (!out) throw std::runtime_error("io: write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "BLCP", 4) != 0)
        throw std::runtime_error("io: " + path + " is not a BLCP checkpoint");
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("io: unsupported checkpoint version " + std::to_string(version));

    auto records = read_tensor_records(in);
    const RawTensor& meta = require_record(records, "meta.config");
    if (meta.values.size() != 9) throw std::runtime_error("io: malformed meta.config");

    Checkpoint ckpt;
    DenoiserConfig cfg;
    cfg.channels = static_cast<int>(meta.values[0]);
    cfg.height = static_cast<int>(meta.values[1]);
    cfg.width = static_cast<int>(meta.values[2]);
    cfg.cond_mode = static_cast<CondMode>(static_cast<int>(meta.values[3]));
    cfg.objective = static_cast<Objective>(static_cast<int>(meta.values[4]));
    cfg.hidden_width = static_cast<int>(meta.values[5]);
    cfg.time_embed_dim = static_cast<int>(meta.values[6]);
    cfg.cond_dim = static_cast<int>(meta.values[7]);
    cfg.max_timestep = static_cast<int>(meta.values[8]);

    ckpt.params.config = cfg;
    ckpt.params.tensors = DenoiserTensors::zeros_like(cfg);
    ckpt.step = static_cast<long>(require_record(records, "meta.step").values[0]);

    auto load_set = [&](DenoiserTensors& t, const std::string& prefix) {
        visit_tensors(t, [&](const char* name, Eigen::MatrixXd& m) {
            const RawTensor& raw = require_record(records, prefix + name);
            Eigen::MatrixXd loaded = matrix_from_raw(raw, prefix + name);
            if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
                throw std::runtime_error("io: tensor '" + prefix + name + "' has unexpected extents");
            m = std::move(loaded);
        });
    };
    load_set(ckpt.params.tensors, "param.");

    if (records.count("adam.step") != 0) {
        ckpt.has_adam = true;
        ckpt.adam = AdamState::zeros_like(cfg);
        ckpt.adam.step = static_cast<long>(require_record(records, "adam.step").values[0]);
        const RawTensor& hyper = require_record(records, "adam.hyper");
        if (hyper.values.size() != 3) throw std::runtime_error("io: malformed adam.hyper");
        ckpt.adam.config.beta1 = hyper.values[0];
        ckpt.adam.config.beta2 = hyper.values[1];
        ckpt.adam.config.eps_hat = hyper.values[2];
        load_set(ckpt.adam.m, "adam.m.");
        load_set(ckpt.adam.v, "adam.v.");
    }
    return ckpt;
}

namespace {

void write_lgrd(std::ostream& out, const LatentGrid& g) {
    out.write("LGRD", 4);
    write_u32(out, 3);
    write_u64(out, static_cast<std::uint64_t>(g.channels));
    write_u64(out, static_cast<std::uint64_t>(g.height));
    write_u64(out, static_cast<std::uint64_t>(g.width));
    write_u32(out, static_cast<std::uint32_t>(g.true_width));
    for (double v : g.data) write_f32(out, static_cast<float>(v));
}

LatentGrid read_lgrd(std::istream& in) {
    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "LGRD", 4) != 0) throw std::runtime_error("io: missing LGRD grid tag");
    if (read_u32(in) != 3) throw std::runtime_error("io: LGRD rank must be 3");
    const auto c = static_cast<int>(read_u64(in));
    const auto h = static_cast<int>(read_u64(in));
    const auto w = static_cast<int>(read_u64(in));
    const auto tw = static_cast<int>(read_u32(in));
    LatentGrid g(c, h, w, tw);
    for (double& v : g.data) v = read_f32(in);
    return g;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<LatentPair>& pairs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot open " + path + " for writing");
    out.write("BLDS", 4);
    write_u64(out, pairs.size());
    for (const LatentPair& p : pairs) {
        write_lgrd(out, p.z_text);
        write_lgrd(out, p.z_audio);
        write_u32(out, static_cast<std::uint32_t>(p.content.tokens.size()));
        for (int tok : p.content.tokens) write_u32(out, static_cast<std::uint32_t>(tok));
        write_f64(out, p.style.gain);
        write_f64(out, p.style.pitch_bias);
        write_f64(out, p.style.mod_rate);
        write_u32(out, static_cast<std::uint32_t>(p.speaker));
        write_u32(out, static_cast<std::uint32_t>(p.embed.values.size()));
        for (double v : p.embed.values) write_f64(out, v);
    }
    if (!out) throw std::runtime_error("io: write failure on " + path);
}

std::vector<LatentPair> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "BLDS", 4) != 0)
        throw std::runtime_error("io: " + path + " is not a BLDS dataset");
    const std::uint64_t count = read_u64(in);
    std::vector<LatentPair> pairs;
    pairs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        LatentPair p;
        p.z_text = read_lgrd(in);
        p.z_audio = read_lgrd(in);
        const std::uint32_t tokens = read_u32(in);
        p.content.tokens.resize(tokens);
        for (std::uint32_t k = 0; k < tokens; ++k) p.content.tokens[k] = static_cast<int>(read_u32(in));
        p.style.gain = read_f64(in);
        p.style.pitch_bias = read_f64(in);
        p.style.mod_rate = read_f64(in);
        p.speaker = static_cast<int>(read_u32(in));
        const std::uint32_t dim = read_u32(in);
        p.embed.values.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) p.embed.values[k] = read_f64(in);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void write_pgm(const std::string& path, const LatentGrid& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot open " + path + " for writing");
    const int rows = grid.channels * grid.height;
    const int cols = grid.width;
    out << "P5\n" << cols << " " << rows << "\n255\n";

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : grid.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::vector<unsigned char> bytes(grid.data.size());
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
        const double unit = span > 0.0 ? (grid.data[i] - lo) / span : 0.0;
        bytes[i] = static_cast<unsigned char>(std::lround(unit * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("io: write failure on " + path);
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace bridgelab
