#include "svfm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "svfm/errors.hpp"

namespace svfm {

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
    }
    return v;
}

std::size_t to_count(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
    return s;
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(to_double(key, item));
    return out;
}

std::vector<std::size_t> to_counts(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) out.push_back(to_count(key, item));
    return out;
}

std::string count_str(std::size_t v) { return std::to_string(v); }

struct Field {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SVFM_NUM(k, member)                                                                  \
    Field {                                                                                  \
        k, [](const ExperimentConfig& c) { return format_double(c.member); },                \
            [](ExperimentConfig& c, const std::string& v) { c.member = to_double(k, v); }   \
    }
#define SVFM_COUNT(k, member)                                                                \
    Field {                                                                                  \
        k, [](const ExperimentConfig& c) { return count_str(c.member); },                    \
            [](ExperimentConfig& c, const std::string& v) { c.member = to_count(k, v); }    \
    }
#define SVFM_FLAG(k, member)                                                                 \
    Field {                                                                                  \
        k, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
            [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(k, v); }     \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        Field{"train.mode", [](const ExperimentConfig& c) { return to_string(c.train.mode); },
              [](ExperimentConfig& c, const std::string& v) { c.train.mode = parse_mode(trim(v)); }},
        SVFM_NUM("train.alpha", train.weights.alpha),
        SVFM_NUM("train.beta", train.weights.beta),
        SVFM_COUNT("train.alpha_warmup_steps", train.alpha_warmup_steps),
        SVFM_COUNT("train.batch_size", train.batch_size),
        SVFM_COUNT("train.steps", train.steps),
        SVFM_NUM("train.learning_rate", train.learning_rate),
        SVFM_NUM("train.adam_beta1", train.adam_beta1),
        SVFM_NUM("train.adam_beta2", train.adam_beta2),
        SVFM_NUM("train.adam_eps", train.adam_eps),
        SVFM_NUM("train.grad_norm_limit", train.grad_norm_limit),
        SVFM_COUNT("train.seed", train.seed),
        SVFM_COUNT("train.eval_every", train.eval_every),
        SVFM_COUNT("train.eval_n", train.eval_n),
        SVFM_COUNT("net.latent_dim", train.net.latent_dim),
        SVFM_COUNT("net.time_embed_dim", train.net.time_embed_dim),
        SVFM_NUM("net.time_embed_decades", train.net.time_embed_decades),
        SVFM_COUNT("net.latent_embed_dim", train.net.latent_embed_dim),
        Field{"net.velocity_hidden", [](const ExperimentConfig& c) { return join(c.train.net.velocity_hidden, count_str); },
              [](ExperimentConfig& c, const std::string& v) { c.train.net.velocity_hidden = to_counts("net.velocity_hidden", v); }},
        Field{"net.posterior_hidden", [](const ExperimentConfig& c) { return join(c.train.net.posterior_hidden, count_str); },
              [](ExperimentConfig& c, const std::string& v) { c.train.net.posterior_hidden = to_counts("net.posterior_hidden", v); }},
        SVFM_FLAG("net.zero_init_output", train.net.zero_init_output),
        SVFM_COUNT("reflow.base_steps", train.reflow_base_steps),
        SVFM_COUNT("reflow.pairs", train.reflow_pairs),
        SVFM_COUNT("reflow.nfe", train.reflow_nfe),
        Field{"output.dir", [](const ExperimentConfig& c) { return c.output_dir; },
              [](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); }},
        SVFM_FLAG("output.export_trajectories", export_trajectories),
        SVFM_COUNT("output.probe_count", probe_count),
        Field{"sample.stepper",
              [](const ExperimentConfig& c) { return std::string(c.stepper == Stepper::euler ? "euler" : "midpoint"); },
              [](ExperimentConfig& c, const std::string& v) {
                  const std::string t = trim(v);
                  if (t == "euler") c.stepper = Stepper::euler;
                  else if (t == "midpoint") c.stepper = Stepper::midpoint;
                  else throw ConfigError("config: 'sample.stepper' expects euler or midpoint, got '" + v + "'");
              }},
        Field{"sweep.alpha", [](const ExperimentConfig& c) { return join(c.sweep_alpha, format_double); },
              [](ExperimentConfig& c, const std::string& v) { c.sweep_alpha = to_doubles("sweep.alpha", v); }},
        Field{"sweep.beta", [](const ExperimentConfig& c) { return join(c.sweep_beta, format_double); },
              [](ExperimentConfig& c, const std::string& v) { c.sweep_beta = to_doubles("sweep.beta", v); }},
        SVFM_COUNT("sweep.eval_n", sweep_eval_n),
        SVFM_COUNT("sweep.eval_nfe", sweep_eval_nfe),
    };
    return table;
}

#undef SVFM_NUM
#undef SVFM_COUNT
#undef SVFM_FLAG

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }

    ExperimentConfig cfg;
    auto name = kv.find("data.name");
    cfg.train.dataset = DatasetSpec::make(name == kv.end() ? "hexagonal" : name->second);
    if (name != kv.end()) kv.erase(name);

    for (const auto& f : fields()) {
        auto it = kv.find(f.key);
        if (it == kv.end()) continue;
        f.set(cfg, it->second);
        kv.erase(it);
    }
    for (const auto& [key, value] : kv) {
        if (key.rfind("data.", 0) == 0) {
            const std::string param = key.substr(5);
            auto slot = cfg.train.dataset.params.find(param);
            if (slot == cfg.train.dataset.params.end()) {
                throw ConfigError("config: dataset " + cfg.train.dataset.name + " has no parameter '" + param + "'");
            }
            slot->second = to_doubles(key, value);
            continue;
        }
        throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.train.dataset.validate();
    cfg.train = cfg.train.normalized();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        if (f.key == "net.latent_dim") {
            out += "data.name = " + cfg.train.dataset.name + "\n";
            for (const auto& [k, v] : cfg.train.dataset.params) out += "data." + k + " = " + join(v, format_double) + "\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace svfm
