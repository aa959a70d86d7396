#include "hsac/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hsac {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t x = std::stoull(v, &pos, 0);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad seed for '" + key + "': " + v);
    }
}

} // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "variants") {
        cfg.variants.clear();
        for (const auto& name : split_list(value)) cfg.variants.push_back(variant_from_name(name));
    } else if (key == "ng_values") {
        cfg.ng_values.clear();
        for (const auto& s : split_list(value)) cfg.ng_values.push_back(to_int(key, s));
    } else if (key == "hidden") {
        cfg.hp.hidden.clear();
        for (const auto& s : split_list(value)) cfg.hp.hidden.push_back(to_int(key, s));
    } else if (key == "seeds") {
        cfg.seeds = to_int(key, value);
    } else if (key == "episodes") {
        cfg.episodes_per_run = to_int(key, value);
    } else if (key == "window") {
        cfg.window = to_int(key, value);
    } else if (key == "workers") {
        cfg.workers = to_int(key, value);
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "base_seed") {
        cfg.base_seed = to_u64(key, value);
    } else if (key == "max_steps_factor") {
        cfg.max_steps_factor = to_int(key, value);
    } else if (key == "record_timing") {
        cfg.record_timing = to_bool(key, value);
    } else if (key == "dump_traces") {
        cfg.dump_traces = to_bool(key, value);
    } else if (key == "observe_visited") {
        cfg.observe_visited = to_bool(key, value);
    } else if (key == "alpha") {
        cfg.hp.alpha = to_double(key, value);
    } else if (key == "gamma") {
        cfg.hp.gamma = to_double(key, value);
    } else if (key == "tau_gumbel") {
        cfg.hp.tau_gumbel = to_double(key, value);
    } else if (key == "learning_rate") {
        cfg.hp.learning_rate = to_double(key, value);
    } else if (key == "batch_size") {
        cfg.hp.batch_size = to_int(key, value);
    } else if (key == "buffer_capacity") {
        cfg.hp.buffer_capacity = to_int(key, value);
    } else if (key == "updates_per_env_step") {
        cfg.hp.updates_per_env_step = to_int(key, value);
    } else if (key == "dropout") {
        cfg.hp.dropout = to_double(key, value);
    } else if (key == "eps_start") {
        cfg.hp.controller_eps.start = to_double(key, value);
    } else if (key == "eps_end") {
        cfg.hp.controller_eps.end = to_double(key, value);
    } else if (key == "eps_decay_steps") {
        cfg.hp.controller_eps.decay_steps = to_int(key, value);
    } else if (key == "meta_eps_start") {
        cfg.hp.meta_eps.start = to_double(key, value);
    } else if (key == "meta_eps_end") {
        cfg.hp.meta_eps.end = to_double(key, value);
    } else if (key == "meta_eps_decay_steps") {
        cfg.hp.meta_eps.decay_steps = to_int(key, value);
    } else if (key == "adam_beta1") {
        cfg.hp.adam.beta1 = to_double(key, value);
    } else if (key == "adam_beta2") {
        cfg.hp.adam.beta2 = to_double(key, value);
    } else if (key == "adam_epsilon") {
        cfg.hp.adam.epsilon = to_double(key, value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not 'key = value'");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

} // namespace hsac
