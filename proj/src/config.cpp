#include "mipnerf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace mipnerf {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(std::string name, T TrainConfig::*member) {
    return {name,
            [name, member](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); },
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
                else return std::to_string(c.*member);
            }};
}

Field bool_field(std::string name, bool TrainConfig::*member) {
    return {name, [name, member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(name, v); },
            [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        number_field("iterations", &TrainConfig::iterations),
        number_field("batch_rays", &TrainConfig::batch_rays),
        number_field("lambda", &TrainConfig::lambda),
        number_field("lr_init", &TrainConfig::lr_init),
        number_field("lr_final", &TrainConfig::lr_final),
        number_field("warmup_steps", &TrainConfig::warmup_steps),
        number_field("warmup_factor", &TrainConfig::warmup_factor),
        number_field("adam_beta1", &TrainConfig::adam_beta1),
        number_field("adam_beta2", &TrainConfig::adam_beta2),
        number_field("adam_eps", &TrainConfig::adam_eps),
        number_field("seed", &TrainConfig::seed),
        number_field("degree", &TrainConfig::degree),
        number_field("view_degree", &TrainConfig::view_degree),
        {"encoding",
         [](TrainConfig& c, const std::string& v) {
             try {
                 parse_encoding_variant(v);
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(std::string("config key 'encoding': ") + e.what());
             }
             c.encoding = v;
         },
         [](const TrainConfig& c) { return c.encoding; }},
        number_field("depth", &TrainConfig::depth),
        number_field("width", &TrainConfig::width),
        bool_field("paper_scale", &TrainConfig::paper_scale),
        number_field("n_coarse", &TrainConfig::n_coarse),
        number_field("n_fine", &TrainConfig::n_fine),
        number_field("alpha", &TrainConfig::alpha),
        bool_field("white_background", &TrainConfig::white_background),
        bool_field("no_ipe", &TrainConfig::no_ipe),
        bool_field("two_mlps", &TrainConfig::two_mlps),
        bool_field("no_area_loss", &TrainConfig::no_area_loss),
        number_field("supersample_train_k", &TrainConfig::supersample_train_k),
        number_field("eval_every", &TrainConfig::eval_every),
    };
    return table;
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

KeyValues read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_key_values(in, path.string());
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const Field& f : fields()) k.push_back(f.name);
        return k;
    }();
    return keys;
}

void apply_config(TrainConfig& config, const KeyValues& entries) {
    for (const auto& [key, value] : entries) {
        const Field* match = nullptr;
        for (const Field& f : fields())
            if (f.name == key) match = &f;
        if (!match) throw ConfigError("unknown config key '" + key + "'");
        match->set(config, value);
    }
}

KeyValues config_entries(const TrainConfig& config) {
    KeyValues out;
    for (const Field& f : fields()) out.emplace_back(f.name, f.get(config));
    return out;
}

std::string format_config(const TrainConfig& config) {
    std::ostringstream out;
    for (const auto& [k, v] : config_entries(config)) out << k << " = " << v << '\n';
    return out.str();
}

}  // namespace mipnerf
