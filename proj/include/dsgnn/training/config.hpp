#pragma once

// Training configuration and its plain-text `key = value` file format.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsgnn/data/folds.hpp"
#include "dsgnn/io/atomic_file.hpp"
#include "dsgnn/model/dsgnn_model.hpp"

namespace dsgnn {

using io::read_file;
using io::write_atomic;

struct TrainConfig {
    std::size_t tau = 6;
    double rho = 0.4;
    std::size_t n_dyn = 5;
    std::size_t n_sta = 8;
    double alpha = 0.3;
    double beta = 0.6;
    double gamma = 0.4;
    double lambda = 0.6;
    std::size_t d = 32;
    double lr = 0.001;
    std::size_t batch = 48;
    std::size_t epochs = 30;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    std::string variant = "DSGNN";
    std::size_t target = kPm25Channel;
    std::size_t topk = 3;
    std::size_t mf_iters = 1500;
    double mf_lr = 0.01;
    std::vector<std::size_t> folds = {0, 1, 2, 3, 4};
    std::string dataset;  // only set from config files; the CLI flag wins

    Ablation ablation() const { return parse_variant(variant); }

    ModelConfig model_config(std::size_t height, std::size_t width) const {
        ModelConfig m;
        m.height = height;
        m.width = width;
        m.d = d;
        m.tau = tau;
        m.n_dyn = n_dyn;
        m.n_sta = n_sta;
        m.rho = rho;
        m.alpha = alpha;
        m.beta = beta;
        m.gamma = gamma;
        m.lambda = lambda;
        m.ablation = ablation();
        m.ablation.topk = topk;
        return m;
    }

    void validate() const {
        if (tau < 1) throw ConfigError("tau must be >= 1");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (d < 1) throw ConfigError("d must be >= 1");
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
        if (!(mf_lr > 0.0)) throw ConfigError("mf_lr must be > 0");
        if (folds.empty()) throw ConfigError("folds must name at least one fold");
        for (auto f : folds)
            if (f >= kFoldCount) throw ConfigError("folds: fold " + std::to_string(f) + " out of range [0, 4]");
        if (target >= kAirQualityChannelCount) throw ConfigError("target channel out of range");
        model_config(1, 1).validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v) {
    std::istringstream is(v);
    T out{};
    if constexpr (std::is_unsigned_v<T>) {
        if (!v.empty() && v[0] == '-') throw ConfigError("expected a non-negative integer, got '" + v + "'");
    }
    is >> out;
    if (!is || !is.eof()) throw ConfigError("expected a number, got '" + v + "'");
    return out;
}

inline bool mentions_word(const std::string& text, const std::string& word) {
    auto ident = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; };
    for (auto pos = text.find(word); pos != std::string::npos; pos = text.find(word, pos + 1)) {
        const bool left = pos == 0 || !ident(text[pos - 1]);
        const bool right = pos + word.size() == text.size() || !ident(text[pos + word.size()]);
        if (left && right) return true;
    }
    return false;
}

} // namespace detail

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {"tau",    "rho",   "n_dyn",    "n_sta",    "alpha",  "beta",
                                                  "gamma",  "lambda", "d",       "lr",       "batch",  "epochs",
                                                  "patience", "seed", "variant", "target",   "topk",   "mf_iters",
                                                  "mf_lr",  "folds", "dataset"};
    return keys;
}

/// Applies one key. Throws ConfigError (without location) on a bad value or unknown key.
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
    using detail::parse_number;
    if (key == "tau") c.tau = parse_number<std::size_t>(v);
    else if (key == "rho") c.rho = parse_number<double>(v);
    else if (key == "n_dyn") c.n_dyn = parse_number<std::size_t>(v);
    else if (key == "n_sta") c.n_sta = parse_number<std::size_t>(v);
    else if (key == "alpha") c.alpha = parse_number<double>(v);
    else if (key == "beta") c.beta = parse_number<double>(v);
    else if (key == "gamma") c.gamma = parse_number<double>(v);
    else if (key == "lambda") c.lambda = parse_number<double>(v);
    else if (key == "d") c.d = parse_number<std::size_t>(v);
    else if (key == "lr") c.lr = parse_number<double>(v);
    else if (key == "batch") c.batch = parse_number<std::size_t>(v);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(v);
    else if (key == "patience") c.patience = parse_number<std::size_t>(v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(v);
    else if (key == "variant") {
        parse_variant(v);
        c.variant = v;
    } else if (key == "target") c.target = air_quality_channel(v);
    else if (key == "topk") c.topk = parse_number<std::size_t>(v);
    else if (key == "mf_iters") c.mf_iters = parse_number<std::size_t>(v);
    else if (key == "mf_lr") c.mf_lr = parse_number<double>(v);
    else if (key == "folds") {
        std::vector<std::size_t> out;
        if (v == "all") out = {0, 1, 2, 3, 4};
        else {
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(detail::trim(item)));
        }
        c.folds = out;
    } else if (key == "dataset") c.dataset = v;
    else {
        std::string valid;
        for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
        throw ConfigError("unknown key '" + key + "' (valid keys: " + valid + ")");
    }
}

/// Parses `key = value` lines; '#' starts a comment. Errors name the key and line.
inline TrainConfig parse_config(const std::string& text, const std::string& source = "config") {
    TrainConfig c;
    std::map<std::string, std::size_t> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto where = [&](std::size_t n) { return source + ":" + std::to_string(n) + ": "; };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where(lineno) + "expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where(lineno) + "missing key before '='");
        if (auto it = seen.find(key); it != seen.end()) {
            throw ConfigError(where(lineno) + "key '" + key + "' already set on line " + std::to_string(it->second));
        }
        seen[key] = lineno;
        try {
            set_config_value(c, key, value);
        } catch (const ConfigError& e) {
            if (std::string(e.what()).starts_with("unknown key")) throw ConfigError(where(lineno) + e.what());
            throw ConfigError(where(lineno) + "key '" + key + "': " + e.what());
        }
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        // Point at the line of the first key the message mentions, if any.
        const std::string msg = e.what();
        for (const auto& [key, n] : seen) {
            if (detail::mentions_word(msg, key)) throw ConfigError(where(n) + "key '" + key + "': " + msg);
        }
        throw ConfigError(source + ": " + msg);
    }
    return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(read_file(path), path.string());
}

/// `key = value` rendering that parse_config reads back to the same values.
inline std::string config_echo(const TrainConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "tau = " << c.tau << "\nrho = " << c.rho << "\nn_dyn = " << c.n_dyn << "\nn_sta = " << c.n_sta
      << "\nalpha = " << c.alpha << "\nbeta = " << c.beta << "\ngamma = " << c.gamma << "\nlambda = " << c.lambda
      << "\nd = " << c.d << "\nlr = " << c.lr << "\nbatch = " << c.batch << "\nepochs = " << c.epochs
      << "\npatience = " << c.patience << "\nseed = " << c.seed << "\nvariant = " << c.variant
      << "\ntarget = " << kAirQualityChannels[c.target] << "\ntopk = " << c.topk << "\nmf_iters = " << c.mf_iters
      << "\nmf_lr = " << c.mf_lr << "\nfolds = ";
    for (std::size_t i = 0; i < c.folds.size(); ++i) o << (i ? "," : "") << c.folds[i];
    o << "\n";
    if (!c.dataset.empty()) o << "dataset = " << c.dataset << "\n";
    return o.str();
}

} // namespace dsgnn
