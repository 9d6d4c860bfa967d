#include "mapo/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mapo/rng.hpp"
#include "mapo/vocab.hpp"

namespace mapo {

namespace {

[[noreturn]] void fail_line(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        fail_line(line, "unparsable value for " + key + ": '" + v + "'");
    }
}

long long parse_int(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        fail_line(line, "unparsable value for " + key + ": '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t pos = 0;
        std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        fail_line(line, "unparsable value for " + key + ": '" + v + "'");
    }
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(std::string("config: ") + msg);
    };
    require(group_size >= 2, "group_size must be >= 2");
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon must be in (0,1)");
    require(beta >= 0.0, "beta must be >= 0");
    require(lambda > 0.0 && lambda <= 1.0, "lambda must be in (0,1]");
    require(max_turns >= 1, "max_turns must be >= 1");
    require(temperature > 0.0, "temperature must be > 0");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(warmup >= 0.0 && warmup <= 1.0, "warmup must be in [0,1]");
    require(iterations >= 1, "iterations must be >= 1");
    require(batch_queries >= 1, "batch_queries must be >= 1");
    require(grid_size >= 2, "grid_size must be >= 2");
    require(embed_dim >= 1, "embed_dim must be >= 1");
    require(grid_size * grid_size <= embed_dim,
            "grid_size^2 must not exceed embed_dim (coarse features share d_obs)");
    require(target_class >= 0 &&
                static_cast<std::size_t>(target_class) < default_vocabulary().num_objects(),
            "target_class out of object-vocabulary range");
    require(epochs_per_iter >= 1, "epochs_per_iter must be >= 1");
    require(checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
    require(eval_scenes >= 1, "eval_scenes must be >= 1");
    require(threads >= 1, "threads must be >= 1");
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::map<std::string, std::function<void(const std::string&, int)>> setters;

    auto set_enum = [&](const std::string& key, const std::string& v, int line, auto& field,
                        std::initializer_list<std::pair<const char*, int>> options) {
        for (const auto& [name, value] : options) {
            if (v == name) {
                field = static_cast<std::decay_t<decltype(field)>>(value);
                return;
            }
        }
        fail_line(line, "unparsable value for " + key + ": '" + v + "'");
    };

    setters["group_size"] = [&](const std::string& v, int l) { c.group_size = static_cast<int>(parse_int(v, l, "group_size")); };
    setters["epsilon"] = [&](const std::string& v, int l) { c.epsilon = parse_double(v, l, "epsilon"); };
    setters["beta"] = [&](const std::string& v, int l) { c.beta = parse_double(v, l, "beta"); };
    setters["lambda"] = [&](const std::string& v, int l) { c.lambda = parse_double(v, l, "lambda"); };
    setters["max_turns"] = [&](const std::string& v, int l) { c.max_turns = static_cast<int>(parse_int(v, l, "max_turns")); };
    setters["temperature"] = [&](const std::string& v, int l) { c.temperature = parse_double(v, l, "temperature"); };
    setters["ratio_mode"] = [&](const std::string& v, int l) {
        set_enum("ratio_mode", v, l, c.ratio_mode, {{"token", 0}, {"sequence", 1}});
    };
    setters["estimator"] = [&](const std::string& v, int l) {
        set_enum("estimator", v, l, c.estimator,
                 {{"mapo", 0}, {"grpo", 1}, {"ppo_lite", 2}, {"reinforce", 3}});
    };
    setters["learning_rate"] = [&](const std::string& v, int l) { c.learning_rate = parse_double(v, l, "learning_rate"); };
    setters["warmup"] = [&](const std::string& v, int l) { c.warmup = parse_double(v, l, "warmup"); };
    setters["schedule"] = [&](const std::string& v, int l) {
        set_enum("schedule", v, l, c.schedule, {{"cosine", 0}, {"constant", 1}});
    };
    setters["iterations"] = [&](const std::string& v, int l) { c.iterations = static_cast<int>(parse_int(v, l, "iterations")); };
    setters["batch_queries"] = [&](const std::string& v, int l) { c.batch_queries = static_cast<int>(parse_int(v, l, "batch_queries")); };
    setters["seed"] = [&](const std::string& v, int l) { c.seed = parse_u64(v, l, "seed"); };
    setters["grid_size"] = [&](const std::string& v, int l) { c.grid_size = static_cast<int>(parse_int(v, l, "grid_size")); };
    setters["embed_dim"] = [&](const std::string& v, int l) { c.embed_dim = static_cast<int>(parse_int(v, l, "embed_dim")); };
    setters["embed_seed"] = [&](const std::string& v, int l) { c.embed_seed = parse_u64(v, l, "embed_seed"); };
    setters["target_class"] = [&](const std::string& v, int l) { c.target_class = static_cast<int>(parse_int(v, l, "target_class")); };
    setters["epochs_per_iter"] = [&](const std::string& v, int l) { c.epochs_per_iter = static_cast<int>(parse_int(v, l, "epochs_per_iter")); };
    setters["checkpoint_interval"] = [&](const std::string& v, int l) { c.checkpoint_interval = static_cast<int>(parse_int(v, l, "checkpoint_interval")); };
    setters["eval_scenes"] = [&](const std::string& v, int l) { c.eval_scenes = static_cast<int>(parse_int(v, l, "eval_scenes")); };
    setters["threads"] = [&](const std::string& v, int l) { c.threads = static_cast<int>(parse_int(v, l, "threads")); };
    setters["sem_aggregation"] = [&](const std::string& v, int l) {
        set_enum("sem_aggregation", v, l, c.sem_aggregation,
                 {{"discounted_mean", 0}, {"raw_sum", 1}});
    };
    setters["sem_norm"] = [&](const std::string& v, int l) {
        set_enum("sem_norm", v, l, c.sem_norm, {{"zscore", 0}, {"mean_only", 1}});
    };

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) fail_line(lineno, "expected key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) fail_line(lineno, "unknown key: " + key);
        it->second(value, lineno);
    }

    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig c = parse_config(ss.str());
    if (const char* env = std::getenv("MAPO_SEED")) {
        c.seed = parse_u64(env, 0, "MAPO_SEED");
        c.validate();
    }
    return c;
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "group_size=" << c.group_size << "\n";
    out << "epsilon=" << c.epsilon << "\n";
    out << "beta=" << c.beta << "\n";
    out << "lambda=" << c.lambda << "\n";
    out << "max_turns=" << c.max_turns << "\n";
    out << "temperature=" << c.temperature << "\n";
    out << "ratio_mode=" << (c.ratio_mode == RatioMode::Token ? "token" : "sequence") << "\n";
    out << "estimator=" << estimator_name(c.estimator) << "\n";
    out << "learning_rate=" << c.learning_rate << "\n";
    out << "warmup=" << c.warmup << "\n";
    out << "schedule=" << (c.schedule == Schedule::Cosine ? "cosine" : "constant") << "\n";
    out << "iterations=" << c.iterations << "\n";
    out << "batch_queries=" << c.batch_queries << "\n";
    out << "seed=" << c.seed << "\n";
    out << "grid_size=" << c.grid_size << "\n";
    out << "embed_dim=" << c.embed_dim << "\n";
    out << "embed_seed=" << c.embed_seed << "\n";
    out << "target_class=" << c.target_class << "\n";
    out << "epochs_per_iter=" << c.epochs_per_iter << "\n";
    out << "checkpoint_interval=" << c.checkpoint_interval << "\n";
    out << "eval_scenes=" << c.eval_scenes << "\n";
    out << "threads=" << c.threads << "\n";
    out << "sem_aggregation="
        << (c.sem_aggregation == SemAggregation::DiscountedMean ? "discounted_mean" : "raw_sum")
        << "\n";
    out << "sem_norm=" << (c.sem_norm == SemNorm::Zscore ? "zscore" : "mean_only") << "\n";
    return out.str();
}

std::uint64_t config_hash(const RunConfig& config) {
    std::string s = serialize_config(config);
    return hash_bytes(s.data(), s.size());
}

const char* estimator_name(Estimator e) {
    switch (e) {
        case Estimator::Mapo: return "mapo";
        case Estimator::Grpo: return "grpo";
        case Estimator::PpoLite: return "ppo_lite";
        case Estimator::Reinforce: return "reinforce";
    }
    return "unknown";
}

}  // namespace mapo
