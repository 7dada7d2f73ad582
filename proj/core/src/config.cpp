#include "cspm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <json.hpp>

#include "cspm/errors.hpp"

namespace cspm {

namespace {

struct Value {
    enum class Kind { integer, floating, boolean, string, int_array };
    Kind kind;
    int64_t i = 0;
    double f = 0;
    bool b = false;
    std::string s;
    std::vector<int64_t> arr;
};

std::string trim(std::string_view v) {
    size_t a = v.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return "";
    size_t b = v.find_last_not_of(" \t\r");
    return std::string(v.substr(a, b - a + 1));
}

bool parse_i64(const std::string& s, int64_t& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

bool parse_f64(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

Value parse_value(const std::string& raw, const std::string& where) {
    std::string v = trim(raw);
    if (v.empty()) throw ConfigError(where + ": empty value");
    Value out;
    if (v == "true" || v == "false") {
        out.kind = Value::Kind::boolean;
        out.b = (v == "true");
        return out;
    }
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError(where + ": unterminated string");
        out.kind = Value::Kind::string;
        out.s = v.substr(1, v.size() - 2);
        return out;
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError(where + ": unterminated array");
        out.kind = Value::Kind::int_array;
        std::string body = v.substr(1, v.size() - 2);
        size_t pos = 0;
        while (pos <= body.size()) {
            size_t comma = body.find(',', pos);
            std::string item = trim(body.substr(pos, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - pos));
            if (!item.empty()) {
                int64_t x;
                if (!parse_i64(item, x))
                    throw ConfigError(where + ": array entry '" + item + "' is not an integer");
                out.arr.push_back(x);
            } else if (comma != std::string::npos) {
                throw ConfigError(where + ": empty array entry");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    }
    if (parse_i64(v, out.i)) {
        out.kind = Value::Kind::integer;
        return out;
    }
    if (parse_f64(v, out.f)) {
        out.kind = Value::Kind::floating;
        return out;
    }
    throw ConfigError(where + ": cannot parse value '" + v + "'");
}

int64_t want_int(const Value& v, const std::string& where) {
    if (v.kind != Value::Kind::integer)
        throw ConfigError(where + ": expected an integer");
    return v.i;
}

double want_float(const Value& v, const std::string& where) {
    if (v.kind == Value::Kind::integer) return static_cast<double>(v.i);
    if (v.kind != Value::Kind::floating)
        throw ConfigError(where + ": expected a number");
    return v.f;
}

bool want_bool(const Value& v, const std::string& where) {
    if (v.kind != Value::Kind::boolean)
        throw ConfigError(where + ": expected true or false");
    return v.b;
}

std::string want_string(const Value& v, const std::string& where) {
    if (v.kind != Value::Kind::string)
        throw ConfigError(where + ": expected a quoted string");
    return v.s;
}

using Setter = std::function<void(ExperimentConfig&, const Value&, const std::string&)>;

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> s = [] {
        std::map<std::string, Setter> m;
        m["seed"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            int64_t x = want_int(v, w);
            if (x < 0) throw ConfigError(w + ": seed must be >= 0");
            c.seed = static_cast<uint64_t>(x);
        };
        m["output_dir"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.output_dir = want_string(v, w);
        };

        auto gen_i = [&m](const char* key, int64_t GeneratorConfig::* field) {
            m[std::string("generator.") + key] =
                [field](ExperimentConfig& c, const Value& v, const std::string& w) {
                    c.generator.*field = want_int(v, w);
                };
        };
        auto gen_f = [&m](const char* key, double GeneratorConfig::* field) {
            m[std::string("generator.") + key] =
                [field](ExperimentConfig& c, const Value& v, const std::string& w) {
                    c.generator.*field = want_float(v, w);
                };
        };
        gen_i("n_users", &GeneratorConfig::n_users);
        gen_i("n_items", &GeneratorConfig::n_items);
        gen_i("n_categories", &GeneratorConfig::n_categories);
        gen_i("grid_size", &GeneratorConfig::grid_size);
        gen_i("n_time_buckets", &GeneratorConfig::n_time_buckets);
        gen_i("samples", &GeneratorConfig::samples);
        gen_i("seq_len_min", &GeneratorConfig::seq_len_min);
        gen_i("seq_len_max", &GeneratorConfig::seq_len_max);
        gen_i("n_shops", &GeneratorConfig::n_shops);
        gen_i("n_query_tokens", &GeneratorConfig::n_query_tokens);
        gen_i("horizon_days", &GeneratorConfig::horizon_days);
        gen_f("preference_sharpness", &GeneratorConfig::preference_sharpness);
        gen_f("spatiotemporal_signal", &GeneratorConfig::spatiotemporal_signal);
        gen_f("target_positive_rate", &GeneratorConfig::target_positive_rate);
        gen_f("taste_scale", &GeneratorConfig::taste_scale);
        m["generator.test_samples"] = [](ExperimentConfig& c, const Value& v,
                                         const std::string& w) {
            c.test_samples = want_int(v, w);
        };

        m["embedding.dim"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.dim = want_int(v, w);
        };

        m["csrl.layers"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.cross_layers = want_int(v, w);
        };
        m["csrl.margin"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.triplet.margin = want_float(v, w);
        };
        m["csrl.n_v"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.triplet.n_v = want_int(v, w);
        };
        m["csrl.geo_mode"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            std::string s2 = want_string(v, w);
            if (s2 == "cell")
                c.model.triplet.geo_mode = GeoMode::cell;
            else if (s2 == "region")
                c.model.triplet.geo_mode = GeoMode::region;
            else
                throw ConfigError(w + ": geo_mode must be \"cell\" or \"region\"");
        };
        m["csrl.paper_literal_loss"] = [](ExperimentConfig& c, const Value& v,
                                          const std::string& w) {
            c.model.triplet.paper_literal_loss = want_bool(v, w);
        };

        m["stpe.heads"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.heads = want_int(v, w);
        };
        m["stpe.d_k"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.d_k = want_int(v, w);
        };

        m["stif.hidden"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.stif_hidden = want_int(v, w);
        };
        m["stif.paper_literal"] = [](ExperimentConfig& c, const Value& v,
                                     const std::string& w) {
            c.model.stif_paper_literal = want_bool(v, w);
        };

        m["model.alpha"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.model.alpha = want_float(v, w);
        };
        m["model.head_widths"] = [](ExperimentConfig& c, const Value& v,
                                    const std::string& w) {
            if (v.kind != Value::Kind::int_array)
                throw ConfigError(w + ": expected an integer array like [128, 64]");
            c.model.head_widths = v.arr;
        };
        m["model.truncate_len"] = [](ExperimentConfig& c, const Value& v,
                                     const std::string& w) {
            c.model.truncate_len = want_int(v, w);
        };
        m["model.use_csrl_loss"] = [](ExperimentConfig& c, const Value& v,
                                      const std::string& w) {
            c.switches.use_csrl_loss = want_bool(v, w);
        };
        m["model.use_cross_network"] = [](ExperimentConfig& c, const Value& v,
                                          const std::string& w) {
            c.switches.use_cross_network = want_bool(v, w);
        };
        m["model.use_stpe"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.switches.use_stpe = want_bool(v, w);
        };
        m["model.use_stif"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.switches.use_stif = want_bool(v, w);
        };

        m["train.batch_size"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.batch_size = want_int(v, w);
        };
        m["train.epochs"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.epochs = want_int(v, w);
        };
        m["train.lr0"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.lr0 = want_float(v, w);
        };
        m["train.decay_rate"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.decay_rate = want_float(v, w);
        };
        m["train.decay_steps"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.decay_steps = want_int(v, w);
        };
        m["train.eval_every"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.train.eval_every = want_int(v, w);
        };

        m["eval.n_threads"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.eval_threads = want_int(v, w);
        };
        m["ablation.n_seeds"] = [](ExperimentConfig& c, const Value& v, const std::string& w) {
            c.ablation_n_seeds = want_int(v, w);
        };
        return m;
    }();
    return s;
}

const std::set<std::string>& known_sections() {
    static const std::set<std::string> s = {"generator", "embedding", "csrl", "stpe",
                                            "stif",      "model",     "train", "eval",
                                            "ablation"};
    return s;
}

void apply_entry(ExperimentConfig& cfg, const std::string& full_key, const Value& value,
                 const std::string& where) {
    auto it = schema().find(full_key);
    if (it == schema().end())
        throw ConfigError(where + ": unknown key '" + full_key + "'");
    it->second(cfg, value, where + " (" + full_key + ")");
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

}  // namespace

void ExperimentConfig::finalize() {
    generator.seed = seed;
    generator.validate();
    if (test_samples < 0) throw ConfigError("generator.test_samples must be >= 0");
    model.vocabs = VocabSpec::from_generator(generator);
    model.grid_size = generator.grid_size;
    model.validate();
    train.validate();
    if (eval_threads < 1) throw ConfigError("eval.n_threads must be >= 1");
    if (ablation_n_seeds < 1) throw ConfigError("ablation.n_seeds must be >= 1");
}

ExperimentConfig default_config() { return {}; }

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(body.substr(1, body.size() - 2));
            if (!known_sections().contains(section))
                throw ConfigError(where + ": unknown section '" + section + "'");
            continue;
        }
        size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value'");
        std::string key = trim(body.substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        std::string full_key = section.empty() ? key : section + "." + key;
        Value v = parse_value(body.substr(eq + 1), where);
        apply_entry(cfg, full_key, v, where);
    }
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const std::string where = "--set " + assignment;
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError(where + ": expected section.key=value");
    std::string key = trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    Value v = parse_value(assignment.substr(eq + 1), where);
    apply_entry(cfg, key, v, where);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["generator"] = {{"n_users", cfg.generator.n_users},
                      {"n_items", cfg.generator.n_items},
                      {"n_categories", cfg.generator.n_categories},
                      {"grid_size", cfg.generator.grid_size},
                      {"n_time_buckets", cfg.generator.n_time_buckets},
                      {"samples", cfg.generator.samples},
                      {"test_samples", cfg.test_samples},
                      {"seq_len_min", cfg.generator.seq_len_min},
                      {"seq_len_max", cfg.generator.seq_len_max},
                      {"preference_sharpness", cfg.generator.preference_sharpness},
                      {"spatiotemporal_signal", cfg.generator.spatiotemporal_signal},
                      {"n_shops", cfg.generator.n_shops},
                      {"n_query_tokens", cfg.generator.n_query_tokens},
                      {"horizon_days", cfg.generator.horizon_days},
                      {"target_positive_rate", cfg.generator.target_positive_rate},
                      {"taste_scale", cfg.generator.taste_scale}};
    j["embedding"] = {{"dim", cfg.model.dim}};
    j["csrl"] = {{"layers", cfg.model.cross_layers},
                 {"margin", cfg.model.triplet.margin},
                 {"n_v", cfg.model.triplet.n_v},
                 {"geo_mode", cfg.model.triplet.geo_mode == GeoMode::cell ? "cell" : "region"},
                 {"paper_literal_loss", cfg.model.triplet.paper_literal_loss}};
    j["stpe"] = {{"heads", cfg.model.heads}, {"d_k", cfg.model.d_k}};
    j["stif"] = {{"hidden", cfg.model.stif_hidden},
                 {"paper_literal", cfg.model.stif_paper_literal}};
    j["model"] = {{"alpha", cfg.model.alpha},
                  {"head_widths", cfg.model.head_widths},
                  {"truncate_len", cfg.model.truncate_len},
                  {"use_csrl_loss", cfg.switches.use_csrl_loss},
                  {"use_cross_network", cfg.switches.use_cross_network},
                  {"use_stpe", cfg.switches.use_stpe},
                  {"use_stif", cfg.switches.use_stif}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"lr0", cfg.train.lr0},
                  {"decay_rate", cfg.train.decay_rate},
                  {"decay_steps", cfg.train.decay_steps},
                  {"eval_every", cfg.train.eval_every}};
    j["eval"] = {{"n_threads", cfg.eval_threads}};
    j["ablation"] = {{"n_seeds", cfg.ablation_n_seeds}};
    return j.dump(2);
}

}  // namespace cspm
