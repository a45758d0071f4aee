#include "moevl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "moevl/errors.hpp"
#include "moevl/numfmt.hpp"

namespace moevl {

namespace {

struct Cursor {
    const std::string& origin;
    int line = 0;
};

[[noreturn]] void bad(const Cursor& at, const std::string& message) {
    throw ConfigError(at.origin + " line " + std::to_string(at.line) + ": " + message);
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

long long parse_int(const Cursor& at, const std::string& key, const std::string& value) {
    long long out = 0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        bad(at, "key '" + key + "' expects an integer, got '" + value + "'");
    }
    return out;
}

int parse_positive_int(const Cursor& at, const std::string& key, const std::string& value) {
    const long long v = parse_int(at, key, value);
    if (v <= 0 || v > INT32_MAX) bad(at, "key '" + key + "' must be a positive integer");
    return static_cast<int>(v);
}

int parse_nonneg_int(const Cursor& at, const std::string& key, const std::string& value) {
    const long long v = parse_int(at, key, value);
    if (v < 0 || v > INT32_MAX) bad(at, "key '" + key + "' must be a non-negative integer");
    return static_cast<int>(v);
}

std::uint64_t parse_seed(const Cursor& at, const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        bad(at, "key '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
    return out;
}

double parse_number(const Cursor& at, const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        bad(at, "key '" + key + "' expects a number, got '" + value + "'");
    }
}

bool parse_bool(const Cursor& at, const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    bad(at, "key '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<std::string> parse_name_list(const Cursor& at, const std::string& key,
                                         const std::string& value) {
    std::vector<std::string> names;
    std::stringstream stream(value);
    std::string piece;
    while (std::getline(stream, piece, ',')) {
        const std::string name = trim(piece);
        if (name.empty()) bad(at, "key '" + key + "' has an empty name in its list");
        if (name.find('/') != std::string::npos || name.find(' ') != std::string::npos) {
            bad(at, "key '" + key + "' names must not contain '/' or spaces: '" + name + "'");
        }
        if (std::find(names.begin(), names.end(), name) != names.end()) {
            bad(at, "key '" + key + "' repeats the name '" + name + "'");
        }
        names.push_back(name);
    }
    return names;
}

double parse_unit_interval(const Cursor& at, const std::string& key, const std::string& value,
                           bool open_top) {
    const double v = parse_number(at, key, value);
    const bool ok = open_top ? (v >= 0.0 && v < 1.0) : (v >= 0.0 && v <= 1.0);
    if (!ok) {
        bad(at, "key '" + key + "' must lie in [0, 1" + (open_top ? ")" : "]") + ", got " +
                    value);
    }
    return v;
}

double parse_positive(const Cursor& at, const std::string& key, const std::string& value) {
    const double v = parse_number(at, key, value);
    if (v <= 0.0) bad(at, "key '" + key + "' must be positive, got " + value);
    return v;
}

using Setter = std::function<void(RunConfig&, const Cursor&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"model.d_v",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.d_v = parse_positive_int(at, k, v);
         }},
        {"model.d_t",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.d_t = parse_positive_int(at, k, v);
         }},
        {"model.d_h",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.d_h = parse_positive_int(at, k, v);
         }},
        {"model.n1",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.n1 = parse_positive_int(at, k, v);
         }},
        {"model.merge",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.merge = parse_positive_int(at, k, v);
         }},
        {"model.n_classes",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.n_classes = parse_positive_int(at, k, v);
         }},
        {"model.patch_size",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.patch_size = parse_positive_int(at, k, v);
         }},
        {"model.vocab",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.vocab = parse_positive_int(at, k, v);
         }},
        {"model.n_blocks",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.dims.n_blocks = parse_positive_int(at, k, v);
         }},
        {"model.m_text",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.m_text = parse_positive_int(at, k, v);
         }},
        {"projector.kind",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             try {
                 c.projector = projector_kind_from_name(v);
             } catch (const Error&) {
                 bad(at, "key '" + k + "' must be one of mlp, fusion, hc; got '" + v + "'");
             }
         }},
        {"data.seed",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.data_seed = parse_seed(at, k, v);
         }},
        {"data.n",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.data_n = parse_positive_int(at, k, v);
         }},
        {"data.label_noise",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.label_noise = parse_unit_interval(at, k, v, true);
         }},
        {"data.emotion_fraction",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.emotion_fraction = parse_unit_interval(at, k, v, false);
         }},
        {"train.stage1_epochs",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_epochs[0] = parse_nonneg_int(at, k, v);
         }},
        {"train.stage2_epochs",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_epochs[1] = parse_nonneg_int(at, k, v);
         }},
        {"train.stage3_epochs",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_epochs[2] = parse_nonneg_int(at, k, v);
         }},
        {"train.finetune_epochs",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_epochs[3] = parse_nonneg_int(at, k, v);
         }},
        {"train.stage1_lr",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_lr[0] = parse_positive(at, k, v);
         }},
        {"train.stage2_lr",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_lr[1] = parse_positive(at, k, v);
         }},
        {"train.stage3_lr",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_lr[2] = parse_positive(at, k, v);
         }},
        {"train.finetune_lr",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage_lr[3] = parse_positive(at, k, v);
         }},
        {"train.batch_size",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.batch_size = parse_positive_int(at, k, v);
         }},
        {"train.warmup_ratio",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.warmup_ratio = parse_unit_interval(at, k, v, false);
         }},
        {"train.stage3_train_embedder",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.stage3_train_embedder = parse_bool(at, k, v);
         }},
        {"optimizer.beta1",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.optimizer.beta1 = parse_unit_interval(at, k, v, true);
         }},
        {"optimizer.beta2",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.optimizer.beta2 = parse_unit_interval(at, k, v, true);
         }},
        {"optimizer.weight_decay",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             const double d = parse_number(at, k, v);
             if (d < 0.0) bad(at, "key '" + k + "' must be non-negative, got " + v);
             c.optimizer.weight_decay = d;
         }},
        {"optimizer.eps",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.optimizer.eps = parse_positive(at, k, v);
         }},
        {"fec.tau",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             const double t = parse_number(at, k, v);
             if (!(t > 0.0 && t <= 1.0)) {
                 bad(at, "key '" + k + "' must lie in (0, 1], got " + v);
             }
             c.tau = t;
         }},
        {"lora.rank",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.lora_rank = parse_positive_int(at, k, v);
         }},
        {"lora.alpha",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.lora_alpha = parse_positive(at, k, v);
         }},
        {"lora.dropout",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.lora_dropout = parse_unit_interval(at, k, v, true);
         }},
        {"lora.adapters",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.adapters = parse_name_list(at, k, v);
         }},
        {"run.seed",
         [](RunConfig& c, const Cursor& at, const std::string& k, const std::string& v) {
             c.seed = parse_seed(at, k, v);
         }},
    };
    return table;
}

const std::vector<std::string>& known_sections() {
    static const std::vector<std::string> sections = {
        "model", "projector", "data", "train", "optimizer", "fec", "lora", "run"};
    return sections;
}

int merged_token_count(const RunConfig& c) {
    return (c.n1 + c.dims.merge - 1) / c.dims.merge;
}

int padded_n1(const RunConfig& c) { return merged_token_count(c) * c.dims.merge; }

long emotion_count(const RunConfig& c) {
    return std::lround(c.emotion_fraction * c.data_n);
}

long stage_sample_count(const RunConfig& c, StageId id) {
    const long emotion = emotion_count(c);
    switch (id) {
        case StageId::Stage1: return c.data_n - emotion;
        case StageId::Stage2: return emotion;
        case StageId::Stage3: return c.data_n;
        case StageId::Finetune: return emotion;
    }
    return 0;
}

long stage_step_count(const RunConfig& c, StageId id) {
    const long samples = stage_sample_count(c, id);
    const long batches = (samples + c.batch_size - 1) / c.batch_size;
    return batches * c.stage_epochs[stage_number(id) - 1];
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig config;
    Cursor at{origin, 0};
    std::string section;
    std::stringstream stream(text);
    std::string raw;
    while (std::getline(stream, raw)) {
        ++at.line;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        if (line.front() == '[') {
            if (line.back() != ']') bad(at, "unterminated section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            const auto& sections = known_sections();
            if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
                bad(at, "unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) bad(at, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) bad(at, "missing key before '='");
        if (section.empty()) bad(at, "key '" + key + "' appears before any [section]");

        const auto it = setters().find(section + "." + key);
        if (it == setters().end()) {
            bad(at, "unknown key '" + key + "' in [" + section + "]");
        }
        it->second(config, at, key, value);
    }

    if (config.lora_rank > std::min(config.dims.d_t, config.dims.d_h)) {
        throw ConfigError(origin + ": key 'rank' (" + std::to_string(config.lora_rank) +
                          ") exceeds the narrowest adapted width " +
                          std::to_string(std::min(config.dims.d_t, config.dims.d_h)));
    }
    return config;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

std::string echo_config(const RunConfig& c) {
    std::string out;
    auto put = [&out](const std::string& line) { out += line + "\n"; };
    auto kv_int = [&put](const char* key, long long v) {
        put(std::string(key) + " = " + std::to_string(v));
    };
    auto kv_num = [&put](const char* key, double v) {
        put(std::string(key) + " = " + fmt_double(v));
    };
    auto kv_seed = [&put](const char* key, std::uint64_t v) {
        put(std::string(key) + " = " + std::to_string(v));
    };

    put("[model]");
    kv_int("d_v", c.dims.d_v);
    kv_int("d_t", c.dims.d_t);
    kv_int("d_h", c.dims.d_h);
    kv_int("n1", c.n1);
    kv_int("merge", c.dims.merge);
    kv_int("n_classes", c.dims.n_classes);
    kv_int("patch_size", c.dims.patch_size);
    kv_int("vocab", c.dims.vocab);
    kv_int("n_blocks", c.dims.n_blocks);
    kv_int("m_text", c.m_text);
    put("# derived: n2 = " + std::to_string(merged_token_count(c)) +
        " merged visual tokens per sample");
    if (padded_n1(c) != c.n1) {
        put("# derived: n1 padded to " + std::to_string(padded_n1(c)) + " before merging");
    }
    put("");
    put("[projector]");
    put(std::string("kind = ") + projector_kind_name(c.projector));
    put("");
    put("[data]");
    kv_seed("seed", c.data_seed);
    kv_int("n", c.data_n);
    kv_num("label_noise", c.label_noise);
    kv_num("emotion_fraction", c.emotion_fraction);
    put("# derived: " + std::to_string(stage_sample_count(c, StageId::Stage1)) +
        " general / " + std::to_string(emotion_count(c)) + " emotion samples");
    put("");
    put("[train]");
    kv_int("stage1_epochs", c.stage_epochs[0]);
    kv_num("stage1_lr", c.stage_lr[0]);
    kv_int("stage2_epochs", c.stage_epochs[1]);
    kv_num("stage2_lr", c.stage_lr[1]);
    kv_int("stage3_epochs", c.stage_epochs[2]);
    kv_num("stage3_lr", c.stage_lr[2]);
    kv_int("finetune_epochs", c.stage_epochs[3]);
    kv_num("finetune_lr", c.stage_lr[3]);
    kv_int("batch_size", c.batch_size);
    kv_num("warmup_ratio", c.warmup_ratio);
    put(std::string("stage3_train_embedder = ") +
        (c.stage3_train_embedder ? "true" : "false"));
    for (StageId id :
         {StageId::Stage1, StageId::Stage2, StageId::Stage3, StageId::Finetune}) {
        put("# derived: " + std::string(stage_name(id)) + " runs " +
            std::to_string(stage_step_count(c, id)) + " optimizer steps over " +
            std::to_string(stage_sample_count(c, id)) + " samples");
    }
    put("");
    put("[optimizer]");
    kv_num("beta1", c.optimizer.beta1);
    kv_num("beta2", c.optimizer.beta2);
    kv_num("weight_decay", c.optimizer.weight_decay);
    kv_num("eps", c.optimizer.eps);
    put("");
    put("[fec]");
    kv_num("tau", c.tau);
    put("");
    put("[lora]");
    kv_int("rank", c.lora_rank);
    kv_num("alpha", c.lora_alpha);
    kv_num("dropout", c.lora_dropout);
    std::string names;
    for (const auto& name : c.adapters) {
        if (!names.empty()) names += ",";
        names += name;
    }
    put("adapters = " + names);
    put("");
    put("[run]");
    kv_seed("seed", c.seed);
    return out;
}

std::uint64_t config_hash(const RunConfig& config) {
    const std::string echo = echo_config(config);
    return fnv1a(echo.data(), echo.size());
}

DataParams dataset_params(const RunConfig& c) {
    DataParams params;
    params.seed = c.data_seed;
    params.n = c.data_n;
    params.n1 = c.n1;
    params.d_v = c.dims.d_v;
    params.m_text = c.m_text;
    params.vocab = c.dims.vocab;
    params.n_classes = c.dims.n_classes;
    params.label_noise = c.label_noise;
    params.emotion_fraction = c.emotion_fraction;
    return params;
}

StageConfig stage_run_config(const RunConfig& c, StageId id) {
    StageConfig stage = stage_defaults(id);
    const int i = stage_number(id) - 1;
    stage.epochs = c.stage_epochs[i];
    stage.peak_lr = c.stage_lr[i];
    stage.batch_size = c.batch_size;
    stage.warmup_ratio = c.warmup_ratio;
    stage.optimizer = c.optimizer;
    if (id == StageId::Stage3) stage.train_embedder = c.stage3_train_embedder;
    return stage;
}

}  // namespace moevl
