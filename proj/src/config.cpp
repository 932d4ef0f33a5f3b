#include "bridgelab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bridgelab {

using nlohmann::json;

DenoiserConfig ExperimentConfig::denoiser_config() const {
    DenoiserConfig dc;
    dc.channels = testbed.channels;
    dc.height = testbed.height;
    dc.width = testbed.max_width;
    dc.hidden_width = hidden_width;
    dc.cond_dim = testbed.embed_dim;
    if (train_mode == TrainMode::palette_ddim) {
        dc.cond_mode = CondMode::concat_channels;
        dc.objective = Objective::v_prediction;
        dc.max_timestep = schedule.timesteps;
    } else {
        dc.cond_mode = CondMode::embed_inject;
        dc.objective = Objective::x0_prediction;
        dc.max_timestep = schedule.bridge_timesteps;
    }
    return dc;
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw std::invalid_argument("config: section '" + section + "' must be an object");
    for (const auto& item : obj.items()) {
        if (allowed.count(item.key()) == 0)
            throw std::invalid_argument("config: unknown key '" + item.key() + "' in section '" + section + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_range(const json& obj, const char* key, double& lo, double& hi) {
    if (!obj.contains(key)) return;
    const json& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 2)
        throw std::invalid_argument(std::string("config: '") + key + "' must be a [lo, hi] pair");
    lo = arr[0].get<double>();
    hi = arr[1].get<double>();
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
    json root = json::parse(text);
    check_keys(root, "<root>",
               {"testbed", "schedule", "sampler", "training", "eval", "seeds", "out_dir", "dataset"});

    ExperimentConfig cfg;

    if (root.contains("testbed")) {
        const json& tb = root.at("testbed");
        check_keys(tb, "testbed",
                   {"channels", "height", "max_width", "alphabet", "min_tokens", "max_tokens", "avg_duration",
                    "gain_range", "pitch_range", "mod_range", "aligned", "speakers", "embed_dim",
                    "embed_noise_std"});
        read_field(tb, "channels", cfg.testbed.channels);
        read_field(tb, "height", cfg.testbed.height);
        read_field(tb, "max_width", cfg.testbed.max_width);
        read_field(tb, "alphabet", cfg.testbed.alphabet);
        read_field(tb, "min_tokens", cfg.testbed.min_tokens);
        read_field(tb, "max_tokens", cfg.testbed.max_tokens);
        read_field(tb, "avg_duration", cfg.testbed.avg_duration);
        read_range(tb, "gain_range", cfg.testbed.gain_min, cfg.testbed.gain_max);
        read_range(tb, "pitch_range", cfg.testbed.pitch_min, cfg.testbed.pitch_max);
        read_range(tb, "mod_range", cfg.testbed.mod_min, cfg.testbed.mod_max);
        read_field(tb, "aligned", cfg.testbed.aligned);
        read_field(tb, "speakers", cfg.testbed.speakers);
        read_field(tb, "embed_dim", cfg.testbed.embed_dim);
        read_field(tb, "embed_noise_std", cfg.testbed.embed_noise_std);
    }

    if (root.contains("schedule")) {
        const json& sc = root.at("schedule");
        check_keys(sc, "schedule", {"kind", "timesteps", "bridge_timesteps", "bridge_beta_max"});
        if (sc.contains("kind")) cfg.schedule.kind = schedule_kind_from_string(sc.at("kind").get<std::string>());
        read_field(sc, "timesteps", cfg.schedule.timesteps);
        read_field(sc, "bridge_timesteps", cfg.schedule.bridge_timesteps);
        read_field(sc, "bridge_beta_max", cfg.schedule.bridge_beta_max);
    }

    if (root.contains("sampler")) {
        const json& sp = root.at("sampler");
        check_keys(sp, "sampler",
                   {"steps", "eta", "guidance_w", "mode", "ot_ode", "add_x1_noise", "x1_noise_std"});
        read_field(sp, "steps", cfg.sampler.steps);
        read_field(sp, "eta", cfg.sampler.eta);
        read_field(sp, "guidance_w", cfg.sampler.guidance_w);
        if (sp.contains("mode")) cfg.sampler.mode = sampler_mode_from_string(sp.at("mode").get<std::string>());
        read_field(sp, "ot_ode", cfg.sampler.ot_ode);
        read_field(sp, "add_x1_noise", cfg.sampler.add_x1_noise);
        read_field(sp, "x1_noise_std", cfg.sampler.x1_noise_std);
    }

    if (root.contains("training")) {
        const json& tr = root.at("training");
        check_keys(tr, "training",
                   {"learning_rate", "batch_size", "total_steps", "cond_dropout", "seed", "threads",
                    "checkpoint_interval", "mode", "hidden_width"});
        read_field(tr, "learning_rate", cfg.training.learning_rate);
        read_field(tr, "batch_size", cfg.training.batch_size);
        read_field(tr, "total_steps", cfg.training.total_steps);
        read_field(tr, "cond_dropout", cfg.training.cond_dropout);
        read_field(tr, "seed", cfg.training.seed);
        read_field(tr, "threads", cfg.training.threads);
        read_field(tr, "checkpoint_interval", cfg.training.checkpoint_interval);
        if (tr.contains("mode")) cfg.train_mode = train_mode_from_string(tr.at("mode").get<std::string>());
        read_field(tr, "hidden_width", cfg.hidden_width);
    }

    if (root.contains("eval")) {
        const json& ev = root.at("eval");
        check_keys(ev, "eval", {"pairs", "batches"});
        read_field(ev, "pairs", cfg.eval.pairs);
        read_field(ev, "batches", cfg.eval.batches);
    }

    if (root.contains("seeds")) cfg.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
    read_field(root, "out_dir", cfg.out_dir);
    read_field(root, "dataset", cfg.dataset);

    validate(cfg);
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_json(buf.str());
}

std::string to_canonical_json(const ExperimentConfig& cfg) {
    json root;
    root["testbed"] = {{"channels", cfg.testbed.channels},
                       {"height", cfg.testbed.height},
                       {"max_width", cfg.testbed.max_width},
                       {"alphabet", cfg.testbed.alphabet},
                       {"min_tokens", cfg.testbed.min_tokens},
                       {"max_tokens", cfg.testbed.max_tokens},
                       {"avg_duration", cfg.testbed.avg_duration},
                       {"gain_range", {cfg.testbed.gain_min, cfg.testbed.gain_max}},
                       {"pitch_range", {cfg.testbed.pitch_min, cfg.testbed.pitch_max}},
                       {"mod_range", {cfg.testbed.mod_min, cfg.testbed.mod_max}},
                       {"aligned", cfg.testbed.aligned},
                       {"speakers", cfg.testbed.speakers},
                       {"embed_dim", cfg.testbed.embed_dim},
                       {"embed_noise_std", cfg.testbed.embed_noise_std}};
    root["schedule"] = {{"kind", to_string(cfg.schedule.kind)},
                        {"timesteps", cfg.schedule.timesteps},
                        {"bridge_timesteps", cfg.schedule.bridge_timesteps},
                        {"bridge_beta_max", cfg.schedule.bridge_beta_max}};
    root["sampler"] = {{"steps", cfg.sampler.steps},
                       {"eta", cfg.sampler.eta},
                       {"guidance_w", cfg.sampler.guidance_w},
                       {"mode", to_string(cfg.sampler.mode)},
                       {"ot_ode", cfg.sampler.ot_ode},
                       {"add_x1_noise", cfg.sampler.add_x1_noise},
                       {"x1_noise_std", cfg.sampler.x1_noise_std}};
    root["training"] = {{"learning_rate", cfg.training.learning_rate},
                        {"batch_size", cfg.training.batch_size},
                        {"total_steps", cfg.training.total_steps},
                        {"cond_dropout", cfg.training.cond_dropout},
                        {"seed", cfg.training.seed},
                        {"threads", cfg.training.threads},
                        {"checkpoint_interval", cfg.training.checkpoint_interval},
                        {"mode", to_string(cfg.train_mode)},
                        {"hidden_width", cfg.hidden_width}};
    root["eval"] = {{"pairs", cfg.eval.pairs}, {"batches", cfg.eval.batches}};
    root["seeds"] = cfg.seeds;
    root["out_dir"] = cfg.out_dir;
    root["dataset"] = cfg.dataset;
    return root.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = to_canonical_json(cfg);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void validate(const ExperimentConfig& cfg) {
    validate(cfg.testbed);
    validate(cfg.training);
    if (cfg.schedule.timesteps < 2) throw std::invalid_argument("config: schedule.timesteps must be >= 2");
    if (cfg.schedule.bridge_timesteps < 2)
        throw std::invalid_argument("config: schedule.bridge_timesteps must be >= 2");
    if (!(cfg.schedule.bridge_beta_max > 0.0))
        throw std::invalid_argument("config: schedule.bridge_beta_max must be positive");
    const int max_t =
        cfg.sampler.mode == SamplerMode::ddim ? cfg.schedule.timesteps : cfg.schedule.bridge_timesteps;
    validate(cfg.sampler, max_t);
    if (cfg.hidden_width < 1) throw std::invalid_argument("config: hidden_width must be >= 1");
    if (cfg.eval.pairs < 1) throw std::invalid_argument("config: eval.pairs must be >= 1");
    if (cfg.eval.batches < 1) throw std::invalid_argument("config: eval.batches must be >= 1");
    if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
    if (cfg.out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

}  // namespace bridgelab
