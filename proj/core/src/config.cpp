#include "mmkg/config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mmkg {

using nlohmann::json;

const char* experiment_mode_name(ExperimentMode m) {
    switch (m) {
        case ExperimentMode::Standard: return "standard";
        case ExperimentMode::AblationLadder: return "ablation";
        case ExperimentMode::NoiseSuite: return "noise";
        case ExperimentMode::RandomEnv: return "random-env";
        case ExperimentMode::Inductive: return "inductive";
    }
    return "?";
}

ExperimentMode experiment_mode_from_name(const std::string& name) {
    if (name == "standard") return ExperimentMode::Standard;
    if (name == "ablation") return ExperimentMode::AblationLadder;
    if (name == "noise") return ExperimentMode::NoiseSuite;
    if (name == "random-env") return ExperimentMode::RandomEnv;
    if (name == "inductive") return ExperimentMode::Inductive;
    throw std::invalid_argument("unknown experiment mode: " + name);
}

void RunConfig::validate() const {
    world.validate();
    policy.validate();
    train.validate();
    if (t_max == 0) throw std::invalid_argument("config: t_max must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("config: at least one seed required");
    if (model.dim == 0) throw std::invalid_argument("config: embedding dim must be positive");
    if (init_scorer.sigma < 0.0) throw std::invalid_argument("config: initial scorer sigma must be >= 0");
    if (noise_sentence_fraction < 0.0 || noise_image_fraction < 0.0)
        throw std::invalid_argument("config: noise fractions must be >= 0");
}

namespace {

// strict object reader: every key must be known
class ObjectReader {
public:
    ObjectReader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
        if (!j.is_object()) throw std::invalid_argument("config: " + scope_ + " must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        handled_.push_back(key);
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->get<T>();
            } catch (const json::exception&) {
                throw std::invalid_argument("config: bad value for " + scope_ + "." + key);
            }
        }
    }

    void read_string(const char* key, std::string& out) { read<std::string>(key, out); }

    void mark(const char* key) { handled_.push_back(key); }
    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) {
        handled_.push_back(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool known = false;
            for (const auto& k : handled_)
                if (k == it.key()) known = true;
            if (!known) throw std::invalid_argument("config: unknown key " + scope_ + "." + it.key());
        }
    }

private:
    const json& j_;
    std::string scope_;
    std::vector<std::string> handled_;
};

void parse_world(const json& j, WorldSpec& w) {
    ObjectReader r(j, "world");
    r.read("n_images", w.n_images);
    r.read("captions_per_image", w.captions_per_image);
    r.read("n_heldout_images", w.n_heldout_images);
    r.read("concept_vocab", w.concept_vocab);
    r.read("concept_base", w.concept_base);
    r.read("min_objects_per_image", w.min_objects_per_image);
    r.read("max_objects_per_image", w.max_objects_per_image);
    r.read("min_phrases_per_caption", w.min_phrases_per_caption);
    r.read("max_phrases_per_caption", w.max_phrases_per_caption);
    r.read("phrase_tokens_per_concept", w.phrase_tokens_per_concept);
    r.read("distractor_tokens", w.distractor_tokens);
    r.read("distractor_rate", w.distractor_rate);
    r.read("observation_noise", w.observation_noise);
    r.read("zipf_skew", w.zipf_skew);
    r.read("seed", w.seed);
    r.finish();
}

void parse_policy(const json& j, LinkPolicy& p) {
    ObjectReader r(j, "policy");
    std::string strategy = link_strategy_name(p.strategy);
    r.read_string("strategy", strategy);
    p.strategy = link_strategy_from_name(strategy);
    r.read("absolute_threshold", p.absolute_threshold);
    r.read("mu_image", p.mu_image);
    r.read("mu_text", p.mu_text);
    r.read("k_image", p.k_image);
    r.read("k_text", p.k_text);
    r.read("local_threshold", p.local_threshold);
    r.read("prefilter_width", p.prefilter_width);
    r.read("refresh_candidates", p.refresh_candidates);
    r.finish();
}

void parse_train(const json& j, TrainConfig& t) {
    ObjectReader r(j, "train");
    r.read("lambda_global", t.lambda_global);
    r.read("lambda_local", t.lambda_local);
    r.read("lambda_uncertainty", t.lambda_uncertainty);
    r.read("gamma", t.gamma);
    r.read("mu_weak", t.mu_weak);
    r.read("batch_size", t.batch_size);
    r.read("epochs_per_iteration", t.epochs_per_iteration);
    r.read("learning_rate", t.learning_rate);
    r.read("beta1", t.beta1);
    r.read("beta2", t.beta2);
    r.read("warmup_fraction", t.warmup_fraction);
    r.read("dropout_rate", t.dropout_rate);
    std::string neg = negative_loss_mode_name(t.negative_loss);
    r.read_string("negative_loss", neg);
    t.negative_loss = negative_loss_mode_from_name(neg);
    r.read("soft_labels", t.soft_labels);
    r.read("graph_context", t.graph_context);
    r.read("uncertainty", t.uncertainty);
    r.finish();
}

void parse_model(const json& j, EncoderConfig& m) {
    ObjectReader r(j, "model");
    r.read("dim", m.dim);
    r.read("temperature_init", m.temperature_init);
    r.read("context_weight", m.context_weight);
    r.read("init_scale", m.init_scale);
    r.finish();
}

void parse_init_scorer(const json& j, InitialScorerConfig& s) {
    ObjectReader r(j, "init_scorer");
    std::string mode = s.warm ? "warm" : "cold";
    r.read_string("mode", mode);
    if (mode != "warm" && mode != "cold") throw std::invalid_argument("config: init_scorer.mode must be warm|cold");
    s.warm = mode == "warm";
    r.read("sigma", s.sigma);
    r.finish();
}

json world_to_json(const WorldSpec& w) {
    return json{{"n_images", w.n_images},
                {"captions_per_image", w.captions_per_image},
                {"n_heldout_images", w.n_heldout_images},
                {"concept_vocab", w.concept_vocab},
                {"concept_base", w.concept_base},
                {"min_objects_per_image", w.min_objects_per_image},
                {"max_objects_per_image", w.max_objects_per_image},
                {"min_phrases_per_caption", w.min_phrases_per_caption},
                {"max_phrases_per_caption", w.max_phrases_per_caption},
                {"phrase_tokens_per_concept", w.phrase_tokens_per_concept},
                {"distractor_tokens", w.distractor_tokens},
                {"distractor_rate", w.distractor_rate},
                {"observation_noise", w.observation_noise},
                {"zipf_skew", w.zipf_skew},
                {"seed", w.seed}};
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: parse failure: ") + e.what());
    }

    RunConfig cfg;
    ObjectReader r(j, "config");
    r.mark("world");
    r.mark("policy");
    r.mark("train");
    r.mark("model");
    r.mark("init_scorer");
    if (r.has("world")) parse_world(j.at("world"), cfg.world);
    if (r.has("policy")) parse_policy(j.at("policy"), cfg.policy);
    if (r.has("train")) parse_train(j.at("train"), cfg.train);
    if (r.has("model")) parse_model(j.at("model"), cfg.model);
    if (r.has("init_scorer")) parse_init_scorer(j.at("init_scorer"), cfg.init_scorer);
    r.read_string("corpus_path", cfg.corpus_path);
    r.read("iterative_discovery", cfg.iterative_discovery);
    r.read("model_warmup_epochs", cfg.model_warmup_epochs);
    r.read("t_max", cfg.t_max);
    r.read("seeds", cfg.seeds);
    std::string mode = experiment_mode_name(cfg.mode);
    r.read_string("mode", mode);
    cfg.mode = experiment_mode_from_name(mode);
    r.read_string("out_dir", cfg.out_dir);
    r.read("pp_degree_cutoff", cfg.pp_degree_cutoff);
    r.read("loss_trace", cfg.loss_trace);
    r.read("graph_snapshot_every", cfg.graph_snapshot_every);
    r.read("checkpoint_every", cfg.checkpoint_every);
    r.read("noise_sentence_fraction", cfg.noise_sentence_fraction);
    r.read("noise_image_fraction", cfg.noise_image_fraction);
    r.read("pretrain_epochs", cfg.pretrain_epochs);
    r.read("pretrain_lr", cfg.pretrain_lr);
    r.finish();

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const RunConfig& cfg) {
    json j{{"world", world_to_json(cfg.world)},
           {"corpus_path", cfg.corpus_path},
           {"policy",
            json{{"strategy", link_strategy_name(cfg.policy.strategy)},
                 {"absolute_threshold", cfg.policy.absolute_threshold},
                 {"mu_image", cfg.policy.mu_image},
                 {"mu_text", cfg.policy.mu_text},
                 {"k_image", cfg.policy.k_image},
                 {"k_text", cfg.policy.k_text},
                 {"local_threshold", cfg.policy.local_threshold},
                 {"prefilter_width", cfg.policy.prefilter_width},
                 {"refresh_candidates", cfg.policy.refresh_candidates}}},
           {"train",
            json{{"lambda_global", cfg.train.lambda_global},
                 {"lambda_local", cfg.train.lambda_local},
                 {"lambda_uncertainty", cfg.train.lambda_uncertainty},
                 {"gamma", cfg.train.gamma},
                 {"mu_weak", cfg.train.mu_weak},
                 {"batch_size", cfg.train.batch_size},
                 {"epochs_per_iteration", cfg.train.epochs_per_iteration},
                 {"learning_rate", cfg.train.learning_rate},
                 {"beta1", cfg.train.beta1},
                 {"beta2", cfg.train.beta2},
                 {"warmup_fraction", cfg.train.warmup_fraction},
                 {"dropout_rate", cfg.train.dropout_rate},
                 {"negative_loss", negative_loss_mode_name(cfg.train.negative_loss)},
                 {"soft_labels", cfg.train.soft_labels},
                 {"graph_context", cfg.train.graph_context},
                 {"uncertainty", cfg.train.uncertainty}}},
           {"model",
            json{{"dim", cfg.model.dim},
                 {"temperature_init", cfg.model.temperature_init},
                 {"context_weight", cfg.model.context_weight},
                 {"init_scale", cfg.model.init_scale}}},
           {"init_scorer", json{{"mode", cfg.init_scorer.warm ? "warm" : "cold"}, {"sigma", cfg.init_scorer.sigma}}},
           {"iterative_discovery", cfg.iterative_discovery},
           {"model_warmup_epochs", cfg.model_warmup_epochs},
           {"t_max", cfg.t_max},
           {"seeds", cfg.seeds},
           {"mode", experiment_mode_name(cfg.mode)},
           {"out_dir", cfg.out_dir},
           {"pp_degree_cutoff", cfg.pp_degree_cutoff},
           {"loss_trace", cfg.loss_trace},
           {"graph_snapshot_every", cfg.graph_snapshot_every},
           {"checkpoint_every", cfg.checkpoint_every},
           {"noise_sentence_fraction", cfg.noise_sentence_fraction},
           {"noise_image_fraction", cfg.noise_image_fraction},
           {"pretrain_epochs", cfg.pretrain_epochs},
           {"pretrain_lr", cfg.pretrain_lr}};
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = config_to_json_text(cfg);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace mmkg
