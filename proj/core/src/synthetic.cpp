#include "mmkg/synthetic.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmkg/rng.hpp"

namespace mmkg {

using nlohmann::json;

void WorldSpec::validate() const {
    if (n_images == 0) throw std::invalid_argument("world: n_images must be positive");
    if (captions_per_image == 0) throw std::invalid_argument("world: captions_per_image must be >= 1");
    if (concept_vocab == 0) throw std::invalid_argument("world: concept_vocab must be positive");
    if (min_objects_per_image == 0 || min_objects_per_image > max_objects_per_image)
        throw std::invalid_argument("world: bad objects-per-image range");
    if (concept_vocab < max_objects_per_image)
        throw std::invalid_argument("world: concept vocabulary smaller than objects-per-image maximum");
    if (min_phrases_per_caption == 0 || min_phrases_per_caption > max_phrases_per_caption)
        throw std::invalid_argument("world: bad phrases-per-caption range");
    if (phrase_tokens_per_concept == 0) throw std::invalid_argument("world: phrase_tokens_per_concept must be >= 1");
    if (distractor_rate < 0.0 || distractor_rate > 1.0) throw std::invalid_argument("world: bad distractor_rate");
    if (observation_noise < 0.0) throw std::invalid_argument("world: observation noise must be >= 0");
    if (zipf_skew < 0.0) throw std::invalid_argument("world: zipf_skew must be >= 0");
}

std::vector<uint32_t> SyntheticCorpus::train_images() const {
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < image_count(); ++i)
        if (!image_heldout[i]) out.push_back(i);
    return out;
}

std::vector<uint32_t> SyntheticCorpus::train_sentences() const {
    std::vector<uint32_t> out;
    for (uint32_t s = 0; s < sentence_count(); ++s)
        if (!sentence_heldout[s]) out.push_back(s);
    return out;
}

std::vector<uint32_t> SyntheticCorpus::heldout_images() const {
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < image_count(); ++i)
        if (image_heldout[i]) out.push_back(i);
    return out;
}

std::vector<uint32_t> SyntheticCorpus::heldout_sentences() const {
    std::vector<uint32_t> out;
    for (uint32_t s = 0; s < sentence_count(); ++s)
        if (sentence_heldout[s]) out.push_back(s);
    return out;
}

std::vector<uint32_t> SyntheticCorpus::phrase_token_list(uint32_t phrase_node) const {
    const PhraseInst& ph = phrases.at(phrase_node);
    const auto& toks = sentence_tokens.at(ph.sentence);
    return std::vector<uint32_t>(toks.begin() + ph.first_token, toks.begin() + ph.first_token + ph.token_count);
}

namespace {

// Zipf-like concept sampler over [base, base + vocab)
class ConceptSampler {
public:
    ConceptSampler(uint32_t base, uint32_t vocab, double skew) : base_(base) {
        cumulative_.resize(vocab);
        double acc = 0.0;
        for (uint32_t k = 0; k < vocab; ++k) {
            acc += std::pow(static_cast<double>(k + 1), -skew);
            cumulative_[k] = acc;
        }
        total_ = acc;
    }

    uint32_t draw(Rng& rng) const {
        const double u = rng.uniform() * total_;
        auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return base_ + static_cast<uint32_t>(it - cumulative_.begin());
    }

private:
    uint32_t base_;
    std::vector<double> cumulative_;
    double total_ = 0.0;
};

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

void add_observation_noise(Vec& latent, double sigma, uint64_t seed) {
    if (sigma <= 0.0) return;
    Rng r(seed);
    for (auto& v : latent) v += sigma * r.normal();
}

}  // namespace

SyntheticCorpus generate_world(const WorldSpec& spec) {
    spec.validate();

    SyntheticCorpus c;
    c.spec = spec;
    c.object_vocab = spec.concept_end();
    c.token_vocab = spec.token_vocab_size();

    const uint32_t total_images = spec.n_images + spec.n_heldout_images;
    const ConceptSampler sampler(spec.concept_base, spec.concept_vocab, spec.zipf_skew);

    Rng concept_rng(stream_seed(spec.seed, Stream::WorldConcepts));
    Rng caption_rng(stream_seed(spec.seed, Stream::WorldCaptions));

    // images: distinct concepts, kept ascending
    for (uint32_t i = 0; i < total_images; ++i) {
        const uint32_t span = spec.max_objects_per_image - spec.min_objects_per_image + 1;
        const uint32_t n_obj = spec.min_objects_per_image + concept_rng.uniform_u32(span);
        std::vector<uint32_t> concepts;
        uint32_t guard = 0;
        while (concepts.size() < n_obj) {
            const uint32_t cid = sampler.draw(concept_rng);
            if (std::find(concepts.begin(), concepts.end(), cid) == concepts.end()) concepts.push_back(cid);
            if (++guard > 10000) {
                // extremely skewed draws can starve; fill with the first unused ids
                for (uint32_t k = spec.concept_base; concepts.size() < n_obj; ++k)
                    if (std::find(concepts.begin(), concepts.end(), k) == concepts.end()) concepts.push_back(k);
            }
        }
        std::sort(concepts.begin(), concepts.end());
        c.image_concepts.push_back(std::move(concepts));
        c.image_heldout.push_back(i >= spec.n_images ? 1 : 0);
        c.image_noise.push_back(0);
    }

    // object nodes in (image, position) order
    c.image_object_nodes.resize(total_images);
    for (uint32_t i = 0; i < total_images; ++i) {
        for (uint32_t cid : c.image_concepts[i]) {
            c.image_object_nodes[i].push_back(static_cast<uint32_t>(c.objects.size()));
            c.objects.push_back(ObjectInst{i, cid});
        }
    }

    // captions
    for (uint32_t i = 0; i < total_images; ++i) {
        const auto& concepts = c.image_concepts[i];
        for (uint32_t k = 0; k < spec.captions_per_image; ++k) {
            const uint32_t s = static_cast<uint32_t>(c.sentence_tokens.size());
            const uint32_t max_phr =
                std::min<uint32_t>(spec.max_phrases_per_caption, static_cast<uint32_t>(concepts.size()));
            const uint32_t min_phr = std::min<uint32_t>(spec.min_phrases_per_caption, max_phr);
            const uint32_t n_phr = min_phr + caption_rng.uniform_u32(max_phr - min_phr + 1);

            // draw a random subset of the image's concepts, in draw order
            std::vector<uint32_t> pool(concepts);
            std::vector<uint32_t> chosen;
            for (uint32_t j = 0; j < n_phr; ++j) {
                const uint32_t pick = caption_rng.uniform_u32(static_cast<uint32_t>(pool.size()));
                chosen.push_back(pool[pick]);
                pool.erase(pool.begin() + pick);
            }

            std::vector<uint32_t> tokens;
            std::vector<uint32_t> phrase_nodes;
            for (uint32_t cid : chosen) {
                PhraseInst ph;
                ph.sentence = s;
                ph.first_token = static_cast<uint32_t>(tokens.size());
                ph.token_count = spec.phrase_tokens_per_concept;
                ph.concept_id = cid;
                for (uint32_t t = 0; t < spec.phrase_tokens_per_concept; ++t)
                    tokens.push_back(cid * spec.phrase_tokens_per_concept + t);
                phrase_nodes.push_back(static_cast<uint32_t>(c.phrases.size()));
                c.phrases.push_back(ph);
                if (spec.distractor_tokens > 0 && caption_rng.uniform() < spec.distractor_rate)
                    tokens.push_back(spec.distractor_token_base() + caption_rng.uniform_u32(spec.distractor_tokens));
            }
            c.sentence_tokens.push_back(std::move(tokens));
            c.sentence_phrase_nodes.push_back(phrase_nodes);
            c.sentence_heldout.push_back(c.image_heldout[i]);
            c.sentence_noise.push_back(0);

            c.gt_global.emplace_back(i, s);
            for (uint32_t pn : phrase_nodes) {
                const uint32_t cid = c.phrases[pn].concept_id;
                for (uint32_t j = 0; j < c.image_concepts[i].size(); ++j) {
                    if (c.image_concepts[i][j] == cid) {
                        c.gt_local.emplace_back(c.image_object_nodes[i][j], pn);
                        break;
                    }
                }
            }
        }
    }

    // oracle latents: concept indicators, optionally perturbed
    const uint32_t dim = spec.concept_end();
    for (uint32_t i = 0; i < total_images; ++i) {
        Vec lat(dim, 0.0);
        for (uint32_t cid : c.image_concepts[i]) lat[cid] = 1.0;
        add_observation_noise(lat, spec.observation_noise, stream_seed(spec.seed, Stream::WorldLatents, 0, i));
        c.image_latent.push_back(std::move(lat));
    }
    for (uint32_t s = 0; s < c.sentence_count(); ++s) {
        Vec lat(dim, 0.0);
        for (uint32_t pn : c.sentence_phrase_nodes[s]) lat[c.phrases[pn].concept_id] = 1.0;
        add_observation_noise(lat, spec.observation_noise, stream_seed(spec.seed, Stream::WorldLatents, 1, s));
        c.sentence_latent.push_back(std::move(lat));
    }

    return c;
}

SyntheticCorpus inject_noise(const SyntheticCorpus& base, NoiseMode mode, uint32_t n_sentences,
                             uint32_t n_images, const SyntheticCorpus& pool) {
    const bool add_sentences = mode == NoiseMode::Noise1 || mode == NoiseMode::Noise3;
    const bool add_images = mode == NoiseMode::Noise2 || mode == NoiseMode::Noise3;

    const auto pool_imgs = pool.train_images();
    const auto pool_sents = pool.train_sentences();
    if (add_sentences && n_sentences > pool_sents.size())
        throw std::invalid_argument("inject_noise: sentence amount exceeds pool");
    if (add_images && n_images > pool_imgs.size())
        throw std::invalid_argument("inject_noise: image amount exceeds pool");
    if (!base.image_latent.empty() && !pool.image_latent.empty() &&
        base.image_latent[0].size() != pool.image_latent[0].size())
        throw std::invalid_argument("inject_noise: pool world uses a different concept space");

    SyntheticCorpus c = base;
    c.object_vocab = std::max(base.object_vocab, pool.object_vocab);
    c.token_vocab = std::max(base.token_vocab, pool.token_vocab);

    if (add_images) {
        for (uint32_t k = 0; k < n_images; ++k) {
            const uint32_t src = pool_imgs[k];
            const uint32_t ni = c.image_count();
            c.image_concepts.push_back(pool.image_concepts[src]);
            c.image_latent.push_back(pool.image_latent[src]);
            c.image_heldout.push_back(0);
            c.image_noise.push_back(1);
            c.image_object_nodes.emplace_back();
            for (uint32_t cid : c.image_concepts[ni]) {
                c.image_object_nodes[ni].push_back(static_cast<uint32_t>(c.objects.size()));
                c.objects.push_back(ObjectInst{ni, cid});
            }
        }
    }
    if (add_sentences) {
        for (uint32_t k = 0; k < n_sentences; ++k) {
            const uint32_t src = pool_sents[k];
            const uint32_t ns = c.sentence_count();
            c.sentence_tokens.push_back(pool.sentence_tokens[src]);
            c.sentence_latent.push_back(pool.sentence_latent[src]);
            c.sentence_heldout.push_back(0);
            c.sentence_noise.push_back(1);
            c.sentence_phrase_nodes.emplace_back();
            for (uint32_t pn : pool.sentence_phrase_nodes[src]) {
                PhraseInst ph = pool.phrases[pn];
                ph.sentence = ns;
                c.sentence_phrase_nodes[ns].push_back(static_cast<uint32_t>(c.phrases.size()));
                c.phrases.push_back(ph);
            }
        }
    }
    return c;
}

SyntheticCorpus random_environment(const SyntheticCorpus& image_world, const SyntheticCorpus& text_world) {
    const WorldSpec& a = image_world.spec;
    const WorldSpec& b = text_world.spec;
    const bool concepts_overlap = a.concept_base < b.concept_end() && b.concept_base < a.concept_end();
    const uint64_t a_tok_lo = static_cast<uint64_t>(a.concept_base) * a.phrase_tokens_per_concept;
    const uint64_t b_tok_lo = static_cast<uint64_t>(b.concept_base) * b.phrase_tokens_per_concept;
    const bool tokens_overlap = a_tok_lo < b.token_vocab_size() && b_tok_lo < a.token_vocab_size();
    if (concepts_overlap || tokens_overlap)
        throw std::invalid_argument("random_environment: worlds must use disjoint vocabularies");

    SyntheticCorpus c;
    c.spec = image_world.spec;
    c.object_vocab = std::max(image_world.object_vocab, text_world.object_vocab);
    c.token_vocab = std::max(image_world.token_vocab, text_world.token_vocab);
    const size_t dim = std::max(image_world.image_latent.empty() ? 0 : image_world.image_latent[0].size(),
                                text_world.sentence_latent.empty() ? 0 : text_world.sentence_latent[0].size());

    for (uint32_t src : image_world.train_images()) {
        const uint32_t ni = c.image_count();
        c.image_concepts.push_back(image_world.image_concepts[src]);
        Vec lat = image_world.image_latent[src];
        lat.resize(dim, 0.0);
        c.image_latent.push_back(std::move(lat));
        c.image_heldout.push_back(0);
        c.image_noise.push_back(0);
        c.image_object_nodes.emplace_back();
        for (uint32_t cid : c.image_concepts[ni]) {
            c.image_object_nodes[ni].push_back(static_cast<uint32_t>(c.objects.size()));
            c.objects.push_back(ObjectInst{ni, cid});
        }
    }
    for (uint32_t src : text_world.train_sentences()) {
        const uint32_t ns = c.sentence_count();
        c.sentence_tokens.push_back(text_world.sentence_tokens[src]);
        Vec lat = text_world.sentence_latent[src];
        lat.resize(dim, 0.0);
        c.sentence_latent.push_back(std::move(lat));
        c.sentence_heldout.push_back(0);
        c.sentence_noise.push_back(0);
        c.sentence_phrase_nodes.emplace_back();
        for (uint32_t pn : text_world.sentence_phrase_nodes[src]) {
            PhraseInst ph = text_world.phrases[pn];
            ph.sentence = ns;
            c.sentence_phrase_nodes[ns].push_back(static_cast<uint32_t>(c.phrases.size()));
            c.phrases.push_back(ph);
        }
    }
    return c;
}

double OracleScorer::global_score(uint32_t image, uint32_t sentence) const {
    double c = clamp01(cosine(corpus_->image_latent.at(image), corpus_->sentence_latent.at(sentence)));
    if (sigma_ > 0.0) {
        Rng r(mix64(seed_, 1, image, sentence));
        c = clamp01(c + sigma_ * r.normal());
    }
    return c;
}

std::vector<std::vector<double>> OracleScorer::local_scores(uint32_t image, uint32_t sentence) const {
    constexpr double kSharpness = 3.0;
    const auto& obj_nodes = corpus_->image_object_nodes.at(image);
    const auto& phr_nodes = corpus_->sentence_phrase_nodes.at(sentence);
    std::vector<std::vector<double>> out;
    out.reserve(phr_nodes.size());
    for (uint32_t pn : phr_nodes) {
        const uint32_t pc = corpus_->phrases[pn].concept_id;
        std::vector<double> sims(obj_nodes.size());
        for (size_t j = 0; j < obj_nodes.size(); ++j) {
            double sim = corpus_->objects[obj_nodes[j]].concept_id == pc ? 1.0 : 0.0;
            if (sigma_ > 0.0) {
                Rng r(mix64(seed_, 2, obj_nodes[j], pn));
                sim += sigma_ * r.normal();
            }
            sims[j] = kSharpness * sim;
        }
        double mx = sims[0];
        for (double v : sims) mx = std::max(mx, v);
        double z = 0.0;
        for (auto& v : sims) {
            v = std::exp(v - mx);
            z += v;
        }
        for (auto& v : sims) v /= z;
        out.push_back(std::move(sims));
    }
    return out;
}

namespace {

json spec_to_json(const WorldSpec& s) {
    return json{{"n_images", s.n_images},
                {"captions_per_image", s.captions_per_image},
                {"n_heldout_images", s.n_heldout_images},
                {"concept_vocab", s.concept_vocab},
                {"concept_base", s.concept_base},
                {"min_objects_per_image", s.min_objects_per_image},
                {"max_objects_per_image", s.max_objects_per_image},
                {"min_phrases_per_caption", s.min_phrases_per_caption},
                {"max_phrases_per_caption", s.max_phrases_per_caption},
                {"phrase_tokens_per_concept", s.phrase_tokens_per_concept},
                {"distractor_tokens", s.distractor_tokens},
                {"distractor_rate", s.distractor_rate},
                {"observation_noise", s.observation_noise},
                {"zipf_skew", s.zipf_skew},
                {"seed", s.seed}};
}

WorldSpec spec_from_json(const json& j) {
    WorldSpec s;
    s.n_images = j.at("n_images").get<uint32_t>();
    s.captions_per_image = j.at("captions_per_image").get<uint32_t>();
    s.n_heldout_images = j.at("n_heldout_images").get<uint32_t>();
    s.concept_vocab = j.at("concept_vocab").get<uint32_t>();
    s.concept_base = j.at("concept_base").get<uint32_t>();
    s.min_objects_per_image = j.at("min_objects_per_image").get<uint32_t>();
    s.max_objects_per_image = j.at("max_objects_per_image").get<uint32_t>();
    s.min_phrases_per_caption = j.at("min_phrases_per_caption").get<uint32_t>();
    s.max_phrases_per_caption = j.at("max_phrases_per_caption").get<uint32_t>();
    s.phrase_tokens_per_concept = j.at("phrase_tokens_per_concept").get<uint32_t>();
    s.distractor_tokens = j.at("distractor_tokens").get<uint32_t>();
    s.distractor_rate = j.at("distractor_rate").get<double>();
    s.observation_noise = j.at("observation_noise").get<double>();
    s.zipf_skew = j.at("zipf_skew").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

}  // namespace

void export_corpus_jsonl(const SyntheticCorpus& c, std::ostream& out) {
    json meta{{"type", "meta"},
              {"spec", spec_to_json(c.spec)},
              {"object_vocab", c.object_vocab},
              {"token_vocab", c.token_vocab},
              {"n_images", c.image_count()},
              {"n_sentences", c.sentence_count()}};
    out << meta.dump() << "\n";
    for (uint32_t i = 0; i < c.image_count(); ++i) {
        json rec{{"type", "image"},        {"index", i},
                 {"concepts", c.image_concepts[i]},
                 {"heldout", static_cast<int>(c.image_heldout[i])},
                 {"noise", static_cast<int>(c.image_noise[i])},
                 {"latent", c.image_latent[i]}};
        out << rec.dump() << "\n";
    }
    for (uint32_t s = 0; s < c.sentence_count(); ++s) {
        json phs = json::array();
        for (uint32_t pn : c.sentence_phrase_nodes[s]) {
            const PhraseInst& ph = c.phrases[pn];
            phs.push_back(json{{"first", ph.first_token}, {"count", ph.token_count}, {"concept", ph.concept_id}});
        }
        json rec{{"type", "sentence"},     {"index", s},
                 {"tokens", c.sentence_tokens[s]},
                 {"phrases", phs},
                 {"heldout", static_cast<int>(c.sentence_heldout[s])},
                 {"noise", static_cast<int>(c.sentence_noise[s])},
                 {"latent", c.sentence_latent[s]}};
        out << rec.dump() << "\n";
    }
    for (const auto& [i, s] : c.gt_global) out << json{{"type", "gt_global"}, {"image", i}, {"sentence", s}}.dump() << "\n";
    for (const auto& [o, p] : c.gt_local) out << json{{"type", "gt_local"}, {"object", o}, {"phrase", p}}.dump() << "\n";
}

SyntheticCorpus import_corpus_jsonl(std::istream& in) {
    SyntheticCorpus c;
    std::string line;
    bool got_meta = false;
    uint32_t n_images = 0, n_sentences = 0;
    std::vector<std::vector<PhraseInst>> parsed_phrases;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        const std::string type = j.at("type").get<std::string>();
        if (type == "meta") {
            c.spec = spec_from_json(j.at("spec"));
            c.object_vocab = j.at("object_vocab").get<uint32_t>();
            c.token_vocab = j.at("token_vocab").get<uint32_t>();
            n_images = j.at("n_images").get<uint32_t>();
            n_sentences = j.at("n_sentences").get<uint32_t>();
            c.image_concepts.resize(n_images);
            c.image_latent.resize(n_images);
            c.image_heldout.resize(n_images);
            c.image_noise.resize(n_images);
            c.sentence_tokens.resize(n_sentences);
            c.sentence_latent.resize(n_sentences);
            c.sentence_heldout.resize(n_sentences);
            c.sentence_noise.resize(n_sentences);
            parsed_phrases.resize(n_sentences);
            got_meta = true;
        } else if (type == "image") {
            const uint32_t i = j.at("index").get<uint32_t>();
            c.image_concepts.at(i) = j.at("concepts").get<std::vector<uint32_t>>();
            c.image_latent.at(i) = j.at("latent").get<Vec>();
            c.image_heldout.at(i) = static_cast<uint8_t>(j.at("heldout").get<int>());
            c.image_noise.at(i) = static_cast<uint8_t>(j.at("noise").get<int>());
        } else if (type == "sentence") {
            const uint32_t s = j.at("index").get<uint32_t>();
            c.sentence_tokens.at(s) = j.at("tokens").get<std::vector<uint32_t>>();
            c.sentence_latent.at(s) = j.at("latent").get<Vec>();
            c.sentence_heldout.at(s) = static_cast<uint8_t>(j.at("heldout").get<int>());
            c.sentence_noise.at(s) = static_cast<uint8_t>(j.at("noise").get<int>());
            for (const auto& pj : j.at("phrases")) {
                PhraseInst ph;
                ph.sentence = s;
                ph.first_token = pj.at("first").get<uint32_t>();
                ph.token_count = pj.at("count").get<uint32_t>();
                ph.concept_id = pj.at("concept").get<uint32_t>();
                parsed_phrases.at(s).push_back(ph);
            }
        } else if (type == "gt_global") {
            c.gt_global.emplace_back(j.at("image").get<uint32_t>(), j.at("sentence").get<uint32_t>());
        } else if (type == "gt_local") {
            c.gt_local.emplace_back(j.at("object").get<uint32_t>(), j.at("phrase").get<uint32_t>());
        } else {
            throw std::runtime_error("import_corpus_jsonl: unknown record type " + type);
        }
    }
    if (!got_meta) throw std::runtime_error("import_corpus_jsonl: missing meta record");

    // node ids always follow (owner index, position) order
    c.image_object_nodes.resize(n_images);
    for (uint32_t i = 0; i < n_images; ++i) {
        for (uint32_t cid : c.image_concepts[i]) {
            c.image_object_nodes[i].push_back(static_cast<uint32_t>(c.objects.size()));
            c.objects.push_back(ObjectInst{i, cid});
        }
    }
    c.sentence_phrase_nodes.resize(n_sentences);
    for (uint32_t s = 0; s < n_sentences; ++s) {
        for (const PhraseInst& ph : parsed_phrases[s]) {
            c.sentence_phrase_nodes[s].push_back(static_cast<uint32_t>(c.phrases.size()));
            c.phrases.push_back(ph);
        }
    }
    return c;
}

}  // namespace mmkg
