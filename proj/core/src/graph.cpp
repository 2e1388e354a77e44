#include "mmkg/graph.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace mmkg {

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Image: return "image";
        case NodeKind::Sentence: return "sentence";
        case NodeKind::Object: return "object";
        case NodeKind::Phrase: return "phrase";
    }
    return "?";
}

MultiModalGraph::MultiModalGraph(std::vector<std::vector<uint32_t>> image_objects,
                                 std::vector<std::vector<uint32_t>> sentence_phrases)
    : image_objects_(std::move(image_objects)), sentence_phrases_(std::move(sentence_phrases)) {
    size_t n_objects = 0;
    for (const auto& objs : image_objects_) n_objects += objs.size();
    size_t n_phrases = 0;
    for (const auto& phs : sentence_phrases_) n_phrases += phs.size();

    object_image_.assign(n_objects, 0);
    phrase_sentence_.assign(n_phrases, 0);
    for (uint32_t i = 0; i < image_objects_.size(); ++i) {
        for (uint32_t o : image_objects_[i]) {
            if (o >= n_objects) throw std::invalid_argument("object index out of range");
            object_image_[o] = i;
        }
    }
    for (uint32_t s = 0; s < sentence_phrases_.size(); ++s) {
        for (uint32_t p : sentence_phrases_[s]) {
            if (p >= n_phrases) throw std::invalid_argument("phrase index out of range");
            phrase_sentence_[p] = s;
        }
    }

    image_links_.resize(image_objects_.size());
    sentence_links_.resize(sentence_phrases_.size());
    object_links_.resize(n_objects);
    phrase_links_.resize(n_phrases);
}

void MultiModalGraph::upsert(std::vector<LinkRecord>& list, uint32_t counterpart, double strength,
                             double confidence) {
    auto it = std::lower_bound(list.begin(), list.end(), counterpart,
                               [](const LinkRecord& r, uint32_t c) { return r.counterpart < c; });
    if (it != list.end() && it->counterpart == counterpart) {
        it->strength = strength;
        it->confidence = confidence;
    } else {
        list.insert(it, LinkRecord{counterpart, strength, confidence});
    }
}

void MultiModalGraph::set_global_link(uint32_t image, uint32_t sentence, double strength, double confidence) {
    if (image >= image_count() || sentence >= sentence_count())
        throw std::out_of_range("set_global_link: node index out of range");
    if (strength != 0.0 && strength != 0.5 && strength != 1.0)
        throw std::invalid_argument("global link strength must be 0, 0.5 or 1");
    upsert(image_links_[image], sentence, strength, confidence);
    upsert(sentence_links_[sentence], image, strength, confidence);
}

void MultiModalGraph::set_local_link(uint32_t object, uint32_t phrase, double strength, double confidence) {
    if (object >= object_count() || phrase >= phrase_count())
        throw std::out_of_range("set_local_link: node index out of range");
    if (strength != 0.0 && strength != 1.0)
        throw std::invalid_argument("local link strength must be 0 or 1");
    upsert(object_links_[object], phrase, strength, confidence);
    upsert(phrase_links_[phrase], object, strength, confidence);
}

void MultiModalGraph::clear_cross_links() {
    for (auto& l : image_links_) l.clear();
    for (auto& l : sentence_links_) l.clear();
    for (auto& l : object_links_) l.clear();
    for (auto& l : phrase_links_) l.clear();
}

const LinkRecord* MultiModalGraph::find_global_link(uint32_t image, uint32_t sentence) const {
    const auto& list = image_links_.at(image);
    auto it = std::lower_bound(list.begin(), list.end(), sentence,
                               [](const LinkRecord& r, uint32_t c) { return r.counterpart < c; });
    if (it != list.end() && it->counterpart == sentence) return &*it;
    return nullptr;
}

const LinkRecord* MultiModalGraph::find_local_link(uint32_t object, uint32_t phrase) const {
    const auto& list = object_links_.at(object);
    auto it = std::lower_bound(list.begin(), list.end(), phrase,
                               [](const LinkRecord& r, uint32_t c) { return r.counterpart < c; });
    if (it != list.end() && it->counterpart == phrase) return &*it;
    return nullptr;
}

std::vector<NodeId> MultiModalGraph::neighbors_global(NodeId n, double min_strength) const {
    if (n.kind != NodeKind::Image && n.kind != NodeKind::Sentence)
        throw std::invalid_argument("neighbors_global: node must be an image or a sentence");
    const bool is_image = n.kind == NodeKind::Image;
    if (n.index >= (is_image ? image_count() : sentence_count()))
        throw std::out_of_range("neighbors_global: unknown node");

    const auto& list = is_image ? image_links_[n.index] : sentence_links_[n.index];
    const NodeKind counter_kind = is_image ? NodeKind::Sentence : NodeKind::Image;
    std::vector<NodeId> out;
    for (const auto& rec : list) {
        if (rec.strength >= min_strength) out.push_back(NodeId{counter_kind, rec.counterpart});
    }
    return out;  // already ascending: lists are kept sorted
}

std::vector<uint32_t> MultiModalGraph::two_hop_phrases(uint32_t image) const {
    if (image >= image_count()) throw std::invalid_argument("two_hop_phrases: not an image node");
    std::vector<uint32_t> out;
    for (const auto& rec : image_links_[image]) {
        if (rec.strength != 1.0) continue;
        for (uint32_t p : sentence_phrases_[rec.counterpart]) {
            for (const auto& lp : phrase_links_[p]) {
                if (lp.strength == 1.0 && object_image_[lp.counterpart] == image) {
                    out.push_back(p);
                    break;
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double MultiModalGraph::pp_fraction(uint32_t degree_cutoff) const {
    std::vector<uint32_t> image_degree(image_count(), 0);
    std::vector<uint32_t> sentence_degree(sentence_count(), 0);
    size_t total = 0;
    for (uint32_t i = 0; i < image_count(); ++i) {
        for (const auto& rec : image_links_[i]) {
            if (rec.strength == 1.0) {
                ++image_degree[i];
                ++sentence_degree[rec.counterpart];
                ++total;
            }
        }
    }
    if (total == 0) return 0.0;
    size_t popular = 0;
    for (uint32_t i = 0; i < image_count(); ++i) {
        for (const auto& rec : image_links_[i]) {
            if (rec.strength != 1.0) continue;
            if (image_degree[i] > degree_cutoff || sentence_degree[rec.counterpart] > degree_cutoff) ++popular;
        }
    }
    return static_cast<double>(popular) / static_cast<double>(total);
}

size_t MultiModalGraph::global_link_count(double min_strength) const {
    size_t n = 0;
    for (const auto& list : image_links_)
        for (const auto& rec : list)
            if (rec.strength >= min_strength) ++n;
    return n;
}

size_t MultiModalGraph::local_link_count(double min_strength) const {
    size_t n = 0;
    for (const auto& list : object_links_)
        for (const auto& rec : list)
            if (rec.strength >= min_strength) ++n;
    return n;
}

namespace {

void write_link(std::ostream& out, NodeKind ak, uint32_t ai, NodeKind bk, uint32_t bi, const LinkRecord& rec,
                uint32_t iteration) {
    char buf[64];
    out << "{\"a_kind\":\"" << node_kind_name(ak) << "\",\"a_index\":" << ai << ",\"b_kind\":\""
        << node_kind_name(bk) << "\",\"b_index\":" << bi << ",\"strength\":";
    std::snprintf(buf, sizeof(buf), "%.17g", rec.strength);
    out << buf << ",\"confidence\":";
    std::snprintf(buf, sizeof(buf), "%.17g", rec.confidence);
    out << buf << ",\"iteration\":" << iteration << "}\n";
}

}  // namespace

void MultiModalGraph::export_jsonl(std::ostream& out) const {
    for (uint32_t i = 0; i < image_count(); ++i)
        for (const auto& rec : image_links_[i])
            write_link(out, NodeKind::Image, i, NodeKind::Sentence, rec.counterpart, rec, iteration_);
    for (uint32_t o = 0; o < object_count(); ++o)
        for (const auto& rec : object_links_[o])
            write_link(out, NodeKind::Object, o, NodeKind::Phrase, rec.counterpart, rec, iteration_);
}

}  // namespace mmkg
