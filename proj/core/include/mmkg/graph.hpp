#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmkg {

enum class NodeKind : uint8_t { Image, Sentence, Object, Phrase };

const char* node_kind_name(NodeKind k);

struct NodeId {
    NodeKind kind;
    uint32_t index;

    bool operator==(const NodeId&) const = default;
};

// One stored cross-modality link, seen from one endpoint.
// strength is 0, 0.5 or 1; confidence is the score the assigning model gave.
struct LinkRecord {
    uint32_t counterpart;
    double strength;
    double confidence;
};

/// Multi-modal knowledge graph: image/sentence/object/phrase nodes, fixed
/// containment edges (image->objects, sentence->phrases) and mutable
/// cross-modality links (image-sentence, object-phrase).
///
/// Cross links are stored sparsely, mirrored on both endpoints and kept in
/// ascending counterpart order so every traversal is deterministic. Links of
/// strength 0 are legal records: discovery writes one per candidate pair so
/// the previous iteration's confidence stays available for soft labels and
/// negative sampling.
class MultiModalGraph {
public:
    MultiModalGraph(std::vector<std::vector<uint32_t>> image_objects,
                    std::vector<std::vector<uint32_t>> sentence_phrases);

    uint32_t image_count() const { return static_cast<uint32_t>(image_objects_.size()); }
    uint32_t sentence_count() const { return static_cast<uint32_t>(sentence_phrases_.size()); }
    uint32_t object_count() const { return static_cast<uint32_t>(object_image_.size()); }
    uint32_t phrase_count() const { return static_cast<uint32_t>(phrase_sentence_.size()); }

    const std::vector<uint32_t>& objects_of_image(uint32_t i) const { return image_objects_.at(i); }
    const std::vector<uint32_t>& phrases_of_sentence(uint32_t s) const { return sentence_phrases_.at(s); }
    uint32_t image_of_object(uint32_t o) const { return object_image_.at(o); }
    uint32_t sentence_of_phrase(uint32_t p) const { return phrase_sentence_.at(p); }

    uint32_t iteration() const { return iteration_; }
    void set_iteration(uint32_t t) { iteration_ = t; }

    // Single-writer mutation phase. Writing a pair twice overwrites.
    void set_global_link(uint32_t image, uint32_t sentence, double strength, double confidence);
    void set_local_link(uint32_t object, uint32_t phrase, double strength, double confidence);
    void clear_cross_links();

    const std::vector<LinkRecord>& links_of_image(uint32_t i) const { return image_links_.at(i); }
    const std::vector<LinkRecord>& links_of_sentence(uint32_t s) const { return sentence_links_.at(s); }
    const std::vector<LinkRecord>& links_of_object(uint32_t o) const { return object_links_.at(o); }
    const std::vector<LinkRecord>& links_of_phrase(uint32_t p) const { return phrase_links_.at(p); }

    const LinkRecord* find_global_link(uint32_t image, uint32_t sentence) const;
    const LinkRecord* find_local_link(uint32_t object, uint32_t phrase) const;

    /// Cross-linked counterparts of an image or sentence node with
    /// strength >= min_strength, ascending index.
    std::vector<NodeId> neighbors_global(NodeId n, double min_strength) const;

    /// Phrase nodes reachable image -> strength-1 sentence -> locally linked
    /// phrase whose object lives in this image; deduplicated, ascending.
    std::vector<uint32_t> two_hop_phrases(uint32_t image) const;

    /// Fraction of strength-1 image-sentence links incident to at least one
    /// node whose strength-1 degree exceeds degree_cutoff. 0 when no links.
    double pp_fraction(uint32_t degree_cutoff) const;

    size_t global_link_count(double min_strength) const;
    size_t local_link_count(double min_strength) const;

    /// One JSONL record per stored cross link (strength-0 records included).
    void export_jsonl(std::ostream& out) const;

private:
    static void upsert(std::vector<LinkRecord>& list, uint32_t counterpart, double strength, double confidence);

    std::vector<std::vector<uint32_t>> image_objects_;
    std::vector<std::vector<uint32_t>> sentence_phrases_;
    std::vector<uint32_t> object_image_;
    std::vector<uint32_t> phrase_sentence_;

    std::vector<std::vector<LinkRecord>> image_links_;
    std::vector<std::vector<LinkRecord>> sentence_links_;
    std::vector<std::vector<LinkRecord>> object_links_;
    std::vector<std::vector<LinkRecord>> phrase_links_;

    uint32_t iteration_ = 0;
};

}  // namespace mmkg
