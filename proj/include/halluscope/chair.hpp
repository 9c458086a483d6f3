// Caption-level hallucination scoring: object-mention extraction against a
// synonym lexicon, the instance- and sentence-level hallucination rates, and
// the coverage F1 over ground-truth annotations.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace halluscope {

/// Canonical category -> synonym surface forms. Matching is case-insensitive;
/// simple plural forms (s / es) are generated automatically.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(const std::map<std::string, std::vector<std::string>>& synonyms);

    bool empty() const { return surface_to_canonical_.empty(); }
    const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
    /// Longest surface form length, in words.
    int max_surface_words() const { return max_surface_words_; }
    /// Canonical category for a (lowercased, space-normalized) surface form, or "".
    std::string canonical(const std::string& surface) const;

    /// The built-in starter lexicon covering the 80 COCO categories.
    static Lexicon coco_default();

private:
    void add(const std::string& canonical, const std::string& surface);
    std::map<std::string, std::vector<std::string>> entries_;
    std::map<std::string, std::string> surface_to_canonical_;
    int max_surface_words_ = 0;
};

/// image id -> ground-truth object category names (lexicon-canonical).
using AnnotationSet = std::map<std::string, std::set<std::string>>;

struct Mention {
    std::string category;
    size_t offset = 0;  // character offset of the matched surface form
    size_t length = 0;
};

/// Longest-match left-to-right scan over word tokens. Every surface
/// occurrence yields one mention; duplicate categories are deduplicated later
/// for counting but all offsets are retained here.
std::vector<Mention> extract_mentions(const std::string& caption, const Lexicon& lexicon);

struct CaptionDetail {
    std::string image_id;
    std::vector<std::string> mentioned;      // distinct categories, in first-mention order
    std::vector<std::string> hallucinated;   // subset of mentioned absent from ground truth
};

struct ChairReport {
    double chair_s = 0.0;    // captions with >= 1 hallucination / captions
    double chair_i = 0.0;    // hallucinated mentions / all mentions
    double precision = 0.0;  // true mentions / all mentions
    double recall = 0.0;     // covered ground-truth categories / ground-truth categories
    double f1 = 0.0;
    std::vector<CaptionDetail> captions;
};

/// Corpus-level scoring. Every caption image id must be annotated. Mentions
/// are deduplicated per caption; recall is micro-averaged over images.
ChairReport chair(const std::map<std::string, std::string>& captions,
                  const AnnotationSet& annotations, const Lexicon& lexicon);

}  // namespace halluscope
