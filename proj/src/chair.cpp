#include "halluscope/chair.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace halluscope {

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct Word {
    std::string text;
    size_t offset = 0;
};

std::vector<Word> tokenize(const std::string& text) {
    std::vector<Word> words;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        while (i < n && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        const size_t start = i;
        while (i < n && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        words.push_back({to_lower(text.substr(start, i - start)), start});
    }
    return words;
}

std::string join_words(const std::vector<Word>& words, size_t first, size_t count) {
    std::string s;
    for (size_t i = 0; i < count; ++i) {
        if (i) s += ' ';
        s += words[first + i].text;
    }
    return s;
}

}  // namespace

Lexicon::Lexicon(const std::map<std::string, std::vector<std::string>>& synonyms) {
    for (const auto& [canon, surfaces] : synonyms) {
        const std::string c = to_lower(canon);
        add(c, c);
        for (const auto& s : surfaces) add(c, to_lower(s));
    }
}

void Lexicon::add(const std::string& canonical, const std::string& surface) {
    if (surface.empty()) return;
    auto insert = [&](const std::string& form) {
        auto [it, inserted] = surface_to_canonical_.emplace(form, canonical);
        if (!inserted && it->second != canonical)
            throw std::invalid_argument("surface form '" + form + "' maps to two categories: '" +
                                        it->second + "' and '" + canonical + "'");
        int words = 1;
        for (char ch : form)
            if (ch == ' ') ++words;
        max_surface_words_ = std::max(max_surface_words_, words);
    };
    insert(surface);
    insert(surface + "s");
    insert(surface + "es");
    auto& list = entries_[canonical];
    if (std::find(list.begin(), list.end(), surface) == list.end()) list.push_back(surface);
}

std::string Lexicon::canonical(const std::string& surface) const {
    const auto it = surface_to_canonical_.find(surface);
    return it == surface_to_canonical_.end() ? std::string() : it->second;
}

std::vector<Mention> extract_mentions(const std::string& caption, const Lexicon& lexicon) {
    if (lexicon.empty()) throw std::invalid_argument("empty lexicon");
    std::vector<Mention> mentions;
    const std::vector<Word> words = tokenize(caption);
    const size_t max_words = static_cast<size_t>(std::max(1, lexicon.max_surface_words()));

    size_t i = 0;
    while (i < words.size()) {
        size_t matched = 0;
        std::string matched_canon;
        const size_t limit = std::min(max_words, words.size() - i);
        for (size_t len = limit; len >= 1; --len) {  // longest match wins
            const std::string candidate = join_words(words, i, len);
            const std::string canon = lexicon.canonical(candidate);
            if (!canon.empty()) {
                matched = len;
                matched_canon = canon;
                break;
            }
        }
        if (matched) {
            const Word& first = words[i];
            const Word& last = words[i + matched - 1];
            mentions.push_back({matched_canon, first.offset,
                                last.offset + last.text.size() - first.offset});
            i += matched;
        } else {
            ++i;
        }
    }
    return mentions;
}

ChairReport chair(const std::map<std::string, std::string>& captions,
                  const AnnotationSet& annotations, const Lexicon& lexicon) {
    ChairReport report;
    long total_mentions = 0, halluc_mentions = 0, captions_with_halluc = 0;
    long gt_total = 0, gt_covered = 0;

    for (const auto& [image_id, text] : captions) {
        const auto ann = annotations.find(image_id);
        if (ann == annotations.end())
            throw std::invalid_argument("caption image id '" + image_id + "' has no annotations");
        const std::set<std::string>& truth = ann->second;

        CaptionDetail detail;
        detail.image_id = image_id;
        std::set<std::string> seen;
        for (const Mention& m : extract_mentions(text, lexicon)) {
            if (!seen.insert(m.category).second) continue;  // dedup per caption
            detail.mentioned.push_back(m.category);
            if (!truth.count(m.category)) detail.hallucinated.push_back(m.category);
        }
        total_mentions += static_cast<long>(detail.mentioned.size());
        halluc_mentions += static_cast<long>(detail.hallucinated.size());
        if (!detail.hallucinated.empty()) ++captions_with_halluc;

        gt_total += static_cast<long>(truth.size());
        for (const auto& cat : truth)
            if (std::find(detail.mentioned.begin(), detail.mentioned.end(), cat) !=
                detail.mentioned.end())
                ++gt_covered;
        report.captions.push_back(std::move(detail));
    }

    const long caption_count = static_cast<long>(captions.size());
    report.chair_s = caption_count ? static_cast<double>(captions_with_halluc) / caption_count : 0.0;
    report.chair_i = total_mentions ? static_cast<double>(halluc_mentions) / total_mentions : 0.0;
    report.precision =
        total_mentions ? static_cast<double>(total_mentions - halluc_mentions) / total_mentions : 0.0;
    report.recall = gt_total ? static_cast<double>(gt_covered) / gt_total : 0.0;
    const double pr = report.precision + report.recall;
    report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
    return report;
}

}  // namespace halluscope
