#pragma once

#include <cstddef>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regdistill/text.hpp"

namespace regdistill::corpus {

struct RegulationDocument {
  std::string doc_id;
  std::string title;
  std::string raw_text;  // LF line endings
  std::string source_path;
};

struct Article {
  std::string doc_id;
  std::string article_id;  // heading label, e.g. "Madde 3"; "preamble" for the preamble
  std::size_t ordinal = 0;  // 1-based, document order
  std::string heading;      // full heading line without its newline; empty for the preamble
  std::string body;         // bytes between the heading's newline and the next heading
  std::size_t offset = 0;   // byte offset of the article (heading start, or body start) in raw_text

  /// Body with surrounding whitespace removed; still a verbatim substring of the body.
  std::string_view evidence() const noexcept { return text::trim(body); }
  bool has_text() const noexcept { return !evidence().empty(); }
};

/// A compiled heading pattern. Patterns must match a whole line.
class HeadingPattern {
 public:
  explicit HeadingPattern(const std::string& ecmascript_regex);

  bool matches(std::string_view line) const;
  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
  std::regex re_;
};

/// Lines such as "Article 3", "ARTICLE 3 - Scope", "Madde 12 - Amaç", "MADDE 4A:".
std::vector<HeadingPattern> default_heading_patterns();

RegulationDocument ingest_document(std::string_view text, std::string doc_id, std::string title,
                                   std::string source_path = {});

/// Reads `path` and ingests it; the doc id defaults to the file stem.
RegulationDocument ingest_file(const std::string& path, std::string doc_id = {},
                               std::string title = {});

std::vector<Article> segment_articles(const RegulationDocument& doc,
                                      const std::vector<HeadingPattern>& patterns);
std::vector<Article> segment_articles(const RegulationDocument& doc);

/// Ordered articles plus an inverted index from normalized token to the
/// positions (0-based, in `articles()` order) of articles whose body holds it.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  explicit CorpusIndex(std::vector<Article> articles,
                       const text::Lexicons& lex = text::Lexicons::defaults());

  const std::vector<Article>& articles() const noexcept { return articles_; }
  /// Normalized token -> positions in articles() whose body contains it.
  const std::map<std::string, std::set<std::size_t>>& token_index() const noexcept {
    return token_index_;
  }
  bool empty() const noexcept { return articles_.empty(); }
  std::size_t size() const noexcept { return articles_.size(); }
  const text::Lexicons& lexicons() const noexcept { return *lex_; }

  /// Article with the given document and ordinal, or nullptr.
  const Article* find(std::string_view doc_id, std::size_t ordinal) const;

  /// True if `s` occurs verbatim inside some article body.
  bool contains_verbatim(std::string_view s) const;

 private:
  std::vector<Article> articles_;
  std::map<std::string, std::set<std::size_t>> token_index_;
  const text::Lexicons* lex_ = &text::Lexicons::defaults();
};

struct ArticleHit {
  std::size_t position = 0;  // index into CorpusIndex::articles()
  std::size_t ordinal = 0;
  double score = 0.0;
};

/// Ranks articles by grounding_score(answer_text, body). Descending score,
/// ties by ascending ordinal (then document order); returns min(top_k, size).
std::vector<ArticleHit> find_supporting_article(const CorpusIndex& index,
                                                std::string_view answer_text, std::size_t top_k);

/// Canonical manifest: docs with id, title, article count and per-article
/// ordinal / heading / byte length. Returned as pretty JSON text.
std::string corpus_manifest_json(const std::vector<RegulationDocument>& docs,
                                 const std::vector<std::vector<Article>>& articles);

}  // namespace regdistill::corpus
