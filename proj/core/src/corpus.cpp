#include "regdistill/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "regdistill/audit.hpp"
#include "regdistill/error.hpp"

namespace regdistill::corpus {

HeadingPattern::HeadingPattern(const std::string& ecmascript_regex)
    : source_(ecmascript_regex) {
  try {
    re_ = std::regex(ecmascript_regex, std::regex::ECMAScript | std::regex::icase);
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::InvalidArgument, "bad heading pattern '" + ecmascript_regex + "': " + e.what());
  }
}

bool HeadingPattern::matches(std::string_view line) const {
  return std::regex_match(line.begin(), line.end(), re_);
}

std::vector<HeadingPattern> default_heading_patterns() {
  return {HeadingPattern(
      R"(^[ \t]*(article|madde)[ \t]+[0-9]+[a-z]?([ \t]*(-|–|—|:|\.|\))[^\n]{0,160})?[ \t]*$)")};
}

RegulationDocument ingest_document(std::string_view text, std::string doc_id, std::string title,
                                   std::string source_path) {
  if (!text::is_valid_utf8(text)) {
    throw Error(ErrorCode::InvalidEncoding, "document '" + doc_id + "' is not valid UTF-8");
  }
  if (text::is_blank(text)) {
    throw Error(ErrorCode::EmptyDocument, "document '" + doc_id + "' has no text");
  }
  RegulationDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.title = std::move(title);
  doc.raw_text = text::normalize_line_endings(text);
  doc.source_path = std::move(source_path);
  return doc;
}

RegulationDocument ingest_file(const std::string& path, std::string doc_id, std::string title) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path p(path);
  if (doc_id.empty()) doc_id = p.stem().string();
  if (title.empty()) title = doc_id;
  return ingest_document(ss.str(), std::move(doc_id), std::move(title), path);
}

namespace {

struct Line {
  std::size_t begin;
  std::size_t end;  // exclusive, excludes '\n'
};

std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t b = 0;
  while (b < s.size()) {
    auto nl = s.find('\n', b);
    if (nl == std::string_view::npos) {
      lines.push_back({b, s.size()});
      break;
    }
    lines.push_back({b, nl});
    b = nl + 1;
  }
  return lines;
}

std::string article_label(std::string_view heading) {
  static const std::regex label(R"(^[ \t]*([^ \t]+[ \t]+[0-9]+[A-Za-z]?))");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(heading.begin(), heading.end(), m, label)) return m[1].str();
  return std::string(text::trim(heading));
}

}  // namespace

std::vector<Article> segment_articles(const RegulationDocument& doc,
                                      const std::vector<HeadingPattern>& patterns) {
  if (patterns.empty()) throw Error(ErrorCode::InvalidArgument, "no heading patterns");
  const std::string_view raw = doc.raw_text;
  if (text::is_blank(raw)) throw Error(ErrorCode::NoContent, doc.doc_id);

  std::vector<Line> headings;
  for (const auto& line : split_lines(raw)) {
    auto v = raw.substr(line.begin, line.end - line.begin);
    if (std::any_of(patterns.begin(), patterns.end(),
                    [&](const HeadingPattern& p) { return p.matches(v); })) {
      headings.push_back(line);
    }
  }

  std::vector<Article> out;
  const std::size_t first = headings.empty() ? raw.size() : headings.front().begin;
  if (!text::is_blank(raw.substr(0, first))) {
    Article pre;
    pre.doc_id = doc.doc_id;
    pre.article_id = "preamble";
    pre.ordinal = 1;
    pre.body = std::string(raw.substr(0, first));
    pre.offset = 0;
    out.push_back(std::move(pre));
  }
  for (std::size_t h = 0; h < headings.size(); ++h) {
    const auto& line = headings[h];
    const std::size_t body_begin = std::min(line.end + 1, raw.size());
    const std::size_t body_end = h + 1 < headings.size() ? headings[h + 1].begin : raw.size();
    Article a;
    a.doc_id = doc.doc_id;
    a.heading = std::string(raw.substr(line.begin, line.end - line.begin));
    a.article_id = article_label(a.heading);
    a.ordinal = out.size() + 1;
    a.body = std::string(raw.substr(body_begin, body_end - body_begin));
    a.offset = line.begin;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Article> segment_articles(const RegulationDocument& doc) {
  static const auto patterns = default_heading_patterns();
  return segment_articles(doc, patterns);
}

CorpusIndex::CorpusIndex(std::vector<Article> articles, const text::Lexicons& lex)
    : articles_(std::move(articles)), lex_(&lex) {
  for (std::size_t i = 0; i < articles_.size(); ++i) {
    for (auto& tok : text::normalize_tokens(articles_[i].body)) {
      token_index_[std::move(tok)].insert(i);
    }
  }
}

const Article* CorpusIndex::find(std::string_view doc_id, std::size_t ordinal) const {
  for (const auto& a : articles_) {
    if (a.doc_id == doc_id && a.ordinal == ordinal) return &a;
  }
  return nullptr;
}

bool CorpusIndex::contains_verbatim(std::string_view s) const {
  if (s.empty()) return false;
  return std::any_of(articles_.begin(), articles_.end(), [&](const Article& a) {
    return a.body.find(s) != std::string::npos;
  });
}

std::vector<ArticleHit> find_supporting_article(const CorpusIndex& index,
                                                std::string_view answer_text, std::size_t top_k) {
  if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
  if (index.empty()) throw Error(ErrorCode::InvalidArgument, "empty corpus index");
  const auto& lex = index.lexicons();
  const auto query = text::content_tokens(answer_text, lex);
  if (query.empty()) throw Error(ErrorCode::EmptyQuery, "answer has no content tokens");

  // Only articles sharing at least one query token can score above zero.
  std::set<std::size_t> candidates;
  for (const auto& tok : query) {
    auto it = index.token_index().find(tok);
    if (it != index.token_index().end()) candidates.insert(it->second.begin(), it->second.end());
  }

  const auto& articles = index.articles();
  std::vector<ArticleHit> hits;
  hits.reserve(articles.size());
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const double score =
        candidates.count(i) ? audit::grounding_score_tokens(query, articles[i].body, lex) : 0.0;
    hits.push_back({i, articles[i].ordinal, score});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const ArticleHit& a, const ArticleHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.ordinal != b.ordinal) return a.ordinal < b.ordinal;
    return a.position < b.position;
  });
  hits.resize(std::min(top_k, hits.size()));
  return hits;
}

std::string corpus_manifest_json(const std::vector<RegulationDocument>& docs,
                                 const std::vector<std::vector<Article>>& articles) {
  if (docs.size() != articles.size()) {
    throw Error(ErrorCode::InvalidArgument, "manifest: docs/articles size mismatch");
  }
  nlohmann::ordered_json j;
  j["documents"] = nlohmann::ordered_json::array();
  for (std::size_t d = 0; d < docs.size(); ++d) {
    nlohmann::ordered_json doc;
    doc["doc_id"] = docs[d].doc_id;
    doc["title"] = docs[d].title;
    doc["source_path"] = docs[d].source_path;
    doc["byte_length"] = docs[d].raw_text.size();
    doc["article_count"] = articles[d].size();
    doc["articles"] = nlohmann::ordered_json::array();
    for (const auto& a : articles[d]) {
      nlohmann::ordered_json aj;
      aj["ordinal"] = a.ordinal;
      aj["article_id"] = a.article_id;
      aj["heading"] = a.heading;
      aj["offset"] = a.offset;
      aj["byte_length"] = a.body.size();
      doc["articles"].push_back(std::move(aj));
    }
    j["documents"].push_back(std::move(doc));
  }
  return j.dump(2) + "\n";
}

}  // namespace regdistill::corpus
