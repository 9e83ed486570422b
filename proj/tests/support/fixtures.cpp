#include "fixtures.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <fmt/format.h>

#include "regdistill/text.hpp"

namespace regdistill::testing {

std::filesystem::path data_dir() { return REGDISTILL_TEST_DATA_DIR; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::filesystem::path temp_dir(std::string_view tag) {
  static std::size_t counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           fmt::format("regdistill-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

namespace {

constexpr std::array<std::string_view, 70> kTopics = {
    "scholarship", "internship",  "transfer",     "graduation",  "thesis",      "diploma",
    "exchange",    "housing",     "library",      "laboratory",  "attendance",  "tuition",
    "enrollment",  "withdrawal",  "probation",    "dismissal",   "readmission", "accreditation",
    "equivalence", "prerequisite", "elective",    "practicum",   "fieldwork",   "portfolio",
    "mentorship",  "advising",    "counseling",   "orientation", "convocation", "commencement",
    "transcript",  "certificate", "residency",    "fellowship",  "assistantship", "sponsorship",
    "parking",     "cafeteria",   "dormitory",    "gymnasium",   "workshop",    "seminar",
    "colloquium",  "symposium",   "exhibition",   "publication", "plagiarism",  "misconduct",
    "grievance",   "arbitration", "disability",   "maternity",   "bereavement", "sabbatical",
    "quarantine",  "vaccination", "insurance",    "reimbursement", "stipend",   "bursary",
    "loan",        "locker",      "identification", "passport",  "visa",        "translation",
    "notarization", "archive",    "repository",   "studio"};

constexpr std::array<std::string_view, 4> kOffices = {"Registrar", "Student Affairs Office",
                                                      "Dean's Office", "International Office"};
constexpr std::array<std::string_view, 3> kBoards = {"faculty board", "executive board",
                                                     "department board"};
constexpr std::array<std::string_view, 3> kPeriods = {"add-drop period", "second week of the semester",
                                                      "academic year"};

std::string capitalized(std::string_view w) {
  std::string s(w);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string sentence(std::size_t tmpl, std::size_t i, std::string_view t) {
  const auto office = kOffices[i % kOffices.size()];
  const auto board = kBoards[(i / 2) % kBoards.size()];
  const auto period = kPeriods[(i / 3) % kPeriods.size()];
  switch (tmpl % 12) {
    case 0:
      return fmt::format("Applications for {} are submitted to the {} within {} days of the announcement.",
                         t, office, 5 + i % 11);
    case 1: return fmt::format("Students cannot request {} after the end of the {}.", t, period);
    case 2: return fmt::format("A {} request may not be submitted by mail or by a third party.", t);
    case 3:
      return fmt::format("Students whose GPA is below {}.{:02d} are not eligible for {}.", 1 + i % 2,
                         (i * 25) % 100, t);
    case 4:
      return fmt::format("The {} decides on {} requests within {} working days.", board, t, 10 + i % 6);
    case 5:
      return fmt::format("Late {} requests are not accepted unless the {} approves an excuse.", t, board);
    case 6:
      return fmt::format("Decisions on {} may be appealed to the {} within {} days.", t, board, 3 + i % 5);
    case 7: return fmt::format("The fee for {} is set each year by the {}.", t, board);
    case 8:
      return fmt::format("A student may use {} at most {} times during the program.", t, 2 + i % 3);
    case 9:
      return fmt::format("Records of {} are kept for {} years by the {}.", t, 4 + i % 7, office);
    case 10: return fmt::format("Exceptions to the {} rules are decided by the Senate.", t);
    default:
      return fmt::format("Students using {} keep their right to sit final examinations.", t);
  }
}

}  // namespace

std::string synthetic_regulation(std::size_t article_count) {
  if (article_count > kTopics.size()) throw std::invalid_argument("too many articles");
  std::string out =
      "SYNTHETIC STUDENT AFFAIRS REGULATION\n"
      "Generated text used to exercise the pipeline at full scale.\n\n";
  for (std::size_t i = 0; i < article_count; ++i) {
    const auto topic = kTopics[i];
    out += fmt::format("Article {} - {}\n", i + 1, capitalized(topic));
    for (std::size_t k = 0; k < 8; ++k) {
      out += sentence(i + k, i, topic);
      out += k == 3 ? "\n\n" : (k == 7 ? "\n" : " ");
    }
    out += "\n";
  }
  return out;
}

std::string random_text(SeededRng& rng, std::size_t max_len, bool allow_controls) {
  static constexpr std::array<std::string_view, 12> kExtras = {
      "\"", "\\", "/", "\n", "\t", "\xc3\xa7", "\xc4\xb1", "\xc4\xb0", "\xc3\xbc", "\xe2\x82\xac",
      "\xf0\x9f\x93\x9a", "\xe2\x80\xa8"};
  const auto len = static_cast<std::size_t>(rng.below(max_len)) + 1;
  std::string s;
  while (s.size() < len) {
    const auto roll = rng.below(100);
    if (roll < 70) {
      s.push_back(static_cast<char>(' ' + rng.below(95)));
    } else if (roll < 95 || !allow_controls) {
      s += kExtras[rng.below(kExtras.size())];
    } else {
      s.push_back(static_cast<char>(1 + rng.below(31)));
    }
  }
  return s;
}

std::vector<dataset::InstructionRecord> random_records(SeededRng& rng, std::size_t n,
                                                       dataset::DatasetPhase phase) {
  std::vector<dataset::InstructionRecord> out;
  while (out.size() < n) {
    dataset::InstructionRecord r;
    r.instruction = random_text(rng, 80);
    r.output = random_text(rng, 160);
    if (phase == dataset::DatasetPhase::P3ContextAware) {
      r.input = "Evidence: " + random_text(rng, 200);
    } else if (phase == dataset::DatasetPhase::P1General && rng.below(2) == 0) {
      r.input = random_text(rng, 60);
    }
    r.meta.record_id = std::to_string(out.size() + 1);
    r.meta.phase = phase;
    if (dataset::validate_record(r, phase).ok()) out.push_back(std::move(r));
  }
  return out;
}

namespace {

bool ascii_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool ascii_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> ascii_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (ascii_alnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      continue;
    }
    const bool joins = (c == '.' || c == ',') && !cur.empty() && i > 0 && ascii_digit(s[i - 1]) &&
                       i + 1 < s.size() && ascii_digit(s[i + 1]);
    if (joins) {
      cur.push_back(c);
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

double reference_grounding(std::string_view answer, std::string_view evidence) {
  const auto& stops = text::builtin::stop_words();
  const auto ev = ascii_tokens(evidence);
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& tok : ascii_tokens(answer)) {
    bool stop = false;
    for (const auto& sw : stops) {
      if (sw == tok) stop = true;
    }
    if (stop) continue;
    ++total;
    for (const auto& e : ev) {
      if (e == tok) {
        ++hits;
        break;
      }
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace regdistill::testing
