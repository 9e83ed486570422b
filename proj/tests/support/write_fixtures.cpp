// Regenerates the bundled default data files from the compiled-in defaults.
#include <iostream>
#include <string>

#include "fixtures.hpp"
#include "regdistill/resources.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace rt = regdistill::testing;

namespace {

std::string lines(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += s + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : rt::data_dir();
  namespace b = regdistill::text::builtin;
  rt::write_file(root / "lexicons/stop_words.txt", lines(b::stop_words()));
  rt::write_file(root / "lexicons/refusal.txt", lines(b::refusal_cues()));
  rt::write_file(root / "lexicons/affirmation.txt", lines(b::affirmation_cues()));
  rt::write_file(root / "lexicons/negation.txt", lines(b::negation_cues()));
  rt::write_file(root / "lexicons/numerals.txt", lines(b::numerals()));
  for (const auto& t : regdistill::teacher::registry()) {
    rt::write_file(root / "templates" / (t.template_id + ".system.txt"), t.system_text);
    rt::write_file(root / "templates" / (t.template_id + ".user.txt"), t.user_template);
  }
  for (const auto& name : regdistill::resources::preset_names()) {
    rt::write_file(root / "profiles" / (name + ".json"),
                   regdistill::resources::profile_json(regdistill::resources::preset(name)));
  }
  rt::write_file(root / "corpus/synthetic_regulation.txt", rt::synthetic_regulation());
  std::cout << "wrote defaults under " << root.string() << "\n";
  return 0;
}
