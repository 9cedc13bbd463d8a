#include <array>

#include "rulealign/common.hpp"
#include "rulealign/genpipeline.hpp"
#include "rulealign/text.hpp"

namespace rulealign::gen {
namespace {

struct Prefix {
    std::string_view text;
    corpus::Role role;
};

constexpr std::array<Prefix, 10> kPrefixes{{
    {"Patient:", corpus::Role::Patient},
    {"patient:", corpus::Role::Patient},
    {"Doctor:", corpus::Role::Physician},
    {"doctor:", corpus::Role::Physician},
    {"Physician:", corpus::Role::Physician},
    {"physician:", corpus::Role::Physician},
    {"患者：", corpus::Role::Patient},
    {"患者:", corpus::Role::Patient},
    {"医生：", corpus::Role::Physician},
    {"医生:", corpus::Role::Physician},
}};

std::string strip_markup(std::string_view line) {
    // "**Patient**:" style emphasis appears in some chat outputs
    std::string out;
    for (char c : line) {
        if (c != '*') {
            out += c;
        }
    }
    return text::trim(out);
}

}  // namespace

std::vector<corpus::Turn> parse_dialogue_text(std::string_view body) {
    std::vector<corpus::Turn> turns;
    std::size_t pos = 0;
    bool open = false;
    while (pos <= body.size()) {
        auto nl = body.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = body.size();
        }
        const std::string line = strip_markup(body.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty()) {
            continue;
        }
        bool matched = false;
        for (const auto& p : kPrefixes) {
            if (line.compare(0, p.text.size(), p.text) == 0) {
                turns.push_back({p.role, text::trim(std::string_view(line).substr(p.text.size())), std::nullopt});
                open = true;
                matched = true;
                break;
            }
        }
        if (!matched && open) {
            turns.back().text += ' ';
            turns.back().text += line;
        }
    }
    if (turns.empty()) {
        throw MalformedDialogue("no role-prefixed turns found");
    }
    if (turns.front().role != corpus::Role::Patient) {
        throw MalformedDialogue("dialogue must open with a patient turn");
    }
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].text.empty()) {
            throw MalformedDialogue("turn " + std::to_string(i) + " is empty");
        }
        if (i > 0 && turns[i].role == turns[i - 1].role) {
            throw MalformedDialogue("turns " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                    " share the same role");
        }
    }
    return turns;
}

}  // namespace rulealign::gen
