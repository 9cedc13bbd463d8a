#include <algorithm>
#include <set>

#include "rulealign/common.hpp"
#include "rulealign/policy.hpp"
#include "rulealign/text.hpp"

namespace rulealign::policy {
namespace {

const std::vector<std::string> kReserved{"<pad>", "<bos>", "<eos>", "<unk>", "\n", "Patient:", "Doctor:"};

std::vector<std::string_view> lines_of(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto nl = s.find('\n', pos);
        out.push_back(s.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        if (nl == std::string_view::npos) {
            return out;
        }
        pos = nl + 1;
    }
}

std::optional<TokenId> role_marker(std::string_view piece) {
    if (piece == "Patient:") {
        return special::kPatient;
    }
    if (piece == "Doctor:") {
        return special::kPhysician;
    }
    return std::nullopt;
}

}  // namespace

std::string_view scheme_name(Scheme s) { return s == Scheme::Word ? "word" : "char"; }

Scheme parse_scheme(std::string_view name) {
    if (name == "word") {
        return Scheme::Word;
    }
    if (name == "char") {
        return Scheme::Char;
    }
    throw ConfigError("unknown tokenizer scheme '" + std::string(name) + "'");
}

Tokenizer::Tokenizer(Scheme scheme, std::vector<std::string> words) : scheme_(scheme), pieces_(kReserved) {
    for (auto& w : words) {
        pieces_.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (!index_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
            throw InvalidArgument("duplicate vocabulary entry '" + pieces_[i] + "'");
        }
    }
}

std::vector<std::string> Tokenizer::split_line(std::string_view line) const {
    std::vector<std::string> out;
    if (scheme_ == Scheme::Word) {
        std::size_t pos = 0;
        while (pos < line.size()) {
            const auto sp = line.find(' ', pos);
            const auto end = sp == std::string_view::npos ? line.size() : sp;
            if (end > pos) {
                out.emplace_back(line.substr(pos, end - pos));
            }
            pos = end + 1;
        }
        return out;
    }
    for (std::string_view marker : {"Patient:", "Doctor:"}) {
        if (line.substr(0, marker.size()) == marker) {
            out.emplace_back(marker);
            line.remove_prefix(marker.size());
            break;
        }
    }
    auto chars = text::utf8_chars(line);
    out.insert(out.end(), chars.begin(), chars.end());
    return out;
}

Tokenizer Tokenizer::build(Scheme scheme, const std::vector<std::string>& texts) {
    const Tokenizer probe(scheme, {});
    std::set<std::string> seen;
    for (const auto& t : texts) {
        for (auto line : lines_of(t)) {
            for (auto& p : probe.split_line(line)) {
                if (!probe.index_.count(p)) {
                    seen.insert(std::move(p));
                }
            }
        }
    }
    return Tokenizer(scheme, {seen.begin(), seen.end()});
}

TokenSeq Tokenizer::encode(std::string_view s) const {
    TokenSeq out;
    bool first = true;
    for (auto line : lines_of(s)) {
        if (!first) {
            out.push_back(special::kEot);
        }
        first = false;
        for (const auto& p : split_line(line)) {
            if (auto r = role_marker(p)) {
                out.push_back(*r);
            } else if (auto it = index_.find(p); it != index_.end() && it->second >= special::kCount) {
                out.push_back(it->second);
            } else {
                out.push_back(special::kUnk);
            }
        }
    }
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    bool line_start = true;
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
            throw InvalidArgument("token id out of range: " + std::to_string(id));
        }
        if (id == special::kPad || id == special::kBos || id == special::kEos) {
            continue;
        }
        if (id == special::kEot) {
            out += '\n';
            line_start = true;
            continue;
        }
        if (scheme_ == Scheme::Word && !line_start) {
            out += ' ';
        }
        out += pieces_[static_cast<std::size_t>(id)];
        line_start = false;
    }
    return out;
}

std::optional<TokenId> Tokenizer::find(std::string_view piece) const {
    if (auto it = index_.find(piece); it != index_.end()) {
        return it->second;
    }
    return std::nullopt;
}

json Tokenizer::to_json() const {
    return json{{"scheme", scheme_name(scheme_)},
                {"words", std::vector<std::string>(pieces_.begin() + special::kCount, pieces_.end())}};
}

Tokenizer Tokenizer::from_json(const json& j) {
    return Tokenizer(parse_scheme(j.at("scheme").get<std::string>()), j.at("words").get<std::vector<std::string>>());
}

std::string Tokenizer::hash() const { return sha256_hex(to_json().dump()); }

}  // namespace rulealign::policy
