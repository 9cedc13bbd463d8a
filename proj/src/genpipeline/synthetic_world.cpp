#include <algorithm>
#include <cstdio>
#include <set>

#include "rulealign/common.hpp"
#include "rulealign/synthetic.hpp"

namespace rulealign::gen::synth {
namespace {

using rules::HistoryCategory;

const std::vector<std::string> kSymptoms{
    "flank_pain",  "fever",        "hematuria",     "dysuria",        "urgency",      "frequency",
    "nocturia",    "retention",    "weak_stream",   "incontinence",   "pelvic_pain",  "scrotal_swelling",
    "back_pain",   "nausea",       "weight_loss",   "fatigue",        "cloudy_urine", "foamy_urine",
    "edema",       "chills",       "testicular_pain", "groin_pain",   "straining",    "dribbling"};

const std::vector<std::string> kExams{"ultrasound", "ct",          "urinalysis", "mri",    "cystoscopy", "psa_test",
                                      "kub_xray",   "urine_culture", "renal_scan", "biopsy", "uroflowmetry"};

const std::vector<std::string> kFindings{"mass",     "stone_shadow", "cyst",        "dilation",       "thickening",
                                         "bacteria", "blood_cells",  "high_level",  "low_flow",       "obstruction"};

const std::vector<std::string> kStems{"stone",  "cyst",      "tumor",      "infection",  "stricture",
                                      "hyperplasia", "reflux", "cystitis", "torsion",    "varicocele",
                                      "nephritis", "prostatitis", "hydrocele", "calculus",  "neoplasm",
                                      "fistula"};

const std::vector<std::string> kVariants{"left {}", "right {}", "bilateral {}", "early {}", "{} stage_2"};

const std::vector<std::string> kUnmapped{"elbow_fracture", "left elbow fracture", "migraine", "tooth_decay",
                                         "ankle_sprain"};

const std::map<HistoryCategory, std::vector<std::string>> kHistoryItems{
    {HistoryCategory::Medication, {"aspirin", "insulin", "tamsulosin", "warfarin", "none"}},
    {HistoryCategory::Surgical, {"appendectomy", "lithotripsy", "hernia_repair", "none"}},
    {HistoryCategory::PastMedical, {"diabetes", "hypertension", "gout", "none"}},
    {HistoryCategory::Reproductive, {"two_children", "no_children", "vasectomy"}},
};

constexpr std::array<HistoryCategory, 4> kCategories{HistoryCategory::Medication, HistoryCategory::Surgical,
                                                     HistoryCategory::PastMedical, HistoryCategory::Reproductive};

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(n)));
}

bool coin(std::mt19937_64& rng, double p) { return unit_interval(rng()) < p; }

std::size_t draw_between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return lo + draw_index(rng, hi - lo + 1);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[draw_index(rng, i)]);
    }
}

template <typename T>
std::vector<T> pick_distinct(const std::vector<T>& pool, std::size_t k, std::mt19937_64& rng) {
    auto copy = pool;
    shuffle(copy, rng);
    copy.resize(std::min(k, copy.size()));
    return copy;
}

std::string disease_name(std::size_t i) {
    std::string name = kStems[i % kStems.size()] + "_";
    name += static_cast<char>('A' + static_cast<char>(i % 26));
    if (i >= 26) {
        name += std::to_string(i / 26);
    }
    return name;
}

std::string apply_variant(const std::string& pattern, const std::string& name) {
    const auto at = pattern.find("{}");
    return pattern.substr(0, at) + name + pattern.substr(at + 2);
}

}  // namespace

json world_config_to_json(const WorldConfig& c) {
    return json{{"diseases", c.diseases},
                {"min_symptoms", c.min_symptoms},
                {"max_symptoms", c.max_symptoms},
                {"min_exams", c.min_exams},
                {"max_exams", c.max_exams},
                {"min_history", c.min_history},
                {"max_history", c.max_history},
                {"exam_skip_rate", c.exam_skip_rate},
                {"distractor_symptom_rate", c.distractor_symptom_rate},
                {"extra_history_rate", c.extra_history_rate},
                {"alias_rate", c.alias_rate},
                {"unmapped_rate", c.unmapped_rate},
                {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j) {
    WorldConfig c;
    c.diseases = j.value("diseases", c.diseases);
    c.min_symptoms = j.value("min_symptoms", c.min_symptoms);
    c.max_symptoms = j.value("max_symptoms", c.max_symptoms);
    c.min_exams = j.value("min_exams", c.min_exams);
    c.max_exams = j.value("max_exams", c.max_exams);
    c.min_history = j.value("min_history", c.min_history);
    c.max_history = j.value("max_history", c.max_history);
    c.exam_skip_rate = j.value("exam_skip_rate", c.exam_skip_rate);
    c.distractor_symptom_rate = j.value("distractor_symptom_rate", c.distractor_symptom_rate);
    c.extra_history_rate = j.value("extra_history_rate", c.extra_history_rate);
    c.alias_rate = j.value("alias_rate", c.alias_rate);
    c.unmapped_rate = j.value("unmapped_rate", c.unmapped_rate);
    c.seed = j.value("seed", c.seed);
    return c;
}

World build_world(const WorldConfig& cfg) {
    if (cfg.diseases == 0 || cfg.min_symptoms < 2 || cfg.max_symptoms < cfg.min_symptoms ||
        cfg.min_exams < 1 || cfg.max_exams < cfg.min_exams || cfg.max_exams > kExams.size() ||
        cfg.min_history < 1 || cfg.max_history < cfg.min_history || cfg.max_history > kCategories.size()) {
        throw ConfigError("inconsistent world configuration");
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, "world"));
    World w;
    w.symptom_pool = kSymptoms;
    w.exam_pool = kExams;
    w.unmapped_names = kUnmapped;
    std::set<std::set<std::string>> used_symptom_sets;
    const std::vector<HistoryCategory> cats(kCategories.begin(), kCategories.end());
    for (std::size_t i = 0; i < cfg.diseases; ++i) {
        rules::DiagnosticRule r;
        r.disease.canonical_name = disease_name(i);
        char code[16];
        std::snprintf(code, sizeof code, "U%02zu", i + 1);
        r.disease.category_code = code;
        for (int attempt = 0;; ++attempt) {
            auto s = pick_distinct(kSymptoms, draw_between(rng, cfg.min_symptoms, cfg.max_symptoms), rng);
            if (used_symptom_sets.insert({s.begin(), s.end()}).second || attempt > 100) {
                r.evidence.key_symptoms = std::move(s);
                break;
            }
        }
        r.evidence.key_exams = pick_distinct(kExams, draw_between(rng, cfg.min_exams, cfg.max_exams), rng);
        std::vector<std::size_t> ranks(r.evidence.key_exams.size());
        for (std::size_t k = 0; k < ranks.size(); ++k) {
            ranks[k] = k + 1;
        }
        shuffle(ranks, rng);
        r.evidence.exam_order = ranks;
        auto hist = pick_distinct(cats, draw_between(rng, cfg.min_history, cfg.max_history), rng);
        std::sort(hist.begin(), hist.end());
        r.evidence.history_items = hist;
        for (const auto& e : r.evidence.key_exams) {
            w.findings[r.disease.canonical_name][e] = kFindings[draw_index(rng, kFindings.size())];
        }
        w.book.names.add(r.disease.canonical_name, r.disease);
        for (const auto& v : kVariants) {
            w.book.names.add(apply_variant(v, r.disease.canonical_name), r.disease);
        }
        w.book.rules.push_back(std::move(r));
    }
    return w;
}

PatientFacts sample_patient(const World& world, const rules::DiagnosticRule& rule, const WorldConfig& cfg,
                            std::mt19937_64& rng) {
    PatientFacts f;
    f.disease = rule.disease.canonical_name;
    f.symptoms = rule.evidence.key_symptoms;
    shuffle(f.symptoms, rng);
    if (coin(rng, cfg.distractor_symptom_rate)) {
        std::vector<std::string> others;
        for (const auto& s : world.symptom_pool) {
            if (std::find(rule.evidence.key_symptoms.begin(), rule.evidence.key_symptoms.end(), s) ==
                rule.evidence.key_symptoms.end()) {
                others.push_back(s);
            }
        }
        f.symptoms.push_back(others[draw_index(rng, others.size())]);
    }
    const auto& findings = world.findings.at(rule.disease.canonical_name);
    for (const auto& e : rule.evidence.key_exams) {
        if (!coin(rng, cfg.exam_skip_rate)) {
            f.exams.emplace_back(e, findings.at(e));
        }
    }
    for (auto c : rule.evidence.history_items) {
        const auto& items = kHistoryItems.at(c);
        f.history.emplace_back(c, items[draw_index(rng, items.size())]);
    }
    if (coin(rng, cfg.extra_history_rate)) {
        std::vector<HistoryCategory> others;
        for (auto c : kCategories) {
            if (std::find(rule.evidence.history_items.begin(), rule.evidence.history_items.end(), c) ==
                rule.evidence.history_items.end()) {
                others.push_back(c);
            }
        }
        if (!others.empty()) {
            const auto c = others[draw_index(rng, others.size())];
            const auto& items = kHistoryItems.at(c);
            f.history.emplace_back(c, items[draw_index(rng, items.size())]);
        }
    }
    return f;
}

std::vector<QaSample> generate_qa(const World& world, const WorldConfig& cfg, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "qa"));
    std::vector<QaSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& rule = world.book.rules[draw_index(rng, world.book.rules.size())];
        QaSample s;
        s.facts = sample_patient(world, rule, cfg, rng);
        s.qa.question = render_question(s.facts);
        char id[32];
        std::snprintf(id, sizeof id, "qa-%05zu", i);
        s.qa.source_id = id;
        if (coin(rng, cfg.unmapped_rate)) {
            s.qa.disease_raw = world.unmapped_names[draw_index(rng, world.unmapped_names.size())];
        } else if (coin(rng, cfg.alias_rate)) {
            s.qa.disease_raw = apply_variant(kVariants[draw_index(rng, kVariants.size())], rule.disease.canonical_name);
        } else {
            s.qa.disease_raw = rule.disease.canonical_name;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<PatientFacts> generate_patients(const World& world, const WorldConfig& cfg, std::size_t count,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "patients"));
    std::vector<PatientFacts> out;
    for (std::size_t i = 0; i < count; ++i) {
        // round-robin over diseases
        const auto& rule = world.book.rules[i % world.book.rules.size()];
        out.push_back(sample_patient(world, rule, cfg, rng));
    }
    return out;
}

namespace phrase {

std::string chief_complaint(const std::string& symptom) { return "doctor , i have " + symptom + " ."; }
std::string symptom_fact(const std::string& symptom) { return "i have " + symptom + " ."; }
std::string exam_fact(const std::string& exam, const std::string& finding) { return exam + " shows " + finding + " ."; }
std::string history_fact(rules::HistoryCategory c, const std::string& item) {
    return std::string(rules::history_name(c)) + " history : " + item + " .";
}
std::string symptom_inquiry() { return "any other symptoms ?"; }
std::string exam_inquiry(const std::string& exam) { return "have you had a " + exam + " ?"; }
std::string history_inquiry(const std::vector<rules::HistoryCategory>& cats) {
    std::string out = "any ";
    for (std::size_t i = 0; i < cats.size(); ++i) {
        if (i) {
            out += " or ";
        }
        out += rules::history_name(cats[i]);
    }
    return out + " history ?";
}
std::string diagnosis(const std::string& disease) { return "you likely have " + disease + " ."; }
std::string tentative_diagnosis(const std::string& disease) { return "you might have " + disease + " ."; }
std::string treatment(const std::string& drug) { return "i recommend " + drug + " treatment ."; }

}  // namespace phrase

std::string render_question(const PatientFacts& facts) {
    std::string q = phrase::chief_complaint(facts.symptoms.front());
    for (std::size_t i = 1; i < facts.symptoms.size(); ++i) {
        q += ' ' + phrase::symptom_fact(facts.symptoms[i]);
    }
    for (const auto& [e, finding] : facts.exams) {
        q += ' ' + phrase::exam_fact(e, finding);
    }
    for (const auto& [c, item] : facts.history) {
        q += ' ' + phrase::history_fact(c, item);
    }
    return q;
}

}  // namespace rulealign::gen::synth
