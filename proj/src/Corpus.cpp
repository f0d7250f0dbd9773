#include "quartet/Corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace quartet {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) out.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

const Passage& DatasetSplit::passageOf(const InfluenceQuestion& q) const {
    const Passage* p = findPassage(q.passageId);
    if (!p) throw DataError("unresolved passage_id: " + q.passageId);
    return *p;
}

const Passage* DatasetSplit::findPassage(const std::string& passageId) const {
    auto it = passageIndex.find(passageId);
    return it == passageIndex.end() ? nullptr : &passages[static_cast<size_t>(it->second)];
}

void DatasetSplit::addPassage(const Passage& p) {
    if (p.id.empty()) throw DataError("passage id must be non-empty");
    if (p.steps.empty()) throw DataError("passage " + p.id + " has no steps");
    for (const auto& s : p.steps) {
        if (s.empty()) throw DataError("passage " + p.id + " has an empty step");
    }
    auto it = passageIndex.find(p.id);
    if (it != passageIndex.end()) {
        if (passages[static_cast<size_t>(it->second)].steps != p.steps) {
            throw DataError("passage " + p.id + " redefined with different steps");
        }
        return;
    }
    passageIndex[p.id] = static_cast<int>(passages.size());
    passages.push_back(p);
}

void DatasetSplit::addQuestion(const InfluenceQuestion& q) {
    const Passage* p = findPassage(q.passageId);
    if (!p) throw DataError("record " + q.id + ": unresolved passage_id " + q.passageId);
    if (q.gold) {
        ValidationResult r = validateExplanation(*q.gold, p->stepCount());
        if (!r.valid) {
            std::string rules;
            for (const auto& v : r.violations) rules += (rules.empty() ? "" : ",") + v;
            throw DataError("record " + q.id + ": invalid gold explanation (violates " + rules + ")");
        }
        const bool noEffectGold = q.gold->de == Direction::NONE;
        if ((q.type == QuestionType::NO_EFFECT) != noEffectGold) {
            throw DataError("record " + q.id + ": question_type disagrees with gold d_e");
        }
    }
    questions.push_back(q);
}

SplitStats splitStats(const DatasetSplit& split) {
    SplitStats st;
    st.total = static_cast<int>(split.questions.size());
    for (const auto& q : split.questions) {
        st.countByType[static_cast<size_t>(q.type)]++;
        if (q.gold) {
            st.goldCount++;
            int len = q.gold->isNoEffect() ? 0 : (q.gold->i == q.gold->j ? 1 : 2);
            st.lengthCounts[static_cast<size_t>(len)]++;
        }
    }
    if (st.total > 0) {
        for (size_t t = 0; t < 3; ++t) {
            st.fractionByType[t] = static_cast<double>(st.countByType[t]) / st.total;
        }
    }
    if (st.goldCount > 0) {
        for (size_t l = 0; l < 3; ++l) {
            st.lengthFractions[l] = static_cast<double>(st.lengthCounts[l]) / st.goldCount;
        }
    }
    if (!split.passages.empty()) {
        double sum = 0;
        for (const auto& p : split.passages) sum += p.stepCount();
        st.meanStepsPerPassage = sum / static_cast<double>(split.passages.size());
    }
    return st;
}

namespace {

// Resolves a dotted path ("question.para_steps.0") inside a record.
const json* resolvePath(const json& record, const std::string& path) {
    const json* cur = &record;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (cur->is_array()) {
            size_t idx = 0;
            try {
                idx = std::stoul(part);
            } catch (...) {
                return nullptr;
            }
            if (idx >= cur->size()) return nullptr;
            cur = &(*cur)[idx];
        } else if (cur->is_object() && cur->contains(part)) {
            cur = &(*cur)[part];
        } else {
            return nullptr;
        }
    }
    return cur;
}

const json* fetchField(const json& record, const FieldMapping& mapping, const std::string& field) {
    auto it = mapping.find(field);
    if (it != mapping.end()) return resolvePath(record, it->second);
    // Native layout: "gold.i" style fields live inside the "gold" object.
    auto dot = field.find('.');
    if (dot != std::string::npos) {
        const json* parent = resolvePath(record, field.substr(0, dot));
        if (!parent || parent->is_null()) return nullptr;
        return resolvePath(*parent, field.substr(dot + 1));
    }
    return resolvePath(record, field);
}

std::string requireString(const json& record, const FieldMapping& m, const std::string& field) {
    const json* v = fetchField(record, m, field);
    if (!v || !v->is_string()) throw DataError("missing or non-string field '" + field + "'");
    return v->get<std::string>();
}

int goldIndex(const json& v, const std::string& field) {
    if (!v.is_number_integer()) throw DataError("gold field '" + field + "' must be an integer");
    int idx = v.get<int>();
    if (idx == -1) return kAbsentStep;
    return idx;
}

}  // namespace

DatasetSplit loadDataset(const std::string& path, const FieldMapping& mapping,
                         const std::string& splitName) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    DatasetSplit split;
    split.name = splitName.empty() ? path : splitName;

    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(lineNo) + ": malformed JSON (" + e.what() + ")");
        }
        try {
            InfluenceQuestion q;
            q.id = requireString(record, mapping, "id");
            q.passageId = requireString(record, mapping, "passage_id");
            q.qp = requireString(record, mapping, "q_p");
            q.qe = requireString(record, mapping, "q_e");

            const json* steps = fetchField(record, mapping, "steps");
            if (steps && steps->is_array() && !steps->empty()) {
                Passage p;
                p.id = q.passageId;
                for (const auto& s : *steps) {
                    if (!s.is_string()) throw DataError("steps must be strings");
                    p.steps.push_back(s.get<std::string>());
                }
                split.addPassage(p);
            }

            const json* goldI = fetchField(record, mapping, "gold.i");
            if (goldI && !goldI->is_null()) {
                Explanation g;
                g.i = goldIndex(*goldI, "i");
                const json* goldJ = fetchField(record, mapping, "gold.j");
                const json* goldDi = fetchField(record, mapping, "gold.d_i");
                const json* goldDe = fetchField(record, mapping, "gold.d_e");
                if (!goldJ || !goldDi || !goldDe) throw DataError("gold object is incomplete");
                g.j = goldIndex(*goldJ, "j");
                g.di = directionFromString(goldDi->get<std::string>());
                g.dj = g.di;  // a2: d_j carried implicitly
                g.de = directionFromString(goldDe->get<std::string>());
                q.gold = g;
            }

            const json* type = fetchField(record, mapping, "question_type");
            if (type && type->is_string()) {
                q.type = questionTypeFromString(type->get<std::string>());
            } else if (q.gold) {
                q.type = q.gold->de == Direction::NONE ? QuestionType::NO_EFFECT
                                                       : QuestionType::OUT_OF_PARA;
            } else {
                throw DataError("record has neither question_type nor gold");
            }

            split.addQuestion(q);
        } catch (const ValidationError& e) {
            throw DataError("line " + std::to_string(lineNo) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineNo) + ": " + e.what());
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(lineNo) + ": bad field type (" + e.what() + ")");
        }
    }
    return split;
}

void saveDataset(const DatasetSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    for (const auto& q : split.questions) {
        const Passage& p = split.passageOf(q);
        ordered_json rec;
        rec["id"] = q.id;
        rec["passage_id"] = q.passageId;
        rec["steps"] = p.steps;
        rec["q_p"] = q.qp;
        rec["q_e"] = q.qe;
        rec["question_type"] = questionTypeToString(q.type);
        if (q.gold) {
            ordered_json g;
            g["i"] = q.gold->i == kAbsentStep ? -1 : q.gold->i;
            g["j"] = q.gold->j == kAbsentStep ? -1 : q.gold->j;
            g["d_i"] = directionToString(q.gold->di);
            g["d_e"] = directionToString(q.gold->de);
            rec["gold"] = g;
        } else {
            rec["gold"] = nullptr;
        }
        out << rec.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab::Vocab(std::vector<std::string> corpusTokens, int maxMarkers)
    : numMarkers(maxMarkers), corpus(std::move(corpusTokens)) {
    if (maxMarkers < 1) throw DataError("vocab needs at least one sentence marker");
    for (size_t k = 0; k < corpus.size(); ++k) {
        if (!ids.emplace(corpus[k], firstCorpusId() + static_cast<int>(k)).second) {
            throw DataError("duplicate vocab token: " + corpus[k]);
        }
    }
}

int Vocab::markerId(int sentenceSlot) const {
    if (sentenceSlot < 1 || sentenceSlot > numMarkers) {
        throw DataError("sentence slot " + std::to_string(sentenceSlot) + " exceeds marker budget " +
                        std::to_string(numMarkers));
    }
    return kFirstMarkerId + sentenceSlot - 1;
}

int Vocab::tokenId(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? kUnkId : it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(tokenId(t));
    return out;
}

std::string Vocab::tokenName(int id) const {
    if (id == kPadId) return "<pad>";
    if (id == kUnkId) return "<unk>";
    if (id == kClsId) return "<cls>";
    if (id == kSepId) return "<sep>";
    if (id >= kFirstMarkerId && id < firstCorpusId()) {
        return "<m" + std::to_string(id - kFirstMarkerId + 1) + ">";
    }
    int k = id - firstCorpusId();
    if (k < 0 || k >= static_cast<int>(corpus.size())) {
        throw DataError("token id out of range: " + std::to_string(id));
    }
    return corpus[static_cast<size_t>(k)];
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocab file: " + path);
    out << "markers " << numMarkers << "\n";
    for (const auto& t : corpus) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocab file: " + path);
    std::string header;
    int markers = 0;
    if (!(in >> header >> markers) || header != "markers" || markers < 1) {
        throw DataError("bad vocab header in " + path);
    }
    std::string line;
    std::getline(in, line);  // consume end of header line
    std::vector<std::string> toks;
    while (std::getline(in, line)) {
        if (!line.empty()) toks.push_back(line);
    }
    return Vocab(std::move(toks), markers);
}

Vocab buildVocab(const std::vector<const DatasetSplit*>& splits, int minCount, int maxMarkers) {
    if (splits.empty()) throw DataError("buildVocab requires at least one split");
    std::map<std::string, long> counts;
    for (const DatasetSplit* s : splits) {
        for (const auto& p : s->passages) {
            for (const auto& step : p.steps) {
                for (auto& t : tokenize(step)) counts[t]++;
            }
        }
        for (const auto& q : s->questions) {
            for (auto& t : tokenize(q.qp)) counts[t]++;
            for (auto& t : tokenize(q.qe)) counts[t]++;
        }
    }
    std::vector<std::string> kept;
    for (const auto& [tok, n] : counts) {
        if (n >= minCount) kept.push_back(tok);
    }
    // counts is an ordered map, so kept is already lexicographic and stable.
    return Vocab(std::move(kept), maxMarkers);
}

}  // namespace quartet
