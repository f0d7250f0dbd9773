#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "quartet/Explanation.h"

namespace quartet {

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Lowercase + whitespace + punctuation tokenizer. Alphanumeric runs become
/// tokens; each punctuation character is its own token.
std::vector<std::string> tokenize(const std::string& text);

/// One dataset split: unique passages plus the questions that reference them.
struct DatasetSplit {
    std::string name;
    std::vector<Passage> passages;
    std::vector<InfluenceQuestion> questions;

    const Passage& passageOf(const InfluenceQuestion& q) const;
    const Passage* findPassage(const std::string& passageId) const;
    void addPassage(const Passage& p);       // rejects conflicting redefinitions
    void addQuestion(const InfluenceQuestion& q);  // passage must resolve; gold must validate
    size_t size() const { return questions.size(); }

private:
    std::unordered_map<std::string, int> passageIndex;
};

/// Counts and fractions per question type, explanation-length distribution
/// over gold-bearing questions, and mean steps per passage.
struct SplitStats {
    int total = 0;
    int goldCount = 0;
    std::array<int, 3> countByType{};          // indexed by QuestionType
    std::array<double, 3> fractionByType{};    // over all questions; 0 when empty
    std::array<int, 3> lengthCounts{};         // explanation length 0/1/2
    std::array<double, 3> lengthFractions{};   // over gold-bearing questions
    double meanStepsPerPassage = 0.0;
};

SplitStats splitStats(const DatasetSplit& split);

/// Maps normalized record fields (id, passage_id, steps, q_p, q_e,
/// question_type, gold.i, gold.j, gold.d_i, gold.d_e) to dotted paths inside
/// a foreign record layout. Empty mapping means the native layout.
using FieldMapping = std::map<std::string, std::string>;

/// Loads a line-delimited record file. Malformed lines and invalid gold
/// explanations raise DataError naming the line / record. A record may omit
/// "steps" (or give []) to reference a passage defined on an earlier line.
DatasetSplit loadDataset(const std::string& path, const FieldMapping& mapping = {},
                         const std::string& splitName = "");

/// Writes the split in canonical field order, one record per line. Loading a
/// file produced here and saving it again is byte-identical.
void saveDataset(const DatasetSplit& split, const std::string& path);

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token <-> id map with reserved ids for PAD, UNK, CLS, SEP and the
/// per-sentence marker tokens M_1..M_maxMarkers. Corpus token ids are dense,
/// assigned after the reserved block in lexicographic order.
class Vocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kClsId = 2;
    static constexpr int kSepId = 3;
    static constexpr int kFirstMarkerId = 4;

    Vocab() = default;
    Vocab(std::vector<std::string> corpusTokens, int maxMarkers);

    int maxMarkers() const { return numMarkers; }
    int markerId(int sentenceSlot) const;  // 1-based slot, checked
    int firstCorpusId() const { return kFirstMarkerId + numMarkers; }
    int size() const { return firstCorpusId() + static_cast<int>(corpus.size()); }

    /// Id of a token, kUnkId when unknown.
    int tokenId(const std::string& token) const;
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::string tokenName(int id) const;  // reserved ids get <pad>, <cls>, <m3>, ...

    bool contains(const std::string& token) const { return ids.count(token) > 0; }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    bool operator==(const Vocab& o) const { return numMarkers == o.numMarkers && corpus == o.corpus; }

private:
    int numMarkers = 0;
    std::vector<std::string> corpus;                // index = id - firstCorpusId()
    std::unordered_map<std::string, int> ids;
};

/// Builds a vocabulary over the passages and question texts of the given
/// splits. Tokens seen fewer than minCount times map to UNK.
Vocab buildVocab(const std::vector<const DatasetSplit*>& splits, int minCount, int maxMarkers);

}  // namespace quartet
