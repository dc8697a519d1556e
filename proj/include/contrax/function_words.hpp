#pragma once

#include <array>
#include <string_view>

namespace contrax {

// Fixed English function-word list used by the style extractor. Order defines
// the feature layout; every entry is a single token under word_tokens().
inline constexpr std::array<std::string_view, 150> kFunctionWords = {
    // articles and determiners
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each",
    "every", "either", "neither", "no", "all", "both", "few", "many", "much", "more",
    "most", "less", "least", "several", "such", "other", "another", "enough",
    // pronouns
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves",
    "you", "your", "yours", "yourself", "he", "him", "his", "himself", "she", "her",
    "hers", "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves",
    "who", "whom", "whose", "which", "what", "something",
    "anything", "nothing", "everything", "one",
    // prepositions
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beside", "between", "beyond", "by", "down", "during", "except",
    "for", "from", "in", "inside", "into", "near", "of", "off", "on",
    "out", "outside", "over", "past", "since", "through", "till", "to", "toward",
    "under", "until", "up", "upon", "with", "within", "without",
    // conjunctions
    "and", "but", "or", "nor", "so", "yet", "because", "although", "though", "while",
    "if", "unless", "whether", "than", "as", "when", "where",
    // auxiliaries and modals
    "is", "are", "was", "were", "be", "been", "do", "does", "did", "have",
    "has", "had", "can", "could", "will", "would", "shall", "should", "may", "might",
    "must"};

}  // namespace contrax
