//! Proposes database values mentioned in a question.
//!
//! Numbers score 1 only when a question token equals them exactly. Other
//! values score 1 when their stemmed words equal a run of stemmed question
//! words, and otherwise a similarity ratio based on the longest common
//! substring. Numbers and dates that appear in the question are proposed
//! as well, without a source column.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};
use serde::Serialize;

use crate::qdmr::ValueRef;
use crate::schema::{ColumnRef, Schema, TableData};
use crate::value::{normalize_date, parse_number, Value};

/// Number of candidates returned by default.
pub const DEFAULT_TOP_K: usize = 25;

/// English stopwords (the NLTK list).
pub const STOPWORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "you're",
    "you've",
    "you'll",
    "you'd",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "she's",
    "her",
    "hers",
    "herself",
    "it",
    "it's",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "that'll",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "don't",
    "should",
    "should've",
    "now",
    "d",
    "ll",
    "m",
    "o",
    "re",
    "ve",
    "y",
    "ain",
    "aren",
    "aren't",
    "couldn",
    "couldn't",
    "didn",
    "didn't",
    "doesn",
    "doesn't",
    "hadn",
    "hadn't",
    "hasn",
    "hasn't",
    "haven",
    "haven't",
    "isn",
    "isn't",
    "ma",
    "mightn",
    "mightn't",
    "mustn",
    "mustn't",
    "needn",
    "needn't",
    "shan",
    "shan't",
    "shouldn",
    "shouldn't",
    "wasn",
    "wasn't",
    "weren",
    "weren't",
    "won",
    "won't",
    "wouldn",
    "wouldn't",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueCandidate {
    pub value: ValueRef,
    pub score: f64,
}

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\d{4}-\d{1,2}-\d{1,2}|-?\d+(?:\.\d+)?|[\p{L}\p{N}]+(?:'[\p{L}]+)?").expect("valid pattern")
    })
}

/// Lowercased word, number and date tokens of a text.
pub fn tokenize(text: &str) -> Vec<String> {
    token_pattern().find_iter(&text.to_lowercase()).map(|m| m.as_str().to_string()).collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Longest common substring length, in characters.
fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    let mut best = 0;
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            if x == y {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

/// `2·|longest common substring| / (|a| + |b|)`; 1 for equal strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * longest_common_substring(&a, &b) as f64 / (a.len() + b.len()) as f64
}

struct Scorer {
    stemmer: Stemmer,
    words: Vec<String>,
    stems: Vec<String>,
    numbers: Vec<f64>,
}

impl Scorer {
    fn new(question: &[String]) -> Scorer {
        let stemmer = Stemmer::create(Algorithm::English);
        let words: Vec<String> =
            question.iter().map(|t| t.to_lowercase()).filter(|t| !t.is_empty() && !is_stopword(t)).collect();
        let stems = words.iter().map(|w| stemmer.stem(w).into_owned()).collect();
        let numbers = question.iter().filter_map(|t| parse_number(t)).collect();
        Scorer { stemmer, words, stems, numbers }
    }

    fn score(&self, v: &Value) -> f64 {
        if let Value::Number(n) = v {
            return if self.numbers.contains(n) { 1.0 } else { 0.0 };
        }
        let value_words = tokenize(&v.lexical());
        if value_words.is_empty() || self.words.is_empty() {
            return 0.0;
        }
        let value_stems: Vec<String> = value_words.iter().map(|w| self.stemmer.stem(w).into_owned()).collect();
        let joined = value_words.join(" ");
        let n = value_words.len().min(self.words.len());
        let mut best: f64 = 0.0;
        for start in 0..=self.words.len() - n {
            if n == value_words.len() && self.stems[start..start + n] == value_stems[..] {
                return 1.0;
            }
            best = best.max(similarity(&self.words[start..start + n].join(" "), &joined));
        }
        // Only stem equality earns the full score.
        best.min(1.0 - f64::EPSILON)
    }
}

/// Values from the question itself: numbers and dates.
fn question_values(question: &[String]) -> Vec<Value> {
    let mut seen = BTreeSet::new();
    for t in question {
        if let Some(d) = normalize_date(t).filter(|_| t.contains('-') && parse_number(t).is_none()) {
            seen.insert(Value::Date(d));
        } else if let Some(n) = parse_number(t) {
            seen.insert(Value::number(n));
        }
    }
    seen.into_iter().collect()
}

fn order(a: &ValueCandidate, b: &ValueCandidate) -> Ordering {
    let key = |c: &ValueCandidate| (c.value.source.clone(), c.value.value.clone());
    b.score.total_cmp(&a.score).then_with(|| key(a).cmp(&key(b)))
}

/// Top-`k` database values (plus question numbers and dates) ranked by
/// similarity to the question tokens.
pub fn match_values(question: &[String], schema: &Schema, data: &TableData, k: usize) -> Vec<ValueCandidate> {
    let scorer = Scorer::new(question);
    let mut out: Vec<ValueCandidate> = question_values(question)
        .into_iter()
        .map(|v| ValueCandidate { value: ValueRef { value: v, source: None }, score: 1.0 })
        .collect();
    for t in &schema.tables {
        for (ci, c) in t.columns.iter().enumerate() {
            let distinct: BTreeSet<&Value> = data.rows(&t.name).iter().filter_map(|r| r[ci].as_ref()).collect();
            for v in distinct {
                out.push(ValueCandidate {
                    value: ValueRef { value: v.clone(), source: Some(ColumnRef::new(&t.name, &c.name)) },
                    score: scorer.score(v),
                });
            }
        }
    }
    out.sort_by(order);
    out.truncate(k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(question: &str, v: Value) -> f64 {
        Scorer::new(&tokenize(question)).score(&v)
    }

    #[test]
    fn numbers_need_exact_tokens() {
        assert_eq!(score("concerts in 2014", Value::number(2014.0)), 1.0);
        assert_eq!(score("concerts in 2015", Value::number(2014.0)), 0.0);
    }

    #[test]
    fn stems_match_fully() {
        assert_eq!(score("list all stadiums", Value::text("stadium")), 1.0);
        assert_eq!(score("in Stark's Park", Value::text("Stark's Park")), 1.0);
    }

    #[test]
    fn disjoint_strings_score_low() {
        let s = score("cat", Value::text("dog"));
        assert!(s < 0.5, "{s}");
        assert!(score("stadiu", Value::text("stadium")) < 1.0);
    }

    #[test]
    fn similarity_formula() {
        assert!((similarity("abcd", "xbcy") - 0.5).abs() < 1e-12);
        assert_eq!(similarity("same", "same"), 1.0);
    }

    #[test]
    fn tokenizer_keeps_numbers_and_dates() {
        assert_eq!(tokenize("Before 2014-01-02, 3.5 stars!"), vec!["before", "2014-01-02", "3.5", "stars"]);
    }
}
