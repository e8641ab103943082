//! Typed cell values, RDF terms and the comparison semantics shared by the
//! SPARQL evaluator and the reference interpreter.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Column datatype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Number,
    Text,
    Date,
}

impl Datatype {
    pub fn as_str(self) -> &'static str {
        match self {
            Datatype::Number => "number",
            Datatype::Text => "text",
            Datatype::Date => "date",
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A non-null cell value. Numbers are finite `f64`s with `-0.0` folded into
/// `0.0`; dates are ISO-8601 `YYYY-MM-DD` strings.
#[derive(Debug, Clone)]
pub enum Value {
    Number(f64),
    Text(String),
    Date(String),
}

/// A nullable cell.
pub type Cell = Option<Value>;

impl Value {
    pub fn number(n: f64) -> Value {
        Value::Number(if n == 0.0 { 0.0 } else { n })
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn datatype(&self) -> Datatype {
        match self {
            Value::Number(_) => Datatype::Number,
            Value::Text(_) => Datatype::Text,
            Value::Date(_) => Datatype::Date,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Reads `text` as a value of the given datatype.
    pub fn parse_as(datatype: Datatype, text: &str) -> Option<Value> {
        match datatype {
            Datatype::Number => parse_number(text).map(Value::number),
            Datatype::Date => normalize_date(text).map(Value::Date),
            Datatype::Text => Some(Value::Text(text.to_string())),
        }
    }

    /// Guesses the datatype of an untyped lexical form: number, then date,
    /// then text.
    pub fn infer(text: &str) -> Value {
        if let Some(n) = parse_number(text) {
            Value::number(n)
        } else if let Some(d) = normalize_date(text) {
            Value::Date(d)
        } else {
            Value::Text(text.to_string())
        }
    }

    /// Canonical lexical form (no quoting).
    pub fn lexical(&self) -> String {
        match self {
            Value::Number(n) => format_number(*n),
            Value::Text(s) | Value::Date(s) => s.clone(),
        }
    }

    /// Rounds numbers to `digits` decimal places; other values are unchanged.
    pub fn rounded(&self, digits: i32) -> Value {
        match self {
            Value::Number(n) => Value::number(round_to(*n, digits)),
            other => other.clone(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Number(_) => 0,
            Value::Date(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order: numbers < dates < texts; within a type the natural order.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) | (Value::Date(a), Value::Date(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Number(n) => n.to_bits().hash(state),
            Value::Text(s) | Value::Date(s) => s.hash(state),
        }
    }
}

/// JSON form: integral numbers as integers, other numbers as floats, texts
/// and dates as strings.
impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => s.serialize_i64(*n as i64),
            Value::Number(n) => s.serialize_f64(*n),
            Value::Text(t) | Value::Date(t) => s.serialize_str(t),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.lexical())
    }
}

pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    // Reject forms Rust accepts but databases do not write.
    if t.eq_ignore_ascii_case("inf")
        || t.eq_ignore_ascii_case("infinity")
        || t.eq_ignore_ascii_case("nan")
        || t.trim_start_matches(['+', '-']).eq_ignore_ascii_case("inf")
        || t.trim_start_matches(['+', '-']).eq_ignore_ascii_case("infinity")
        || t.trim_start_matches(['+', '-']).eq_ignore_ascii_case("nan")
    {
        return None;
    }
    let n: f64 = t.parse().ok()?;
    n.is_finite().then_some(n)
}

/// Accepts `YYYY-M-D` (optionally followed by a time part, which is
/// dropped) and returns `YYYY-MM-DD`.
pub fn normalize_date(text: &str) -> Option<String> {
    let t = text.trim();
    let date_part = t.split([' ', 'T']).next()?;
    let mut parts = date_part.split('-');
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || y.len() != 4 || m.is_empty() || m.len() > 2 || d.is_empty() || d.len() > 2 {
        return None;
    }
    if ![y, m, d].iter().all(|p| p.bytes().all(|b| b.is_ascii_digit())) {
        return None;
    }
    let (m, d): (u32, u32) = (m.parse().ok()?, d.parse().ok()?);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    Some(format!("{y}-{m:02}-{d:02}"))
}

pub fn format_number(n: f64) -> String {
    if n == n.trunc() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

pub fn round_to(n: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    let r = (n * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Filter comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Ne,
    Gt,
    Lt,
    Ge,
    Le,
    Like,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Gt,
        Comparator::Lt,
        Comparator::Ge,
        Comparator::Le,
        Comparator::Like,
    ];

    /// Glyph used in both the QDMR surface syntax and SPARQL filters
    /// (`like` has no SPARQL operator form).
    pub fn glyph(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Like => "like",
        }
    }

    /// Applies the comparator to two values. Values of different datatypes
    /// never compare true; `like` is case-insensitive containment of the
    /// right operand's lexical form in the left's.
    pub fn holds(self, lhs: &Value, rhs: &Value) -> bool {
        if self == Comparator::Like {
            let hay = lhs.lexical().to_lowercase();
            return hay.contains(&like_needle(rhs));
        }
        if lhs.datatype() != rhs.datatype() {
            return false;
        }
        let ord = lhs.cmp(rhs);
        match self {
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Like => unreachable!(),
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.glyph())
    }
}

/// Lowercased search string of a `like` pattern; SQL `%` wildcards at the
/// ends are dropped.
pub fn like_needle(pattern: &Value) -> String {
    pattern.lexical().trim_matches('%').to_lowercase()
}

/// Identity of a key node: the table it belongs to and its key value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub table: String,
    pub key: Value,
}

/// An RDF term: a row's key node or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Node(NodeId),
    Literal(Value),
}

impl Term {
    pub fn node(table: impl Into<String>, key: Value) -> Term {
        Term::Node(NodeId { table: table.into(), key })
    }

    /// The value a term stands for in filters and outputs: the key value of
    /// a node, the literal itself otherwise.
    pub fn value(&self) -> &Value {
        match self {
            Term::Node(n) => &n.key,
            Term::Literal(v) => v,
        }
    }

    pub fn is_node(&self) -> bool {
        matches!(self, Term::Node(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Node(n) => write!(f, "<{}:{}>", n.table, escape_iri(&n.key.lexical())),
            Term::Literal(v) => f.write_str(&literal_syntax(v)),
        }
    }
}

fn escape_iri(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// SPARQL literal syntax of a value: bare numbers, quoted strings,
/// `xsd:date`-typed dates.
pub fn literal_syntax(v: &Value) -> String {
    match v {
        Value::Number(n) => format_number(*n),
        Value::Text(s) => quote_string(s),
        Value::Date(d) => format!("{}^^xsd:date", quote_string(d)),
    }
}

pub fn quote_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Reads a double-quoted string (as written by [`quote_string`]) from the
/// start of `s`; returns the content and the number of bytes consumed.
pub fn unquote_prefix(s: &str) -> Option<(String, usize)> {
    let mut chars = s.char_indices();
    if chars.next()?.1 != '"' {
        return None;
    }
    let mut out = String::new();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Some((out, i + 1)),
            '\\' => {
                let (_, e) = chars.next()?;
                out.push(match e {
                    'n' => '\n',
                    'r' => '\r',
                    't' => '\t',
                    other => other,
                });
            }
            c => out.push(c),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_round_trips() {
        for s in ["plain", "with \"quotes\"", "back\\slash", "tab\tnew\nline", ""] {
            let q = quote_string(s);
            assert_eq!(unquote_prefix(&q), Some((s.to_string(), q.len())));
        }
        assert_eq!(unquote_prefix("\"ab\"@x"), Some(("ab".to_string(), 4)));
        assert_eq!(unquote_prefix("\"open"), None);
        assert_eq!(unquote_prefix("bare"), None);
    }

    #[test]
    fn numbers_are_canonical() {
        assert_eq!(Value::infer("5000.0"), Value::number(5000.0));
        assert_eq!(Value::infer("5000.0").lexical(), "5000");
        assert_eq!(Value::number(-0.0).lexical(), "0");
        assert_eq!(Value::number(2.5).lexical(), "2.5");
        assert!(parse_number("nan").is_none());
        assert!(parse_number("-inf").is_none());
    }

    #[test]
    fn dates_normalize() {
        assert_eq!(normalize_date("2014-1-2").as_deref(), Some("2014-01-02"));
        assert_eq!(normalize_date("2014-01-02 10:00:00").as_deref(), Some("2014-01-02"));
        assert!(normalize_date("14-01-02").is_none());
        assert!(normalize_date("2014-13-02").is_none());
        assert_eq!(Value::infer("2014-1-2"), Value::Date("2014-01-02".into()));
    }

    #[test]
    fn comparisons_across_types_are_false() {
        let n = Value::number(5.0);
        let t = Value::text("5");
        for op in Comparator::ALL {
            if op != Comparator::Like {
                assert!(!op.holds(&n, &t), "{op}");
            }
        }
        assert!(Comparator::Like.holds(&n, &t));
        assert!(Comparator::Ge.holds(&n, &Value::number(5.0)));
        assert!(Comparator::Ne.holds(&n, &Value::number(4.0)));
    }

    #[test]
    fn like_is_case_insensitive_containment() {
        let v = Value::text("Stark's Park");
        assert!(Comparator::Like.holds(&v, &Value::text("%park%")));
        assert!(Comparator::Like.holds(&v, &Value::text("STARK")));
        assert!(!Comparator::Like.holds(&v, &Value::text("glebe")));
    }

    #[test]
    fn term_display() {
        let n = Term::node("school", Value::number(10.0));
        assert_eq!(n.to_string(), "<school:10>");
        assert_eq!(Term::Literal(Value::text("a\"b")).to_string(), "\"a\\\"b\"");
        assert_eq!(Term::Literal(Value::Date("2014-01-02".into())).to_string(), "\"2014-01-02\"^^xsd:date");
    }
}
