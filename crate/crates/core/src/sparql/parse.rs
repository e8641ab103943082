//! Recursive-descent parser for the supported SPARQL subset.

use crate::qdmr::Aggregator;
use crate::value::{normalize_date, parse_number, unquote_prefix, Comparator, Value};

use super::{
    Element, Expr, GroupPattern, OrderKey, PatternTerm, Projection, SelectQuery, SparqlError, SparqlQuery,
    TriplePattern,
};

const UNSUPPORTED: [&str; 16] = [
    "OPTIONAL",
    "LIMIT",
    "OFFSET",
    "BIND",
    "VALUES",
    "HAVING",
    "SERVICE",
    "GRAPH",
    "CONSTRUCT",
    "ASK",
    "DESCRIBE",
    "EXISTS",
    "NOT",
    "FROM",
    "REDUCED",
    "BASE",
];

/// Parses query text; `PREFIX` declarations are accepted and ignored.
pub fn parse_sparql(text: &str) -> Result<SparqlQuery, SparqlError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    while p.peek_keyword("PREFIX") {
        p.pos += 1;
        match p.next() {
            Some((Tok::PName(n), _)) if n.ends_with(':') => {}
            _ => return Err(p.error("expected a prefix name")),
        }
        match p.next() {
            Some((Tok::Iri(_), _)) => {}
            _ => return Err(p.error("expected an IRI")),
        }
    }
    let q = p.select()?;
    if p.pos < p.tokens.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(SparqlQuery::new(q))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    Word(String),
    PName(String),
    Iri(String),
    Str(String),
    Num(String),
    Punct(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, SparqlError> {
    let err = |offset: usize, message: &str| SparqlError::Syntax { offset, message: message.to_string() };
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let ident_char = |c: u8| c.is_ascii_alphanumeric() || c == b'_' || c == b'-';
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        let tok = match c {
            b'?' | b'$' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                if i == start + 1 {
                    return Err(err(start, "empty variable name"));
                }
                Tok::Var(text[start + 1..i].to_string())
            }
            b'"' => {
                let (s, used) = unquote_prefix(&text[i..]).ok_or_else(|| err(start, "unterminated string"))?;
                i += used;
                Tok::Str(s)
            }
            b'{' | b'}' | b'(' | b')' | b'.' | b',' | b'*' => {
                i += 1;
                Tok::Punct(match c {
                    b'{' => "{",
                    b'}' => "}",
                    b'(' => "(",
                    b')' => ")",
                    b'.' => ".",
                    b',' => ",",
                    _ => "*",
                })
            }
            _ if two == "^^" => {
                i += 2;
                Tok::Punct("^^")
            }
            _ if two == ">=" || two == "<=" || two == "!=" => {
                i += 2;
                Tok::Punct(match two {
                    ">=" => ">=",
                    "<=" => "<=",
                    _ => "!=",
                })
            }
            b'<' => {
                let rest = &text[i + 1..];
                let end = rest.find(|ch: char| ch == '>' || ch.is_whitespace());
                match end {
                    Some(e) if rest[e..].starts_with('>') && e > 0 => {
                        i += e + 2;
                        Tok::Iri(rest[..e].to_string())
                    }
                    _ => {
                        i += 1;
                        Tok::Punct("<")
                    }
                }
            }
            b'>' | b'=' => {
                i += 1;
                Tok::Punct(if c == b'>' { ">" } else { "=" })
            }
            b'-' | b'+' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'e' || bytes[i] == b'E')
                {
                    // A trailing `.` ends a triple rather than continuing a number.
                    if bytes[i] == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                        break;
                    }
                    if (bytes[i] == b'e' || bytes[i] == b'E') && matches!(bytes.get(i + 1), Some(b'-' | b'+')) {
                        i += 1;
                    }
                    i += 1;
                }
                Tok::Num(text[start..i].to_string())
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && ident_char(bytes[i]) {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b':' {
                    while i < bytes.len() && (ident_char(bytes[i]) || bytes[i] == b':') {
                        i += 1;
                    }
                    Tok::PName(text[start..i].to_string())
                } else {
                    Tok::Word(text[start..i].to_ascii_uppercase())
                }
            }
            _ => return Err(err(start, &format!("unexpected character `{}`", text[start..].chars().next().unwrap()))),
        };
        out.push((tok, start));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or_else(|| self.tokens.last().map_or(0, |t| t.1), |t| t.1)
    }

    fn error(&self, message: &str) -> SparqlError {
        SparqlError::Syntax { offset: self.offset(), message: message.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w == kw)
    }

    fn peek_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn check_unsupported(&self) -> Result<(), SparqlError> {
        match self.peek() {
            Some(Tok::Word(w)) if UNSUPPORTED.contains(&w.as_str()) => Err(SparqlError::UnsupportedFeature(w.clone())),
            Some(Tok::Punct("*")) => Err(SparqlError::UnsupportedFeature("SELECT *".into())),
            _ => Ok(()),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SparqlError> {
        self.check_unsupported()?;
        if self.peek_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    fn punct(&mut self, p: &str) -> Result<(), SparqlError> {
        if self.peek_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.check_unsupported()?;
            Err(self.error(&format!("expected `{p}`")))
        }
    }

    fn var(&mut self) -> Result<String, SparqlError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => {
                self.check_unsupported()?;
                Err(self.error("expected a variable"))
            }
        }
    }

    fn select(&mut self) -> Result<SelectQuery, SparqlError> {
        self.keyword("SELECT")?;
        let distinct = self.peek_keyword("DISTINCT");
        if distinct {
            self.pos += 1;
        }
        let mut projection = Vec::new();
        loop {
            self.check_unsupported()?;
            match self.peek() {
                Some(Tok::Var(_)) => projection.push(Projection::Var(self.var()?)),
                Some(Tok::Punct("(")) => {
                    self.pos += 1;
                    let agg = match self.peek() {
                        Some(Tok::Word(w)) => Some(
                            Aggregator::from_name(w)
                                .ok_or_else(|| SparqlError::UnsupportedFeature(format!("function {w}")))?,
                        ),
                        _ => None,
                    };
                    let item = match agg {
                        Some(op) => {
                            self.pos += 1;
                            self.punct("(")?;
                            if self.peek_keyword("DISTINCT") {
                                return Err(SparqlError::UnsupportedFeature("aggregate DISTINCT".into()));
                            }
                            let arg = self.var()?;
                            self.punct(")")?;
                            self.keyword("AS")?;
                            Projection::Aggregate { op, arg, var: self.var()? }
                        }
                        None => {
                            let source = self.var()?;
                            self.keyword("AS")?;
                            Projection::Alias { source, var: self.var()? }
                        }
                    };
                    self.punct(")")?;
                    projection.push(item);
                }
                _ => break,
            }
        }
        if projection.is_empty() {
            return Err(self.error("empty projection"));
        }
        self.keyword("WHERE")?;
        let pattern = self.group()?;
        let mut group_by = Vec::new();
        if self.peek_keyword("GROUP") {
            self.pos += 1;
            self.keyword("BY")?;
            while matches!(self.peek(), Some(Tok::Var(_))) {
                group_by.push(self.var()?);
            }
            if group_by.is_empty() {
                return Err(self.error("GROUP BY needs variables"));
            }
        }
        let mut order_by = Vec::new();
        if self.peek_keyword("ORDER") {
            self.pos += 1;
            self.keyword("BY")?;
            loop {
                if self.peek_keyword("ASC") || self.peek_keyword("DESC") {
                    let descending = self.peek_keyword("DESC");
                    self.pos += 1;
                    self.punct("(")?;
                    let var = self.var()?;
                    self.punct(")")?;
                    order_by.push(OrderKey { var, descending });
                } else if matches!(self.peek(), Some(Tok::Var(_))) {
                    order_by.push(OrderKey { var: self.var()?, descending: false });
                } else {
                    break;
                }
            }
            if order_by.is_empty() {
                return Err(self.error("ORDER BY needs keys"));
            }
        }
        self.check_unsupported()?;
        Ok(SelectQuery { distinct, projection, pattern, group_by, order_by })
    }

    /// `{ ... }` as a group body.
    fn group(&mut self) -> Result<GroupPattern, SparqlError> {
        self.punct("{")?;
        let mut elements = Vec::new();
        while !self.peek_punct("}") {
            self.check_unsupported()?;
            match self.peek() {
                None => return Err(self.error("unterminated group")),
                Some(Tok::Word(w)) if w == "FILTER" => {
                    self.pos += 1;
                    self.punct("(")?;
                    let e = self.expr()?;
                    self.punct(")")?;
                    elements.push(Element::Filter(e));
                }
                Some(Tok::Word(w)) if w == "MINUS" => {
                    self.pos += 1;
                    elements.push(Element::Minus(self.group()?));
                }
                Some(Tok::Punct("{")) => {
                    let first = self.braced()?;
                    if self.peek_keyword("UNION") {
                        let mut branches = vec![as_group(first)];
                        while self.peek_keyword("UNION") {
                            self.pos += 1;
                            branches.push(as_group(self.braced()?));
                        }
                        elements.push(Element::Union(branches));
                    } else {
                        elements.push(first);
                    }
                }
                _ => {
                    let subject = self.pattern_term()?;
                    let predicate = match self.next() {
                        Some((Tok::PName(p), _)) => p,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("expected a predicate name"));
                        }
                    };
                    let object = self.pattern_term()?;
                    elements.push(Element::Triple(TriplePattern { subject, predicate, object }));
                    if self.peek_punct(".") {
                        self.pos += 1;
                    } else if !self.peek_punct("}") {
                        return Err(self.error("expected `.` after triple pattern"));
                    }
                }
            }
        }
        self.pos += 1;
        Ok(GroupPattern { elements })
    }

    /// A braced element: a subquery or a nested group.
    fn braced(&mut self) -> Result<Element, SparqlError> {
        if matches!(self.tokens.get(self.pos + 1), Some((Tok::Word(w), _)) if w == "SELECT") {
            self.punct("{")?;
            let q = self.select()?;
            self.punct("}")?;
            Ok(Element::SubQuery(Box::new(q)))
        } else {
            Ok(Element::Group(self.group()?))
        }
    }

    fn pattern_term(&mut self) -> Result<PatternTerm, SparqlError> {
        if matches!(self.peek(), Some(Tok::Var(_))) {
            return Ok(PatternTerm::Var(self.var()?));
        }
        Ok(PatternTerm::Literal(self.literal()?))
    }

    fn literal(&mut self) -> Result<Value, SparqlError> {
        match self.next() {
            Some((Tok::Num(n), _)) => parse_number(&n).map(Value::number).ok_or_else(|| self.error("bad number")),
            Some((Tok::Str(s), _)) => {
                if self.peek_punct("^^") {
                    self.pos += 1;
                    match self.next() {
                        Some((Tok::PName(t), _)) if t == "xsd:date" => {
                            normalize_date(&s).map(Value::Date).ok_or_else(|| self.error("bad date literal"))
                        }
                        Some((Tok::PName(t), _)) => Err(SparqlError::UnsupportedFeature(format!("datatype {t}"))),
                        _ => Err(self.error("expected a datatype")),
                    }
                } else {
                    Ok(Value::Text(s))
                }
            }
            _ => {
                self.pos -= 1;
                self.check_unsupported()?;
                Err(self.error("expected a variable or literal"))
            }
        }
    }

    fn operand(&mut self) -> Result<Expr, SparqlError> {
        if matches!(self.peek(), Some(Tok::Var(_))) {
            return Ok(Expr::Var(self.var()?));
        }
        Ok(Expr::Literal(self.literal()?))
    }

    fn expr(&mut self) -> Result<Expr, SparqlError> {
        if self.peek_keyword("CONTAINS") {
            self.pos += 1;
            self.punct("(")?;
            self.keyword("LCASE")?;
            self.punct("(")?;
            self.keyword("STR")?;
            self.punct("(")?;
            let v = self.var()?;
            self.punct(")")?;
            self.punct(")")?;
            self.punct(",")?;
            let needle = match self.next() {
                Some((Tok::Str(s), _)) => s,
                _ => return Err(self.error("expected a string")),
            };
            self.punct(")")?;
            return Ok(Expr::Contains(v, needle));
        }
        if let Some(Tok::Word(w)) = self.peek() {
            return Err(SparqlError::UnsupportedFeature(format!("function {w}")));
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Punct(p)) => match *p {
                "=" => Comparator::Eq,
                "!=" => Comparator::Ne,
                ">" => Comparator::Gt,
                "<" => Comparator::Lt,
                ">=" => Comparator::Ge,
                "<=" => Comparator::Le,
                _ => return Err(self.error("expected a comparison")),
            },
            _ => return Err(self.error("expected a comparison")),
        };
        self.pos += 1;
        let rhs = self.operand()?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }
}

fn as_group(e: Element) -> GroupPattern {
    match e {
        Element::Group(g) => g,
        other => GroupPattern { elements: vec![other] },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_state_query() {
        let q = parse_sparql("SELECT ?State WHERE {\n  ?ID arc:school:State ?State.}").unwrap();
        assert_eq!(q.ast.pattern.elements.len(), 1);
        assert_eq!(q.ast.pattern.elements[0], Element::Triple(TriplePattern::vars("ID", "arc:school:State", "State")));
        assert_eq!(q.text, "SELECT ?State WHERE {\n  ?ID arc:school:State ?State .\n}");
    }

    #[test]
    fn unsupported_keywords() {
        for text in [
            "SELECT ?x WHERE { OPTIONAL { ?x arc:a:b ?y . } }",
            "SELECT ?x WHERE { ?x arc:a:b ?y . } LIMIT 1",
            "SELECT * WHERE { ?x arc:a:b ?y . }",
            "SELECT ?x WHERE { BIND(1 AS ?x) }",
        ] {
            assert!(matches!(parse_sparql(text), Err(SparqlError::UnsupportedFeature(_))), "{text}");
        }
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_sparql("SELECT ?x WHERE { ?x arc:a:b"), Err(SparqlError::Syntax { .. })));
        assert!(matches!(parse_sparql("SELECT WHERE { }"), Err(SparqlError::Syntax { .. })));
    }

    #[test]
    fn round_trips_nested_forms() {
        let text = "PREFIX arc: <http://x/>\nSELECT DISTINCT ?a (COUNT(?b) AS ?count) WHERE {\n  ?b arc:t:a ?a .\n  FILTER(?a >= -2.5)\n  FILTER(CONTAINS(LCASE(STR(?a)), \"x\\\"y\"))\n  {\n    SELECT (MAX(?c) AS ?max) WHERE {\n      ?r arc:t:c ?c .\n    }\n  }\n  {\n    ?b arc:t:d \"2014-01-02\"^^xsd:date .\n  }\n  UNION\n  {\n    ?b arc:t:e:u:k ?k .\n  }\n  MINUS {\n    ?b arc:t:a \"z\" .\n  }\n}\nGROUP BY ?a\nORDER BY DESC(?count) ASC(?a)";
        let q = parse_sparql(text).unwrap();
        let again = parse_sparql(&q.text).unwrap();
        assert_eq!(q.ast, again.ast);
        assert_eq!(q.text, again.text);
        assert!(q.text.starts_with("SELECT DISTINCT ?a (COUNT(?b) AS ?count) WHERE {"));
    }
}
