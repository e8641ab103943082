//! Canonical text: one clause per line, two-space indentation.

use std::fmt::{self, Write};

use crate::value::{literal_syntax, Comparator};

use super::{Element, Expr, GroupPattern, PatternTerm, Projection, SelectQuery};

/// IRI bound to the `arc:` prefix when the text is handed to another engine.
pub const ARC_PREFIX_IRI: &str = "http://qdmr-sparql.invalid/arc#";

/// Prepends the `PREFIX` declarations needed by external SPARQL engines.
pub fn with_prefixes(text: &str) -> String {
    format!("PREFIX arc: <{ARC_PREFIX_IRI}>\nPREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\n{text}")
}

impl fmt::Display for SelectQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_query(&mut out, self, 0);
        f.write_str(out.trim_end_matches('\n'))
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_query(out: &mut String, q: &SelectQuery, depth: usize) {
    indent(out, depth);
    out.push_str("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    let items: Vec<String> = q
        .projection
        .iter()
        .map(|p| match p {
            Projection::Var(v) => format!("?{v}"),
            Projection::Alias { source, var } => format!("(?{source} AS ?{var})"),
            Projection::Aggregate { op, arg, var } => {
                format!("({}(?{arg}) AS ?{var})", op.name().to_ascii_uppercase())
            }
        })
        .collect();
    out.push_str(&items.join(" "));
    out.push_str(" WHERE {\n");
    write_group_body(out, &q.pattern, depth + 1);
    indent(out, depth);
    out.push_str("}\n");
    if !q.group_by.is_empty() {
        indent(out, depth);
        let vars: Vec<String> = q.group_by.iter().map(|v| format!("?{v}")).collect();
        let _ = writeln!(out, "GROUP BY {}", vars.join(" "));
    }
    if !q.order_by.is_empty() {
        indent(out, depth);
        let keys: Vec<String> =
            q.order_by.iter().map(|k| format!("{}(?{})", if k.descending { "DESC" } else { "ASC" }, k.var)).collect();
        let _ = writeln!(out, "ORDER BY {}", keys.join(" "));
    }
}

fn write_braced(out: &mut String, g: &GroupPattern, depth: usize, lead: &str) {
    indent(out, depth);
    out.push_str(lead);
    out.push_str("{\n");
    write_group_body(out, g, depth + 1);
    indent(out, depth);
    out.push_str("}\n");
}

fn write_group_body(out: &mut String, g: &GroupPattern, depth: usize) {
    for e in &g.elements {
        match e {
            Element::Triple(t) => {
                indent(out, depth);
                let _ = writeln!(out, "{} {} {} .", term(&t.subject), t.predicate, term(&t.object));
            }
            Element::Filter(x) => {
                indent(out, depth);
                let _ = writeln!(out, "FILTER({})", expr(x));
            }
            Element::SubQuery(q) => {
                indent(out, depth);
                out.push_str("{\n");
                write_query(out, q, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
            Element::Union(branches) => {
                for (i, b) in branches.iter().enumerate() {
                    if i > 0 {
                        indent(out, depth);
                        out.push_str("UNION\n");
                    }
                    write_braced(out, b, depth, "");
                }
            }
            Element::Minus(m) => write_braced(out, m, depth, "MINUS "),
            Element::Group(inner) => write_braced(out, inner, depth, ""),
        }
    }
}

fn term(t: &PatternTerm) -> String {
    match t {
        PatternTerm::Var(v) => format!("?{v}"),
        PatternTerm::Literal(v) => literal_syntax(v),
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Var(v) => format!("?{v}"),
        Expr::Literal(v) => literal_syntax(v),
        Expr::Compare(op, a, b) => {
            debug_assert!(*op != Comparator::Like);
            format!("{} {} {}", expr(a), op.glyph(), expr(b))
        }
        Expr::Contains(v, needle) => {
            format!("CONTAINS(LCASE(STR(?{v})), {})", crate::value::quote_string(needle))
        }
    }
}
