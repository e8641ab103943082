//! Surface syntax: one `#k OP[arg, arg, ...]` line per step.

use crate::schema::{ColumnRef, Schema};
use crate::value::{unquote_prefix, Comparator, Value};

use super::{
    AggregateSpec, Aggregator, CompareValue, Condition, Direction, Extremum, GroundedQdmr, Grounding, Op, QdmrError,
    StepIndex, ValueRef,
};

/// Parses a grounded QDMR, resolving every grounding against `schema`.
pub fn parse_qdmr(text: &str, schema: &Schema) -> Result<GroundedQdmr, QdmrError> {
    let mut ops = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let p = LineParser { line: lineno + 1, schema };
        let (index, op) = p.parse_line(line)?;
        if index != ops.len() + 1 {
            return Err(p.syntax(format!("expected step #{}, found #{index}", ops.len() + 1)));
        }
        ops.push(op);
    }
    GroundedQdmr::new(ops)
}

struct LineParser<'a> {
    line: usize,
    schema: &'a Schema,
}

impl LineParser<'_> {
    fn syntax(&self, message: impl Into<String>) -> QdmrError {
        QdmrError::Syntax { line: self.line, message: message.into() }
    }

    fn parse_line(&self, line: &str) -> Result<(StepIndex, Op), QdmrError> {
        let rest = line.strip_prefix('#').ok_or_else(|| self.syntax("line must start with `#<k>`"))?;
        let digits = rest.chars().take_while(char::is_ascii_digit).count();
        let index: StepIndex = rest[..digits].parse().map_err(|_| self.syntax("missing step number"))?;
        let rest = rest[digits..].trim_start();
        let open = rest.find('[').ok_or_else(|| self.syntax("missing `[`"))?;
        let name = rest[..open].trim();
        let body = rest[open + 1..].trim_end();
        let body = body.strip_suffix(']').ok_or_else(|| self.syntax("missing closing `]`"))?;
        let args = self.split_args(body)?;
        let op = self.parse_op(name, &args)?;
        Ok((index, op))
    }

    fn split_args(&self, body: &str) -> Result<Vec<String>, QdmrError> {
        let mut args = Vec::new();
        let mut current = String::new();
        let mut in_quotes = false;
        let mut escaped = false;
        for c in body.chars() {
            if in_quotes {
                current.push(c);
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_quotes = false;
                }
                continue;
            }
            match c {
                '"' => {
                    in_quotes = true;
                    current.push(c);
                }
                ',' => args.push(std::mem::take(&mut current).trim().to_string()),
                c => current.push(c),
            }
        }
        if in_quotes {
            return Err(self.syntax("unterminated string"));
        }
        args.push(current.trim().to_string());
        if args.len() == 1 && args[0].is_empty() {
            args.clear();
        }
        if args.iter().any(String::is_empty) {
            return Err(self.syntax("empty argument"));
        }
        Ok(args)
    }

    fn parse_op(&self, name: &str, args: &[String]) -> Result<Op, QdmrError> {
        let upper = name.to_ascii_uppercase();
        let (args, distinct) = match args.last() {
            Some(a)
                if a.eq_ignore_ascii_case("distinct")
                    && matches!(upper.as_str(), "SELECT" | "PROJECT" | "COMPARATIVE") =>
            {
                (&args[..args.len() - 1], true)
            }
            _ => (args, false),
        };
        let arity = |op: &'static str, expected: &'static str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(QdmrError::BadArity { line: self.line, op, expected, got: args.len() })
            }
        };
        let op = match upper.as_str() {
            "SELECT" => {
                arity("SELECT", "1", args.len() == 1)?;
                Op::Select { subject: self.grounding(&args[0])?, distinct }
            }
            "PROJECT" => {
                arity("PROJECT", "2", args.len() == 2)?;
                let projection =
                    if args[0].eq_ignore_ascii_case("none") { None } else { Some(self.grounding(&args[0])?) };
                Op::Project { projection, subject: self.step_ref(&args[1])?, distinct }
            }
            "COMPARATIVE" => {
                arity("COMPARATIVE", "3 or 4", args.len() == 3 || args.len() == 4)?;
                let (comparator, value) = self.condition_value(&args[2])?;
                let column = match args.get(3) {
                    Some(a) => Some(self.column(a)?),
                    None => None,
                };
                Op::Comparative {
                    subject: self.step_ref(&args[0])?,
                    attr: self.step_ref(&args[1])?,
                    condition: Condition { comparator, column, value },
                    distinct,
                }
            }
            "SUPERLATIVE" => {
                arity("SUPERLATIVE", "3", args.len() == 3)?;
                let extremum = match args[0].to_ascii_lowercase().as_str() {
                    "min" => Extremum::Min,
                    "max" => Extremum::Max,
                    other => return Err(self.syntax(format!("SUPERLATIVE expects min or max, found `{other}`"))),
                };
                Op::Superlative { extremum, subject: self.step_ref(&args[1])?, attr: self.step_ref(&args[2])? }
            }
            "AGGREGATE" => {
                arity("AGGREGATE", "2", args.len() == 2)?;
                Op::Aggregate { aggregator: self.aggregator(&args[0])?, subject: self.step_ref(&args[1])? }
            }
            "GROUP" => {
                arity("GROUP", "3", args.len() == 3)?;
                Op::Group {
                    aggregator: self.aggregator(&args[0])?,
                    subject: self.step_ref(&args[1])?,
                    attr: self.step_ref(&args[2])?,
                }
            }
            "UNION" => {
                arity("UNION", "2 or more", args.len() >= 2)?;
                Op::Union { refs: args.iter().map(|a| self.step_ref(a)).collect::<Result<_, _>>()? }
            }
            "INTERSECTION" | "INTERSECT" => {
                arity("INTERSECTION", "3", args.len() == 3)?;
                Op::Intersect {
                    subject: self.step_ref(&args[0])?,
                    attrs: [self.step_ref(&args[1])?, self.step_ref(&args[2])?],
                }
            }
            "DISCARD" => {
                arity("DISCARD", "2", args.len() == 2)?;
                Op::Discard { subject: self.step_ref(&args[0])?, minus: self.step_ref(&args[1])? }
            }
            "SORT" => {
                arity("SORT", "2 or 3", args.len() == 2 || args.len() == 3)?;
                let direction = match args.get(2).map(|a| a.to_ascii_lowercase()) {
                    None => Direction::Asc,
                    Some(d) if d == "asc" => Direction::Asc,
                    Some(d) if d == "desc" => Direction::Desc,
                    Some(d) => return Err(self.syntax(format!("SORT direction must be asc or desc, found `{d}`"))),
                };
                Op::Sort { subject: self.step_ref(&args[0])?, attr: self.step_ref(&args[1])?, direction }
            }
            _ => return Err(self.syntax(format!("unknown operator `{name}`"))),
        };
        Ok(op)
    }

    fn step_ref(&self, arg: &str) -> Result<StepIndex, QdmrError> {
        arg.strip_prefix('#')
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| self.syntax(format!("expected a step reference, found `{arg}`")))
    }

    fn aggregator(&self, arg: &str) -> Result<AggregateSpec, QdmrError> {
        match Aggregator::from_name(arg) {
            Some(a) => Ok(AggregateSpec::Op(a)),
            None => Ok(AggregateSpec::Grounded(self.grounding(arg)?)),
        }
    }

    fn column(&self, arg: &str) -> Result<ColumnRef, QdmrError> {
        match self.grounding(arg)? {
            Grounding::Column(c) => Ok(c),
            _ => Err(self.syntax(format!("expected a `Table.Column` reference, found `{arg}`"))),
        }
    }

    /// Third COMPARATIVE argument: `[comparator] value-or-ref`.
    fn condition_value(&self, arg: &str) -> Result<(Option<Comparator>, CompareValue), QdmrError> {
        const GLYPHS: [(&str, Comparator); 9] = [
            (">=", Comparator::Ge),
            ("<=", Comparator::Le),
            ("!=", Comparator::Ne),
            ("\u{2265}", Comparator::Ge),
            ("\u{2264}", Comparator::Le),
            ("\u{2260}", Comparator::Ne),
            ("=", Comparator::Eq),
            (">", Comparator::Gt),
            ("<", Comparator::Lt),
        ];
        let mut found = GLYPHS.iter().find_map(|(g, c)| arg.strip_prefix(g).map(|rest| (*c, rest)));
        if found.is_none() {
            let lower = arg.to_ascii_lowercase();
            if lower.starts_with("like") && arg[4..].starts_with(|c: char| c.is_whitespace() || c == '"') {
                found = Some((Comparator::Like, &arg[4..]));
            }
        }
        match found {
            Some((comparator, rest)) => {
                let rest = rest.trim();
                if rest.is_empty() {
                    return Err(self.syntax("comparator without a value"));
                }
                let value = if rest.starts_with('#') {
                    CompareValue::Ref(self.step_ref(rest)?)
                } else {
                    CompareValue::Ground(Grounding::Value(self.value(rest)?))
                };
                Ok((Some(comparator), value))
            }
            None if arg.starts_with('#') => Ok((None, CompareValue::Ref(self.step_ref(arg)?))),
            None => Ok((None, CompareValue::Ground(self.grounding(arg)?))),
        }
    }

    /// A grounding slot: identifiers name tables or columns, anything else
    /// is a value literal.
    fn grounding(&self, arg: &str) -> Result<Grounding, QdmrError> {
        if arg.starts_with('#') {
            return Err(self.syntax(format!("a step reference is not allowed here: `{arg}`")));
        }
        if !is_entity_token(arg) {
            return Ok(Grounding::Value(self.value(arg)?));
        }
        let unknown = || QdmrError::UnknownEntity { line: self.line, name: arg.to_string() };
        match arg.split_once('.') {
            None => {
                let t = self.schema.table(arg).ok_or_else(unknown)?;
                Ok(Grounding::Table(t.name.clone()))
            }
            Some((t, c)) => self.schema.resolve_column(t.trim(), c.trim()).map(Grounding::Column).ok_or_else(unknown),
        }
    }

    /// A literal: quoted or bare, with an optional `@Table.Column` source.
    fn value(&self, arg: &str) -> Result<ValueRef, QdmrError> {
        let (lexical, quoted, rest) = match unquote_prefix(arg) {
            Some((s, used)) => (s, true, arg[used..].trim()),
            None => match arg.rfind('@') {
                Some(at) if is_entity_token(arg[at + 1..].trim()) => (arg[..at].trim().to_string(), false, &arg[at..]),
                _ => (arg.to_string(), false, ""),
            },
        };
        let source = if rest.is_empty() {
            None
        } else {
            let col =
                rest.strip_prefix('@').ok_or_else(|| self.syntax(format!("unexpected text after value: `{rest}`")))?;
            match self.grounding(col.trim())? {
                Grounding::Column(c) => Some(c),
                _ => return Err(self.syntax(format!("value source must be `Table.Column`, found `{col}`"))),
            }
        };
        let value = match &source {
            Some(c) => {
                let dt = self.schema.datatype(c).expect("resolved column");
                Value::parse_as(dt, &lexical).ok_or(QdmrError::BadValue {
                    line: self.line,
                    text: lexical.clone(),
                    datatype: dt,
                })?
            }
            None if quoted => Value::Text(lexical),
            None => Value::infer(&lexical),
        };
        Ok(ValueRef { value, source })
    }
}

/// `ident` or `ident.ident`, where identifiers start with a letter or `_`
/// and may contain spaces (folded away on lookup).
fn is_entity_token(s: &str) -> bool {
    let ident = |p: &str| {
        let p = p.trim();
        let mut chars = p.chars();
        matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
            && chars.all(|c| c.is_alphanumeric() || c == '_' || c == ' ')
    };
    match s.split_once('.') {
        None => ident(s),
        Some((a, b)) => ident(a) && ident(b),
    }
}
