//! The constrained question grammar.

use serde::{Deserialize, Serialize};

use super::ExplainError;

pub const QUERY_GRAMMAR: &str = "  why [did you] <action> in step <i>\n  why [did you] not <action> in step <i>\n  why belief <literal> at step <i>\nwhere <action> is move [to] (x,y) | rotate [to] <dir> | shoot <agent> | wait";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    WhyAction,
    WhyNotAction,
    WhyBelief,
}

/// An action of the ad hoc agent named without the actor: `move(3,14)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAction {
    pub name: String,
    pub args: Vec<String>,
}

impl std::fmt::Display for QueryAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.args.is_empty() {
            f.write_str(&self.name)
        } else {
            write!(f, "{}({})", self.name, self.args.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub action: Option<QueryAction>,
    pub literal: Option<String>,
    pub step: u32,
}

fn verb(w: &str) -> Option<&'static str> {
    Some(match w {
        "move" | "moved" | "go" | "went" => "move",
        "rotate" | "rotated" | "turn" | "turned" => "rotate",
        "shoot" | "shot" => "shoot",
        "wait" | "waited" | "noop" => "wait",
        _ => return None,
    })
}

fn parse_action(words: &[&str]) -> Option<QueryAction> {
    let joined = words.join(" ");
    // the call form: move(3,14)
    if let Some((name, args)) = super::split_call(&joined.replace(' ', "")) {
        if let Some(v) = verb(&name) {
            if joined.contains('(') {
                return Some(QueryAction { name: v.into(), args });
            }
        }
    }
    let (first, rest) = words.split_first()?;
    let name = verb(first)?;
    let rest: Vec<&str> = rest.iter().copied().filter(|w| !matches!(*w, "to" | "at" | "towards" | "face")).collect();
    let arg = rest.join("");
    let args: Vec<String> = arg
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect();
    let ok = match name {
        "move" => args.len() == 2,
        "rotate" | "shoot" => args.len() == 1,
        _ => args.is_empty(),
    };
    ok.then(|| QueryAction { name: name.into(), args })
}

/// Parse a question. Case and a trailing `?` are ignored.
pub fn parse_query(text: &str) -> Result<Query, ExplainError> {
    let err = || ExplainError::Query { text: text.to_string(), grammar: QUERY_GRAMMAR };
    let lower = text.trim().trim_end_matches(['?', '.', '!']).to_lowercase();
    let lower = lower.replace("didn't", "did not").replace("( ", "(").replace(" )", ")");
    let words: Vec<&str> = lower.split_whitespace().collect();
    if words.first() != Some(&"why") {
        return Err(err());
    }
    // trailing "in step N" / "at step N"
    let n = words.len();
    if n < 4 || words[n - 2] != "step" || !matches!(words[n - 3], "in" | "at") {
        return Err(err());
    }
    let step: u32 = words[n - 1].parse().map_err(|_| err())?;
    let mut body = &words[1..n - 3];
    if body.first() == Some(&"belief") {
        let lit = body[1..].join("");
        if lit.is_empty() {
            return Err(err());
        }
        return Ok(Query { kind: QueryKind::WhyBelief, action: None, literal: Some(lit), step });
    }
    if body.starts_with(&["did", "you"]) {
        body = &body[2..];
    } else if body.first() == Some(&"did") {
        body = &body[1..];
    }
    let mut kind = QueryKind::WhyAction;
    if body.first() == Some(&"not") {
        kind = QueryKind::WhyNotAction;
        body = &body[1..];
    }
    if body.starts_with(&["you", "not"]) {
        kind = QueryKind::WhyNotAction;
        body = &body[2..];
    } else if body.first() == Some(&"you") {
        body = &body[1..];
    }
    let action = parse_action(body).ok_or_else(err)?;
    Ok(Query { kind, action: Some(action), literal: None, step })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(name: &str, args: &[&str]) -> Option<QueryAction> {
        Some(QueryAction { name: name.into(), args: args.iter().map(|s| s.to_string()).collect() })
    }

    #[test]
    fn surface_forms() {
        let q = parse_query("Why did you move to (3,14) in step 1?").unwrap();
        assert_eq!(q, Query { kind: QueryKind::WhyAction, action: act("move", &["3", "14"]), literal: None, step: 1 });
        let q = parse_query("Why did you not move to (5,13) in step 4?").unwrap();
        assert_eq!(q.kind, QueryKind::WhyNotAction);
        assert_eq!(q.action, act("move", &["5", "13"]));
        let q = parse_query("why not move to (5, 13) in step 4").unwrap();
        assert_eq!((q.kind, q.step), (QueryKind::WhyNotAction, 4));
        assert_eq!(q.action, act("move", &["5", "13"]));
        let q = parse_query("WHY shoot attacker2 in step 7").unwrap();
        assert_eq!(q.action, act("shoot", &["attacker2"]));
        let q = parse_query("why not rotate(e) at step 2").unwrap();
        assert_eq!(q.action, act("rotate", &["e"]));
        let q = parse_query("why belief in(ah,3,14) at step 2").unwrap();
        assert_eq!(q.literal.as_deref(), Some("in(ah,3,14)"));
        let q = parse_query("why belief -shoots(attacker1, ah) at step 0").unwrap();
        assert_eq!(q.literal.as_deref(), Some("-shoots(attacker1,ah)"));
    }

    #[test]
    fn rejects_what_it_cannot_read() {
        for t in ["", "why", "move to (3,14) in step 1", "why fly to (1,1) in step 2", "why move to (1) in step 1", "why move to (1,2) in step x"] {
            assert!(matches!(parse_query(t), Err(ExplainError::Query { .. })), "{t}");
        }
    }
}
