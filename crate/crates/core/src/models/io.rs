//! Flat text layout for a model library.
//!
//! ```text
//! adhoc-models 1
//! type <name> <guard|attacker> <train_count>
//! expert <final 0|1> <cue count>
//! cue <feature> <le|eq> <value> <exit_on 0|1> <exit_label 0|1>
//! combiner <node count>
//! leaf <action>
//! split <input> <zero child> <one child>
//! end
//! ```
//!
//! Each `type` line is followed by eight `expert` blocks and one `combiner`
//! block. Floats use the shortest round-trip representation.

use std::io::{BufRead, Write};

use super::{AgentType, Combiner, Cue, FFTree, ModelLibrary, Node, StackedModel, Team, Test};
use crate::env::ActionKind;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "adhoc-models";

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported model file version {0}")]
    Version(u32),
}

pub fn write_library<W: Write>(mut out: W, lib: &ModelLibrary) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    for t in &lib.types {
        writeln!(out, "type {} {} {}", t.name, t.team.name(), t.model.train_count)?;
        for e in &t.model.experts {
            writeln!(out, "expert {} {}", e.final_label as u8, e.cues.len())?;
            for c in &e.cues {
                let (op, v) = match c.test {
                    Test::AtMost(v) => ("le", v),
                    Test::Is(v) => ("eq", v),
                };
                writeln!(out, "cue {} {op} {v} {} {}", c.feature, c.exit_on as u8, c.exit_label as u8)?;
            }
        }
        writeln!(out, "combiner {}", t.model.combiner.nodes.len())?;
        for n in &t.model.combiner.nodes {
            match n {
                Node::Leaf(a) => writeln!(out, "leaf {}", a.name())?,
                Node::Split { input, zero, one } => writeln!(out, "split {input} {zero} {one}")?,
            }
        }
    }
    writeln!(out, "end")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    n: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_fields(&mut self) -> Result<Vec<String>, ModelFileError> {
        loop {
            self.n += 1;
            let line = self.inner.next().ok_or_else(|| self.err("unexpected end of file"))??;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(t.split_whitespace().map(str::to_string).collect());
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> ModelFileError {
        ModelFileError::Parse { line: self.n, msg: msg.into() }
    }

    fn expect(&mut self, tag: &str, arity: usize) -> Result<Vec<String>, ModelFileError> {
        let f = self.next_fields()?;
        if f.first().map(String::as_str) != Some(tag) || f.len() != arity + 1 {
            return Err(self.err(format!("expected `{tag}` with {arity} fields")));
        }
        Ok(f)
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, ModelFileError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn flag(&self, s: &str) -> Result<bool, ModelFileError> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.err(format!("bad flag `{s}`"))),
        }
    }
}

pub fn read_library<R: BufRead>(input: R) -> Result<ModelLibrary, ModelFileError> {
    let mut l = Lines { inner: input.lines(), n: 0 };
    let head = l.next_fields()?;
    if head.len() != 2 || head[0] != MAGIC {
        return Err(l.err("not a model file"));
    }
    let version: u32 = l.num(&head[1])?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::Version(version));
    }
    let mut lib = ModelLibrary::default();
    loop {
        let f = l.next_fields()?;
        match f[0].as_str() {
            "end" => return Ok(lib),
            "type" if f.len() == 4 => {
                let team = match f[2].as_str() {
                    "guard" => Team::Guards,
                    "attacker" => Team::Attackers,
                    t => return Err(l.err(format!("bad team `{t}`"))),
                };
                let train_count = l.num(&f[3])?;
                let mut experts = Vec::new();
                for _ in 0..ActionKind::COUNT {
                    let e = l.expect("expert", 2)?;
                    let final_label = l.flag(&e[1])?;
                    let n: usize = l.num(&e[2])?;
                    let mut cues = Vec::with_capacity(n);
                    for _ in 0..n {
                        let c = l.expect("cue", 5)?;
                        let feature: usize = l.num(&c[1])?;
                        if feature >= crate::features::N_FEATURES {
                            return Err(l.err(format!("feature index {feature} out of range")));
                        }
                        let v: f64 = l.num(&c[3])?;
                        let test = match c[2].as_str() {
                            "le" => Test::AtMost(v),
                            "eq" => Test::Is(v),
                            op => return Err(l.err(format!("bad test `{op}`"))),
                        };
                        cues.push(Cue { feature, test, exit_on: l.flag(&c[4])?, exit_label: l.flag(&c[5])? });
                    }
                    experts.push(FFTree { cues, final_label });
                }
                let c = l.expect("combiner", 1)?;
                let n: usize = l.num(&c[1])?;
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let f = l.next_fields()?;
                    match (f[0].as_str(), f.len()) {
                        ("leaf", 2) => {
                            let a = ActionKind::parse(&f[1]).ok_or_else(|| l.err(format!("bad action `{}`", f[1])))?;
                            nodes.push(Node::Leaf(a));
                        }
                        ("split", 4) => {
                            let (input, zero, one) = (l.num(&f[1])?, l.num(&f[2])?, l.num(&f[3])?);
                            if input >= super::COMBINER_ARITY || zero >= n || one >= n {
                                return Err(l.err("combiner index out of range"));
                            }
                            nodes.push(Node::Split { input, zero, one });
                        }
                        _ => return Err(l.err("expected `leaf` or `split`")),
                    }
                }
                if nodes.is_empty() {
                    return Err(l.err("empty combiner"));
                }
                let model = StackedModel { experts, combiner: Combiner { nodes }, train_count };
                lib.types.push(AgentType { name: f[1].clone(), team, model });
            }
            other => return Err(l.err(format!("unexpected `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Example, FeatureVector, N_FEATURES};
    use crate::models::learn_stacked;

    #[test]
    fn round_trip() {
        let data: Vec<Example> = (0..60)
            .map(|i| {
                let mut v = [0.0; N_FEATURES];
                v[3] = i as f64 * 0.1;
                v[4] = (i % 4) as f64;
                let action = if i % 4 == 1 { ActionKind::RotateCcw } else { ActionKind::ALL[i % 3] };
                Example { features: FeatureVector(v), action }
            })
            .collect();
        let mut lib = ModelLibrary::default();
        lib.add("guard_p1", Team::Guards, learn_stacked(&data).unwrap());
        lib.add("attacker_p2", Team::Attackers, learn_stacked(&data[..20]).unwrap());
        let mut buf = Vec::new();
        write_library(&mut buf, &lib).unwrap();
        let back = read_library(&buf[..]).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn rejects_other_versions_and_garbage() {
        assert!(matches!(read_library(&b"adhoc-models 9\nend\n"[..]), Err(ModelFileError::Version(9))));
        assert!(read_library(&b"hello\n"[..]).is_err());
        assert!(read_library(&b"adhoc-models 1\ntype x guard 3\n"[..]).is_err());
    }
}
