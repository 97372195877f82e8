//! Query evaluation over a belief state, executability, and one-step
//! progression.
//!
//! A belief state holds the true inertial fluents only; everything else is
//! false. Statics come from the grounding and defined fluents are evaluated
//! on demand from their definitions.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ground::GroundedDomain;
use super::syntax::*;
use super::KrError;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefState {
    atoms: Vec<Atom>,
}

impl BeliefState {
    pub fn from_atoms(mut atoms: Vec<Atom>) -> Self {
        atoms.sort_unstable();
        atoms.dedup();
        BeliefState { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.atoms.binary_search(a).is_ok()
    }

    pub fn of_pred(&self, p: PredId) -> &[Atom] {
        let lo = self.atoms.partition_point(|a| a.pred < p);
        let hi = self.atoms.partition_point(|a| a.pred <= p);
        &self.atoms[lo..hi]
    }

    pub fn insert(&mut self, a: Atom) {
        if let Err(i) = self.atoms.binary_search(&a) {
            self.atoms.insert(i, a);
        }
    }

    pub fn remove(&mut self, a: &Atom) -> bool {
        match self.atoms.binary_search(a) {
            Ok(i) => {
                self.atoms.remove(i);
                true
            }
            Err(_) => false,
        }
    }
}

/// One ground instance of an axiom: the rule and a value per variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleInstance {
    pub rule: usize,
    pub bindings: Vec<Val>,
}

pub(crate) fn instantiate(p: &Pattern, b: &[Val]) -> Atom {
    let mut args = [Val::Nil; MAX_ARITY];
    for (i, t) in p.args.iter().enumerate() {
        args[i] = match t {
            Term::Const(v) => *v,
            Term::Var(v) => b[*v as usize],
        };
    }
    Atom { pred: p.pred, args }
}

/// Bind pattern variables against a ground atom; `None` when they clash.
fn unify(p: &Pattern, a: &Atom, b: &mut [Val]) -> Option<Vec<u16>> {
    if p.pred != a.pred {
        return None;
    }
    let mut set = Vec::new();
    for (i, t) in p.args.iter().enumerate() {
        let v = a.args[i];
        match t {
            Term::Const(c) => {
                if *c != v {
                    undo(b, &set);
                    return None;
                }
            }
            Term::Var(x) => {
                let slot = &mut b[*x as usize];
                if *slot == Val::Nil {
                    *slot = v;
                    set.push(*x);
                } else if *slot != v {
                    undo(b, &set);
                    return None;
                }
            }
        }
    }
    Some(set)
}

fn undo(b: &mut [Val], set: &[u16]) {
    for &x in set {
        b[x as usize] = Val::Nil;
    }
}

fn term_val(t: &Term, b: &[Val]) -> Val {
    match t {
        Term::Const(v) => *v,
        Term::Var(x) => b[*x as usize],
    }
}

/// Evaluation against one state, with a memo for ground defined atoms.
pub(crate) struct Eval<'a> {
    pub g: &'a GroundedDomain,
    pub s: &'a BeliefState,
    memo: RefCell<HashMap<Atom, bool>>,
}

type Cont<'c> = dyn FnMut(&mut [Val]) -> bool + 'c;

impl<'a> Eval<'a> {
    pub fn new(g: &'a GroundedDomain, s: &'a BeliefState) -> Self {
        Eval { g, s, memo: RefCell::new(HashMap::new()) }
    }

    /// Enumerate solutions of `body` from index `i`; `k` returns false to stop.
    /// Returns false when stopped.
    pub fn solve(&self, body: &[BodyLit], b: &mut [Val], k: &mut Cont<'_>) -> bool {
        let Some((lit, rest)) = body.split_first() else { return k(b) };
        match lit {
            BodyLit::Cmp(op, x, y) => {
                let (x, y) = (term_val(x, b), term_val(y, b));
                if x == Val::Nil || y == Val::Nil {
                    return true;
                }
                if (x == y) == (*op == CmpOp::Eq) {
                    self.solve(rest, b, k)
                } else {
                    true
                }
            }
            BodyLit::Neg(p) => {
                if self.exists(p, b) {
                    true
                } else {
                    self.solve(rest, b, k)
                }
            }
            BodyLit::Pos(p) => self.match_pos(p, b, &mut |b| self.solve(rest, b, k)),
        }
    }

    fn exists(&self, p: &Pattern, b: &mut [Val]) -> bool {
        let ground = p.args.iter().all(|t| term_val(t, b) != Val::Nil);
        if ground {
            return self.holds(&instantiate(p, b));
        }
        let mut found = false;
        self.match_pos(p, b, &mut |_| {
            found = true;
            false
        });
        found
    }

    /// Truth of a ground atom of any kind.
    pub fn holds(&self, a: &Atom) -> bool {
        let g = self.g;
        let pred = a.pred as usize;
        match g.desc.preds[pred].kind {
            PredKind::Inertial => self.s.contains(a),
            PredKind::Static => g.base.static_set.contains(a),
            PredKind::Sort => g.base.pred_sort[pred].is_some_and(|s| g.base.members[s].contains(&a.args[0])),
            PredKind::Builtin => {
                let mut out = Vec::new();
                let n = g.desc.arity(a.pred);
                g.eval_builtin(g.base.builtin[pred].unwrap(), &a.args[..n], &mut out);
                !out.is_empty()
            }
            PredKind::Defined => {
                if let Some(&v) = self.memo.borrow().get(a) {
                    return v;
                }
                let mut found = false;
                for &r in &g.base.defs[pred] {
                    let rule = &g.desc.rules[r];
                    let mut rb = vec![Val::Nil; rule.var_names.len()];
                    if unify(rule.head.as_ref().unwrap(), a, &mut rb).is_none() {
                        continue;
                    }
                    if !self.solve(&rule.body, &mut rb, &mut |_| false) {
                        found = true;
                        break;
                    }
                }
                self.memo.borrow_mut().insert(*a, found);
                found
            }
            PredKind::Action | PredKind::Exogenous | PredKind::False => false,
        }
    }

    /// Match a positive literal, binding its free variables for each solution.
    pub fn match_pos(&self, p: &Pattern, b: &mut [Val], k: &mut Cont<'_>) -> bool {
        let g = self.g;
        let pred = p.pred as usize;
        if p.args.iter().all(|t| term_val(t, b) != Val::Nil) {
            return if self.holds(&instantiate(p, b)) { k(b) } else { true };
        }
        let each = |atoms: &[Atom], b: &mut [Val], k: &mut Cont<'_>| -> bool {
            for a in atoms {
                if let Some(set) = unify(p, a, b) {
                    let go = k(b);
                    undo(b, &set);
                    if !go {
                        return false;
                    }
                }
            }
            true
        };
        match g.desc.preds[pred].kind {
            PredKind::Inertial => each(self.s.of_pred(p.pred), b, k),
            PredKind::Static => each(&g.base.statics[pred], b, k),
            PredKind::Sort => {
                let Some(s) = g.base.pred_sort[pred] else { return true };
                let atoms: Vec<Atom> = g.base.universes[s].iter().map(|v| Atom::new(p.pred, &[*v])).collect();
                each(&atoms, b, k)
            }
            PredKind::Builtin => {
                let n = p.args.len();
                let args: Vec<Val> = p.args.iter().map(|t| term_val(t, b)).collect();
                let mut out = Vec::new();
                g.eval_builtin(g.base.builtin[pred].unwrap(), &args[..n], &mut out);
                let atoms: Vec<Atom> = out.into_iter().map(|args| Atom { pred: p.pred, args }).collect();
                each(&atoms, b, k)
            }
            PredKind::Defined => {
                // collect distinct ground heads, then continue with each
                let mut heads = Vec::new();
                let call = instantiate(p, b);
                for &r in &g.base.defs[pred] {
                    let rule = &g.desc.rules[r];
                    let head = rule.head.as_ref().unwrap();
                    let mut rb = vec![Val::Nil; rule.var_names.len()];
                    // bind the rule's head variables from the bound call arguments
                    let mut ok = true;
                    for (i, t) in head.args.iter().enumerate() {
                        let v = call.args[i];
                        if v == Val::Nil {
                            continue;
                        }
                        match t {
                            Term::Const(c) => ok &= *c == v,
                            Term::Var(x) => {
                                let slot = &mut rb[*x as usize];
                                if *slot == Val::Nil {
                                    *slot = v;
                                } else {
                                    ok &= *slot == v;
                                }
                            }
                        }
                    }
                    if !ok {
                        continue;
                    }
                    self.solve(&rule.body, &mut rb, &mut |rb| {
                        heads.push(instantiate(head, rb));
                        true
                    });
                }
                heads.sort_unstable();
                heads.dedup();
                for h in &heads {
                    self.memo.borrow_mut().insert(*h, true);
                }
                each(&heads, b, k)
            }
            PredKind::Action | PredKind::Exogenous | PredKind::False => true,
        }
    }

    pub fn body_holds(&self, body: &[BodyLit], b: &mut [Val]) -> bool {
        !self.solve(body, b, &mut |_| false)
    }

    /// First solution of a body, as full bindings.
    pub fn first(&self, body: &[BodyLit], b: &mut [Val]) -> Option<Vec<Val>> {
        let mut out = None;
        self.solve(body, b, &mut |b| {
            out = Some(b.to_vec());
            false
        });
        out
    }
}

/// Why a state is inconsistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: RuleInstance,
    pub text: String,
}

impl GroundedDomain {
    pub(crate) fn solutions(&self, s: &BeliefState, body: &[BodyLit], mut b: Vec<Val>, k: &mut dyn FnMut(&[Val]) -> bool) {
        let e = Eval::new(self, s);
        e.solve(body, &mut b, &mut |b| k(b));
    }

    /// Truth of a ground atom in a belief state.
    pub fn holds(&self, s: &BeliefState, a: &Atom) -> bool {
        Eval::new(self, s).holds(a)
    }

    /// All ground instances of `pred` true in `s` whose arguments match the given
    /// values (`Val::Nil` for a free position).
    pub fn query(&self, s: &BeliefState, pred: PredId, args: &[Val]) -> Vec<Atom> {
        let p = Pattern {
            pred,
            args: (0..self.desc.arity(pred))
                .map(|i| match args.get(i) {
                    Some(v) if *v != Val::Nil => Term::Const(*v),
                    _ => Term::Var(i as u16),
                })
                .collect(),
        };
        let mut out = Vec::new();
        let e = Eval::new(self, s);
        let mut b = vec![Val::Nil; MAX_ARITY];
        e.match_pos(&p, &mut b, &mut |b| {
            out.push(instantiate(&p, b));
            true
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The executability condition that forbids `act` in `s`, if any. An
    /// action outside the grounding is reported with `rule == usize::MAX`.
    pub fn blocking_condition(&self, s: &BeliefState, act: &Atom) -> Option<RuleInstance> {
        if !self.in_grounding(act) {
            return Some(RuleInstance { rule: usize::MAX, bindings: Vec::new() });
        }
        let e = Eval::new(self, s);
        self.blocking_with(&e, act)
    }

    fn blocking_with(&self, e: &Eval<'_>, act: &Atom) -> Option<RuleInstance> {
        for &r in &self.base.impossible[act.pred as usize] {
            let rule = &self.desc.rules[r];
            let mut b = vec![Val::Nil; rule.var_names.len()];
            if unify(rule.action.as_ref().unwrap(), act, &mut b).is_none() {
                continue;
            }
            if let Some(bindings) = e.first(&rule.body, &mut b) {
                return Some(RuleInstance { rule: r, bindings });
            }
        }
        None
    }

    pub fn check_executable(&self, s: &BeliefState, act: &Atom) -> bool {
        self.blocking_condition(s, act).is_none()
    }

    /// Action instances proposed by the `candidates` rules for `actor`, in a
    /// stable order, that are executable in `s`.
    pub fn candidates(&self, s: &BeliefState, actor: Val) -> Vec<Atom> {
        let e = Eval::new(self, s);
        let mut out = Vec::new();
        for (p, rules) in self.base.candidates.iter().enumerate() {
            for &r in rules {
                let rule = &self.desc.rules[r];
                let act = rule.action.as_ref().unwrap();
                let mut b = vec![Val::Nil; rule.var_names.len()];
                if let Term::Var(x) = act.args[0] {
                    b[x as usize] = actor;
                } else if act.args[0] != Term::Const(actor) {
                    continue;
                }
                e.solve(&rule.body, &mut b, &mut |b| {
                    out.push(instantiate(act, b));
                    true
                });
            }
            let _ = p;
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|a| self.in_grounding(a) && self.blocking_with(&e, a).is_none());
        out
    }

    /// Direct effects of a set of concurrent actions: (positive, negative).
    fn effects(&self, s: &BeliefState, acts: &[Atom]) -> (Vec<Atom>, Vec<Atom>) {
        let e = Eval::new(self, s);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for act in acts {
            for &r in &self.base.causal[act.pred as usize] {
                let rule = &self.desc.rules[r];
                let mut b = vec![Val::Nil; rule.var_names.len()];
                if unify(rule.action.as_ref().unwrap(), act, &mut b).is_none() {
                    continue;
                }
                let head = rule.head.as_ref().unwrap();
                e.solve(&rule.body, &mut b, &mut |b| {
                    let a = instantiate(head, b);
                    if rule.head_negated {
                        neg.push(a);
                    } else {
                        pos.push(a);
                    }
                    true
                });
            }
        }
        (pos, neg)
    }

    /// Causal law instances of `act` whose conditions hold in `s`, with the
    /// effect each one produces and whether it makes the effect false.
    pub fn causal_instances(&self, s: &BeliefState, act: &Atom) -> Vec<(RuleInstance, Atom, bool)> {
        let e = Eval::new(self, s);
        let mut out = Vec::new();
        for &r in &self.base.causal[act.pred as usize] {
            let rule = &self.desc.rules[r];
            let mut b = vec![Val::Nil; rule.var_names.len()];
            if unify(rule.action.as_ref().unwrap(), act, &mut b).is_none() {
                continue;
            }
            let head = rule.head.as_ref().unwrap();
            e.solve(&rule.body, &mut b, &mut |b| {
                out.push((RuleInstance { rule: r, bindings: b.to_vec() }, instantiate(head, b), rule.head_negated));
                true
            });
        }
        out
    }

    /// A definition instance that makes the defined atom `a` true in `s`.
    pub fn support(&self, s: &BeliefState, a: &Atom) -> Option<RuleInstance> {
        let e = Eval::new(self, s);
        for &r in self.base.defs.get(a.pred as usize)? {
            let rule = &self.desc.rules[r];
            let mut b = vec![Val::Nil; rule.var_names.len()];
            if unify(rule.head.as_ref().unwrap(), a, &mut b).is_none() {
                continue;
            }
            if let Some(bindings) = e.first(&rule.body, &mut b) {
                return Some(RuleInstance { rule: r, bindings });
            }
        }
        None
    }

    /// Close a state under the positive-head state constraints.
    fn close(&self, mut s: BeliefState) -> BeliefState {
        loop {
            let mut new = Vec::new();
            {
                let e = Eval::new(self, &s);
                for &r in &self.base.pos_constraints {
                    let rule = &self.desc.rules[r];
                    let head = rule.head.as_ref().unwrap();
                    let mut b = vec![Val::Nil; rule.var_names.len()];
                    e.solve(&rule.body, &mut b, &mut |b| {
                        let a = instantiate(head, b);
                        if !s.contains(&a) {
                            new.push(a);
                        }
                        true
                    });
                }
            }
            if new.is_empty() {
                return s;
            }
            for a in new {
                s.insert(a);
            }
        }
    }

    /// A negative-head constraint that rules `a` out in `s`, if any.
    fn excluded_by(&self, e: &Eval<'_>, a: &Atom) -> Option<RuleInstance> {
        for &r in &self.base.neg_constraints[a.pred as usize] {
            let rule = &self.desc.rules[r];
            let mut b = vec![Val::Nil; rule.var_names.len()];
            if unify(rule.head.as_ref().unwrap(), a, &mut b).is_none() {
                continue;
            }
            if let Some(bindings) = e.first(&rule.body, &mut b) {
                return Some(RuleInstance { rule: r, bindings });
            }
        }
        None
    }

    /// First violated state constraint or denial.
    pub fn violation(&self, s: &BeliefState) -> Option<Violation> {
        let e = Eval::new(self, s);
        for a in s.atoms() {
            if let Some(instance) = self.excluded_by(&e, a) {
                return Some(self.violation_of(instance));
            }
        }
        for &r in &self.base.denials {
            let rule = &self.desc.rules[r];
            let mut b = vec![Val::Nil; rule.var_names.len()];
            if let Some(bindings) = e.first(&rule.body, &mut b) {
                return Some(self.violation_of(RuleInstance { rule: r, bindings }));
            }
        }
        None
    }

    fn violation_of(&self, instance: RuleInstance) -> Violation {
        let text = self.instance_text(&instance);
        Violation { instance, text }
    }

    /// Successor of `s` under the concurrent actions `acts`: direct effects,
    /// their closure, and every other fluent carried over unless a state
    /// constraint rules it out given the effects. Fails with the violated
    /// constraint when the result is inconsistent.
    pub fn progress(&self, s: &BeliefState, acts: &[Atom]) -> Result<BeliefState, KrError> {
        let (pos, neg) = self.effects(s, acts);
        if let Some(a) = pos.iter().find(|a| neg.contains(a)) {
            return Err(KrError::Inconsistent(format!("{} is both caused and cancelled", self.desc.atom_text(a))));
        }
        let p1 = self.close(BeliefState::from_atoms(pos));
        let mut next = p1.clone();
        {
            let e = Eval::new(self, &p1);
            for a in s.atoms() {
                if p1.contains(a) || neg.contains(a) {
                    continue;
                }
                if self.excluded_by(&e, a).is_none() {
                    next.insert(*a);
                }
            }
        }
        let next = self.close(next);
        match self.violation(&next) {
            Some(v) => Err(KrError::Inconsistent(v.text)),
            None => Ok(next),
        }
    }

    /// Whether every body literal of a rule instance holds in `s`.
    pub fn instance_holds(&self, s: &BeliefState, inst: &RuleInstance) -> bool {
        let Some(rule) = self.desc.rules.get(inst.rule) else { return false };
        if inst.bindings.len() != rule.var_names.len() {
            return false;
        }
        let mut b = inst.bindings.clone();
        Eval::new(self, s).body_holds(&rule.body, &mut b)
    }

    pub fn pattern_text(&self, p: &Pattern, b: &[Val], names: &[String]) -> String {
        let d = self.desc.decl(p.pred);
        if p.args.is_empty() {
            return d.name.clone();
        }
        let args: Vec<String> = p
            .args
            .iter()
            .map(|t| match t {
                Term::Const(v) => self.desc.val_name(*v),
                Term::Var(x) => match b.get(*x as usize) {
                    Some(v) if *v != Val::Nil => self.desc.val_name(*v),
                    _ => names[*x as usize].clone(),
                },
            })
            .collect();
        format!("{}({})", d.name, args.join(","))
    }

    /// Axiom text with variables replaced by their bindings.
    pub fn instance_text(&self, inst: &RuleInstance) -> String {
        let Some(rule) = self.desc.rules.get(inst.rule) else { return "outside the grounding".into() };
        let b = &inst.bindings;
        let n = &rule.var_names;
        let lit = |l: &BodyLit| match l {
            BodyLit::Pos(p) => self.pattern_text(p, b, n),
            BodyLit::Neg(p) => format!("not {}", self.pattern_text(p, b, n)),
            BodyLit::Cmp(op, x, y) => {
                let t = |t: &Term| match t {
                    Term::Const(v) => self.desc.val_name(*v),
                    Term::Var(v) => match b.get(*v as usize) {
                        Some(v) if *v != Val::Nil => self.desc.val_name(*v),
                        _ => n[*v as usize].clone(),
                    },
                };
                format!("{} {} {}", t(x), if *op == CmpOp::Eq { "=" } else { "!=" }, t(y))
            }
        };
        let body: Vec<String> = rule.body.iter().map(lit).collect();
        let body = if body.is_empty() { String::new() } else { format!(" if {}", body.join(", ")) };
        let head = |neg: bool| {
            let h = self.pattern_text(rule.head.as_ref().unwrap(), b, n);
            if neg {
                format!("-{h}")
            } else {
                h
            }
        };
        match rule.kind {
            RuleKind::Causal => format!(
                "{} causes {}{body}",
                self.pattern_text(rule.action.as_ref().unwrap(), b, n),
                head(rule.head_negated)
            ),
            RuleKind::Impossible => format!("impossible {}{body}", self.pattern_text(rule.action.as_ref().unwrap(), b, n)),
            RuleKind::Candidates => format!("candidates {}{body}", self.pattern_text(rule.action.as_ref().unwrap(), b, n)),
            RuleKind::Denial => format!("false{body}"),
            RuleKind::Default => format!("initial default {}{body}", head(rule.head_negated)),
            RuleKind::Goal => {
                let mut p = rule.action.clone().unwrap();
                p.pred = 0;
                let args: Vec<String> = p
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Const(v) => self.desc.val_name(*v),
                        Term::Var(x) => b.get(*x as usize).filter(|v| **v != Val::Nil).map_or(n[*x as usize].clone(), |v| self.desc.val_name(*v)),
                    })
                    .collect();
                format!("goal {}({}){body}", rule.goal.as_deref().unwrap_or("goal"), args.join(","))
            }
            _ => format!("{}{body}", head(rule.head_negated)),
        }
    }
}
