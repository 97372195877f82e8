//! Support chains of active axioms and their rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::query::{parse_query, Query, QueryAction, QueryKind};
use super::{parse_literal, parse_state, parse_val, ExplainError, Reasoning, Trace};
use crate::agent::DecisionKind;
use crate::env::{parse_key_values, AgentId, WorldState};
use crate::kr::syntax::{BodyLit, PredKind};
use crate::kr::{
    default_instances, fort, ground, plan, Atom, BeliefState, DomainDescription, Goal, Granularity, GroundedDomain,
    PlanOptions, RuleInstance, Timeline, Val,
};

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.txt");

/// A cited axiom instance and the snapshot it is active in: state `offset`
/// of the plan made at `step` (0 is the belief state itself).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomRef {
    pub step: u32,
    pub offset: usize,
    pub rule: usize,
    pub bindings: Vec<String>,
    pub text: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRole {
    Goal,
    GoalHolds,
    Effect,
    Blocked,
    Subgoal,
    OutOfRange,
    Delayed,
    Caused,
    Defined,
    Default,
    Retracted,
    Observed,
    Static,
    Absent,
    Fallback,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub role: LinkRole,
    pub literal: Option<String>,
    pub axiom: Option<AxiomRef>,
    /// Extra slot values for rendering.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slots: BTreeMap<String, String>,
}

impl Link {
    fn new(role: LinkRole) -> Self {
        Link { role, literal: None, axiom: None, slots: BTreeMap::new() }
    }

    fn lit(mut self, l: String) -> Self {
        self.literal = Some(l);
        self
    }

    fn ax(mut self, a: AxiomRef) -> Self {
        self.axiom = Some(a);
        self
    }

    fn slot(mut self, k: &str, v: impl Into<String>) -> Self {
        self.slots.insert(k.into(), v.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub query: Query,
    pub literals: Vec<String>,
    pub axioms: Vec<AxiomRef>,
    pub links: Vec<Link>,
    pub text: String,
    /// First step of the run of ticks that pursued the same goal.
    pub goal_since: Option<u32>,
}

/// One tick as the reasoner saw it.
#[derive(Clone, Debug)]
pub struct StepView {
    pub step: u32,
    pub me: Val,
    /// Belief state followed by the states along the plan.
    pub states: Vec<BeliefState>,
    pub plan: Vec<Option<Atom>>,
    pub exogenous: Vec<Vec<Atom>>,
    pub goal: Option<Goal>,
    pub action: Option<Atom>,
    pub kind: DecisionKind,
}

fn axiom(g: &GroundedDomain, inst: &RuleInstance, step: u32, offset: usize) -> AxiomRef {
    AxiomRef {
        step,
        offset,
        rule: inst.rule,
        bindings: inst.bindings.iter().map(|v| if *v == Val::Nil { "_".into() } else { g.desc.val_name(*v) }).collect(),
        text: g.instance_text(inst),
    }
}

/// The literal an executability condition hinges on: its first negated
/// condition, or else its first condition that is not a sort check.
fn blocking_literal(g: &GroundedDomain, inst: &RuleInstance) -> Option<String> {
    let rule = g.desc.rules.get(inst.rule)?;
    let n = &rule.var_names;
    let text = |l: &BodyLit| match l {
        BodyLit::Neg(p) => Some(format!("-{}", g.pattern_text(p, &inst.bindings, n))),
        BodyLit::Pos(p) if g.desc.decl(p.pred).kind != PredKind::Sort => Some(g.pattern_text(p, &inst.bindings, n)),
        _ => None,
    };
    rule.body.iter().filter(|l| matches!(l, BodyLit::Neg(_))).find_map(text).or_else(|| rule.body.iter().find_map(text))
}

fn shoot_target(g: &GroundedDomain, goal: &Goal) -> Option<Val> {
    (goal.name == "shoot_target").then(|| goal.args.first().copied()).flatten().filter(|v| g.in_sort("agent", *v))
}

/// Support for the action executed in `view`: the goal it serves, its
/// effects, and for a target not yet in range, the failing shot condition
/// and the cell from which the planned shot is taken.
pub fn action_chain(g: &GroundedDomain, view: &StepView) -> Vec<Link> {
    let s0 = &view.states[0];
    let mut links = Vec::new();
    match (&view.goal, view.kind) {
        (Some(goal), DecisionKind::Planned | DecisionKind::GoalHolds) => {
            let last = view.states.len() - 1;
            if let Some(inst) = g.goal_instance(&view.states[last], goal) {
                let role = if view.kind == DecisionKind::GoalHolds { LinkRole::GoalHolds } else { LinkRole::Goal };
                links.push(Link::new(role).lit(g.goal_text(goal)).ax(axiom(g, &inst, view.step, last)));
            }
        }
        (_, DecisionKind::Fallback) => links.push(Link::new(LinkRole::Fallback)),
        _ => links.push(Link::new(LinkRole::Error)),
    }
    if let Some(a) = &view.action {
        for (inst, eff, neg) in g.causal_instances(s0, a) {
            let lit = format!("{}{}", if neg { "-" } else { "" }, g.desc.atom_text(&eff));
            links.push(Link::new(LinkRole::Effect).lit(lit).ax(axiom(g, &inst, view.step, 0)));
        }
    }
    let Some(goal) = &view.goal else { return links };
    let Some(target) = shoot_target(g, goal) else { return links };
    let Ok(shoot) = g.atom("shoot", &[view.me, target]) else { return links };
    if view.action == Some(shoot) {
        return links;
    }
    if let Some(b) = g.blocking_condition(s0, &shoot).filter(|b| b.rule != usize::MAX) {
        if let Some(lit) = blocking_literal(g, &b) {
            links.push(Link::new(LinkRole::Blocked).lit(lit).ax(axiom(g, &b, view.step, 0)));
        }
    }
    if let Some(k) = view.plan.iter().position(|a| *a == Some(shoot)) {
        let s = &view.states[k];
        let in_range = g.atom("in_range", &[view.me, target]);
        if let (Ok(r), Some(c)) = (in_range, fort::cell_of(g, s, view.me)) {
            if let Some(inst) = g.support(s, &r) {
                let cell = g.atom("in", &[view.me, Val::Int(c.x), Val::Int(c.y)]).expect("in/3 is declared");
                links.push(Link::new(LinkRole::Subgoal).lit(g.desc.atom_text(&cell)).ax(axiom(g, &inst, view.step, k)));
            }
        }
    }
    links
}

/// Key = value answer templates.
#[derive(Clone, Debug, PartialEq)]
pub struct Templates(pub BTreeMap<String, String>);

impl Templates {
    pub fn parse(text: &str) -> Result<Templates, ExplainError> {
        parse_key_values(text).map(Templates).map_err(|e| ExplainError::Trace(format!("templates: {e}")))
    }

    pub fn bundled() -> Templates {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }

    fn get<'a>(&'a self, key: &'a str) -> &'a str {
        self.0.get(key).map_or(key, String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    /// Fill `{name}` slots from `named` and `{i}` slots from `args`.
    pub fn fill(&self, key: &str, named: &BTreeMap<String, String>, args: &[String]) -> String {
        let mut out = self.get(key).to_string();
        for (k, v) in named {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        for (i, a) in args.iter().enumerate() {
            out = out.replace(&format!("{{{i}}}"), a);
        }
        out
    }
}

fn call_args(text: &str) -> (String, Vec<String>) {
    super::split_call(text.trim_start_matches('-')).unwrap_or_default()
}

pub struct Explainer {
    pub trace: Trace,
    pub templates: Templates,
    base: GroundedDomain,
    me: Val,
    me_id: AgentId,
}

impl Explainer {
    pub fn new(trace: Trace, desc: &DomainDescription, templates: Templates) -> Result<Self, ExplainError> {
        let base = ground(desc, &trace.context())?;
        let na = trace
            .header
            .agents
            .iter()
            .find(|a| a.sort == "ah_agent")
            .ok_or_else(|| ExplainError::NotFound("the trace has no ad hoc guard".into()))?;
        let me = base.agent_val(na.id).ok_or_else(|| ExplainError::Trace("ad hoc guard is not grounded".into()))?;
        Ok(Explainer { me_id: na.id, trace, templates, base, me })
    }

    fn reasoning(&self, step: u32) -> Result<&Reasoning, ExplainError> {
        let s = self.trace.step(step).ok_or_else(|| ExplainError::NotFound(format!("step {step} is not in the trace")))?;
        s.reasoning.as_ref().ok_or_else(|| ExplainError::NotFound(format!("no reasoning was recorded at step {step}")))
    }

    /// The domain at the granularity used at `step`.
    pub fn domain_at(&self, step: u32) -> Result<GroundedDomain, ExplainError> {
        let r = self.reasoning(step)?;
        let mut gr = Granularity::all_coarse(&self.base.zones);
        for &z in &r.fine_zones {
            if z < gr.fine.len() {
                gr.fine[z] = true;
            }
        }
        Ok(self.base.with_granularity(gr))
    }

    pub fn view(&self, step: u32) -> Result<(GroundedDomain, StepView), ExplainError> {
        let r = self.reasoning(step)?;
        let g = self.domain_at(step)?;
        let mut states = vec![parse_state(&g, &r.belief)?];
        for s in &r.plan_states {
            states.push(parse_state(&g, s)?);
        }
        let atom = |t: &str| parse_literal(&g, t).map(|(a, _)| a);
        let plan = r
            .plan
            .iter()
            .map(|t| if t == "wait" { Ok(None) } else { atom(t).map(Some) })
            .collect::<Result<Vec<_>, _>>()?;
        let exogenous = r
            .plan_exogenous
            .iter()
            .map(|v| v.iter().map(|t| atom(t)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let goal = match &r.goal {
            Some(t) => {
                let (name, args) = call_args(t);
                Some(Goal::new(&name, args.iter().map(|a| parse_val(&g, a)).collect::<Result<_, _>>()?))
            }
            None => None,
        };
        let action = r.action.as_deref().map(atom).transpose()?;
        let view = StepView { step, me: self.me, states, plan, exogenous, goal, action, kind: r.decision };
        Ok((g, view))
    }

    pub fn timeline(&self, g: &GroundedDomain, step: u32) -> Result<Timeline, ExplainError> {
        let r = self.reasoning(step)?;
        let steps = r
            .timeline
            .iter()
            .map(|v| v.iter().map(|t| parse_literal(g, t).map(|(a, _)| a)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Timeline { steps })
    }

    /// Snapshot an axiom reference points into.
    pub fn snapshot(&self, a: &AxiomRef) -> Result<(GroundedDomain, BeliefState), ExplainError> {
        let (g, view) = self.view(a.step)?;
        let s = view
            .states
            .get(a.offset)
            .cloned()
            .ok_or_else(|| ExplainError::NotFound(format!("state {} of step {}", a.offset, a.step)))?;
        Ok((g, s))
    }

    /// Independent check that every condition of a cited axiom instance holds
    /// in the snapshot it refers to.
    pub fn recheck(&self, a: &AxiomRef) -> Result<bool, ExplainError> {
        let (g, s) = self.snapshot(a)?;
        let bindings = a.bindings.iter().map(|b| parse_val(&g, b)).collect::<Result<Vec<_>, _>>()?;
        Ok(g.instance_holds(&s, &RuleInstance { rule: a.rule, bindings }))
    }

    pub fn ask(&self, text: &str) -> Result<Answer, ExplainError> {
        self.answer(&parse_query(text)?)
    }

    fn goal_since(&self, step: u32) -> Option<u32> {
        let goal = self.reasoning(step).ok()?.goal.clone()?;
        let mut since = step;
        while since > 0 {
            match self.trace.step(since - 1).and_then(|s| s.reasoning.as_ref()) {
                Some(r) if r.goal.as_ref() == Some(&goal) => since -= 1,
                _ => break,
            }
        }
        Some(since)
    }

    /// Atom for an action of the ad hoc guard named in a query.
    fn query_atom(&self, g: &GroundedDomain, q: &QueryAction) -> Result<Option<Atom>, ExplainError> {
        if q.name == "wait" {
            return Ok(None);
        }
        let mut vals = vec![self.me];
        for a in &q.args {
            vals.push(parse_val(g, a)?);
        }
        Ok(Some(g.atom(&q.name, &vals).map_err(|e| ExplainError::NotFound(e.to_string()))?))
    }

    fn action_phrase(&self, g: &GroundedDomain, a: Option<&Atom>, past: bool) -> String {
        let tense = if past { "past" } else { "base" };
        match a {
            None => self.templates.get(&format!("{tense}.wait")).to_string(),
            Some(a) => {
                let (name, args) = call_args(&g.desc.atom_text(a));
                self.templates.fill(&format!("{tense}.{name}"), &BTreeMap::new(), &args)
            }
        }
    }

    fn goal_phrase(&self, goal_text: &str) -> String {
        let (name, args) = call_args(goal_text);
        self.templates.fill(&format!("goal.{name}"), &BTreeMap::new(), &args)
    }

    fn reason(&self, l: &Link, goal: &str) -> Option<String> {
        let lit = l.literal.clone().unwrap_or_default();
        let (pred, args) = call_args(&lit);
        let mut named = l.slots.clone();
        named.insert("goal".into(), goal.to_string());
        named.insert("literal".into(), lit.clone());
        if let Some(a) = &l.axiom {
            named.entry("axiom".into()).or_insert_with(|| a.text.clone());
        }
        let key = match l.role {
            LinkRole::Goal => "reason.goal".to_string(),
            LinkRole::GoalHolds => "reason.goal_holds".to_string(),
            LinkRole::Subgoal => "reason.subgoal".to_string(),
            LinkRole::Fallback => "reason.fallback".to_string(),
            LinkRole::Error => "reason.error".to_string(),
            LinkRole::Blocked => {
                let k = format!("reason.blocked.{pred}");
                if self.templates.has(&k) { k } else { "reason.blocked".into() }
            }
            LinkRole::OutOfRange => "reason.out_of_range".into(),
            LinkRole::Delayed => {
                if named.contains_key("n") {
                    "reason.delayed".into()
                } else if named.contains_key("no_better") {
                    "reason.no_better".into()
                } else if named.contains_key("inconsistent") {
                    "reason.inconsistent".into()
                } else {
                    "reason.unreachable".into()
                }
            }
            LinkRole::Caused => "reason.caused".into(),
            LinkRole::Defined => "reason.defined".into(),
            LinkRole::Default => "reason.default".into(),
            LinkRole::Retracted => "reason.retracted".into(),
            LinkRole::Observed => "reason.observed".into(),
            LinkRole::Static => "reason.static".into(),
            LinkRole::Absent => "reason.absent".into(),
            LinkRole::Effect => return None,
        };
        Some(self.templates.fill(&key, &named, &args))
    }

    fn finish(&self, query: &Query, links: Vec<Link>, key: &str, named: BTreeMap<String, String>, goal: &str) -> Answer {
        let has_subgoal = links.iter().any(|l| l.role == LinkRole::Subgoal);
        let reasons: Vec<String> = links
            .iter()
            .filter(|l| !(has_subgoal && l.role == LinkRole::Goal))
            .filter_map(|l| self.reason(l, goal))
            .collect();
        let mut named = named;
        named.insert("reasons".into(), reasons.join(" and "));
        let text = self.templates.fill(key, &named, &[]);
        let mut literals: Vec<String> = Vec::new();
        for l in &links {
            if let Some(t) = &l.literal {
                if !literals.contains(t) {
                    literals.push(t.clone());
                }
            }
        }
        Answer {
            query: query.clone(),
            literals,
            axioms: links.iter().filter_map(|l| l.axiom.clone()).collect(),
            links,
            text,
            goal_since: self.goal_since(query.step),
        }
    }

    pub fn answer(&self, q: &Query) -> Result<Answer, ExplainError> {
        match q.kind {
            QueryKind::WhyAction => self.why_action(q),
            QueryKind::WhyNotAction => self.why_not(q),
            QueryKind::WhyBelief => self.why_belief(q),
        }
    }

    fn goal_words(&self, view: &StepView, g: &GroundedDomain) -> String {
        view.goal.as_ref().map(|gl| self.goal_phrase(&g.goal_text(gl))).unwrap_or_default()
    }

    fn why_action(&self, q: &Query) -> Result<Answer, ExplainError> {
        let (g, view) = self.view(q.step)?;
        let asked = self.query_atom(&g, q.action.as_ref().expect("action queries name an action"))?;
        if asked != view.action {
            let did = self.action_phrase(&g, view.action.as_ref(), true);
            return Err(ExplainError::NotFound(format!(
                "{} was not executed in step {}; I {did}",
                q.action.as_ref().unwrap(),
                q.step
            )));
        }
        let links = action_chain(&g, &view);
        let mut named = BTreeMap::new();
        named.insert("action".into(), self.action_phrase(&g, view.action.as_ref(), true));
        named.insert("step".into(), q.step.to_string());
        Ok(self.finish(q, links, "why_action", named, &self.goal_words(&view, &g)))
    }

    fn why_not(&self, q: &Query) -> Result<Answer, ExplainError> {
        let (g, view) = self.view(q.step)?;
        let asked = self.query_atom(&g, q.action.as_ref().expect("action queries name an action"))?;
        if asked == view.action {
            return Err(ExplainError::Degenerate(format!("{} is what I did in step {}", q.action.as_ref().unwrap(), q.step)));
        }
        let s0 = &view.states[0];
        let mut named = BTreeMap::new();
        named.insert("step".into(), q.step.to_string());
        let goal_words = self.goal_words(&view, &g);
        if let Some(a) = &asked {
            if let Some(b) = g.blocking_condition(s0, a) {
                named.insert("action".into(), self.action_phrase(&g, Some(a), false));
                let link = if b.rule == usize::MAX {
                    Link::new(LinkRole::Blocked).lit("outside".into())
                } else {
                    let lit = blocking_literal(&g, &b).unwrap_or_else(|| g.instance_text(&b));
                    Link::new(LinkRole::Blocked).lit(lit).ax(axiom(&g, &b, q.step, 0))
                };
                return Ok(self.finish(q, vec![link], "why_not_blocked", named, &goal_words));
            }
        }
        named.insert("action".into(), self.action_phrase(&g, asked.as_ref(), true));
        // one step of the alternative, with the same predicted actions of the others
        let mut acts = view.exogenous.first().cloned().unwrap_or_default();
        acts.extend(asked);
        let mut links = Vec::new();
        let Some(goal) = view.goal.clone() else {
            links.push(Link::new(if view.kind == DecisionKind::Fallback { LinkRole::Fallback } else { LinkRole::Error }));
            return Ok(self.finish(q, links, "why_not_counterfactual", named, &goal_words));
        };
        let next = match g.progress(s0, &acts) {
            Ok(n) => n,
            Err(_) => {
                links.push(Link::new(LinkRole::Delayed).slot("inconsistent", "1"));
                return Ok(self.finish(q, links, "why_not_counterfactual", named, &goal_words));
            }
        };
        let goal_link = |links: &mut Vec<Link>| {
            let last = view.states.len() - 1;
            if let Some(inst) = g.goal_instance(&view.states[last], &goal) {
                links.push(
                    Link::new(LinkRole::Goal)
                        .lit(g.goal_text(&goal))
                        .ax(axiom(&g, &inst, q.step, last)),
                );
            }
        };
        if let Some(target) = shoot_target(&g, &goal) {
            let r = g.atom("in_range", &[self.me, target])?;
            if let (Some(inst), false) = (g.support(s0, &r), g.holds(&next, &r)) {
                let lit = format!("-{}", g.desc.atom_text(&r));
                links.push(Link::new(LinkRole::OutOfRange).lit(lit));
                links.push(Link::new(LinkRole::Defined).lit(g.desc.atom_text(&r)).ax(axiom(&g, &inst, q.step, 0)));
                goal_link(&mut links);
                let mut rendered = self.finish(q, links, "why_not_counterfactual", named, &goal_words);
                // the in-range support is cited, not narrated
                rendered.text = self.render_out_of_range(&rendered, &goal_words);
                return Ok(rendered);
            }
        }
        // how long would the goal take from the alternative?
        let timeline = self.timeline(&g, q.step)?;
        let shifted = Timeline { steps: timeline.steps.iter().skip(1).cloned().collect() };
        let horizon = timeline.steps.len().saturating_sub(1).max(view.plan.len());
        let h = fort::heuristic(&g, &goal, &shifted, self.me);
        let rank = fort::rank_fn(&g);
        let opts = PlanOptions { horizon, node_limit: PlanOptions::default().node_limit };
        let chosen = view.plan.len();
        let link = match plan(&g, &next, self.me, &goal, &shifted, &opts, &h, &rank)? {
            Some(p) if 1 + p.len() > chosen => {
                Link::new(LinkRole::Delayed).slot("n", (1 + p.len()).to_string()).slot("m", chosen.to_string())
            }
            Some(_) => Link::new(LinkRole::Delayed).slot("no_better", "1"),
            None => Link::new(LinkRole::Delayed),
        };
        links.push(link);
        goal_link(&mut links);
        let mut ans = self.finish(q, links, "why_not_counterfactual", named, &goal_words);
        ans.text = self.render_counterfactual(&ans, &goal_words);
        Ok(ans)
    }

    /// "If I had .., <consequence>, and I had to <goal>."
    fn render_out_of_range(&self, a: &Answer, goal: &str) -> String {
        let parts: Vec<String> = a
            .links
            .iter()
            .filter_map(|l| match l.role {
                LinkRole::OutOfRange => self.reason(l, goal),
                LinkRole::Goal => Some(self.templates.fill("reason.must_goal", &[("goal".to_string(), goal.to_string())].into(), &[])),
                _ => None,
            })
            .collect();
        self.counterfactual_text(a, parts)
    }

    fn render_counterfactual(&self, a: &Answer, goal: &str) -> String {
        let parts: Vec<String> = a
            .links
            .iter()
            .filter(|l| l.role == LinkRole::Delayed)
            .filter_map(|l| self.reason(l, goal))
            .collect();
        self.counterfactual_text(a, parts)
    }

    fn counterfactual_text(&self, a: &Answer, parts: Vec<String>) -> String {
        let (g, view) = match self.view(a.query.step) {
            Ok(v) => v,
            Err(_) => return a.text.clone(),
        };
        let asked = a.query.action.as_ref().and_then(|q| self.query_atom(&g, q).ok()).flatten();
        let _ = view;
        let mut named = BTreeMap::new();
        named.insert("step".to_string(), a.query.step.to_string());
        named.insert("action".to_string(), self.action_phrase(&g, asked.as_ref(), true));
        named.insert("reasons".to_string(), parts.join(", and "));
        self.templates.fill("why_not_counterfactual", &named, &[])
    }

    fn why_belief(&self, q: &Query) -> Result<Answer, ExplainError> {
        let (g, view) = self.view(q.step)?;
        let text = q.literal.as_deref().expect("belief queries name a literal");
        let (atom, neg) = parse_literal(&g, text)?;
        let s0 = &view.states[0];
        let shown = format!("{}{}", if neg { "-" } else { "" }, g.desc.atom_text(&atom));
        if g.holds(s0, &atom) == neg {
            return Err(ExplainError::NotFound(format!("{shown} was not believed at step {}", q.step)));
        }
        let mut named = BTreeMap::new();
        named.insert("step".into(), q.step.to_string());
        named.insert("literal".into(), shown.clone());
        let kind = g.desc.decl(atom.pred).kind;
        let defaults = default_instances(&g, s0);
        let r = self.reasoning(q.step)?;
        let link = match kind {
            PredKind::Defined if !neg => match g.support(s0, &atom) {
                Some(inst) => Link::new(LinkRole::Defined).lit(shown.clone()).ax(axiom(&g, &inst, q.step, 0)),
                None => Link::new(LinkRole::Absent).lit(shown.clone()),
            },
            PredKind::Static | PredKind::Builtin | PredKind::Sort => Link::new(LinkRole::Static).lit(shown.clone()),
            _ if !neg => {
                if let Some(l) = self.caused_by_previous(q.step, &atom)? {
                    l
                } else if let Some(d) = defaults.iter().find(|d| d.atom == atom && !d.negated) {
                    Link::new(LinkRole::Default).lit(shown.clone()).ax(axiom(&g, &d.instance, q.step, 0))
                } else {
                    Link::new(LinkRole::Observed).lit(shown.clone())
                }
            }
            _ => {
                let text = g.desc.atom_text(&atom);
                if let Some(d) = defaults.iter().find(|d| d.atom == atom) {
                    if r.retracted.contains(&text) && !d.negated {
                        Link::new(LinkRole::Retracted).lit(shown.clone()).ax(axiom(&g, &d.instance, q.step, 0))
                    } else if d.negated {
                        Link::new(LinkRole::Default).lit(shown.clone()).ax(axiom(&g, &d.instance, q.step, 0))
                    } else {
                        Link::new(LinkRole::Absent).lit(shown.clone())
                    }
                } else {
                    Link::new(LinkRole::Absent).lit(shown.clone())
                }
            }
        };
        Ok(self.finish(q, vec![link], "why_belief", named, &self.goal_words(&view, &g)))
    }

    /// A causal law of an action executed at the previous tick that made `atom` true.
    fn caused_by_previous(&self, step: u32, atom: &Atom) -> Result<Option<Link>, ExplainError> {
        if step == 0 {
            return Ok(None);
        }
        let Some(prev) = self.trace.step(step - 1) else { return Ok(None) };
        if prev.reasoning.is_none() {
            return Ok(None);
        }
        let (g, view) = self.view(step - 1)?;
        let s = &view.states[0];
        if s.contains(atom) {
            return Ok(None);
        }
        let world = WorldState { config: std::sync::Arc::new(self.trace.header.grid.clone()), agents: prev.agents.clone(), step: prev.step };
        for (id, a) in &prev.joint {
            let Ok(Some(act)) = fort::action_atom(&g, &world, *id, *a) else { continue };
            for (inst, eff, neg) in g.causal_instances(s, &act) {
                if !neg && eff == *atom {
                    let who = if *id == self.me_id { "my action".to_string() } else { g.desc.atom_text(&act) };
                    let cause = if *id == self.me_id { format!("{who} {}", g.desc.atom_text(&act)) } else { who };
                    return Ok(Some(
                        Link::new(LinkRole::Caused)
                            .lit(g.desc.atom_text(atom))
                            .ax(axiom(&g, &inst, step - 1, 0))
                            .slot("cause", cause)
                            .slot("prev", (step - 1).to_string()),
                    ));
                }
            }
        }
        Ok(None)
    }

    /// Axiom instances supporting `target` at `step`: an executed action such
    /// as `move(3,14)` or a believed literal.
    pub fn active_axioms(&self, step: u32, target: &str) -> Result<Vec<Link>, ExplainError> {
        let (name, args) = call_args(target);
        let is_action = matches!(name.as_str(), "move" | "rotate" | "shoot" | "wait");
        let q = if is_action {
            Query { kind: QueryKind::WhyAction, action: Some(QueryAction { name, args }), literal: None, step }
        } else {
            Query { kind: QueryKind::WhyBelief, action: None, literal: Some(target.to_string()), step }
        };
        Ok(self.answer(&q)?.links)
    }
}
