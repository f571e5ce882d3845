//! Paths, observation traces, reward-observation traces and returns.
//!
//! Trace file format, one episode per line:
//!
//! ```text
//! initialObs:initialReward;action:reward:obs;action:reward:obs...
//! ```
//!
//! Lines starting with `#` are comments.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{ModelError, StateId};
use crate::symbol::Symbol;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("step index {t} out of range for {len} rewards")]
    IndexOutOfRange { t: usize, len: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Alternating state/action sequence `s0 a1 s1 ... sn`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub start: StateId,
    pub steps: Vec<(Symbol, StateId)>,
}

/// Observation/action sequence `o0 a1 o1 ... on`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationTrace {
    pub initial: Symbol,
    pub steps: Vec<(Symbol, Symbol)>,
}

/// Anything the learner can consume as an observation trace.
pub trait ObservationSequence {
    fn initial_obs(&self) -> Symbol;
    fn io_steps(&self) -> Box<dyn Iterator<Item = (Symbol, Symbol)> + '_>;
}

impl ObservationSequence for ObservationTrace {
    fn initial_obs(&self) -> Symbol {
        self.initial
    }

    fn io_steps(&self) -> Box<dyn Iterator<Item = (Symbol, Symbol)> + '_> {
        Box::new(self.steps.iter().copied())
    }
}

/// Replaces every state of `path` by its observation.
pub fn observation_trace(path: &Path, obs_fn: &[Symbol]) -> Result<ObservationTrace, ModelError> {
    let label = |s: StateId| obs_fn.get(s).copied().ok_or(ModelError::UnknownState(s));
    Ok(ObservationTrace {
        initial: label(path.start)?,
        steps: path.steps.iter().map(|&(a, s)| label(s).map(|o| (a, o))).collect::<Result<_, _>>()?,
    })
}

/// `Ret(p, t) = sum_{i=0}^{n-t-1} gamma^i * R(s_{t+i+1})`, where
/// `rewards[k] = R(s_k)` for `k = 0..=n`.
pub fn discounted_return(rewards: &[f64], t: usize, gamma: f64) -> Result<f64, TraceError> {
    if t >= rewards.len() {
        return Err(TraceError::IndexOutOfRange { t, len: rewards.len() });
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in &rewards[t + 1..] {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub action: Symbol,
    pub reward: f64,
    pub obs: Symbol,
}

/// One episode as seen by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardObservationTrace {
    pub initial_obs: Symbol,
    pub initial_reward: f64,
    pub steps: Vec<TraceStep>,
}

impl RewardObservationTrace {
    pub fn new(initial_obs: Symbol, initial_reward: f64) -> Self {
        RewardObservationTrace { initial_obs, initial_reward, steps: Vec::new() }
    }

    pub fn push(&mut self, action: Symbol, reward: f64, obs: Symbol) {
        self.steps.push(TraceStep { action, reward, obs });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `R(s_0), ..., R(s_n)`.
    pub fn rewards(&self) -> Vec<f64> {
        std::iter::once(self.initial_reward).chain(self.steps.iter().map(|s| s.reward)).collect()
    }

    pub fn observation_trace(&self) -> ObservationTrace {
        ObservationTrace { initial: self.initial_obs, steps: self.steps.iter().map(|s| (s.action, s.obs)).collect() }
    }

    /// `(obs, action, reward, new_obs)` quadruples in order.
    pub fn transitions(&self) -> impl Iterator<Item = (Symbol, Symbol, f64, Symbol)> + '_ {
        let prev = std::iter::once(self.initial_obs).chain(self.steps.iter().map(|s| s.obs));
        prev.zip(self.steps.iter()).map(|(o, s)| (o, s.action, s.reward, s.obs))
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("{}:{}", self.initial_obs, self.initial_reward);
        for s in &self.steps {
            write!(line, ";{}:{}:{}", s.action, s.reward, s.obs).unwrap();
        }
        line
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, TraceError> {
        let err = |msg: String| TraceError::Parse { line: line_no, msg };
        let symbol = |tok: &str| -> Result<Symbol, TraceError> {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                Err(err(format!("invalid symbol {tok:?}")))
            } else {
                Ok(Symbol::new(tok))
            }
        };
        let reward = |tok: &str| -> Result<f64, TraceError> {
            tok.parse::<f64>().map_err(|_| err(format!("invalid reward {tok:?}")))
        };
        let mut parts = line.trim().split(';');
        let head = parts.next().unwrap_or_default();
        let (obs, rew) = head.split_once(':').ok_or_else(|| err("missing initial reward".into()))?;
        let mut trace = RewardObservationTrace::new(symbol(obs)?, reward(rew)?);
        for part in parts {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected action:reward:obs, got {part:?}")));
            }
            trace.push(symbol(fields[0])?, reward(fields[1])?, symbol(fields[2])?);
        }
        Ok(trace)
    }
}

impl ObservationSequence for RewardObservationTrace {
    fn initial_obs(&self) -> Symbol {
        self.initial_obs
    }

    fn io_steps(&self) -> Box<dyn Iterator<Item = (Symbol, Symbol)> + '_> {
        Box::new(self.steps.iter().map(|s| (s.action, s.obs)))
    }
}

/// Serializes traces, one per line, after optional `#` header lines.
pub fn write_traces(traces: &[RewardObservationTrace], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    for t in traces {
        out.push_str(&t.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_traces(text: &str) -> Result<Vec<RewardObservationTrace>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| RewardObservationTrace::parse_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn initial_state_only() {
        let path = Path { start: 0, steps: vec![] };
        let obs = vec![Symbol::new("init")];
        let trace = observation_trace(&path, &obs).unwrap();
        assert_eq!(trace.initial.as_str(), "init");
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn coin_then_beep() {
        let obs: Vec<Symbol> = ["init", "beep", "beep", "coffee", "tea"].iter().map(|s| Symbol::new(s)).collect();
        let path = Path { start: 0, steps: vec![("coin".into(), 1)] };
        let trace = observation_trace(&path, &obs).unwrap();
        assert_eq!(trace.initial.as_str(), "init");
        assert_eq!(trace.steps, vec![("coin".into(), "beep".into())]);
    }

    #[test]
    fn identity_labeling() {
        let obs = vec![Symbol::new("only")];
        let path = Path { start: 0, steps: vec![] };
        assert_eq!(observation_trace(&path, &obs).unwrap().initial, obs[0]);
    }

    #[test]
    fn unknown_state_is_domain_error() {
        let path = Path { start: 0, steps: vec![("a".into(), 3)] };
        let err = observation_trace(&path, &[Symbol::new("x")]).unwrap_err();
        assert_eq!(err, ModelError::UnknownState(3));
    }

    #[test]
    fn return_direct_substitution() {
        let r = discounted_return(&[0.0, 0.0, 0.0, 1.0], 0, 0.5).unwrap();
        assert_eq!(r, 0.25);
    }

    #[test]
    fn return_gamma_zero_is_next_reward() {
        assert_eq!(discounted_return(&[5.0, 2.0, 7.0], 0, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn return_gamma_one_is_sum() {
        assert_eq!(discounted_return(&[5.0, 2.0, 7.0, 1.0], 1, 1.0).unwrap(), 8.0);
    }

    #[test]
    fn return_out_of_range() {
        let err = discounted_return(&[1.0], 1, 0.9).unwrap_err();
        assert_eq!(err, TraceError::IndexOutOfRange { t: 1, len: 1 });
        assert_eq!(discounted_return(&[1.0, 2.0], 1, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn trace_line_format() {
        let mut t = RewardObservationTrace::new("init".into(), 0.0);
        t.push("coin".into(), 0.0, "beep".into());
        t.push("button".into(), 100.0, "tea".into());
        assert_eq!(t.to_line(), "init:0;coin:0:beep;button:100:tea");
        let q: Vec<_> = t.transitions().collect();
        assert_eq!(q[1], ("beep".into(), "button".into(), 100.0, "tea".into()));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(RewardObservationTrace::parse_line("init", 1).is_err());
        assert!(RewardObservationTrace::parse_line("init:x", 1).is_err());
        assert!(RewardObservationTrace::parse_line("init:0;coin:0", 1).is_err());
    }

    fn arb_trace() -> impl Strategy<Value = RewardObservationTrace> {
        let sym = prop::sample::select(vec!["a", "b", "Room1", "wall"]);
        let reward = prop_oneof![Just(0.0), -1e3f64..1e3];
        (sym.clone(), reward.clone(), prop::collection::vec((sym.clone(), reward, sym), 0..8)).prop_map(
            |(o, r, steps)| {
                let mut t = RewardObservationTrace::new(o.into(), r);
                for (a, r, o) in steps {
                    t.push(a.into(), r, o.into());
                }
                t
            },
        )
    }

    proptest! {
        #[test]
        fn trace_file_round_trips(traces in prop::collection::vec(arb_trace(), 0..5)) {
            let text = write_traces(&traces, &["header".to_string()]);
            prop_assert_eq!(parse_traces(&text).unwrap(), traces);
        }

        #[test]
        fn observation_trace_keeps_actions(states in prop::collection::vec(0usize..4, 1..10)) {
            let obs: Vec<Symbol> = ["p", "q", "p", "r"].iter().map(|s| Symbol::new(s)).collect();
            let actions = ["x", "y"];
            let path = Path {
                start: states[0],
                steps: states[1..].iter().enumerate().map(|(i, &s)| (Symbol::new(actions[i % 2]), s)).collect(),
            };
            let trace = observation_trace(&path, &obs).unwrap();
            let a1: Vec<Symbol> = path.steps.iter().map(|s| s.0).collect();
            let a2: Vec<Symbol> = trace.steps.iter().map(|s| s.0).collect();
            prop_assert_eq!(a1, a2);
        }
    }
}
