use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use rand::Rng;

use crate::model::{StateId, TrackerState};
use crate::symbol::Symbol;

/// `S^e = O x S_i x {defined, undefined}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedState {
    pub obs: Symbol,
    pub tracker: TrackerState,
}

impl ExtendedState {
    pub fn new(obs: Symbol, tracker: TrackerState) -> Self {
        ExtendedState { obs, tracker }
    }
}

/// Tabular action values; unseen keys read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<K: Eq + Hash> {
    n_actions: usize,
    rows: HashMap<K, Vec<f64>>,
}

impl<K: Eq + Hash + Copy> QTable<K> {
    pub fn new(n_actions: usize) -> Self {
        QTable { n_actions, rows: HashMap::new() }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of keys with a stored row.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &K, action: usize) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r[action])
    }

    pub fn set(&mut self, key: K, action: usize, value: f64) {
        let n = self.n_actions;
        self.rows.entry(key).or_insert_with(|| vec![0.0; n])[action] = value;
    }

    pub fn row(&self, key: &K) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn max(&self, key: &K) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Uniformly random among the maximizing actions.
    pub fn greedy<R: Rng>(&self, key: &K, rng: &mut R) -> usize {
        let Some(row) = self.rows.get(key) else {
            return rng.gen_range(0..self.n_actions);
        };
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == best).collect();
        if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.gen_range(0..ties.len())]
        }
    }
}

/// Epsilon-greedy choice over action indices.
pub fn get_action<K: Eq + Hash + Copy, R: Rng>(q: &QTable<K>, s: &K, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.n_actions())
    } else {
        q.greedy(s, rng)
    }
}

/// `q(s,a) := (1 - alpha) * old + alpha * (reward + gamma * max_a' q(s', a'))`.
pub fn update_q_values<K: Eq + Hash + Copy>(
    q: &mut QTable<K>,
    s: K,
    a: usize,
    reward: f64,
    s_next: &K,
    alpha: f64,
    gamma: f64,
) {
    let old = q.get(&s, a);
    let max_next = q.max(s_next);
    q.set(s, a, (1.0 - alpha) * old + alpha * (reward + gamma * max_next));
}

/// Text form of a table row key.
pub trait QKey: Eq + Hash + Copy {
    /// `obs,state,flag` columns.
    fn columns(&self) -> (Symbol, Option<StateId>, Option<bool>);
    fn from_columns(obs: Symbol, state: Option<StateId>, flag: Option<bool>) -> Option<Self>;
}

impl QKey for ExtendedState {
    fn columns(&self) -> (Symbol, Option<StateId>, Option<bool>) {
        (self.obs, Some(self.tracker.state), Some(self.tracker.defined))
    }

    fn from_columns(obs: Symbol, state: Option<StateId>, flag: Option<bool>) -> Option<Self> {
        Some(ExtendedState::new(obs, TrackerState { state: state?, defined: flag? }))
    }
}

impl QKey for Symbol {
    fn columns(&self) -> (Symbol, Option<StateId>, Option<bool>) {
        (*self, None, None)
    }

    fn from_columns(obs: Symbol, state: Option<StateId>, flag: Option<bool>) -> Option<Self> {
        (state.is_none() && flag.is_none()).then_some(obs)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct QTableParseError {
    pub line: usize,
    pub msg: String,
}

impl<K: QKey> QTable<K> {
    /// Records `obs,state,flag,action,value` sorted by observation name,
    /// state, flag and action order. Values use shortest round-trip form.
    pub fn to_csv(&self, actions: &[Symbol]) -> String {
        let mut keys: Vec<(&str, Option<StateId>, Option<bool>, &K)> = self
            .rows
            .keys()
            .map(|k| {
                let (o, s, f) = k.columns();
                (o.as_str(), s, f, k)
            })
            .collect();
        keys.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let mut out = String::from("obs,state,flag,action,value\n");
        for (o, s, f, k) in keys {
            let state = s.map_or("-".to_string(), |s| s.to_string());
            let flag = f.map_or("-", |f| if f { "T" } else { "F" });
            for (a, v) in self.rows[k].iter().enumerate() {
                writeln!(out, "{o},{state},{flag},{},{v}", actions[a]).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str, actions: &[Symbol]) -> Result<Self, QTableParseError> {
        let mut q = QTable::new(actions.len());
        for (i, line) in text.lines().enumerate().skip(1) {
            let err = |msg: &str| QTableParseError { line: i + 1, msg: msg.to_string() };
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let state = match f[1] {
                "-" => None,
                s => Some(s.parse().map_err(|_| err("bad state"))?),
            };
            let flag = match f[2] {
                "-" => None,
                "T" => Some(true),
                "F" => Some(false),
                _ => return Err(err("bad flag")),
            };
            let key = K::from_columns(Symbol::new(f[0]), state, flag).ok_or_else(|| err("key shape"))?;
            let a = actions.iter().position(|x| x.as_str() == f[3]).ok_or_else(|| err("unknown action"))?;
            let v: f64 = f[4].parse().map_err(|_| err("bad value"))?;
            q.set(key, a, v);
        }
        Ok(q)
    }
}
