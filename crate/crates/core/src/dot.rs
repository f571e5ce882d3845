//! DOT export and an exact text format for labeled models.
//!
//! The text format keeps probabilities in shortest round-trip form plus any
//! folded counts:
//!
//! ```text
//! initial 0
//! actions coin button
//! state 0 init
//! edge 0 coin 1 1 12
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Dlmdp, ModelError, Transition};
use crate::symbol::Symbol;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Nodes in id order, edges sorted by `(source, action, target)`.
pub fn to_dot(model: &Dlmdp, tooltips: Option<&[String]>) -> String {
    let mut out = String::from("digraph model {\n");
    for s in 0..model.num_states() {
        write!(out, "  s{s} [label=\"{s}|{}\"", escape(model.label(s).as_str())).unwrap();
        if let Some(tip) = tooltips.and_then(|t| t.get(s)) {
            write!(out, ", tooltip=\"{}\"", escape(tip)).unwrap();
        }
        out.push_str("];\n");
    }
    let mut edges = Vec::new();
    for s in 0..model.num_states() {
        for (a, &action) in model.actions().iter().enumerate() {
            for t in model.successors(s, a) {
                edges.push((s, action, t.target, t.prob));
            }
        }
    }
    edges.sort_by_key(|&(s, a, t, _)| (s, a, t));
    for (s, a, t, p) in edges {
        writeln!(out, "  s{s} -> s{t} [label=\"{}:{p:.4}\"];", escape(a.as_str())).unwrap();
    }
    writeln!(out, "  __start [shape=point];\n  __start -> s{};", model.initial()).unwrap();
    out.push_str("}\n");
    out
}

pub fn write_model(model: &Dlmdp, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    writeln!(out, "initial {}", model.initial()).unwrap();
    let names: Vec<&str> = model.actions().iter().map(|a| a.as_str()).collect();
    writeln!(out, "actions {}", names.join(" ")).unwrap();
    for s in 0..model.num_states() {
        writeln!(out, "state {s} {}", model.label(s)).unwrap();
    }
    for s in 0..model.num_states() {
        for (a, action) in model.actions().iter().enumerate() {
            for t in model.successors(s, a) {
                write!(out, "edge {s} {action} {} {}", t.target, t.prob).unwrap();
                if let Some(c) = t.count {
                    write!(out, " {c}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn parse_model(text: &str) -> Result<Dlmdp, FormatError> {
    let mut initial = None;
    let mut actions: Vec<Symbol> = Vec::new();
    let mut labels: Vec<Symbol> = Vec::new();
    let mut edges: Vec<(usize, usize, Transition)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: &str| FormatError::Parse { line: line_no, msg: msg.to_string() };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |tok: &str| tok.parse::<usize>().map_err(|_| err(&format!("bad integer {tok:?}")));
        match fields[0] {
            "initial" if fields.len() == 2 => initial = Some(num(fields[1])?),
            "actions" => actions = fields[1..].iter().map(|&a| Symbol::new(a)).collect(),
            "state" if fields.len() == 3 => {
                if num(fields[1])? != labels.len() {
                    return Err(err("states must be listed in id order"));
                }
                labels.push(Symbol::new(fields[2]));
            }
            "edge" if fields.len() == 5 || fields.len() == 6 => {
                let src = num(fields[1])?;
                let a = actions
                    .iter()
                    .position(|&x| x.as_str() == fields[2])
                    .ok_or_else(|| err(&format!("undeclared action {:?}", fields[2])))?;
                let target = num(fields[3])?;
                let prob = fields[4].parse::<f64>().map_err(|_| err("bad probability"))?;
                let count = match fields.get(5) {
                    Some(c) => Some(c.parse::<u64>().map_err(|_| err("bad count"))?),
                    None => None,
                };
                edges.push((src, a, Transition { target, prob, count }));
            }
            _ => return Err(err(&format!("unrecognized line {line:?}"))),
        }
    }
    let initial = initial.ok_or(FormatError::Parse { line: 0, msg: "missing initial line".into() })?;
    let mut trans = vec![vec![Vec::new(); actions.len()]; labels.len()];
    for (src, a, t) in edges {
        let row = trans.get_mut(src).ok_or(ModelError::UnknownState(src))?;
        row[a].push(t);
    }
    Ok(Dlmdp::new(initial, actions, labels, trans)?)
}
