#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use poql::model::Dlmdp;

/// Checks that the reachable parts of `a` and `b` match under a label- and
/// structure-preserving bijection, with successor probabilities within
/// `tol`. Returns the largest probability gap or a description of the first
/// mismatch.
pub fn isomorphic(a: &Dlmdp, b: &Dlmdp, tol: f64) -> Result<f64, String> {
    let mut map: HashMap<usize, usize> = HashMap::from([(a.initial(), b.initial())]);
    let mut back: HashMap<usize, usize> = HashMap::from([(b.initial(), a.initial())]);
    let mut queue = VecDeque::from([(a.initial(), b.initial())]);
    let mut worst = 0.0f64;
    if a.label(a.initial()) != b.label(b.initial()) {
        return Err("initial labels differ".into());
    }
    while let Some((x, y)) = queue.pop_front() {
        let mut actions: Vec<_> = a.actions().iter().chain(b.actions()).copied().collect();
        actions.sort();
        actions.dedup();
        for act in actions {
            let sa = a.action_index(act).map_or(&[][..], |i| a.successors(x, i));
            let sb = b.action_index(act).map_or(&[][..], |i| b.successors(y, i));
            if sa.len() != sb.len() {
                return Err(format!("state {x}/{y} action {act}: {} vs {} successors", sa.len(), sb.len()));
            }
            for t in sa {
                let label = a.label(t.target);
                let u = sb
                    .iter()
                    .find(|u| b.label(u.target) == label)
                    .ok_or_else(|| format!("state {x} action {act}: no {label} successor"))?;
                worst = worst.max((t.prob - u.prob).abs());
                if (t.prob - u.prob).abs() > tol {
                    return Err(format!("state {x} action {act} -> {label}: {} vs {}", t.prob, u.prob));
                }
                match (map.get(&t.target), back.get(&u.target)) {
                    (None, None) => {
                        map.insert(t.target, u.target);
                        back.insert(u.target, t.target);
                        queue.push_back((t.target, u.target));
                    }
                    (Some(&m), Some(&n)) if m == u.target && n == t.target => {}
                    _ => return Err(format!("state {} maps inconsistently", t.target)),
                }
            }
        }
    }
    Ok(worst)
}
