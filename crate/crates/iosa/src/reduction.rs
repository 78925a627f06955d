//! Urgent reduction: collapsing chains of zero-time transitions.
//!
//! From a configuration (state, accumulated resets, steps) each enabled
//! urgent action yields (target, accumulated ∪ resets, steps + 1). A
//! configuration is in normal form when its state is stable. On a
//! confluent system every order of urgent steps reaches the same normal
//! form, which is what lets a simulator pick any order it likes;
//! `normal_form_verified` checks that exhaustively for one start state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Automaton, ModelError};

/// A point of the urgent reduction: where we are, which clocks the chain
/// has reset so far, and how many urgent steps were taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReductionConfig {
    pub state: String,
    pub accumulated: BTreeSet<String>,
    pub length: usize,
}

impl ReductionConfig {
    pub fn start(state: &str) -> ReductionConfig {
        ReductionConfig {
            state: state.to_string(),
            accumulated: BTreeSet::new(),
            length: 0,
        }
    }
}

impl fmt::Display for ReductionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clocks: Vec<&str> = self.accumulated.iter().map(String::as_str).collect();
        write!(
            f,
            "({}, {{{}}}, {})",
            self.state,
            clocks.join(", "),
            self.length
        )
    }
}

/// One urgent step: the fired action and the configuration it leads to.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionStep {
    pub action: String,
    pub config: ReductionConfig,
}

/// A normal form, together with the action order that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NormalForm {
    pub from: String,
    pub config: ReductionConfig,
    pub path: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error(
        "automaton `{automaton}` is open (inputs {inputs:?}); urgent reduction needs a closed system"
    )]
    NotClosed {
        automaton: String,
        inputs: Vec<String>,
    },
    #[error("urgent cycle reachable from `{from}` ({})", cycle.join(" -> "))]
    Zeno { from: String, cycle: Vec<String> },
    #[error(
        "urgent orders from `{from}` diverge: {} via {:?} against {} via {:?}",
        left.config, left.path, right.config, right.path
    )]
    DistinctNormalForms {
        from: String,
        left: Box<NormalForm>,
        right: Box<NormalForm>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn ensure_closed(a: &Automaton) -> Result<(), ReductionError> {
    if a.is_closed() {
        Ok(())
    } else {
        Err(ReductionError::NotClosed {
            automaton: a.name().to_string(),
            inputs: a.inputs().map(|l| l.name.clone()).collect(),
        })
    }
}

/// All urgent steps from a configuration, sorted by action name, then
/// target state, so callers that always take the first step are
/// deterministic.
pub fn reduce_step(
    a: &Automaton,
    config: &ReductionConfig,
) -> Result<Vec<ReductionStep>, ReductionError> {
    ensure_closed(a)?;
    let s = a.state_index(&config.state)?;
    let mut steps: Vec<ReductionStep> = a
        .outgoing(s)
        .iter()
        .map(|&ti| &a.transitions()[ti])
        .filter(|t| a.label(t.label).urgent)
        .map(|t| {
            let mut accumulated = config.accumulated.clone();
            accumulated.extend(a.clock_name_set(&t.resets));
            ReductionStep {
                action: a.label(t.label).name.clone(),
                config: ReductionConfig {
                    state: a.state_name(t.target).to_string(),
                    accumulated,
                    length: config.length + 1,
                },
            }
        })
        .collect();
    steps.sort_by(|x, y| {
        (&x.action, &x.config.state, &x.config.accumulated)
            .cmp(&(&y.action, &y.config.state, &y.config.accumulated))
    });
    Ok(steps)
}

/// Look for a cycle of urgent transitions among the states urgently
/// reachable from `from`. Returns the state cycle, first state repeated
/// at the end.
pub fn find_urgent_cycle(a: &Automaton, from: &str) -> Result<Option<Vec<String>>, ModelError> {
    let start = a.state_index(from)?;
    // Iterative DFS with coloring: 0 unseen, 1 on stack, 2 done.
    let mut color = vec![0u8; a.state_count()];
    let mut parent: Vec<Option<usize>> = vec![None; a.state_count()];
    let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
    color[start] = 1;
    while let Some(&(s, i)) = stack.last() {
        let urgent_targets: Vec<usize> = a
            .outgoing(s)
            .iter()
            .map(|&ti| &a.transitions()[ti])
            .filter(|t| a.label(t.label).urgent)
            .map(|t| t.target)
            .collect();
        if i >= urgent_targets.len() {
            color[s] = 2;
            stack.pop();
            continue;
        }
        stack.last_mut().unwrap().1 += 1;
        let t = urgent_targets[i];
        match color[t] {
            0 => {
                color[t] = 1;
                parent[t] = Some(s);
                stack.push((t, 0));
            }
            1 => {
                // Back edge: unwind the parent chain from s to t.
                let mut cycle = vec![a.state_name(t).to_string()];
                let mut at = s;
                let mut chain = vec![at];
                while at != t {
                    at = parent[at].expect("gray states trace back to the cycle head");
                    chain.push(at);
                }
                chain.reverse();
                cycle.extend(chain.iter().skip(1).map(|&x| a.state_name(x).to_string()));
                cycle.push(a.state_name(t).to_string());
                return Ok(Some(cycle));
            }
            _ => {}
        }
    }
    Ok(None)
}

/// No urgent cycle anywhere: every chain of urgent steps terminates.
pub fn is_non_zeno(a: &Automaton) -> bool {
    (0..a.state_count()).all(|s| {
        find_urgent_cycle(a, a.state_name(s))
            .map(|c| c.is_none())
            .unwrap_or(false)
    })
}

/// Reduce from `from` to a normal form, always taking the least enabled
/// urgent step. Fails on open automata and on urgent cycles.
pub fn normal_form(a: &Automaton, from: &str) -> Result<NormalForm, ReductionError> {
    ensure_closed(a)?;
    if let Some(cycle) = find_urgent_cycle(a, from)? {
        return Err(ReductionError::Zeno {
            from: from.to_string(),
            cycle,
        });
    }
    let mut config = ReductionConfig::start(from);
    // Touch the state name early so unknown states error uniformly.
    a.state_index(from)?;
    let mut path = Vec::new();
    loop {
        let steps = reduce_step(a, &config)?;
        match steps.into_iter().next() {
            None => {
                return Ok(NormalForm {
                    from: from.to_string(),
                    config,
                    path,
                })
            }
            Some(step) => {
                path.push(step.action);
                config = step.config;
            }
        }
    }
}

/// Explore every urgent order from `from`. Returns the unique normal
/// form, or the first two distinct ones found.
pub fn normal_form_verified(a: &Automaton, from: &str) -> Result<NormalForm, ReductionError> {
    ensure_closed(a)?;
    if let Some(cycle) = find_urgent_cycle(a, from)? {
        return Err(ReductionError::Zeno {
            from: from.to_string(),
            cycle,
        });
    }
    a.state_index(from)?;

    // BFS over configurations, memoized on (state, accumulated); length
    // and path are taken from the first discovery.
    let start = ReductionConfig::start(from);
    let mut seen: BTreeSet<(String, BTreeSet<String>)> =
        BTreeSet::from([(start.state.clone(), start.accumulated.clone())]);
    let mut queue: VecDeque<(ReductionConfig, Vec<String>)> =
        VecDeque::from([(start, Vec::new())]);
    let mut normal: Option<NormalForm> = None;
    while let Some((config, path)) = queue.pop_front() {
        let steps = reduce_step(a, &config)?;
        if steps.is_empty() {
            let candidate = NormalForm {
                from: from.to_string(),
                config,
                path,
            };
            match &normal {
                None => normal = Some(candidate),
                Some(first)
                    if first.config.state == candidate.config.state
                        && first.config.accumulated == candidate.config.accumulated => {}
                Some(first) => {
                    return Err(ReductionError::DistinctNormalForms {
                        from: from.to_string(),
                        left: Box::new(first.clone()),
                        right: Box::new(candidate),
                    })
                }
            }
            continue;
        }
        for step in steps {
            let key = (step.config.state.clone(), step.config.accumulated.clone());
            if seen.insert(key) {
                let mut next_path = path.clone();
                next_path.push(step.action);
                queue.push_back((step.config, next_path));
            }
        }
    }
    Ok(normal.expect("an acyclic urgent relation always bottoms out"))
}

/// Normal forms of every state of a closed automaton, keyed by state
/// name; states whose orders diverge map to the error's two witnesses.
pub fn normal_forms_all(
    a: &Automaton,
) -> Result<BTreeMap<String, Result<NormalForm, ReductionError>>, ReductionError> {
    ensure_closed(a)?;
    Ok((0..a.state_count())
        .map(|s| {
            let name = a.state_name(s).to_string();
            let nf = normal_form_verified(a, &name);
            (name, nf)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::{compose_many, Scope};
    use crate::model::Kind;
    use crate::parse::parse_model;
    use crate::wellformed::prepare_system;

    fn composed(name: &str) -> Automaton {
        let path = format!("{}/models/{}", env!("CARGO_MANIFEST_DIR"), name);
        let mf = parse_model(&std::fs::read_to_string(path).unwrap()).unwrap();
        let parts = prepare_system(&mf).unwrap();
        compose_many(&parts, Scope::Reachable).unwrap().automaton
    }

    #[test]
    fn diamond_reduces_to_one_normal_form() {
        let d = composed("urgent_diamond.iosa");
        let nf = normal_form(&d, "s0").unwrap();
        assert_eq!(nf.config.state, "s3");
        assert_eq!(
            nf.config.accumulated,
            BTreeSet::from(["x".to_string(), "y".to_string()])
        );
        assert_eq!(nf.config.length, 2);

        let verified = normal_form_verified(&d, "s0").unwrap();
        assert_eq!(verified.config, nf.config);
    }

    #[test]
    fn stable_states_are_their_own_normal_form() {
        let a = composed("producers_consumer.iosa");
        let nf = normal_form_verified(&a, "s0|s3|s6").unwrap();
        assert_eq!(nf.config, ReductionConfig::start("s0|s3|s6"));
        assert!(nf.path.is_empty());
    }

    #[test]
    fn implausible_state_reveals_divergent_orders() {
        let a = composed("producers_consumer.iosa");
        // Deterministic reduction takes c!! first.
        let nf = normal_form(&a, "s1|s4|s6").unwrap();
        assert_eq!(nf.config.state, "s2|s5|s8");
        assert_eq!(nf.config.accumulated, BTreeSet::from(["z".to_string()]));
        assert_eq!(nf.config.length, 2);
        assert_eq!(nf.path, vec!["c".to_string(), "d".to_string()]);

        let err = normal_form_verified(&a, "s1|s4|s6").unwrap_err();
        match err {
            ReductionError::DistinctNormalForms { left, right, .. } => {
                let mut states = [left.config.state.clone(), right.config.state.clone()];
                states.sort();
                assert_eq!(states, ["s2|s5|s8".to_string(), "s2|s5|s9".to_string()]);
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn plausible_states_all_verify() {
        let a = composed("producers_consumer.iosa");
        let reach = crate::analysis::potentially_reachable(&a);
        for s in 0..a.state_count() {
            if reach[s] {
                normal_form_verified(&a, a.state_name(s)).unwrap();
            }
        }
    }

    #[test]
    fn urgent_cycles_are_zeno() {
        let a = Automaton::builder("Z")
            .initial("s0", &[])
            .transition("s0", &[], ("u", Kind::Output, true), &[], "s1")
            .unwrap()
            .transition("s1", &[], ("v", Kind::Output, true), &[], "s0")
            .unwrap()
            .build()
            .unwrap();
        assert!(!is_non_zeno(&a));
        let err = normal_form(&a, "s0").unwrap_err();
        match err {
            ReductionError::Zeno { cycle, .. } => {
                assert_eq!(cycle.first(), cycle.last());
                assert!(cycle.len() >= 3);
            }
            other => panic!("unexpected: {other}"),
        }

        assert!(is_non_zeno(&composed("producers_consumer.iosa")));
        assert!(is_non_zeno(&composed("urgent_diamond.iosa")));
    }

    #[test]
    fn open_automata_are_rejected() {
        let path = format!("{}/models/producers_consumer.iosa", env!("CARGO_MANIFEST_DIR"));
        let mf = parse_model(&std::fs::read_to_string(path).unwrap()).unwrap();
        let i3 = prepare_system(&mf)
            .unwrap()
            .into_iter()
            .find(|a| a.name() == "I3")
            .unwrap();
        assert!(matches!(
            normal_form(&i3, "s6"),
            Err(ReductionError::NotClosed { .. })
        ));
    }

    #[test]
    fn unknown_states_error_cleanly() {
        let a = composed("urgent_diamond.iosa");
        assert!(matches!(
            normal_form(&a, "nowhere"),
            Err(ReductionError::Model(ModelError::UnknownState { .. }))
        ));
    }

    #[test]
    fn all_states_of_the_diamond_normalize() {
        let d = composed("urgent_diamond.iosa");
        let all = normal_forms_all(&d).unwrap();
        assert_eq!(all.len(), d.state_count());
        assert!(all.values().all(|nf| nf.is_ok()));
        assert_eq!(all["s1"].as_ref().unwrap().config.state, "s3");
        assert_eq!(
            all["s1"].as_ref().unwrap().config.accumulated,
            BTreeSet::from(["y".to_string()])
        );
    }
}
