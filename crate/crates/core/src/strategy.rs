//! Per-timestep item selection.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::InteractionLog;
use crate::student::StudentModel;
use crate::teacher::TeacherModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Student argmax over unseen items.
    Greedy,
    /// Uniform unseen item with probability `epsilon`, otherwise greedy.
    EpsilonGreedy(f64),
    /// Uniform unseen item.
    Random,
    /// Teacher argmax over unseen items.
    Oracle,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Greedy => "greedy",
            StrategyKind::EpsilonGreedy(_) => "epsilon_greedy",
            StrategyKind::Random => "random",
            StrategyKind::Oracle => "oracle",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            StrategyKind::EpsilonGreedy(e) => Some(e),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategyKind::EpsilonGreedy(e) if !(0.0..=1.0).contains(&e) => {
                Err(Error::config("epsilon", format!("{e} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the strategy consults the student model.
    pub fn uses_student(&self) -> bool {
        !matches!(self, StrategyKind::Oracle | StrategyKind::Random)
    }

    /// Build a strategy from its name; `epsilon` is used only by `epsilon_greedy`.
    pub fn from_name(name: &str, epsilon: f64) -> Result<Self> {
        match name {
            "greedy" => Ok(StrategyKind::Greedy),
            "epsilon_greedy" => Ok(StrategyKind::EpsilonGreedy(epsilon)),
            "random" => Ok(StrategyKind::Random),
            "oracle" => Ok(StrategyKind::Oracle),
            other => Err(Error::config(
                "strategy",
                format!(
                    "unknown strategy {other:?}; expected greedy, epsilon_greedy, random or oracle"
                ),
            )),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::EpsilonGreedy(e) => write!(f, "epsilon_greedy({e})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::from_name(s, 0.1)
    }
}

/// One recommended item per agent, `None` for agents with nothing left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationSlate {
    items: Vec<Option<usize>>,
}

impl RecommendationSlate {
    pub fn items(&self) -> &[Option<usize>] {
        &self.items
    }

    /// `(agent, item)` pairs in agent order.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.items
            .iter()
            .enumerate()
            .filter_map(|(a, it)| it.map(|i| (a, i)))
    }

    pub fn len(&self) -> usize {
        self.items.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pick one unseen item per agent. Agents are visited in index order and all
/// randomness comes from `rng`.
pub fn recommend<R: Rng + ?Sized>(
    kind: StrategyKind,
    student: &StudentModel,
    teacher: &TeacherModel,
    history: &InteractionLog,
    rng: &mut R,
) -> RecommendationSlate {
    let n = history.n();
    let mut items = Vec::with_capacity(n);
    for agent in 0..n {
        let unseen = history.unseen_count(agent);
        if unseen == 0 {
            items.push(None);
            continue;
        }
        let pick = match kind {
            StrategyKind::Greedy => {
                argmax_unseen(history, agent, |j| student.predict(agent, j), rng)
            }
            StrategyKind::EpsilonGreedy(eps) => {
                let explore = if eps <= 0.0 {
                    false
                } else if eps >= 1.0 {
                    true
                } else {
                    rng.random_bool(eps)
                };
                if explore {
                    uniform_unseen(history, agent, unseen, rng)
                } else {
                    argmax_unseen(history, agent, |j| student.predict(agent, j), rng)
                }
            }
            StrategyKind::Random => uniform_unseen(history, agent, unseen, rng),
            StrategyKind::Oracle => argmax_unseen(history, agent, |j| teacher.prob(agent, j), rng),
        };
        items.push(Some(pick));
    }
    RecommendationSlate { items }
}

/// Argmax of `score` over the agent's unseen items. Exact ties are broken
/// uniformly at random by reservoir sampling; no randomness is consumed when
/// the maximum is unique.
fn argmax_unseen<R: Rng + ?Sized>(
    history: &InteractionLog,
    agent: usize,
    score: impl Fn(usize) -> f64,
    rng: &mut R,
) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut best_item = usize::MAX;
    let mut ties = 0u32;
    for (j, consumed) in history.consumed_row(agent).enumerate() {
        if consumed {
            continue;
        }
        let s = score(j);
        if s > best || best_item == usize::MAX {
            best = s;
            best_item = j;
            ties = 1;
        } else if s == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best_item = j;
            }
        }
    }
    best_item
}

fn uniform_unseen<R: Rng + ?Sized>(
    history: &InteractionLog,
    agent: usize,
    unseen: usize,
    rng: &mut R,
) -> usize {
    let target = rng.random_range(0..unseen);
    history
        .consumed_row(agent)
        .enumerate()
        .filter(|(_, c)| !c)
        .nth(target)
        .map(|(j, _)| j)
        .expect("unseen count matches row")
}
