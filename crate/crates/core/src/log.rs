//! Record of which (agent, item) pairs have been consumed and how.

use serde::{Deserialize, Serialize};

use crate::student::{Observation, TrainingDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    /// 0 for initial seeding, otherwise the timestep of the recommendation.
    pub timestep: u32,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    n: usize,
    m: usize,
    outcomes: Vec<Option<Outcome>>,
    data: TrainingDataset,
    popularity: Vec<u32>,
    consumed_per_agent: Vec<u32>,
}

impl InteractionLog {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            outcomes: vec![None; n * m],
            data: TrainingDataset::default(),
            popularity: vec![0; m],
            consumed_per_agent: vec![0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Whether the pair was already recommended or seeded.
    pub fn is_consumed(&self, agent: usize, item: usize) -> bool {
        self.outcomes[self.offset(agent, item)].is_some()
    }

    pub fn outcome(&self, agent: usize, item: usize) -> Option<Outcome> {
        self.outcomes[self.offset(agent, item)]
    }

    /// Consumed mask of one agent's row.
    pub fn consumed_row(&self, agent: usize) -> impl Iterator<Item = bool> + '_ {
        let start = self.offset(agent, 0);
        self.outcomes[start..start + self.m]
            .iter()
            .map(Option::is_some)
    }

    pub fn unseen_count(&self, agent: usize) -> usize {
        self.m - self.consumed_per_agent[agent] as usize
    }

    /// # Panics
    ///
    /// Panics if the pair has already been consumed.
    pub fn record(&mut self, agent: usize, item: usize, timestep: u32, chosen: bool) {
        let idx = self.offset(agent, item);
        assert!(
            self.outcomes[idx].is_none(),
            "pair ({agent}, {item}) consumed twice"
        );
        self.outcomes[idx] = Some(Outcome { timestep, chosen });
        self.data
            .push_unchecked(Observation::new(agent, item, chosen));
        self.consumed_per_agent[agent] += 1;
        if chosen {
            self.popularity[item] += 1;
        }
    }

    /// Observed entries in consumption order.
    pub fn dataset(&self) -> &TrainingDataset {
        &self.data
    }

    /// Cumulative number of agents that chose each item.
    pub fn popularity(&self) -> &[u32] {
        &self.popularity
    }

    pub fn total_choices(&self) -> u64 {
        self.popularity.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn consumed_count(&self) -> usize {
        self.data.len()
    }

    pub fn all_consumed(&self) -> bool {
        self.consumed_count() == self.n * self.m
    }

    fn offset(&self, agent: usize, item: usize) -> usize {
        assert!(
            agent < self.n && item < self.m,
            "index ({agent}, {item}) out of range for {}x{} log",
            self.n,
            self.m
        );
        agent * self.m + item
    }
}
