//! Value estimators behind a Q-module: an exact table over grid cells or a
//! small network over (position, action) features.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::grid::{Action, GridWorld, Pos};

use super::mlp::{Adam, Mlp};

pub const NUM_ACTIONS: usize = 4;

/// Exact action-value table indexed by grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; NUM_ACTIONS]>,
    pub width: u32,
}

impl QTable {
    pub fn new(world: &GridWorld) -> QTable {
        QTable {
            values: vec![[0.0; NUM_ACTIONS]; world.num_cells()],
            width: world.width,
        }
    }

    pub fn index(&self, pos: Pos) -> usize {
        (pos.1 * self.width + pos.0) as usize
    }

    pub fn get(&self, pos: Pos, action: usize) -> f64 {
        self.values[self.index(pos)][action]
    }

    pub fn set(&mut self, pos: Pos, action: usize, v: f64) {
        let i = self.index(pos);
        self.values[i][action] = v;
    }

    pub fn max_value(&self, pos: Pos) -> f64 {
        self.values[self.index(pos)]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, pos: Pos) -> usize {
        let row = &self.values[self.index(pos)];
        let mut best = 0;
        for a in 1..NUM_ACTIONS {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }
}

/// Feature vector for the network backend: normalized coordinates plus a
/// one-hot action.
pub fn features(world: &GridWorld, pos: Pos, action: usize) -> Vec<f64> {
    let mut x = vec![0.0; 2 + NUM_ACTIONS];
    x[0] = pos.0 as f64 / (world.width.max(2) - 1) as f64;
    x[1] = pos.1 as f64 / (world.height.max(2) - 1) as f64;
    x[2 + action] = 1.0;
    x
}

pub const MLP_INPUTS: usize = 2 + NUM_ACTIONS;

/// Fitting configuration for the network backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub minibatch: usize,
    pub passes: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1e-3,
            minibatch: 32,
            passes: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Table(QTable),
    Net(Mlp),
}

impl Estimator {
    pub fn predict(&self, world: &GridWorld, pos: Pos, action: usize) -> f64 {
        match self {
            Estimator::Table(t) => t.get(pos, action),
            Estimator::Net(n) => n.forward(&features(world, pos, action)),
        }
    }

    pub fn max_value(&self, world: &GridWorld, pos: Pos) -> f64 {
        match self {
            Estimator::Table(t) => t.max_value(pos),
            Estimator::Net(n) => Action::ALL
                .iter()
                .map(|a| n.forward(&features(world, pos, a.index())))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn greedy_action(&self, world: &GridWorld, pos: Pos) -> usize {
        match self {
            Estimator::Table(t) => t.greedy_action(pos),
            Estimator::Net(n) => {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for a in 0..NUM_ACTIONS {
                    let v = n.forward(&features(world, pos, a));
                    if v > best_v {
                        best_v = v;
                        best = a;
                    }
                }
                best
            }
        }
    }

    /// Fits the estimator to a pattern set of ((pos, action), target) pairs.
    /// Tables take the mean target per slot; networks run seeded minibatch
    /// Adam passes. Returns the post-fit mean squared error.
    pub fn fit(
        &mut self,
        world: &GridWorld,
        patterns: &[((Pos, usize), f64)],
        cfg: &FitConfig,
    ) -> f64 {
        if patterns.is_empty() {
            return 0.0;
        }
        match self {
            Estimator::Table(t) => {
                let mut sums: std::collections::BTreeMap<(usize, usize), (f64, usize)> =
                    std::collections::BTreeMap::new();
                for ((pos, a), target) in patterns {
                    let e = sums.entry((t.index(*pos), *a)).or_insert((0.0, 0));
                    e.0 += target;
                    e.1 += 1;
                }
                for ((cell, a), (sum, n)) in sums {
                    t.values[cell][a] = sum / n as f64;
                }
                let mse = patterns
                    .iter()
                    .map(|((pos, a), target)| {
                        let d = t.get(*pos, *a) - target;
                        d * d
                    })
                    .sum::<f64>()
                    / patterns.len() as f64;
                mse
            }
            Estimator::Net(n) => {
                let batch: Vec<(Vec<f64>, f64)> = patterns
                    .iter()
                    .map(|((pos, a), target)| (features(world, *pos, *a), *target))
                    .collect();
                let mut adam = Adam::new(n, cfg.learning_rate);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut order: Vec<usize> = (0..batch.len()).collect();
                for _ in 0..cfg.passes {
                    order.shuffle(&mut rng);
                    for chunk in order.chunks(cfg.minibatch.max(1)) {
                        let mini: Vec<(Vec<f64>, f64)> =
                            chunk.iter().map(|&i| batch[i].clone()).collect();
                        let grad = n.loss_gradient(&mini);
                        adam.step(n, &grad);
                    }
                }
                n.loss(&batch)
            }
        }
    }
}
