//! Task weights for the mixed loss
//! `L = L_mlm + a_ep * L_ep + a_lp * L_lp + a_tc * L_tc`,
//! plus the epoch interleaving contract any trainer can reproduce.
//!
//! Each graph-task weight is inversely related to that task's document count:
//! with `k` active graph tasks and counts summing to `S`,
//! `a_i = (S - n_i) / ((k - 1) * S)`. For `k = 3` this is
//! `(sum of the other two) / (2 * S)`. The weights sum to one, so the
//! free-text loss carries the same total weight as the graph losses.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Task;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub alpha_ep: f64,
    pub alpha_lp: f64,
    pub alpha_tc: f64,
    pub n_ep: u64,
    pub n_lp: u64,
    pub n_tc: u64,
    pub n_mlm: u64,
}

impl TaskWeights {
    pub fn alpha(&self, task: Task) -> f64 {
        match task {
            Task::Mlm => 1.0,
            Task::Ep => self.alpha_ep,
            Task::Lp => self.alpha_lp,
            Task::Tc => self.alpha_tc,
        }
    }

    pub fn sum(&self) -> f64 {
        self.alpha_ep + self.alpha_lp + self.alpha_tc
    }
}

/// Weights over the three graph tasks; every count must be positive.
pub fn compute_weights(n_ep: u64, n_lp: u64, n_tc: u64) -> Result<TaskWeights> {
    for (name, n) in [("ep", n_ep), ("lp", n_lp), ("tc", n_tc)] {
        if n == 0 {
            return Err(Error::Weights(format!(
                "{name} has no documents; disable the task instead of passing a zero count"
            )));
        }
    }
    compute_weights_for(Some(n_ep), Some(n_lp), Some(n_tc))
}

/// Weights over the enabled subset (`None` = disabled). Disabled tasks get
/// weight zero and the rest are renormalised by the same rule.
pub fn compute_weights_for(n_ep: Option<u64>, n_lp: Option<u64>, n_tc: Option<u64>) -> Result<TaskWeights> {
    let active: Vec<u64> = [n_ep, n_lp, n_tc].into_iter().flatten().collect();
    if active.contains(&0) {
        return Err(Error::Weights(
            "enabled task has no documents; disable it explicitly".into(),
        ));
    }
    let k = active.len() as f64;
    let total: f64 = active.iter().map(|&n| n as f64).sum();
    let alpha = |n: Option<u64>| match n {
        None => 0.0,
        Some(_) if active.len() == 1 => 1.0,
        Some(n) => (total - n as f64) / ((k - 1.0) * total),
    };
    Ok(TaskWeights {
        alpha_ep: alpha(n_ep),
        alpha_lp: alpha(n_lp),
        alpha_tc: alpha(n_tc),
        n_ep: n_ep.unwrap_or(0),
        n_lp: n_lp.unwrap_or(0),
        n_tc: n_tc.unwrap_or(0),
        n_mlm: 0,
    })
}

/// Per-task mean losses for one step; `None` marks a task absent from the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub mlm: Option<f64>,
    pub ep: Option<f64>,
    pub lp: Option<f64>,
    pub tc: Option<f64>,
}

pub fn assemble_loss(losses: &TaskLosses, weights: &TaskWeights) -> Result<f64> {
    let mut total = 0.0;
    for (task, loss) in [
        (Task::Mlm, losses.mlm),
        (Task::Ep, losses.ep),
        (Task::Lp, losses.lp),
        (Task::Tc, losses.tc),
    ] {
        let Some(l) = loss else { continue };
        if !l.is_finite() || l < 0.0 {
            return Err(Error::Loss(format!(
                "{} loss must be finite and non-negative, got {l}",
                task.name()
            )));
        }
        total += weights.alpha(task) * l;
    }
    Ok(total)
}

/// Where a record sits: its task corpus and its index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    pub task: Task,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub mlm: u64,
    pub ep: u64,
    pub lp: u64,
    pub tc: u64,
}

impl CorpusSizes {
    pub fn get(&self, task: Task) -> u64 {
        match task {
            Task::Mlm => self.mlm,
            Task::Ep => self.ep,
            Task::Lp => self.lp,
            Task::Tc => self.tc,
        }
    }

    pub fn total(&self) -> u64 {
        self.mlm + self.ep + self.lp + self.tc
    }
}

/// One epoch: a seeded uniform shuffle of every record across all tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleavePlan {
    pub order: Vec<RecordRef>,
    pub batch_size: usize,
    pub seed: u64,
}

impl InterleavePlan {
    pub fn batches(&self) -> impl Iterator<Item = &[RecordRef]> {
        self.order.chunks(self.batch_size)
    }

    /// Expected share of each task in a batch (the corpus proportions).
    pub fn expected_mix(sizes: &CorpusSizes) -> [(Task, f64); 4] {
        let total = sizes.total().max(1) as f64;
        Task::ALL.map(|t| (t, sizes.get(t) as f64 / total))
    }
}

pub fn plan_interleave(sizes: &CorpusSizes, batch_size: usize, seed: u64) -> Result<InterleavePlan> {
    plan_interleave_epoch(sizes, batch_size, seed, 0)
}

pub fn plan_interleave_epoch(sizes: &CorpusSizes, batch_size: usize, seed: u64, epoch: u64) -> Result<InterleavePlan> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<RecordRef> = Vec::with_capacity(sizes.total() as usize);
    for task in Task::ALL {
        order.extend((0..sizes.get(task)).map(|index| RecordRef { task, index }));
    }
    let mut rng = SeedStream::new(seed).scope("interleave").index(epoch).rng();
    order.shuffle(&mut rng);
    Ok(InterleavePlan {
        order,
        batch_size,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::*;

    // Independent arithmetic: alpha_i = (sum of the other two) / (2 * sum).
    fn oracle(n_ep: f64, n_lp: f64, n_tc: f64) -> (f64, f64, f64) {
        let s = n_ep + n_lp + n_tc;
        (
            (n_lp + n_tc) / (2.0 * s),
            (n_ep + n_tc) / (2.0 * s),
            (n_ep + n_lp) / (2.0 * s),
        )
    }

    #[test]
    fn french_counts() {
        let w = compute_weights(100_000, 64_208, 200_000).unwrap();
        // 164208/728416, 264208/728416, 300000/728416
        assert!((w.alpha_tc - 0.225_434).abs() < 1e-5, "{}", w.alpha_tc);
        assert!((w.alpha_ep - 0.362_716).abs() < 1e-5, "{}", w.alpha_ep);
        assert!((w.alpha_lp - 0.411_853).abs() < 1e-5, "{}", w.alpha_lp);
        assert!((w.sum() - 1.0).abs() < 1e-9);
        let (e, l, t) = oracle(100_000.0, 64_208.0, 200_000.0);
        assert!((w.alpha_ep - e).abs() < 1e-12 && (w.alpha_lp - l).abs() < 1e-12 && (w.alpha_tc - t).abs() < 1e-12);
    }

    #[test]
    fn spanish_english_counts() {
        let w = compute_weights(100_000, 100_000, 200_000).unwrap();
        assert!((w.alpha_tc - 0.25).abs() < 1e-12);
        assert!((w.alpha_ep - 0.375).abs() < 1e-12);
        assert!((w.alpha_lp - 0.375).abs() < 1e-12);
    }

    #[test]
    fn equal_counts_are_symmetric() {
        let w = compute_weights(7, 7, 7).unwrap();
        for a in [w.alpha_ep, w.alpha_lp, w.alpha_tc] {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(compute_weights(0, 1, 1).is_err());
        assert!(compute_weights_for(Some(0), None, Some(1)).is_err());
    }

    #[test]
    fn ablation_pairs() {
        let w = compute_weights_for(Some(300), Some(100), None).unwrap();
        assert!((w.alpha_ep - 0.25).abs() < 1e-12);
        assert!((w.alpha_lp - 0.75).abs() < 1e-12);
        assert_eq!(w.alpha_tc, 0.0);
        let w = compute_weights_for(None, None, Some(5)).unwrap();
        assert_eq!(w.alpha_tc, 1.0);
        let w = compute_weights_for(None, None, None).unwrap();
        assert_eq!(w.sum(), 0.0);
    }

    #[test]
    fn loss_assembly() {
        let w = compute_weights(3, 5, 11).unwrap();
        let all_one = TaskLosses {
            mlm: Some(1.0),
            ep: Some(1.0),
            lp: Some(1.0),
            tc: Some(1.0),
        };
        assert!((assemble_loss(&all_one, &w).unwrap() - 2.0).abs() < 1e-12);
        let only_mlm = TaskLosses {
            mlm: Some(0.7),
            ..Default::default()
        };
        assert_eq!(assemble_loss(&only_mlm, &w).unwrap(), 0.7);
        let thirds = compute_weights(1, 1, 1).unwrap();
        let l = TaskLosses {
            mlm: Some(0.5),
            ep: Some(0.2),
            lp: Some(0.3),
            tc: Some(0.4),
        };
        assert!((assemble_loss(&l, &thirds).unwrap() - 0.8).abs() < 1e-12);
        let neg = TaskLosses {
            tc: Some(-0.1),
            ..Default::default()
        };
        assert!(assemble_loss(&neg, &w).is_err());
    }

    #[test]
    fn tiny_interleave() {
        let sizes = CorpusSizes {
            mlm: 2,
            ep: 1,
            lp: 1,
            tc: 1,
        };
        let plan = plan_interleave(&sizes, 5, 1).unwrap();
        let batches: Vec<_> = plan.batches().collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 5);
        assert_eq!(plan, plan_interleave(&sizes, 5, 1).unwrap());
        assert!(plan_interleave(&sizes, 0, 1).is_err());
    }

    #[test]
    fn interleave_is_a_permutation() {
        let sizes = CorpusSizes {
            mlm: 30,
            ep: 20,
            lp: 7,
            tc: 40,
        };
        let plan = plan_interleave(&sizes, 8, 9).unwrap();
        let mut got = plan.order.clone();
        got.sort();
        let mut want: Vec<RecordRef> = Task::ALL
            .into_iter()
            .flat_map(|task| (0..sizes.get(task)).map(move |index| RecordRef { task, index }))
            .collect();
        want.sort();
        assert_eq!(got, want);
        let mut counts: BTreeMap<Task, u64> = BTreeMap::new();
        for r in &plan.order {
            *counts.entry(r.task).or_default() += 1;
        }
        assert_eq!(counts[&Task::Lp], 7);
    }

    proptest! {
        #[test]
        fn weights_normalize(a in 1u64..10_000_000, b in 1u64..10_000_000, c in 1u64..10_000_000) {
            let w = compute_weights(a, b, c).unwrap();
            prop_assert!((w.sum() - 1.0).abs() < 1e-9);
            let (e, l, t) = oracle(a as f64, b as f64, c as f64);
            prop_assert!((w.alpha_ep - e).abs() < 1e-12);
            prop_assert!((w.alpha_lp - l).abs() < 1e-12);
            prop_assert!((w.alpha_tc - t).abs() < 1e-12);
        }

        #[test]
        fn assembly_is_linear(l1 in 0.0f64..10.0, l2 in 0.0f64..10.0, k in 0.0f64..5.0) {
            let w = compute_weights(3, 4, 5).unwrap();
            let a = TaskLosses { ep: Some(l1), ..Default::default() };
            let b = TaskLosses { ep: Some(l1 + k * l2), ..Default::default() };
            let c = TaskLosses { ep: Some(l2), ..Default::default() };
            let lhs = assemble_loss(&b, &w).unwrap();
            let rhs = assemble_loss(&a, &w).unwrap() + k * assemble_loss(&c, &w).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
