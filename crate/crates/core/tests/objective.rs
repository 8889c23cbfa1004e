use std::collections::HashSet;

use kgcorpus::objective::{
    assemble_loss, compute_weights_for, plan_interleave, plan_interleave_epoch, CorpusSizes, InterleavePlan, TaskLosses,
};
use kgcorpus::render::Task;

#[test]
fn batches_follow_corpus_proportions() {
    let sizes = CorpusSizes {
        mlm: 0,
        ep: 100_000,
        lp: 64_208,
        tc: 200_000,
    };
    let plan = plan_interleave(&sizes, 32, 7).unwrap();
    let mix = InterleavePlan::expected_mix(&sizes);
    let batches: Vec<_> = plan.batches().take(10_000).collect();
    assert_eq!(batches.len(), 10_000);
    let total: usize = batches.iter().map(|b| b.len()).sum();
    for (task, share) in mix {
        let seen = batches.iter().flat_map(|b| b.iter()).filter(|r| r.task == task).count();
        let got = seen as f64 / total as f64;
        assert!((got - share).abs() <= 0.02, "{task:?}: {got} vs {share}");
    }
}

#[test]
fn epochs_are_permutations() {
    let sizes = CorpusSizes {
        mlm: 50,
        ep: 40,
        lp: 30,
        tc: 80,
    };
    let a = plan_interleave_epoch(&sizes, 16, 3, 0).unwrap();
    let b = plan_interleave_epoch(&sizes, 16, 3, 1).unwrap();
    assert_ne!(a.order, b.order);
    for plan in [&a, &b] {
        assert_eq!(plan.order.len(), 200);
        let set: HashSet<_> = plan.order.iter().map(|r| (r.task, r.index)).collect();
        assert_eq!(set.len(), 200);
        for t in Task::ALL {
            assert_eq!(plan.order.iter().filter(|r| r.task == t).count() as u64, sizes.get(t));
        }
    }
    assert_eq!(a, plan_interleave_epoch(&sizes, 16, 3, 0).unwrap());
}

#[test]
fn ablations_reweight_the_remaining_tasks() {
    let w = compute_weights_for(Some(100), None, Some(300)).unwrap();
    assert_eq!(w.alpha_lp, 0.0);
    assert!((w.alpha_ep - 0.75).abs() < 1e-12 && (w.alpha_tc - 0.25).abs() < 1e-12);
    let single = compute_weights_for(None, Some(10), None).unwrap();
    assert_eq!(single.alpha_lp, 1.0);
    let loss = assemble_loss(
        &TaskLosses {
            mlm: Some(1.0),
            ep: Some(2.0),
            lp: None,
            tc: Some(4.0),
        },
        &w,
    )
    .unwrap();
    assert!((loss - (1.0 + 1.5 + 1.0)).abs() < 1e-12);
    assert!(compute_weights_for(Some(0), Some(5), None).is_err());
}
