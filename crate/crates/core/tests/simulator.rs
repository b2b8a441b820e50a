mod common;

use blockpd::problem::ProblemSpec;
use blockpd::sim::{
    run, BernoulliSpec, DeterministicSchedule, Reference, RunOptions, Schedule, ScheduleSpec,
    TimeSet,
};
use blockpd::uzawa::{trajectory, SyncIterate, UpdateOrder};
use blockpd::{presets, BoxSet, DualBox};

fn toy() -> (blockpd::ConvexProblem, DualBox) {
    let spec = ProblemSpec::quadratic(
        vec![2.0, 0.5, 0.5, 2.0],
        vec![0.0, 0.0],
        0.0,
        vec![1.0, 1.0],
        vec![-1.0],
        BoxSet::uniform(2, -2.0, 2.0).unwrap(),
        0.1,
    );
    (
        spec.build().unwrap(),
        DualBox::user_supplied(5.0, "test").unwrap(),
    )
}

fn list(ticks: &[u64]) -> TimeSet {
    TimeSet::List {
        ticks: ticks.to_vec(),
    }
}

/// Values worked out by hand, tick by tick, for
/// `h = x^T [[2, .5], [.5, 2]] x / 2`, `g = x1 + x2 + 1`, gamma 0.2, rho 1.
#[test]
fn five_tick_hand_table() {
    let (p, d) = toy();
    let sched = DeterministicSchedule {
        compute: vec![
            TimeSet::All,
            TimeSet::Periodic {
                period: 2,
                offset: 0,
            },
        ],
        // primal_send[from][to]
        primal_send: vec![
            vec![TimeSet::Never, list(&[2])],
            vec![list(&[1, 3]), TimeSet::Never],
        ],
        dual_send: vec![vec![list(&[2, 4])], vec![list(&[2, 4])]],
    };
    let t = run(
        &p,
        &d,
        Schedule::new(ScheduleSpec::Deterministic(sched), 2, 1).unwrap(),
        0.2,
        1.0,
        5,
        RunOptions {
            x0: Some(vec![1.0, -1.0]),
            check_steps: false,
            record_locals: true,
            ..Default::default()
        },
    )
    .unwrap();

    let own_x = [
        [1.0, -1.0],
        [0.7, -0.7],
        [0.49, -0.7],
        [0.206, -0.627],
        [0.0283, -0.627],
        [-0.14278, -0.64766],
    ];
    let mu = [0.0, 0.0, 0.79, 0.79, 1.1123, 1.1123];
    let stamp = [0, 0, 1, 1, 2, 2];
    // agent 1's full copy: learns x_1 = 0.49 at k = 2 and nothing after
    let agent1 = [
        [1.0, -1.0],
        [1.0, -0.7],
        [0.49, -0.7],
        [0.49, -0.627],
        [0.49, -0.627],
        [0.49, -0.64766],
    ];
    assert_eq!(t.rows.len(), 6);
    let locals = t.locals.as_ref().unwrap();
    for k in 0..6 {
        for i in 0..2 {
            assert!((t.own_x[k][i] - own_x[k][i]).abs() < 1e-12, "x at k={k}");
            assert!(
                (locals[k][1][i] - agent1[k][i]).abs() < 1e-12,
                "agent 1 copy at k={k}"
            );
        }
        assert!((t.own_mu[k][0] - mu[k]).abs() < 1e-12, "mu at k={k}");
        assert_eq!(t.rows[k].t, vec![stamp[k]]);
        assert_eq!(t.rows[k].ops, 0);
        assert_eq!(t.rows[k].discards, 0);
    }
    assert_eq!(t.dual_updates.len(), 2);
    assert_eq!(t.dual_updates[0].snapshot, vec![0.49, -0.7]);
    assert!((t.dual_updates[1].snapshot[0] - 0.0283).abs() < 1e-12);
    assert_eq!(t.epochs.len(), 3);
}

#[test]
fn idle_agent_keeps_its_block() {
    let (p, d) = toy();
    let mut sched = DeterministicSchedule::all_ticks(2, 1);
    sched.compute[1] = list(&[0, 10]);
    let t = run(
        &p,
        &d,
        Schedule::new(ScheduleSpec::Deterministic(sched), 2, 1).unwrap(),
        0.2,
        10.0,
        20,
        RunOptions {
            check_steps: false,
            ..Default::default()
        },
    )
    .unwrap();
    for k in 2..=10 {
        assert_eq!(t.own_x[k][1], t.own_x[1][1]);
    }
    assert_ne!(t.own_x[11][1], t.own_x[10][1]);
}

#[test]
fn full_bernoulli_matches_all_ticks_and_sync() {
    let p = presets::quartic10_problem().unwrap();
    let d = presets::quartic10_dual_box();
    let reference = Reference {
        x: vec![1.0; 10],
        mu: vec![0.0; 6],
    };
    let opts = RunOptions {
        reference: Some(reference),
        ..Default::default()
    };
    let a = run(
        &p,
        &d,
        Schedule::all_ticks(10, 6),
        8e-4,
        1000.0,
        300,
        opts.clone(),
    )
    .unwrap();
    let b = run(
        &p,
        &d,
        ScheduleSpec::Bernoulli(BernoulliSpec::new(9, 1.0))
            .build(10, 6)
            .unwrap(),
        8e-4,
        1000.0,
        300,
        opts,
    )
    .unwrap();
    assert_eq!(a.rows, b.rows);
    let sync = trajectory(
        &p,
        &d,
        SyncIterate::initial(&p),
        8e-4,
        1000.0,
        UpdateOrder::PrimalFirst,
        300,
    )
    .unwrap();
    for (k, it) in sync.iter().enumerate() {
        assert_eq!(a.own_x[k], it.x);
    }
}

#[test]
fn zero_ticks_gives_one_row() {
    let p = presets::quartic10_problem().unwrap();
    let d = presets::quartic10_dual_box();
    let t = run(
        &p,
        &d,
        Schedule::all_ticks(10, 6),
        8e-4,
        1000.0,
        0,
        RunOptions::default(),
    )
    .unwrap();
    let csv = t.to_csv_string().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("k,seed,comm_prob,beta_scale,ops,t_1,"));
    assert_eq!(lines[0].split(',').count(), 5 + 6 + 1 + 6 + 2);
}

#[test]
fn random_schedules_never_discard_and_are_repeatable() {
    let p = presets::quartic10_problem().unwrap();
    let d = presets::quartic10_dual_box();
    for seed in 0..10 {
        let go = || {
            run(
                &p,
                &d,
                common::random_schedule(seed, 10, 6).build(10, 6).unwrap(),
                7e-4,
                1000.0,
                150,
                RunOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        // broadcasts reach every agent in the tick they are sent
        assert_eq!(a.final_row().discards, 0);
        assert_eq!(a.stats.primal_buffered, 0);
    }
}

#[test]
fn step_checks() {
    let p = presets::quartic10_problem().unwrap();
    let d = presets::quartic10_dual_box();
    let bad_gamma = run(
        &p,
        &d,
        Schedule::all_ticks(10, 6),
        1e-3,
        1000.0,
        1,
        RunOptions::default(),
    );
    assert!(matches!(bad_gamma, Err(blockpd::Error::StepSize(_))));
    let bad_rho = run(
        &p,
        &d,
        Schedule::all_ticks(10, 6),
        8e-4,
        2000.0,
        1,
        RunOptions::default(),
    );
    assert!(matches!(bad_rho, Err(blockpd::Error::StepSize(_))));
    assert!(run(
        &p,
        &d,
        Schedule::all_ticks(9, 6),
        8e-4,
        1000.0,
        1,
        RunOptions::default()
    )
    .is_err());
}

#[test]
fn ops_counts_a_cycle_once_every_block_is_computed_and_delivered() {
    let (p, d) = toy();
    let sched = DeterministicSchedule {
        compute: vec![list(&[0]), list(&[1])],
        primal_send: vec![
            vec![TimeSet::Never, list(&[1])],
            vec![list(&[2]), TimeSet::Never],
        ],
        dual_send: vec![vec![TimeSet::Never], vec![TimeSet::Never]],
    };
    let t = run(
        &p,
        &d,
        Schedule::new(ScheduleSpec::Deterministic(sched), 2, 1).unwrap(),
        0.2,
        1.0,
        4,
        RunOptions {
            check_steps: false,
            ..Default::default()
        },
    )
    .unwrap();
    let ops: Vec<u64> = t.rows.iter().map(|r| r.ops).collect();
    assert_eq!(ops, vec![0, 0, 1, 1, 1]);
}
