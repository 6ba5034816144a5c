mod common;

use std::collections::BTreeMap;

use common::{counter_trace, driving, load};
use taskenv::algebra::{
    abstract_task, concretize, conjoin, decompose_serial, disjoin, generate_variants, negate, serial_compose, Dist,
    Milestone, PerturbMode, Perturbation, VariantSpec,
};
use taskenv::analysis::{enumerate, ActionGrid};
use taskenv::harness::Scripted;
use taskenv::sim::{run, SimConfig, TaskStatus};
use taskenv::{Goal, Interval, PartialState, Problem, Task, TaskDocument};

const STEPS: u32 = 6;

/// Status of `task` on every press sequence of the counter world.
fn statuses(doc: &TaskDocument, task: &Task) -> Vec<TaskStatus> {
    (0..1u32 << STEPS)
        .map(|bits| {
            let values = (0..STEPS).map(|i| ((bits >> i) & 1) as f64).collect();
            let mut c = Scripted { values, period: 1.0 };
            run(doc, task, &mut c, &SimConfig::new(1.0)).unwrap().status
        })
        .collect()
}

fn successes(doc: &TaskDocument, task: &Task) -> Vec<bool> {
    statuses(doc, task).iter().map(TaskStatus::is_success).collect()
}

fn ratio(doc: &TaskDocument, task: &Task) -> f64 {
    let grid = ActionGrid::single("u", vec![0.0, 1.0], 1.0);
    enumerate(doc, task, &grid, &SimConfig::new(1.0)).unwrap().ratio
}

fn with_problem(t: &Task, problem: Problem) -> Task {
    Task { problem, ..t.clone() }
}

fn reach(doc: &TaskDocument, name: &str, at_least: f64, deadline: f64) -> Task {
    let mut t = doc.task("reach_two").unwrap().clone();
    t.name = name.into();
    t.deadline = deadline;
    t.problem = Problem::atomic(vec![Goal::reach(PartialState::new().with("x", Interval::at_least(at_least)).unwrap())]);
    t
}

fn toy_tasks(doc: &TaskDocument) -> Vec<Task> {
    let mut tasks: Vec<Task> = ["reach_two", "two_not_four", "one_of_three"]
        .iter()
        .map(|n| doc.task(n).unwrap().clone())
        .collect();
    tasks.push(reach(doc, "reach_five", 5.0, 6.0));
    tasks
}

#[test]
fn serial_ratio_matches_counting() {
    let doc = load("counter");
    let a = doc.task("one_of_three").unwrap();
    let b = doc.task("one_or_two_more").unwrap();
    // Count press patterns directly: one press in the first three steps,
    // one or two in the last three.
    let count = |f: &dyn Fn(u32) -> bool, n: u32| (0..1u32 << n).filter(|&b| f(b)).count() as f64 / (1u32 << n) as f64;
    let ra = count(&|b| (b & 7).count_ones() == 1, 3);
    let rb = count(&|b| matches!((b & 7).count_ones(), 1 | 2), 3);
    let rab = count(&|b| (b & 7).count_ones() == 1 && matches!((b >> 3).count_ones(), 1 | 2), 6);
    assert_eq!((ra, rb, rab), (3.0 / 8.0, 6.0 / 8.0, 18.0 / 64.0));

    let ab = serial_compose(&doc.world, a, b).unwrap();
    assert_eq!(ratio(&doc, a), ra);
    assert_eq!(ratio(&doc, b), rb);
    assert_eq!(ratio(&doc, &ab), rab);
    assert_eq!(ratio(&doc, &ab), ratio(&doc, a) * ratio(&doc, b));
}

#[test]
fn reach_two_matches_counting() {
    let doc = load("counter");
    let expected: Vec<bool> = (0..1u32 << STEPS)
        .map(|bits| counter_trace(bits, STEPS).iter().any(|&x| x >= 2.0))
        .collect();
    assert_eq!(successes(&doc, doc.task("reach_two").unwrap()), expected);
}

#[test]
fn negation_is_an_involution() {
    let doc = load("counter");
    for t in toy_tasks(&doc) {
        let twice = with_problem(&t, negate(&negate(&t.problem)));
        assert_eq!(successes(&doc, &twice), successes(&doc, &t), "{}", t.name);
        assert_eq!(ratio(&doc, &twice), ratio(&doc, &t));
    }
}

#[test]
fn negation_flips_reach_into_avoid() {
    let doc = load("counter");
    let t = doc.task("reach_two").unwrap();
    let not = with_problem(t, negate(&t.problem));
    let expected: Vec<bool> = (0..1u32 << STEPS)
        .map(|bits| counter_trace(bits, STEPS).iter().all(|&x| x < 2.0))
        .collect();
    assert_eq!(successes(&doc, &not), expected);
    assert_eq!(ratio(&doc, &not), 1.0 - ratio(&doc, t));
}

#[test]
fn disjunction_is_idempotent() {
    let doc = load("counter");
    for t in toy_tasks(&doc) {
        let or = with_problem(&t, disjoin(&doc.world, &t.problem, &t.problem).unwrap());
        assert_eq!(successes(&doc, &or), successes(&doc, &t), "{}", t.name);
        assert_eq!(ratio(&doc, &or), ratio(&doc, &t));
    }
}

#[test]
fn de_morgan_duality() {
    let doc = load("counter");
    let tasks = toy_tasks(&doc);
    for a in &tasks {
        for b in &tasks {
            let lhs = with_problem(a, negate(&conjoin(&doc.world, &a.problem, &b.problem).unwrap()));
            let rhs = with_problem(a, disjoin(&doc.world, &negate(&a.problem), &negate(&b.problem)).unwrap());
            assert_eq!(successes(&doc, &lhs), successes(&doc, &rhs), "{} {}", a.name, b.name);
        }
    }
}

#[test]
fn conjuncts_never_raise_the_ratio() {
    let doc = load("counter");
    let tasks = toy_tasks(&doc);
    for a in &tasks {
        for b in &tasks {
            // The conjunction runs under a's deadline, so b is judged there too.
            let b = &with_problem(a, b.problem.clone());
            let and = with_problem(a, conjoin(&doc.world, &a.problem, &b.problem).unwrap());
            assert!(ratio(&doc, &and) <= ratio(&doc, a).min(ratio(&doc, b)), "{} {}", a.name, b.name);
            let sa = successes(&doc, a);
            let sb = successes(&doc, b);
            for (i, s) in successes(&doc, &and).iter().enumerate() {
                assert_eq!(*s, sa[i] && sb[i], "{} {} #{i}", a.name, b.name);
            }
        }
    }
}

#[test]
fn abstraction_is_monotone() {
    let doc = load("counter");
    for t in toy_tasks(&doc) {
        for f in [1.0, 1.5, 2.0, 4.0] {
            let widened = abstract_task(&doc.world, &t, &[("x".to_string(), f)].into(), &[]).unwrap();
            let (s, w) = (successes(&doc, &t), successes(&doc, &widened));
            for i in 0..s.len() {
                assert!(!s[i] || w[i], "{} factor {f} history #{i}", t.name);
            }
            assert!(ratio(&doc, &widened) >= ratio(&doc, &t));
        }
        let dropped = abstract_task(&doc.world, &t, &BTreeMap::new(), &["x".to_string()]).unwrap();
        assert!(ratio(&doc, &dropped) >= ratio(&doc, &t));
    }
}

#[test]
fn abstraction_identity_and_inverse() {
    let doc = driving();
    let t = doc.task("drive_by_5").unwrap();
    assert_eq!(&abstract_task(&doc.world, t, &BTreeMap::new(), &[]).unwrap(), t);
    let f: BTreeMap<String, f64> = [("position".to_string(), 2.0)].into();
    let wide = abstract_task(&doc.world, t, &f, &[]).unwrap();
    // Widening position > 10 by 2 about the start value 2 gives position > 6.
    let goal = &wide.problem.goals()[0].target;
    assert_eq!(goal.get("position"), Some(&Interval::above(6.0)));
    let inv: BTreeMap<String, f64> = [("position".to_string(), 0.5)].into();
    let back = concretize(&doc.world, &wide, &inv, &PartialState::new()).unwrap();
    assert_eq!(back.problem.goals()[0].target, t.problem.goals()[0].target);
    assert!(abstract_task(&doc.world, t, &[("position".to_string(), 0.5)].into(), &[]).is_err());
}

#[test]
fn serial_composition_with_a_trivial_task_is_neutral() {
    let doc = load("counter");
    let a = doc.task("one_of_three").unwrap();
    let mut trivial = Task::trivial(&a.body, 3.0, a.energy.clone());
    trivial.name = "noop".into();
    let composed = serial_compose(&doc.world, a, &trivial).unwrap();
    assert_eq!(successes(&doc, &composed), successes(&doc, a));
}

#[test]
fn serial_composition_is_associative() {
    let doc = load("counter");
    let (a, b, c) = (reach(&doc, "a", 1.0, 2.0), reach(&doc, "b", 2.0, 2.0), reach(&doc, "c", 3.0, 2.0));
    let left = serial_compose(&doc.world, &serial_compose(&doc.world, &a, &b).unwrap(), &c).unwrap();
    let right = serial_compose(&doc.world, &a, &serial_compose(&doc.world, &b, &c).unwrap()).unwrap();
    assert_eq!(left.deadline, 6.0);
    assert_eq!(successes(&doc, &left), successes(&doc, &right));
}

#[test]
fn incompatible_chaining_is_rejected() {
    let doc = load("counter");
    let a = doc.task("one_of_three").unwrap();
    let mut b = doc.task("one_or_two_more").unwrap().clone();
    b.problem.initial = PartialState::new().with("x", Interval::around(5.0, 0.5)).unwrap();
    assert!(serial_compose(&doc.world, a, &b).is_err());
}

#[test]
fn problems_from_another_world_are_rejected() {
    let counter = load("counter");
    let car = driving();
    let p = &car.task("drive").unwrap().problem;
    let q = &counter.task("reach_two").unwrap().problem;
    assert!(conjoin(&counter.world, q, p).is_err());
    assert!(disjoin(&counter.world, p, q).is_err());
}

#[test]
fn stopping_at_the_target_needs_zero_velocity() {
    let doc = driving();
    let t = doc.task("drive").unwrap();
    let stop = Problem::atomic(vec![Goal::reach(
        PartialState::new().with("velocity", Interval::around(0.0, 0.01)).unwrap(),
    )
    .within(taskenv::algebra::Window::new(1.0, f64::INFINITY))]);
    let both = with_problem(t, conjoin(&doc.world, &t.problem, &stop).unwrap());
    let mut c = taskenv::harness::Constant::all(0.15);
    let out = run(&doc, &both, &mut c, &SimConfig::new(0.01)).unwrap();
    assert!(!out.status.is_success(), "{:?}", out.status);
}

#[test]
fn decomposition_preserves_status_on_the_grid() {
    let doc = driving();
    let t = doc.task("drive_by_5").unwrap();
    let milestone = Milestone {
        target: PartialState::new().with("position", Interval::above(6.0)).unwrap(),
        deadline: 3.0,
    };
    let parts = decompose_serial(&doc.world, t, std::slice::from_ref(&milestone)).unwrap();
    assert_eq!(parts.len(), 2);
    assert_eq!(parts[0].deadline + parts[1].deadline, t.deadline);
    let chained = serial_compose(&doc.world, &parts[0], &parts[1]).unwrap();
    let cfg = SimConfig::new(0.1);
    // Every power sequence on a coarse grid that passes position 6 by t = 3.
    let levels = [0.0, 5.0, 10.0];
    let mut checked = 0;
    for code in 0..levels.len().pow(5) {
        let mut c = code;
        let values: Vec<f64> = (0..5)
            .map(|_| {
                let v = levels[c % 3];
                c /= 3;
                v
            })
            .collect();
        let go = |task: &Task| run(&doc, task, &mut Scripted { values: values.clone(), period: 1.0 }, &cfg).unwrap();
        let whole = go(t);
        let passes = whole
            .history
            .records
            .iter()
            .any(|r| r.post.get(&doc.world, "position").unwrap() > 6.0 && r.post.get(&doc.world, "time").unwrap() <= 3.0 + 1e-9);
        if passes {
            checked += 1;
            assert_eq!(go(&chained).status.is_success(), whole.status.is_success(), "{values:?}");
        }
    }
    assert!(checked > 0);
    assert_eq!(decompose_serial(&doc.world, t, &[]).unwrap(), vec![t.clone()]);
}

#[test]
fn milestone_equal_to_the_goal_leaves_a_trivial_tail() {
    let doc = load("counter");
    let t = doc.task("reach_two").unwrap();
    let m = Milestone {
        target: t.problem.goals()[0].target.clone(),
        deadline: 4.0,
    };
    let parts = decompose_serial(&doc.world, t, &[m]).unwrap();
    assert_eq!(parts.len(), 2);
    assert_eq!(parts[1].problem, Problem::trivial());
}

#[test]
fn variants_differ_only_in_the_perturbed_start() {
    let doc = driving();
    let spec = VariantSpec {
        perturbations: vec![Perturbation {
            variable: "position".into(),
            mode: PerturbMode::Set,
            dist: Dist::Uniform { lo: 0.0, hi: 4.0 },
        }],
        ..VariantSpec::default()
    };
    let a = generate_variants(&doc, "drive", &spec, 5, 7).unwrap();
    let b = generate_variants(&doc, "drive", &spec, 5, 7).unwrap();
    assert_eq!(a.len(), 5);
    let base = doc.task("drive").unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.task, y.task);
        let p = x.task.start["position"];
        assert!((0.0..=4.0).contains(&p));
        assert_eq!(x.task.params["position.set"], p);
        assert_eq!(x.task.problem, base.problem);
        assert_eq!(x.task.deadline, base.deadline);
        assert_eq!(x.doc.world, doc.world);
        assert_eq!(x.task.start.keys().collect::<Vec<_>>(), ["position"]);
    }
    let distinct: std::collections::BTreeSet<u64> = a.iter().map(|v| v.task.start["position"].to_bits()).collect();
    assert_eq!(distinct.len(), 5);
}

#[test]
fn impossible_perturbations_name_the_variable() {
    let doc = driving();
    let spec = VariantSpec {
        perturbations: vec![Perturbation {
            variable: "power".into(),
            mode: PerturbMode::Offset,
            dist: Dist::Uniform { lo: 5.0, hi: 20.0 },
        }],
        ..VariantSpec::default()
    };
    let err = generate_variants(&doc, "drive", &spec, 3, 0).unwrap_err();
    assert!(err.to_string().contains("power"), "{err}");
}
