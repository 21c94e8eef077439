//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajrec::eval::DEFAULT_TAU;
use trajrec::synthetic::simulate;
use trajrec::tracker::{
    init_filter_with_state, propagate, riccati_step, track_all, track_from_state, TrackMethod,
};
use trajrec::{
    build_model, build_series, concept_deltas, cosine_distance, evaluate, init_filter,
    predict_step, recommend, track_series, track_series_decoupled, ConceptSpace, Execution,
    InterestVector, PooledSummary, ProfileSeries, ScenarioConfig, StateVector, WatchEvent,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn to_mat(p: &DMatrix<f64>) -> oracle::Mat {
    (0..p.nrows())
        .map(|i| (0..p.ncols()).map(|j| p[(i, j)]).collect())
        .collect()
}

fn decoupling() -> Outcome {
    let dims = [1, 5, 44];
    let lengths = [10, 35, 100];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let cfg = ScenarioConfig {
            d: dims[i as usize % 3],
            k: lengths[(i as usize / 3) % 3],
            n_users: 1,
            seed: i,
            ..ScenarioConfig::default()
        };
        let series = &simulate(&cfg, Execution::Sequential).map_err(|e| e.to_string())?[0].series;
        let model = build_model(
            cfg.d,
            1.0,
            rng.random_range(0.9..1.0),
            10f64.powf(rng.random_range(-5.0..-1.0)),
            10f64.powf(rng.random_range(-3.0..0.0)),
        )
        .map_err(|e| e.to_string())?;
        let p0 = 10f64.powf(rng.random_range(-2.0..1.0));
        let dense = track_series(&model, series, p0).map_err(|e| e.to_string())?;
        let axes = track_series_decoupled(&model, series, p0).map_err(|e| e.to_string())?;
        let mut diff = |a: &[f64], b: &[f64]| {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        };
        for (a, b) in dense.steps.iter().zip(&axes.steps) {
            diff(&a.predicted, &b.predicted);
            diff(&a.innovation, &b.innovation);
            diff(&[a.gain_norm, a.p_trace], &[b.gain_norm, b.p_trace]);
        }
        diff(&dense.next_prediction, &axes.next_prediction);
        if dense.steps.len() != axes.steps.len() {
            return Err(format!("scenario {i}: row counts differ"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 5.0,
        format!("20 scenarios, max |dense - decoupled| = {worst:.2e} (<= 1e-9), {secs:.2}s (< 5s)"),
    )
}

fn hand_step() -> Outcome {
    let expected = vec![
        vec![1.75, 1.5, 0.5],
        vec![1.5, 2.0, 1.0],
        vec![0.5, 1.0, 1.0],
    ];
    let om = oracle::Model::constant_acceleration(1, 1.0, 1.0, 0.0, 1.0);
    let o = oracle::predict(&om, &[0.0; 3], &oracle::identity(3), &[1.0]);
    let oracle_err = oracle::max_abs_diff(&o.p, &expected).max(oracle::max_abs_diff(
        &vec![o.x.clone()],
        &vec![vec![0.5, 0.0, 0.0]],
    ));

    let model = build_model(1, 1.0, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let x0 = StateVector::from_blocks(&[0.0], &[0.0], &[0.0]).map_err(|e| e.to_string())?;
    let state = init_filter_with_state(&model, x0, 1.0).map_err(|e| e.to_string())?;
    let z = InterestVector::new(vec![1.0]).map_err(|e| e.to_string())?;
    let next = predict_step(&model, &state, &z).map_err(|e| e.to_string())?;
    let x: Vec<f64> = next.x_hat.as_vector().iter().copied().collect();
    let lib_err = oracle::max_abs_diff(&to_mat(&next.p), &expected)
        .max(oracle::max_abs_diff(&vec![x.clone()], &vec![o.x.clone()]))
        .max(oracle::max_abs_diff(&to_mat(&next.p), &o.p));
    check(
        oracle_err <= 1e-12 && lib_err <= 1e-12,
        format!("oracle error {oracle_err:.1e}, library error {lib_err:.1e} (<= 1e-12)"),
    )
}

fn riccati_fixed_point() -> Outcome {
    let model = build_model(1, 1.0, 1.0, 0.01, 1.0).map_err(|e| e.to_string())?;
    let mut p = DMatrix::identity(3, 3);
    let mut converged = None;
    for it in 1..=500 {
        let next = riccati_step(&model, &p).map_err(|e| e.to_string())?;
        let delta = (&next - &p).norm();
        p = next;
        if delta < 1e-10 {
            converged = Some(it);
            break;
        }
    }
    let Some(iters) = converged else {
        return Err("no convergence within 500 steps".into());
    };
    let om = oracle::Model::constant_acceleration(1, 1.0, 1.0, 0.01, 1.0);
    let pm = to_mat(&p);
    let residual = oracle::max_abs_diff(&oracle::riccati(&om, &pm), &pm);
    check(
        residual < 1e-8,
        format!("||dP||_F < 1e-10 after {iters} steps (< 500), substitution residual {residual:.1e} (< 1e-8)"),
    )
}

fn zero_innovation() -> Outcome {
    let cfg = ScenarioConfig {
        n_users: 10,
        ..ScenarioConfig::default()
    };
    let model = build_model(cfg.d, 1.0, 1.0, cfg.q_true, cfg.r_true).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for user in simulate(&cfg, Execution::default()).map_err(|e| e.to_string())? {
        let obs = propagate(&model, &user.initial_state, cfg.k);
        let series =
            ProfileSeries::new(&user.user_id, cfg.instants(), obs).map_err(|e| e.to_string())?;
        let rec = track_from_state(&model, &series, user.initial_state.clone(), 10.0)
            .map_err(|e| e.to_string())?;
        for s in &rec.steps {
            worst = s.innovation.iter().fold(worst, |m, v| m.max(v.abs()));
        }
    }
    check(
        worst < 1e-8,
        format!("10 users x 34 steps, max |innovation| = {worst:.1e} (< 1e-8)"),
    )
}

fn pooled(
    cfg: &ScenarioConfig,
    q: f64,
    r: f64,
    p0: f64,
    tau: f64,
) -> Result<PooledSummary, String> {
    let users = simulate(cfg, Execution::default()).map_err(|e| e.to_string())?;
    let series: Vec<ProfileSeries> = users.into_iter().map(|u| u.series).collect();
    let model = build_model(cfg.d, 1.0, 1.0, q, r).map_err(|e| e.to_string())?;
    let records = track_all(
        Execution::default(),
        TrackMethod::Dense,
        &model,
        &series,
        p0,
    )
    .map_err(|e| e.to_string())?;
    let reports = series
        .iter()
        .zip(&records)
        .map(|(s, rec)| evaluate(s, &rec.predictions(), tau))
        .collect::<trajrec::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Ok(PooledSummary::from_reports(&reports, tau))
}

fn default_scenario_quality() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let summary = pooled(&cfg, cfg.q_true, cfg.r_true, 10.0, DEFAULT_TAU)?;
    let secs = start.elapsed().as_secs_f64();
    let f = summary.fraction_below_threshold;
    check(
        f >= 0.80 && secs < 10.0,
        format!(
            "fraction_below(0.15) = {f:.4} over {} steps (>= 0.80), {secs:.2}s (< 10s)",
            summary.scored_steps
        ),
    )
}

fn smoothing() -> Outcome {
    let cfg = ScenarioConfig {
        q_true: 1e-6,
        r_true: 0.01,
        ..ScenarioConfig::default()
    };
    let summary = pooled(&cfg, cfg.q_true, cfg.r_true, cfg.r_true, DEFAULT_TAU)?;
    let f = summary.fraction_smoothed;
    check(
        f >= 0.95,
        format!(
            "q=1e-6, r=0.01: {:.0}% of {} users with smoothness ratio <= 1 (>= 95%), median {:.3}",
            100.0 * f,
            summary.smoothness_users,
            summary.median_smoothness_ratio
        ),
    )
}

fn recommendation_scenario() -> Outcome {
    let space = ConceptSpace::new(["a", "b", "x", "y", "z"]).map_err(|e| e.to_string())?;
    let est = InterestVector::new(vec![0.3, 0.3, 0.9, 0.8, 0.7]).map_err(|e| e.to_string())?;
    let calc = InterestVector::new(vec![0.3, 0.3, 0.2, 0.2, 0.2]).map_err(|e| e.to_string())?;
    let deltas = concept_deltas(&est, &calc, 0.05).map_err(|e| e.to_string())?;
    let rec = recommend("u", &deltas, &["x", "y"], &space).map_err(|e| e.to_string())?;
    check(
        rec.promoted == ["z"],
        format!(
            "positives {{x,y,z}}, watched {{x,y}} -> promoted {:?}",
            rec.promoted
        ),
    )
}

fn run_cli(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_trajrec"))
        .current_dir(cwd)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(cwd: &Path) -> Result<(), String> {
    fs::write(
        cwd.join("run.conf"),
        "d = 12\nk = 20\nusers = 15\nseed = 42\nvocab = sim/vocabulary.txt\nprofiles = prof/profiles.csv\nevents = sim/events.csv\n",
    )
    .map_err(|e| e.to_string())?;
    let c = ["--config", "run.conf"];
    run_cli(cwd, &[&c[..], &["simulate", "--out", "sim"]].concat())?;
    run_cli(
        cwd,
        &[
            &c[..],
            &[
                "build-profiles",
                "--instants",
                "sim/instants.txt",
                "--out",
                "prof",
            ],
        ]
        .concat(),
    )?;
    run_cli(cwd, &[&c[..], &["track", "--out", "trk"]].concat())?;
    run_cli(
        cwd,
        &[
            &c[..],
            &["evaluate", "--tracks", "trk/tracks", "--out", "eval"],
        ]
        .concat(),
    )?;
    run_cli(
        cwd,
        &[
            &c[..],
            &["recommend", "--date", "2008-09-15", "--out", "rec"],
        ]
        .concat(),
    )
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let bytes: usize = ta.values().map(Vec::len).sum();
    check(
        ta == tb,
        format!(
            "two pipeline runs: {} files, {bytes} bytes, identical = {}",
            ta.len(),
            ta == tb
        ),
    )
}

const CASES: u32 = 256;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn prop_cosine() -> Result<(), String> {
    runner()
        .run(
            &(
                (1usize..30).prop_flat_map(|d| prop::collection::vec(0.0f64..10.0, d..=d)),
                0.01f64..100.0,
            ),
            |(u, c)| {
                prop_assume!(u.iter().any(|&x| x > 1e-6));
                let v = InterestVector::new(u).unwrap();
                let w = v.scaled(c);
                let self_d = cosine_distance(&v, &v).unwrap();
                let scaled = cosine_distance(&v, &w).unwrap();
                prop_assert!(self_d.abs() < 1e-12 && scaled.abs() < 1e-12);
                let other =
                    InterestVector::new(v.as_slice().iter().rev().copied().collect()).unwrap();
                let dist = cosine_distance(&v, &other).unwrap();
                prop_assert!((0.0..=1.0).contains(&dist));
                prop_assert!((dist - cosine_distance(&other, &v).unwrap()).abs() < 1e-15);
                Ok(())
            },
        )
        .map_err(|e| format!("cosine: {e}"))
}

fn prop_covariance() -> Result<(), String> {
    let strat = (
        1usize..5,
        0.8f64..1.0,
        -6.0f64..0.0,
        -3.0f64..1.0,
        -2.0f64..2.0,
        prop::collection::vec(prop::collection::vec(0.0f64..3.0, 4), 2..15),
    );
    runner()
        .run(&strat, |(d, alpha, lq, lr, lp, raw)| {
            let model = build_model(d, 1.0, alpha, 10f64.powf(lq), 10f64.powf(lr)).unwrap();
            let obs: Vec<InterestVector> = raw
                .iter()
                .map(|r| InterestVector::new(r[..d].to_vec()).unwrap())
                .collect();
            let mut st = init_filter(&model, &obs[0], 10f64.powf(lp)).unwrap();
            for z in &obs {
                st = predict_step(&model, &st, z).unwrap();
                let p = &st.p;
                prop_assert!(p == &p.transpose(), "P not symmetric");
                let scale = p.diagonal().iter().fold(1.0f64, |m, &x| m.max(x.abs()));
                let min = SymmetricEigen::new(p.clone()).eigenvalues.min();
                prop_assert!(min >= -1e-9 * scale, "min eigenvalue {min}");
            }
            Ok(())
        })
        .map_err(|e| format!("covariance: {e}"))
}

fn prop_watched_exclusion() -> Result<(), String> {
    let strat = (1usize..25).prop_flat_map(|d| {
        (
            prop::collection::vec(0.0f64..2.0, d),
            prop::collection::vec(0.0f64..2.0, d),
            prop::collection::vec(any::<bool>(), d),
            0.01f64..0.5,
        )
    });
    runner()
        .run(&strat, |(est, calc, watched, theta)| {
            let labels: Vec<String> = (0..est.len()).map(|i| format!("g{i}")).collect();
            let space = ConceptSpace::new(labels.clone()).unwrap();
            let deltas = concept_deltas(
                &InterestVector::new(est).unwrap(),
                &InterestVector::new(calc).unwrap(),
                theta,
            )
            .unwrap();
            let today: Vec<&String> = labels
                .iter()
                .zip(&watched)
                .filter(|(_, &w)| w)
                .map(|(l, _)| l)
                .collect();
            let today: Vec<&str> = today.into_iter().map(String::as_str).collect();
            let rec = recommend("u", &deltas, &today, &space).unwrap();
            for g in &today {
                prop_assert!(!rec.promoted.iter().any(|p| p == g));
            }
            Ok(())
        })
        .map_err(|e| format!("watched exclusion: {e}"))
}

fn prop_order_insensitive() -> Result<(), String> {
    let genres = ["a", "b", "c", "d"];
    let event = (
        0usize..3,
        0i64..50,
        prop::sample::subsequence(genres.to_vec(), 1..=3),
        0.0f64..1.0,
    );
    let strat = (
        prop::collection::vec(event, 0..40),
        any::<u64>(),
        0.5f64..=1.0,
    );
    runner()
        .run(&strat, |(raw, shuffle_seed, decay)| {
            let space = ConceptSpace::new(genres).unwrap();
            let events: Vec<WatchEvent> = raw
                .iter()
                .map(|(u, t, g, f)| {
                    WatchEvent::new(
                        format!("u{u}"),
                        *t,
                        g.iter().map(|s| s.to_string()).collect(),
                        *f,
                    )
                    .unwrap()
                })
                .collect();
            let mut shuffled = events.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let instants = [10, 20, 35, 50];
            let a = build_series(&events, &space, &instants, decay).unwrap();
            let b = build_series(&shuffled, &space, &instants, decay).unwrap();
            prop_assert_eq!(a, b);
            Ok(())
        })
        .map_err(|e| format!("order insensitivity: {e}"))
}

fn properties() -> Outcome {
    prop_cosine()?;
    prop_covariance()?;
    prop_watched_exclusion()?;
    prop_order_insensitive()?;
    Ok(format!(
        "cosine bounds/scale, P symmetric+PSD, watched exclusion, build order: {CASES} cases each (>= 100)"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("decoupled tracker equals dense tracker", decoupling),
        ("hand-derived predictor step", hand_step),
        ("covariance recursion fixed point", riccati_fixed_point),
        (
            "zero innovation on noise-free trajectories",
            zero_innovation,
        ),
        ("prediction quality on default scenario", default_scenario_quality),
        ("smoothing of noisy series", smoothing),
        ("watched genres leave only z", recommendation_scenario),
        ("deterministic CLI pipeline", determinism),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {} {tag}: {name} -- {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
