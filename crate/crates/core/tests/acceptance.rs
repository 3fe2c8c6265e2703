//! Acceptance gate. Each criterion prints one `criterion N: PASS|FAIL` line with its
//! measured value; the test fails if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use semiclassical::eigensolver::{
    blowup_extract, convergence_study, discretize, discretize_coefficients, field_profiles, interpolate,
    leading_eigenpair, solve_field, NRule,
};
use semiclassical::model::{
    benchmark_field, build_component, Anchor, ComponentKind, FieldParams, Killing, RecurrentComponent, TrigSeries,
    GOLDEN,
};
use semiclassical::oukernel::{asymptotics_suite, semigroup_check, QuadSpec};
use semiclassical::pressure::{build_lyapunov_scalar, component_pressure, select_support, Convention};
use semiclassical::profiles::{
    assemble_limit_measure, blowup_discrete_residual, blowup_eigenvalue_at, blowup_profile, cycle_density_fn,
    torus_density, AtomInput, BlowupProfile,
};
use semiclassical::ratefn::{
    action_minimize, extremal_shoot, feynman_kac_mc, quadratic_bound_fit, McOptions, QuadraticModel,
};
use semiclassical::speclin::{eigenvalues, infinite_gramian, spectral_split, DEFAULT_HYPERBOLICITY_FLOOR};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e <= limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn random_stable(rng: &mut ChaCha20Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let top = eigenvalues(&g).iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    g - DMatrix::identity(dim, dim) * (top + 0.1 + rng.random_range(0.0..1.0))
}

fn c1_gramian() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let b = random_stable(&mut rng, 1 + k % 6);
        let m = infinite_gramian(&b).unwrap();
        let r = &b * &m + &m * b.transpose() + DMatrix::identity(b.nrows(), b.nrows());
        worst = worst.max(r.norm() / m.norm());
    }
    let (fast, t) = within(start, Duration::from_secs(5));
    outcome(worst <= 1e-10 && fast, format!("worst relative residual {worst:.3e}, {t}"))
}

fn blocks() -> Vec<DMatrix<f64>> {
    vec![
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]),
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.3, 1.5]),
    ]
}

fn c2_ou_asymptotics() -> Outcome {
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut items = 0;
    for (i, b) in blocks().iter().enumerate() {
        let split = spectral_split(b, DEFAULT_HYPERBOLICITY_FLOOR).unwrap();
        let lyap = build_lyapunov_scalar(&split, 4.0).unwrap();
        let rep = asymptotics_suite(&split, &lyap, 1e-3, 50.0).unwrap();
        for it in &rep.items {
            items += 1;
            if !it.pass {
                failed.push(format!("block {i} item {} deviation {:.3e}", it.id, it.deviation));
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    outcome(failed.is_empty() && fast, format!("{items} items checked, failures {failed:?}, {t}"))
}

fn c3_semigroup() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut opposite = f64::INFINITY;
    for b in blocks() {
        let split = spectral_split(&b, DEFAULT_HYPERBOLICITY_FLOOR).unwrap();
        if split.stable_dim() == 0 {
            continue;
        }
        let lyap = build_lyapunov_scalar(&split, 4.0).unwrap();
        let m = b.nrows();
        let points: Vec<DVector<f64>> = (0..7)
            .map(|k| DVector::from_fn(m, |i, _| ((k * 5 + i * 3) % 9) as f64 * 0.4 - 1.6))
            .collect();
        for t in [0.1, 1.0, 5.0] {
            let c = semigroup_check(&split, &lyap, t, &points, QuadSpec::default()).unwrap();
            worst = worst.max(c.deviation);
            opposite = opposite.min(c.deviation_opposite_sign);
        }
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    outcome(
        worst <= 1e-6 && fast,
        format!("sup deviation {worst:.3e} (literal sign gives at least {opposite:.3e}), {t}"),
    )
}

fn point(b: DMatrix<f64>, c: f64) -> RecurrentComponent {
    build_component("p", Killing::Point(c), b, Anchor::Abstract).unwrap()
}

fn c4_blowup() -> Outcome {
    let start = Instant::now();
    let cases = vec![
        point(DMatrix::from_element(1, 1, -1.0), 0.3),
        point(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]), 0.5),
        point(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0]), 0.1),
        build_component(
            "g",
            Killing::Cycle { period: 1.0, c: TrigSeries::constant(1.0).with_term([1, 0], 0.5, 0.0) },
            DMatrix::from_element(1, 1, -1.0),
            Anchor::Abstract,
        )
        .unwrap(),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut orders = Vec::new();
    let mut eig_err = 0.0f64;
    for comp in &cases {
        let lyap = build_lyapunov_scalar(&comp.splitting, 4.0).unwrap();
        let prof = blowup_profile(comp, &lyap, 256).unwrap();
        let r1 = blowup_discrete_residual(&prof, comp, &lyap, 0.1, 4.0).unwrap();
        let r2 = blowup_discrete_residual(&prof, comp, &lyap, 0.05, 4.0).unwrap();
        orders.push((r1 / r2).log2());
        eig_err = eig_err.max((prof.lambda_profile - component_pressure(comp, Convention::Stable)).abs());
        if comp.kind() == ComponentKind::Point {
            for _ in 0..20 {
                let y = DVector::from_fn(comp.transverse_dim(), |_, _| rng.random_range(-2.0..2.0));
                eig_err = eig_err.max((blowup_eigenvalue_at(&prof, comp, &lyap, &y) - prof.lambda_profile).abs());
            }
        }
    }
    let order_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.15);
    let (fast, t) = within(start, Duration::from_secs(30));
    outcome(
        order_ok && eig_err <= 1e-8 && fast,
        format!("observed orders {orders:.3?}, eigenvalue error {eig_err:.3e}, {t}"),
    )
}

fn c5_cycle_density() -> Outcome {
    let d = cycle_density_fn(|t| 1.0 + (std::f64::consts::TAU * t).cos(), 1.0, 1024).unwrap();
    let max = d.f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let periodic = d.eval(0.0) == d.eval(1.0);
    outcome(
        periodic && (max - 1.0).abs() <= 1e-12 && d.residual <= 1e-10,
        format!("periodic {periodic}, max-1 {:.3e}, residual {:.3e}", max - 1.0, d.residual),
    )
}

fn c6_torus_transport() -> Outcome {
    let c = TrigSeries::constant(1.3).with_term([1, 0], 0.8, 0.0);
    let d = torus_density(&c, [1.0, GOLDEN], 64, 64).unwrap();
    outcome(
        d.residual <= 1e-8 && d.mu2 == 1.3,
        format!("residual {:.3e}, mu2 {} for mean 1.3", d.residual, d.mu2),
    )
}

fn c7_eigen_exactness() -> Outcome {
    let zero = |_: [f64; 2]| [0.0, 0.0];
    let op = discretize_coefficients(2, 32, 0.3, &zero, &|_| 1.75, &Default::default()).unwrap();
    let flat = (leading_eigenpair(&op, &Default::default()).unwrap().lambda - 1.75).abs();

    let f = benchmark_field("circle_sink_source", &FieldParams::default()).unwrap();
    let e = leading_eigenpair(&discretize(&f, 0.01, 512, &Default::default()).unwrap(), &Default::default()).unwrap();
    let u0 = e.u[0];
    let spread = e.u.iter().map(|u| (u - u0).abs()).fold(0.0, f64::max) / u0;

    let killing = TrigSeries::constant(0.5).with_term([1, 0], 0.4, 0.2);
    let params = FieldParams { pi: 3.0, killing: killing.clone(), ..Default::default() };
    let g = benchmark_field("circle_sink_source", &params).unwrap();
    let gk = g.with_killing(killing.shifted(0.85)).unwrap();
    let l = |fm| leading_eigenpair(&discretize(fm, 0.02, 256, &Default::default()).unwrap(), &Default::default()).unwrap();
    let (a, b) = (l(&g), l(&gk));
    let shift = (b.lambda - a.lambda - 0.85).abs();
    let tol = (a.bracket[1] - a.bracket[0]).max(b.bracket[1] - b.bracket[0]).max(1e-11);
    outcome(
        flat <= 1e-12 && e.lambda.abs() <= 1e-10 && spread <= 1e-10 && shift <= 10.0 * tol,
        format!(
            "|λ−c0| {flat:.3e}, sink/source λ {:.3e} spread {spread:.3e}, shift error {shift:.3e} (bracket {tol:.1e})",
            e.lambda
        ),
    )
}

fn c8_torus_limit() -> Outcome {
    let start = Instant::now();
    let params = FieldParams { killing: TrigSeries::constant(2.0).with_term([1, 0], 1.0, 0.0), ..Default::default() };
    let f = benchmark_field("torus_irrational_flow", &params).unwrap();
    let eps = 1e-3;
    let run = solve_field(&f, eps, 128, &Default::default(), &Default::default()).unwrap();
    let profiles = field_profiles(&f, 128).unwrap();
    let cmp = blowup_extract(&f, &f.components[0], &profiles[0], &run.measure, run.op.grid, eps).unwrap().unwrap();
    let (fast, t) = within(start, Duration::from_secs(120));
    outcome(
        (run.pair.lambda - 2.0).abs() <= 0.05 && cmp.rel_l2 <= 0.05 && fast,
        format!("λ {:.6}, relative L2 {:.3e}, {t}", run.pair.lambda, cmp.rel_l2),
    )
}

fn c9_max_point_rate() -> Outcome {
    let start = Instant::now();
    // A killing term even about x = 1/2 pins the maximum onto the cycle by symmetry.
    let params = FieldParams { killing: TrigSeries::constant(0.5).with_term([1, 0], 0.0, 0.4), ..Default::default() };
    let f = benchmark_field("torus_shear_cycles", &params).unwrap();
    let table = convergence_study(
        &f,
        &[1e-2, 3e-3, 1e-3, 3e-4],
        &NRule::default(),
        &Default::default(),
        &Default::default(),
    )
    .unwrap();
    let slope = table.slope.unwrap_or(f64::NAN);
    let dists: Vec<String> = table.rows.iter().map(|r| format!("{:.1e}:{:.3e}", r.eps, r.dmax)).collect();
    let (fast, t) = within(start, Duration::from_secs(300));
    outcome(
        (0.35..=0.65).contains(&slope) && fast,
        format!("slope {slope:.3} (distances {dists:?}), {t}"),
    )
}

fn c10_rate_function() -> Outcome {
    let models = [
        (QuadraticModel::scalar(1.0, 0.25), [0.8, 0.0]),
        (QuadraticModel::scalar(-0.5, 0.5), [-0.6, 0.0]),
        (QuadraticModel { dim: 2, w: [[1.0, 0.3], [-0.3, 0.5]], p: [[0.2, 0.05], [0.05, 0.3]] }, [0.5, -0.4]),
        (QuadraticModel { dim: 2, w: [[-1.0, 0.0], [0.0, 2.0]], p: [[0.25, 0.0], [0.0, 0.1]] }, [0.3, 0.3]),
    ];
    let mut rel = 0.0f64;
    let mut drift = 0.0f64;
    for (m, x) in &models {
        for t in [0.2, 0.5] {
            let s = extremal_shoot(m, *x, t, &Default::default()).unwrap();
            let d = action_minimize(m, *x, t, 512).unwrap();
            rel = rel.max((s.action - d.action).abs() / s.action.abs());
            drift = drift.max(s.energy_drift / t);
        }
    }
    let params = FieldParams { killing: TrigSeries::constant(0.5).with_term([1, 0], 0.4, 0.0), ..Default::default() };
    let f = benchmark_field("torus_shear_cycles", &params).unwrap();
    let comp = &f.components[0];
    let samples: Vec<[f64; 2]> = [0.02, 0.05, 0.1].iter().map(|&o| [o, 0.3]).collect();
    let fit = quadratic_bound_fit(&f, comp, 0.2, &samples, &Default::default()).unwrap();
    outcome(
        rel <= 1e-3 && drift <= 1e-8 && fit.min_ratio > 0.0,
        format!("shooting/minimization {rel:.3e}, drift per time {drift:.3e}, bound min ratio {:.4}", fit.min_ratio),
    )
}

fn c11_feynman_kac() -> Outcome {
    let start = Instant::now();
    let params = FieldParams { pi: 3.0, killing: TrigSeries::constant(1.0).with_term([1, 0], 0.5, 0.0), ..Default::default() };
    let f = benchmark_field("circle_sink_source", &params).unwrap();
    let (eps, t) = (0.05, 0.5);
    let run = solve_field(&f, eps, 512, &Default::default(), &Default::default()).unwrap();
    let grid = run.op.grid;
    let v = |x: [f64; 2]| interpolate(grid, &run.measure.v_rel, x);
    let opts = McOptions { n_paths: 100_000, seed: 11, ..Default::default() };
    let mut worst = 0.0f64;
    let mut first = None;
    for x in [[0.1, 0.0], [0.3, 0.0], [0.5, 0.0], [0.7, 0.0], [0.9, 0.0]] {
        let est = feynman_kac_mc(&f, x, t, eps, &v, &opts).unwrap();
        let oracle = (-run.pair.lambda * t).exp() * v(x);
        worst = worst.max(((est.mean - oracle) / est.std_error).abs());
        first.get_or_insert(est);
    }
    let again = feynman_kac_mc(&f, [0.1, 0.0], t, eps, &v, &opts).unwrap();
    let same = first.is_some_and(|e| e == again);
    let (fast, el) = within(start, Duration::from_secs(60));
    outcome(worst <= 3.0 && same && fast, format!("max |z| {worst:.3}, repeat identical {same}, {el}"))
}

fn c12_support_selection() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let kinds = [ComponentKind::Point, ComponentKind::Cycle, ComponentKind::Torus];
    let mut violations = 0;
    let mut worst_sum = 0.0f64;
    let trials = 1000;
    for _ in 0..trials {
        let count = rng.random_range(1..8usize);
        let pairs: Vec<(ComponentKind, f64)> = (0..count)
            .map(|_| (kinds[rng.random_range(0..3usize)], rng.random_range(-2i32..3) as f64 * 0.5))
            .collect();
        let (_, _, eligible) = select_support(&pairs).unwrap();
        let comps: Vec<RecurrentComponent> = eligible
            .iter()
            .map(|&i| match pairs[i].0 {
                ComponentKind::Point => point(DMatrix::from_element(1, 1, -1.0), pairs[i].1 - 1.0),
                ComponentKind::Cycle => build_component(
                    "g",
                    Killing::Cycle { period: 1.0, c: TrigSeries::constant(pairs[i].1 - 1.0).with_term([1, 0], 0.3, 0.0) },
                    DMatrix::from_element(1, 1, -1.0),
                    Anchor::Abstract,
                )
                .unwrap(),
                ComponentKind::Torus => build_component(
                    "t",
                    Killing::Torus { k: [1.0, GOLDEN], c: TrigSeries::constant(pairs[i].1) },
                    DMatrix::zeros(0, 0),
                    Anchor::Everywhere,
                )
                .unwrap(),
            })
            .collect();
        let profiles: Vec<BlowupProfile> = comps
            .iter()
            .map(|c| blowup_profile(c, &build_lyapunov_scalar(&c.splitting, 4.0).unwrap(), 32).unwrap())
            .collect();
        let inputs: Vec<AtomInput> = profiles
            .iter()
            .map(|p| AtomInput { profile: p, anchor: Anchor::Abstract, gamma: rng.random_range(0.05..2.0) })
            .collect();
        let lm = assemble_limit_measure(&inputs).unwrap();
        let has = |k: ComponentKind| lm.atoms.iter().any(|a| a.kind == k && a.weight != 0.0);
        if (has(ComponentKind::Torus) && (has(ComponentKind::Cycle) || has(ComponentKind::Point)))
            || (has(ComponentKind::Cycle) && has(ComponentKind::Point))
        {
            violations += 1;
        }
        worst_sum = worst_sum.max((lm.total_weight() - 1.0).abs());
    }
    outcome(
        violations == 0 && worst_sum <= 1e-12,
        format!("{violations} violations in {trials} draws, max |Σw−1| {worst_sum:.3e}"),
    )
}

fn c13_discriminate() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "").unwrap();
    let run = |out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_semiclassical"))
            .args(["discriminate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "3"])
            .status()
            .unwrap();
        (status.code(), std::fs::read(out.join("discriminate.csv")).unwrap_or_default())
    };
    let (c1, a) = run("a");
    let (c2, b) = run("b");
    let text = String::from_utf8_lossy(&a);
    let verdicts: Vec<String> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{}={}", f[0], f[f.len() - 1])
        })
        .collect();
    outcome(
        c1 == Some(0) && c2 == Some(0) && a == b && verdicts.len() == 3,
        format!("exit codes {c1:?}/{c2:?}, identical {}, verdicts {verdicts:?}", a == b),
    )
}

#[test]
fn acceptance() {
    let criteria: Vec<(u32, fn() -> Outcome)> = vec![
        (1, c1_gramian),
        (2, c2_ou_asymptotics),
        (3, c3_semigroup),
        (4, c4_blowup),
        (5, c5_cycle_density),
        (6, c6_torus_transport),
        (7, c7_eigen_exactness),
        (8, c8_torus_limit),
        (9, c9_max_point_rate),
        (10, c10_rate_function),
        (11, c11_feynman_kac),
        (12, c12_support_selection),
        (13, c13_discriminate),
    ];
    let mut failed = Vec::new();
    for (n, check) in criteria {
        let o = check();
        println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
