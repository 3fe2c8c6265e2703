//! Command-line front end: argument parsing, dispatch, and artifact emission
//! (CSV tables, JSON reports and a manifest of content hashes).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{load_config, matrix_from_rows, RunConfig};
use crate::eigensolver::{
    blowup_extract, discriminate_field, field_profiles, gauge_residual, interpolate, leading_eigenpair,
    solve_field, convergence_study, tube_statistics, discretize_coefficients, discretize, refined_argmax,
};
use crate::error::{Error, Result};
use crate::model::{
    benchmark_field, build_component, Anchor, ComponentKind, FieldParams, Killing, Point2, RecurrentComponent,
    TrigSeries, GOLDEN,
};
use crate::oukernel::{asymptotics_suite, semigroup_check, QuadSpec};
use crate::pressure::{build_lyapunov_scalar, global_pressure, select_support, Convention};
use crate::profiles::{
    assemble_limit_measure, blowup_eigenvalue_at, blowup_profile, cycle_density_fn, torus_density, AtomInput,
    BlowupProfile, Longitudinal,
};
use crate::ratefn::{action_minimize, extremal_shoot, feynman_kac_mc, quadratic_bound_fit, McOptions, QuadraticModel};
use crate::speclin::{infinite_gramian, spectral_split, DEFAULT_HYPERBOLICITY_FLOOR};

/// Environment variable read for the worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "SEMICLASSICAL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Pressure,
    Profile,
    Eigen,
    Study,
    Rate,
    Mc,
    Ou,
    Discriminate,
    Check,
}

#[derive(Debug, Parser)]
#[command(name = "semiclassical", version, about = "Principal eigenpairs of small-noise operators and their limits")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: `output.dir`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `mc.seed` and seeds the randomized checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: `SEMICLASSICAL_THREADS`, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// 17 significant digits, fixed format.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    config: String,
    config_sha256: String,
    seed: u64,
    seed_from_cli: bool,
    threads: usize,
    resolved_config: &'a RunConfig,
    status: &'a str,
    error: Option<String>,
    outputs: &'a [ManifestEntry],
}

/// Output directory plus the hash of everything written to it.
pub struct Artifacts {
    dir: PathBuf,
    csv: bool,
    json: bool,
    entries: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path, csv: bool, json: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), csv, json, entries: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }

    pub fn report<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parse arguments, run one command, and return the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = match args.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    eprintln!("error: {THREADS_ENV}={v} is not a thread count");
                    return 2;
                }
            },
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: thread count must be positive");
            return 2;
        }
        // Fails only if a pool already exists (repeated in-process runs); keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    let config_text = std::fs::read(&args.config).unwrap_or_default();
    let out = args.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut arts = match Artifacts::new(&out, cfg.output.csv, cfg.output.json) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out.display());
            return 1;
        }
    };
    let outcome = dispatch(&cfg, args.command, args.seed.unwrap_or(cfg.mc.seed), &mut arts);
    let (status, error, code) = match &outcome {
        Ok(()) => ("ok", None, 0),
        Err(e) => ("failed", Some(e.to_string()), exit_code(e)),
    };
    let manifest = Manifest {
        tool: "semiclassical",
        version: env!("CARGO_PKG_VERSION"),
        command: args.command,
        config: args.config.display().to_string(),
        config_sha256: hex::encode(Sha256::digest(&config_text)),
        seed: cfg.mc.seed,
        seed_from_cli: args.seed.is_some(),
        threads: rayon::current_num_threads(),
        resolved_config: &cfg,
        status,
        error: error.clone(),
        outputs: arts.entries(),
    };
    match serde_json::to_vec_pretty(&manifest) {
        Ok(mut bytes) => {
            bytes.push(b'\n');
            if let Err(e) = std::fs::write(out.join("manifest.json"), bytes) {
                eprintln!("error: cannot write manifest: {e}");
                return 1;
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    }
    if let Some(e) = error {
        eprintln!("error: {e}");
    }
    code
}

pub fn dispatch(cfg: &RunConfig, command: Command, seed: u64, arts: &mut Artifacts) -> Result<()> {
    match command {
        Command::Pressure => cmd_pressure(cfg, arts),
        Command::Profile => cmd_profile(cfg, arts),
        Command::Eigen => cmd_eigen(cfg, arts),
        Command::Study => cmd_study(cfg, arts),
        Command::Rate => cmd_rate(cfg, arts),
        Command::Mc => cmd_mc(cfg, arts),
        Command::Ou => cmd_ou(cfg, arts),
        Command::Discriminate => cmd_discriminate(cfg, arts),
        Command::Check => cmd_check(seed, arts),
    }
}

fn cmd_pressure(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let (comps, _) = cfg.component_list()?;
    let report = global_pressure(&comps, cfg.pressure.convention)?;
    let rows: Vec<Vec<String>> = report
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                c.label.clone(),
                c.kind.as_str().into(),
                num(c.stable),
                num(c.unstable),
                report.argmax.contains(&i).to_string(),
                report.eligible.contains(&i).to_string(),
            ]
        })
        .collect();
    arts.table(
        "pressure.csv",
        &header(&["label", "kind", "pressure_stable", "pressure_unstable", "argmax", "eligible"]),
        &rows,
    )?;
    arts.report("pressure.json", &report)
}

#[derive(Serialize)]
struct ProfileSummary {
    label: String,
    kind: ComponentKind,
    s: Vec<Vec<f64>>,
    stable_dim: usize,
    lambda_profile: f64,
    longitudinal_mean: Option<f64>,
    longitudinal_residual: Option<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn cmd_profile(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let (comps, pis) = cfg.component_list()?;
    let report = global_pressure(&comps, cfg.pressure.convention)?;
    let n_long = cfg.profile.n_long;
    let profiles: Vec<BlowupProfile> = report
        .eligible
        .iter()
        .map(|&i| blowup_profile(&comps[i], &build_lyapunov_scalar(&comps[i].splitting, pis[i])?, n_long))
        .collect::<Result<_>>()?;
    let gammas = &cfg.profile.gamma;
    if !gammas.is_empty() && gammas.len() != profiles.len() {
        return Err(Error::Config(format!(
            "profile.gamma has {} entries for {} eligible components",
            gammas.len(),
            profiles.len()
        )));
    }
    let inputs: Vec<AtomInput> = report
        .eligible
        .iter()
        .zip(&profiles)
        .enumerate()
        .map(|(j, (&i, p))| AtomInput { profile: p, anchor: comps[i].anchor, gamma: gammas.get(j).copied().unwrap_or(1.0) })
        .collect();
    let measure = assemble_limit_measure(&inputs)?;
    let summaries: Vec<ProfileSummary> = profiles
        .iter()
        .map(|p| {
            let (mean, res) = match &p.longitudinal {
                Longitudinal::None => (None, None),
                Longitudinal::Cycle(d) => (Some(d.mean_c), Some(d.residual)),
                Longitudinal::Torus(d) => (Some(d.mu2), Some(d.residual)),
            };
            ProfileSummary {
                label: p.label.clone(),
                kind: p.kind,
                s: rows_of(&p.s),
                stable_dim: p.stable_dim,
                lambda_profile: p.lambda_profile,
                longitudinal_mean: mean,
                longitudinal_residual: res,
            }
        })
        .collect();
    for p in &profiles {
        match &p.longitudinal {
            Longitudinal::None => {}
            Longitudinal::Cycle(d) => {
                let rows: Vec<Vec<String>> = d.theta.iter().zip(&d.f).map(|(t, f)| vec![num(*t), num(*f)]).collect();
                arts.table(&format!("density_{}.csv", p.label), &header(&["theta", "f"]), &rows)?;
            }
            Longitudinal::Torus(d) => {
                let n = d.n;
                let rows: Vec<Vec<String>> = (0..n * n)
                    .map(|i| vec![num((i % n) as f64 / n as f64), num((i / n) as f64 / n as f64), num(d.f[i])])
                    .collect();
                arts.table(&format!("density_{}.csv", p.label), &header(&["x", "y", "f"]), &rows)?;
            }
        }
    }
    let rows: Vec<Vec<String>> = measure
        .atoms
        .iter()
        .map(|a| {
            vec![
                a.label.clone(),
                a.kind.as_str().into(),
                num(a.gamma),
                num(a.weight),
                num(a.transverse_mass),
                num(a.longitudinal_mass),
            ]
        })
        .collect();
    arts.table(
        "limit_measure.csv",
        &header(&["label", "kind", "gamma", "weight", "transverse_mass", "longitudinal_mass"]),
        &rows,
    )?;
    arts.report("profiles.json", &serde_json::json!({ "profiles": summaries, "limit_measure": measure }))
}

fn cmd_eigen(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let field = cfg.field_model()?;
    let e = &cfg.eigen;
    let run = solve_field(&field, e.epsilon, e.n, &e.discretize, &e.solver)?;
    let grid = run.op.grid;
    let adjoint = leading_eigenpair(&run.op.adjoint(), &e.solver)?;
    let gauge = gauge_residual(&run.pair, &field, e.epsilon, grid)?;
    let (masses, gammas) = tube_statistics(&field, &run.measure, grid, e.epsilon);
    let profiles = field_profiles(&field, e.n)?;
    let mut blowups = Vec::new();
    let mut skipped = Vec::new();
    for (c, p) in field.components.iter().zip(&profiles) {
        match blowup_extract(&field, c, p, &run.measure, grid, e.epsilon)? {
            Some(b) => blowups.push(b),
            None => skipped.push(c.label.clone()),
        }
    }
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            vec![num(p[0]), num(p[1]), num(run.pair.u[i]), num(run.measure.v_rel[i]), num(run.measure.mass[i])]
        })
        .collect();
    arts.table("eigenvector.csv", &header(&["x", "y", "u", "v_rel", "mass"]), &rows)?;
    let argmax = refined_argmax(&run.measure, grid);
    arts.report(
        "eigen.json",
        &serde_json::json!({
            "field": field.name,
            "epsilon": e.epsilon,
            "n": e.n,
            "scheme": run.op.scheme,
            "peclet": run.op.peclet,
            "lambda": run.pair.lambda,
            "lambda_adjoint": adjoint.lambda,
            "residual": run.pair.residual,
            "bracket": run.pair.bracket,
            "iterations": run.pair.iterations,
            "factorizations": run.pair.factorizations,
            "min_u": run.pair.min_u,
            "log_vbar": run.measure.log_vbar,
            "argmax": argmax,
            "dmax": field.distance_to_recurrent_set(argmax),
            "gauge_residual": gauge,
            "labels": field.components.iter().map(|c| c.label.clone()).collect::<Vec<_>>(),
            "tube_masses": masses,
            "gammas": gammas,
            "blowup": blowups,
            "uncharged": skipped,
        }),
    )
}

fn cmd_study(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let field = cfg.field_model()?;
    let table = convergence_study(&field, &cfg.study.epsilons, &cfg.study.n_rule, &cfg.eigen.discretize, &cfg.eigen.solver)?;
    let mut cols = vec!["epsilon".to_string(), "lambda".into(), "dmax".into()];
    cols.extend(table.labels.iter().map(|l| format!("mass_{l}")));
    cols.extend(table.labels.iter().map(|l| format!("gamma_{l}")));
    cols.extend(["n".to_string(), "scheme".into(), "peclet".into()]);
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![num(r.eps), num(r.lambda), num(r.dmax)];
            v.extend(r.masses.iter().map(|m| num(*m)));
            v.extend(r.gammas.iter().map(|g| num(*g)));
            v.extend([r.n.to_string(), format!("{:?}", r.scheme).to_lowercase(), num(r.peclet)]);
            v
        })
        .collect();
    arts.table("study.csv", &cols, &rows)?;
    arts.report("study.json", &table)
}

fn rate_header() -> Vec<String> {
    header(&["x", "y", "t", "epsilon", "I_t", "estimate", "se", "bound_margin", "I_t_direct", "certified"])
}

fn cmd_rate(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let field = cfg.field_model()?;
    let r = &cfg.rate;
    let mut rows = Vec::new();
    let mut failure = None;
    for q in &r.queries {
        match extremal_shoot(&field, q.x, q.t, &r.shoot) {
            Ok(e) => {
                let (direct, cert) = if r.segments > 0 {
                    let d = action_minimize(&field, q.x, q.t, r.segments)?;
                    (num(d.action), d.certified.to_string())
                } else {
                    (String::new(), String::new())
                };
                rows.push(vec![
                    num(q.x[0]),
                    num(q.x[1]),
                    num(q.t),
                    String::new(),
                    num(e.action),
                    String::new(),
                    String::new(),
                    String::new(),
                    direct,
                    cert,
                ]);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    arts.table("rate.csv", &rate_header(), &rows)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if !r.bound_offsets.is_empty() {
        let mut rows = Vec::new();
        for comp in &field.components {
            let Some(base) = bound_base(comp) else { continue };
            let samples: Vec<Point2> = r
                .bound_offsets
                .iter()
                .map(|&o| if base.1 == 0 { [base.0[0] + o, base.0[1]] } else { [base.0[0], base.0[1] + o] })
                .collect();
            let fit = quadratic_bound_fit(&field, comp, r.bound_horizon, &samples, &r.shoot)?;
            for (d, i, ratio) in &fit.samples {
                rows.push(vec![comp.label.clone(), num(*d), num(*i), num(*ratio), num(fit.c_fit), num(fit.min_ratio), fit.pass.to_string()]);
            }
        }
        arts.table(
            "quadratic_bound.csv",
            &header(&["component", "offset", "I_t", "ratio", "c_fit", "min_ratio", "pass"]),
            &rows,
        )?;
    }
    Ok(())
}

/// Base point and normal axis for transverse samples around a component.
fn bound_base(comp: &RecurrentComponent) -> Option<(Point2, usize)> {
    match comp.anchor {
        Anchor::Point(p) => Some((p, 0)),
        Anchor::Line { origin, direction } if direction[0] == 0 => Some(([origin[0], origin[1] + 0.3], 0)),
        Anchor::Line { origin, .. } => Some(([origin[0] + 0.3, origin[1]], 1)),
        _ => None,
    }
}

fn cmd_mc(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let field = cfg.field_model()?;
    let m = &cfg.mc;
    let run = solve_field(&field, m.epsilon, m.n, &cfg.eigen.discretize, &cfg.eigen.solver)?;
    let grid = run.op.grid;
    let lambda = run.pair.lambda;
    let v = |x: Point2| interpolate(grid, &run.measure.v_rel, x);
    let opts = McOptions { n_paths: m.n_paths, seed: m.seed, dt: m.dt, block: m.block };
    let mut rows = Vec::new();
    let mut dt_used = f64::NAN;
    for &x in &m.points {
        let est = feynman_kac_mc(&field, x, m.t, m.epsilon, &v, &opts)?;
        dt_used = est.dt;
        let oracle = (-lambda * m.t).exp() * v(x);
        let action = match extremal_shoot(&field, x, m.t, &cfg.rate.shoot) {
            Ok(e) => e.action,
            Err(_) => action_minimize(&field, x, m.t, cfg.rate.segments.max(8))?.action,
        };
        // Smallest log C_t for which the decay bound holds, with v/v̄ = e^{λt}·Θ.
        let margin = est.mean.ln() + action / (2.0 * m.epsilon);
        rows.push(vec![
            num(x[0]),
            num(x[1]),
            num(m.t),
            num(m.epsilon),
            num(action),
            num(est.mean),
            num(est.std_error),
            num(margin),
            num(oracle),
            num((est.mean - oracle) / est.std_error),
        ]);
    }
    let mut cols = rate_header();
    cols.truncate(8);
    cols.extend(["oracle".to_string(), "z_score".into()]);
    arts.table("mc.csv", &cols, &rows)?;
    arts.report(
        "mc.json",
        &serde_json::json!({
            "field": field.name,
            "epsilon": m.epsilon,
            "t": m.t,
            "lambda": lambda,
            "grid": m.n,
            "n_paths": m.n_paths,
            "seed": m.seed,
            "dt": dt_used,
            "block": m.block,
        }),
    )
}

/// Sample points for semigroup checks: the axes and a diagonal point.
fn semigroup_points(dim: usize) -> Vec<DVector<f64>> {
    let mut pts = Vec::new();
    for a in 0..dim {
        for s in [-1.0, 0.5, 1.5] {
            let mut x = DVector::zeros(dim);
            x[a] = s;
            pts.push(x);
        }
    }
    pts.push(DVector::from_element(dim, 0.7));
    pts
}

fn cmd_ou(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let o = &cfg.ou;
    let mut rows = Vec::new();
    let mut sg_rows = Vec::new();
    let mut reports = Vec::new();
    let mut all_pass = true;
    for (bi, b) in o.blocks.iter().enumerate() {
        let m = matrix_from_rows(b, &format!("ou.blocks[{bi}]"))?;
        let split = spectral_split(&m, DEFAULT_HYPERBOLICITY_FLOOR)?;
        let lyap = build_lyapunov_scalar(&split, o.pi)?;
        let rep = asymptotics_suite(&split, &lyap, o.t_small, o.t_large)?;
        for it in &rep.items {
            all_pass &= it.pass;
            rows.push(vec![bi.to_string(), it.id.clone(), num(it.t), num(it.deviation), num(it.tolerance), it.pass.to_string()]);
        }
        let mut checks = Vec::new();
        if split.stable_dim() > 0 {
            for &t in &o.semigroup_times {
                let c = semigroup_check(&split, &lyap, t, &semigroup_points(m.nrows()), o.quadrature)?;
                let pass = c.deviation <= 1e-6;
                all_pass &= pass;
                sg_rows.push(vec![
                    bi.to_string(),
                    num(t),
                    num(c.deviation),
                    num(c.deviation_opposite_sign),
                    num(c.value_at_origin),
                    pass.to_string(),
                ]);
                checks.push(c);
            }
        }
        reports.push(serde_json::json!({ "block": b, "asymptotics": rep.items, "u_sign": rep.u_sign, "semigroup": checks }));
    }
    arts.table("ou.csv", &header(&["block", "item", "t", "deviation", "tolerance", "pass"]), &rows)?;
    arts.table(
        "semigroup.csv",
        &header(&["block", "t", "deviation", "deviation_opposite_sign", "value_at_origin", "pass"]),
        &sg_rows,
    )?;
    arts.report("ou.json", &reports)?;
    if all_pass {
        Ok(())
    } else {
        Err(Error::InvariantViolation("some Ornstein–Uhlenbeck checks failed; see ou.csv".into()))
    }
}

fn cmd_discriminate(cfg: &RunConfig, arts: &mut Artifacts) -> Result<()> {
    let d = &cfg.discriminate;
    let mut results = Vec::new();
    for spec in &d.benchmarks {
        let field = spec.build()?;
        results.push(discriminate_field(&field, &d.epsilons, &d.n_rule, d.tolerance, &cfg.eigen.discretize, &cfg.eigen.solver)?);
    }
    let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.field.clone(),
                join(&r.eps),
                join(&r.lambdas),
                num(r.extrapolated),
                num(r.tp_stable),
                num(r.tp_unstable),
                num(r.tolerance),
                r.verdict.as_str().into(),
            ]
        })
        .collect();
    arts.table(
        "discriminate.csv",
        &header(&["field", "epsilons", "lambdas", "extrapolated", "tp_stable", "tp_unstable", "tolerance", "verdict"]),
        &rows,
    )?;
    arts.report("discriminate.json", &results)
}

/// One row of the property suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub property: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn row(property: &str, value: f64, tolerance: f64) -> CheckRow {
    CheckRow { property: property.into(), value, tolerance, pass: value <= tolerance }
}

fn random_stable(rng: &mut ChaCha20Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let top = crate::speclin::eigenvalues(&g).iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let shift = top + 0.2 + rng.random_range(0.0..1.0);
    g - DMatrix::identity(dim, dim) * shift
}

/// Fast property suite behind `check`.
pub fn property_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for k in 0..50 {
        let b = random_stable(&mut rng, 1 + k % 4);
        let m = infinite_gramian(&b)?;
        let r = &b * &m + &m * b.transpose() + DMatrix::identity(b.nrows(), b.nrows());
        worst = worst.max(r.norm() / m.norm());
    }
    out.push(row("lyapunov_residual", worst, 1e-10));

    let mut worst = 0.0f64;
    for b in [DMatrix::from_element(1, 1, -1.0), DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0])] {
        let split = spectral_split(&b, DEFAULT_HYPERBOLICITY_FLOOR)?;
        let lyap = build_lyapunov_scalar(&split, 4.0)?;
        let rep = asymptotics_suite(&split, &lyap, 1e-3, 50.0)?;
        for it in rep.items {
            worst = worst.max(it.deviation / it.tolerance);
        }
    }
    out.push(row("ou_asymptotics_scaled", worst, 1.0));

    let split = spectral_split(&DMatrix::from_element(1, 1, -1.0), DEFAULT_HYPERBOLICITY_FLOOR)?;
    let lyap = build_lyapunov_scalar(&split, 4.0)?;
    let c = semigroup_check(&split, &lyap, 1.0, &semigroup_points(1), QuadSpec::default())?;
    out.push(row("semigroup_deviation", c.deviation, 1e-6));

    let comp = build_component(
        "p",
        Killing::Point(0.3),
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]),
        Anchor::Abstract,
    )?;
    let lyap = build_lyapunov_scalar(&comp.splitting, 4.0)?;
    let prof = blowup_profile(&comp, &lyap, 32)?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let y = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        worst = worst.max((blowup_eigenvalue_at(&prof, &comp, &lyap, &y) - prof.lambda_profile).abs());
    }
    out.push(row("blowup_eigenvalue", worst, 1e-8));

    let d = cycle_density_fn(|t| 1.0 + (std::f64::consts::TAU * t).cos(), 1.0, 1024)?;
    out.push(row("cycle_density_residual", d.residual, 1e-10));
    let fmax = d.f.iter().copied().fold(0.0f64, f64::max);
    out.push(row("cycle_density_max", (fmax - 1.0).abs(), 1e-12));

    let c = TrigSeries::constant(2.0).with_term([1, 0], 1.0, 0.0);
    let t = torus_density(&c, [1.0, GOLDEN], 64, 64)?;
    out.push(row("torus_density_residual", t.residual, 1e-8));
    out.push(row("torus_mean", (t.mu2 - 2.0).abs(), 0.0));

    let zero = |_: Point2| [0.0, 0.0];
    let op = discretize_coefficients(2, 16, 0.5, &zero, &|_| 1.25, &Default::default())?;
    let e = leading_eigenpair(&op, &Default::default())?;
    out.push(row("eigen_constant_killing", (e.lambda - 1.25).abs(), 1e-12));
    let f = benchmark_field("circle_sink_source", &FieldParams::default())?;
    let e = leading_eigenpair(&discretize(&f, 0.01, 256, &Default::default())?, &Default::default())?;
    out.push(row("eigen_sink_source_zero", e.lambda.abs(), 1e-10));

    let q = QuadraticModel::scalar(1.0, 0.25);
    let s = extremal_shoot(&q, [1.0, 0.0], 0.5, &Default::default())?;
    let m = action_minimize(&q, [1.0, 0.0], 0.5, 512)?;
    out.push(row("shooting_vs_minimization", (s.action - m.action).abs() / s.action, 1e-3));
    out.push(row("hamiltonian_drift_per_time", s.energy_drift / 0.5, 1e-8));

    let kinds = [ComponentKind::Point, ComponentKind::Cycle, ComponentKind::Torus];
    let mut violations = 0.0;
    for _ in 0..200 {
        let count = rng.random_range(1..7usize);
        let pairs: Vec<(ComponentKind, f64)> = (0..count)
            .map(|_| (kinds[rng.random_range(0..3usize)], rng.random_range(-2i32..3) as f64 * 0.5))
            .collect();
        let (_, _, eligible) = select_support(&pairs)?;
        let comps: Vec<RecurrentComponent> = eligible
            .iter()
            .map(|&i| match pairs[i].0 {
                ComponentKind::Point => build_component("p", Killing::Point(0.0), DMatrix::from_element(1, 1, -1.0), Anchor::Abstract),
                ComponentKind::Cycle => build_component(
                    "g",
                    Killing::Cycle { period: 1.0, c: TrigSeries::constant(0.0) },
                    DMatrix::from_element(1, 1, -1.0),
                    Anchor::Abstract,
                ),
                ComponentKind::Torus => build_component(
                    "t",
                    Killing::Torus { k: [1.0, GOLDEN], c: TrigSeries::constant(0.0) },
                    DMatrix::zeros(0, 0),
                    Anchor::Everywhere,
                ),
            })
            .collect::<Result<_>>()?;
        let profs: Vec<BlowupProfile> = comps
            .iter()
            .map(|c| blowup_profile(c, &build_lyapunov_scalar(&c.splitting, 4.0)?, 16))
            .collect::<Result<_>>()?;
        let inputs: Vec<AtomInput> = profs
            .iter()
            .map(|p| AtomInput { profile: p, anchor: Anchor::Abstract, gamma: 0.1 + rng.random_range(0.0..1.0) })
            .collect();
        let lm = assemble_limit_measure(&inputs)?;
        let has = |k: ComponentKind| lm.atoms.iter().any(|a| a.kind == k && a.weight > 0.0);
        let bad = (has(ComponentKind::Torus) && (has(ComponentKind::Cycle) || has(ComponentKind::Point)))
            || (has(ComponentKind::Cycle) && has(ComponentKind::Point))
            || (lm.total_weight() - 1.0).abs() > 1e-12;
        if bad {
            violations += 1.0;
        }
    }
    out.push(row("support_rule_violations", violations, 0.0));

    let z = benchmark_field("circle_zero_drift", &FieldParams::default())?;
    let fk = feynman_kac_mc(&z, [0.2, 0.0], 0.3, 0.1, &|_| 1.0, &McOptions { n_paths: 1000, seed, ..Default::default() })?;
    out.push(row("feynman_kac_trivial", (fk.mean - 1.0).abs() + fk.std_error, 0.0));

    let d = RunConfig::default();
    let same = RunConfig::parse(&d.to_toml()?)? == d;
    out.push(row("config_round_trip", if same { 0.0 } else { 1.0 }, 0.0));

    let conv = global_pressure(
        &[build_component("q", Killing::Point(1.0), DMatrix::from_element(1, 1, 1.0), Anchor::Abstract)?],
        Convention::Stable,
    )?;
    out.push(row("pressure_unstable_point", (conv.tp - 1.0).abs(), 0.0));
    Ok(out)
}

fn cmd_check(seed: u64, arts: &mut Artifacts) -> Result<()> {
    let rows = property_suite(seed)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.property.clone(), num(r.value), num(r.tolerance), r.pass.to_string()])
        .collect();
    arts.table("check.csv", &header(&["property", "value", "tolerance", "pass"]), &table)?;
    arts.report("check.json", &rows)?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.property.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!("failed properties: {}", failed.join(", "))))
    }
}
