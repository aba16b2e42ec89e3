//! Command-line front end.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out-dir`.
//! Errors go to stderr as one JSON object; exit codes are 0 ok, 1 numerical
//! failure, 2 usage or IO, 3 resonance gate.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bifurcate::{BifurcationProblem, SolverSettings};
use crate::eos::GammaLawEos;
use crate::error::{Error, Result};
use crate::evolve::{second_derivative_quiet, EvolutionConfig, Evolver, FourierField};
use crate::linwave::{
    boundary_residual, eigenfunction_profiles, extend_tile, mode_field, quiet_field, seam_jumps,
    TileField,
};
use crate::profile::{Medium, PiecewiseConstantProfile, Profile};
use crate::sl_core::{fundamental_matrix, fundamental_matrix_span};
use crate::spectrum::{
    divisors, eigen_solve, eigen_table, genericity_mc, resonance_scan, Chi, GenericityConfig,
    ResonanceThresholds, Verdict,
};

#[derive(Debug, Parser)]
#[command(
    name = "puretone",
    version,
    about = "Pure-tone periodic solutions of the Euler equations in layered media"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Worker threads for parallel scans.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenfrequency table.
    Eigen(EigenArgs),
    /// Small divisors at the reference period.
    Divisors(DivisorArgs),
    /// Resonance verdict for one mode.
    Resonance(ResonanceArgs),
    /// Monte Carlo scan for frequency relations.
    Genericity(GenericityArgs),
    /// Linear eigenmode and its tile.
    Mode(ModeArgs),
    /// Bifurcation branch from a linear mode.
    Perturb(PerturbArgs),
    /// Periodic tile of a solution (quiet state when alpha = 0).
    Tile(TileArgs),
    /// Invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChiArg {
    Periodic,
    Acoustic,
}

impl From<ChiArg> for Chi {
    fn from(c: ChiArg) -> Self {
        match c {
            ChiArg::Periodic => Chi::Periodic,
            ChiArg::Acoustic => Chi::Acoustic,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArgs {
    /// Profile JSON file.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, value_enum, default_value = "periodic")]
    pub chi: ChiArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    /// Single mode or range such as `1..50`.
    #[arg(long, default_value = "1..10")]
    pub k: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DivisorArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 64)]
    pub jmax: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResonanceArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 64)]
    pub jmax: usize,
    /// Divisor threshold for a nonresonant verdict.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenericityArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    /// Largest `k` and `l` in the frequency relations.
    #[arg(long, default_value_t = 12)]
    pub kmax: usize,
    #[arg(long, default_value_t = 24)]
    pub jmax: usize,
    /// Residual below which a sample counts as an exact resonance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModeArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 256)]
    pub nx: usize,
    #[arg(long, default_value_t = 64)]
    pub nt: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 32)]
    pub modes: usize,
    #[arg(long, conflicts_with = "alpha_schedule")]
    pub alpha: Option<f64>,
    /// Comma-separated amplitudes.
    #[arg(long)]
    pub alpha_schedule: Option<String>,
    /// Weighted residual for Newton convergence.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Largest x step of the evolution.
    #[arg(long)]
    pub dx: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TileArgs {
    #[command(flatten)]
    pub common: ProfileArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 32)]
    pub modes: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 256)]
    pub nt: usize,
    /// Newton tolerance; also bounds the boundary residual accepted for extension (times 100).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Profile JSON file; a two-level test profile when omitted.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "periodic")]
    pub chi: ChiArg,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub profile_sha256: Option<String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub results: Value,
    pub timings: Timings,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenRow {
    pub k: usize,
    pub omega: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub kappa_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DivisorRow {
    pub j: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleRow {
    pub id: usize,
    pub min_residual: f64,
    pub k: usize,
    pub l: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Parses `5`, `1..50`, `1..=50` or `1-50` into an inclusive range.
pub fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Usage(format!("invalid k range {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let (lo, hi) = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?, num(b)?)
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?, num(b)?)
    } else if let Some((a, b)) = s.split_once('-') {
        (num(a)?, num(b)?)
    } else {
        let k = num(s)?;
        (k, k)
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

pub fn parse_schedule(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::Usage(format!("invalid amplitude {t:?}")))
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.into(),
        source,
    }
}

fn load(path: &Path) -> Result<(Medium, String)> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse {
        path: path.into(),
        message: "profile is not UTF-8".into(),
    })?;
    let medium = Medium::from_json(&text).map_err(|e| match e {
        Error::InvalidProfile(m) => Error::Parse {
            path: path.into(),
            message: m,
        },
        other => other,
    })?;
    Ok((medium, sha256_hex(&bytes)))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

struct Outcome {
    outputs: Vec<String>,
    results: Value,
    profile_sha256: Option<String>,
    seed: Option<u64>,
    /// Raised after the manifest is written.
    deferred: Option<Error>,
}

impl Outcome {
    fn new(outputs: &[&str], results: Value, hash: Option<String>) -> Self {
        Self {
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            results,
            profile_sha256: hash,
            seed: None,
            deferred: None,
        }
    }
}

/// Two-level profile used by `verify` when no file is given.
pub fn default_medium() -> Medium {
    let profile: Profile = PiecewiseConstantProfile::new(vec![1.0, 2.0], vec![0.5, 0.5])
        .expect("valid levels")
        .into();
    Medium::new(GammaLawEos::new(1.4, 1.0).expect("valid eos"), 1.0, profile).expect("valid medium")
}

/// Runs a parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cli))
}

fn run_in_pool(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let dir = &cli.out_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (name, config, outcome) = match &cli.command {
        Command::Eigen(a) => ("eigen", json!(a), cmd_eigen(a, dir)?),
        Command::Divisors(a) => ("divisors", json!(a), cmd_divisors(a, dir)?),
        Command::Resonance(a) => ("resonance", json!(a), cmd_resonance(a, dir)?),
        Command::Genericity(a) => ("genericity", json!(a), cmd_genericity(a, dir)?),
        Command::Mode(a) => ("mode", json!(a), cmd_mode(a, dir)?),
        Command::Perturb(a) => ("perturb", json!(a), cmd_perturb(a, dir)?),
        Command::Tile(a) => ("tile", json!(a), cmd_tile(a, dir)?),
        Command::Verify(a) => ("verify", json!(a), cmd_verify(a, dir)?),
    };
    let manifest = RunManifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config,
        profile_sha256: outcome.profile_sha256,
        seed: outcome.seed,
        outputs: outcome.outputs,
        results: outcome.results,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_eigen(a: &EigenArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let chi: Chi = a.common.chi.into();
    let ks: Vec<usize> = parse_k_range(&a.k)?
        .into_iter()
        .filter(|&k| chi.admits(k))
        .collect();
    if ks.is_empty() {
        return Err(Error::Usage(format!("no admissible modes in {:?}", a.k)));
    }
    let rows: Vec<EigenRow> = eigen_table(&m.profile, &ks, chi)?
        .into_iter()
        .map(|e| EigenRow {
            k: e.k,
            omega: e.omega,
            period: e.period,
            kappa_residual: e.kappa_residual,
        })
        .collect();
    write_rows(&dir.join("eigen.csv"), &rows)?;
    Ok(Outcome::new(
        &["eigen.csv"],
        json!({ "count": rows.len() }),
        Some(hash),
    ))
}

fn cmd_divisors(a: &DivisorArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let chi: Chi = a.common.chi.into();
    let ef = eigen_solve(&m.profile, a.k, chi)?;
    let table = divisors(&m.profile, ef.period, chi, a.jmax)?;
    let rows: Vec<DivisorRow> = (1..=a.jmax)
        .map(|j| DivisorRow {
            j,
            delta: table.get(j),
        })
        .collect();
    write_rows(&dir.join("divisors.csv"), &rows)?;
    Ok(Outcome::new(
        &["divisors.csv"],
        json!({ "omega": ef.omega, "period": ef.period, "bound": table.bound() }),
        Some(hash),
    ))
}

fn cmd_resonance(a: &ResonanceArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let thresholds = ResonanceThresholds {
        tol: a.tol,
        ..ResonanceThresholds::default()
    };
    let report = resonance_scan(&m.profile, a.k, a.common.chi.into(), a.jmax, thresholds)?;
    write_json(&dir.join("resonance.json"), &report)?;
    let mut out = Outcome::new(
        &["resonance.json"],
        json!({ "verdict": report.verdict, "min_residual": report.min_residual, "argmin_j": report.argmin_j }),
        Some(hash),
    );
    if report.verdict == Verdict::Resonant {
        out.deferred = Some(Error::Resonant {
            k: a.k,
            j: report.argmin_j,
            residual: report.min_residual,
        });
    }
    Ok(out)
}

fn cmd_genericity(a: &GenericityArgs, dir: &Path) -> Result<Outcome> {
    let cfg = GenericityConfig {
        levels: a.levels,
        samples: a.samples,
        seed: a.seed,
        k_max: a.kmax,
        l_max: a.kmax,
        j_max: a.jmax,
        exact_tol: a.tol,
        ..GenericityConfig::default()
    };
    let run = genericity_mc(&cfg)?;
    let rows: Vec<SampleRow> = run
        .records
        .iter()
        .map(|r| SampleRow {
            id: r.id,
            min_residual: r.min_residual,
            k: r.argmin[0],
            l: r.argmin[1],
            j: r.argmin[2],
        })
        .collect();
    write_rows(&dir.join("genericity_samples.csv"), &rows)?;
    #[derive(Serialize)]
    struct Bin {
        decade: i32,
        count: usize,
    }
    let h = &run.stats.histogram;
    let bins: Vec<Bin> = h
        .decades
        .iter()
        .zip(&h.counts)
        .map(|(&decade, &count)| Bin { decade, count })
        .collect();
    write_rows(&dir.join("genericity_histogram.csv"), &bins)?;
    write_json(&dir.join("genericity.json"), &run.stats)?;
    let mut out = Outcome::new(
        &[
            "genericity_samples.csv",
            "genericity_histogram.csv",
            "genericity.json",
        ],
        json!({
            "completed": run.stats.completed,
            "failures": run.stats.failures,
            "exact_resonances": run.stats.exact_resonances,
            "min_of_min": run.stats.min_of_min,
        }),
        None,
    );
    out.seed = Some(a.seed);
    Ok(out)
}

fn write_tile(tile: &TileField, dir: &Path, stem: &str) -> Result<()> {
    tile.write_csv(&dir.join(format!("{stem}.csv")))?;
    tile.write_binary(&dir.join(format!("{stem}.bin")))
}

fn cmd_mode(a: &ModeArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let chi: Chi = a.common.chi.into();
    let ef = eigen_solve(&m.profile, a.k, chi)?;
    let mode = eigenfunction_profiles(&m.profile, &ef, a.nx)?;
    #[derive(Serialize)]
    struct Row {
        x: f64,
        sigma: f64,
        phi: f64,
        psi: f64,
    }
    let rows: Vec<Row> = (0..mode.x.len())
        .map(|i| Row {
            x: mode.x[i],
            sigma: m.profile.sigma_at(mode.x[i]),
            phi: mode.phi[i],
            psi: mode.psi[i],
        })
        .collect();
    write_rows(&dir.join("mode.csv"), &rows)?;
    let mut base = mode_field(&m.profile, &mode, a.nt)?;
    base.meta.profile_hash = Some(hash.clone());
    let tile = extend_tile(&base, chi, 1e-8)?;
    write_tile(&tile, dir, "mode_tile")?;
    Ok(Outcome::new(
        &["mode.csv", "mode_tile.csv", "mode_tile.bin"],
        json!({
            "omega": ef.omega,
            "period": ef.period,
            "boundary_defect": mode.boundary_defect(),
            "seam_jump": seam_jumps(&base, chi),
        }),
        Some(hash),
    ))
}

fn problem(m: Medium, k: usize, chi: Chi, modes: usize, tol: f64) -> BifurcationProblem {
    let mut p = BifurcationProblem::new(m, k, chi, modes);
    p.settings = SolverSettings {
        tol,
        ..SolverSettings::default()
    };
    p
}

fn cmd_perturb(a: &PerturbArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let alphas = match (&a.alpha, &a.alpha_schedule) {
        (Some(v), _) => vec![*v],
        (None, Some(s)) => parse_schedule(s)?,
        (None, None) => vec![1e-4, 2e-4, 5e-4, 1e-3],
    };
    let mut p = problem(m, a.k, a.common.chi.into(), a.modes, a.tol).with_alphas(alphas);
    p.settings.dx = a.dx;
    let report = p.branch_continue()?;
    write_json(
        &dir.join("branch.json"),
        &json!({ "config": a, "settings": p.settings, "report": report }),
    )?;
    let mut out = Outcome::new(
        &["branch.json"],
        json!({
            "converged": report.solutions.len(),
            "largest_alpha": report.largest_alpha,
            "failure": report.failure,
        }),
        Some(hash),
    );
    if let Some(f) = &report.failure {
        out.deferred = Some(Error::Newton {
            alpha: f.alpha,
            reason: f.message.clone(),
        });
    }
    Ok(out)
}

fn cmd_tile(a: &TileArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = load(&a.common.profile)?;
    let chi: Chi = a.common.chi.into();
    let mut outputs = vec!["tile.csv", "tile.bin"];
    let (mut base, results) = if a.alpha == 0.0 {
        let ef = eigen_solve(&m.profile, a.k, chi)?;
        let q = quiet_field(&m.profile, m.p_bar, ef.period, a.nx, a.nt, chi)?;
        (q, json!({ "period": ef.period, "alpha": 0.0 }))
    } else {
        let p = problem(m, a.k, chi, a.modes, a.tol);
        let sol = p.solve_at_alpha(a.alpha, None)?;
        let (tile, fields) = p.solution_tile(&sol, a.nx, a.nt)?;
        #[derive(Serialize)]
        struct Row {
            x: f64,
            j: usize,
            a: f64,
            b: f64,
        }
        let mut rows = Vec::new();
        for (x, f) in tile.x.iter().zip(&fields) {
            for j in 0..=f.modes() {
                rows.push(Row {
                    x: *x,
                    j,
                    a: f.a[j],
                    b: f.b[j],
                });
            }
        }
        write_rows(&dir.join("trajectory.csv"), &rows)?;
        outputs.push("trajectory.csv");
        (tile, json!({ "period": sol.period, "solution": sol }))
    };
    base.meta.profile_hash = Some(hash.clone());
    let (r0, r1) = boundary_residual(&base, chi)?;
    let tile = extend_tile(&base, chi, 100.0 * a.tol.max(1e-10))?;
    write_tile(&tile, dir, "tile")?;
    let mut results = results;
    results["boundary_residual"] = json!([r0, r1]);
    results["seam_jump"] = json!(seam_jumps(&base, chi));
    results["x_periodic"] = json!(tile.is_x_periodic());
    Ok(Outcome::new(&outputs, results, Some(hash)))
}

fn check(name: &str, value: f64, threshold: f64) -> VerifyCheck {
    VerifyCheck {
        name: name.into(),
        value,
        threshold,
        pass: value.is_finite() && value <= threshold,
    }
}

/// Invariant suite on one medium and mode.
pub fn verify_suite(m: &Medium, k: usize, chi: Chi) -> Result<Vec<VerifyCheck>> {
    let mut checks = Vec::new();
    let ef = eigen_solve(&m.profile, k, chi)?;
    let omegas = [0.3, 1.0, ef.omega, 7.5, 40.0];

    let det = omegas
        .iter()
        .map(|&w| fundamental_matrix(&m.profile, w).map(|p| (p.det() - 1.0).abs()));
    checks.push(check(
        "transfer_det",
        det.collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max),
        1e-12,
    ));

    let ell = m.profile.ell();
    let mut split: f64 = 0.0;
    for &w in &omegas {
        let whole = fundamental_matrix(&m.profile, w)?;
        let parts = fundamental_matrix_span(&m.profile, w, 0.37 * ell, ell)?
            * fundamental_matrix_span(&m.profile, w, 0.0, 0.37 * ell)?;
        split = split.max(
            whole.max_abs_diff(&parts)
                / whole
                    .m
                    .iter()
                    .flatten()
                    .fold(1.0, |a: f64, v| a.max(v.abs())),
        );
    }
    checks.push(check("transfer_composition", split, 1e-9));

    let ks: Vec<usize> = (1..=12).filter(|&j| chi.admits(j)).collect();
    let table = eigen_table(&m.profile, &ks, chi)?;
    let kres = table
        .iter()
        .fold(0.0f64, |a, e| a.max(e.kappa_residual.abs()));
    checks.push(check("eigen_kappa_residual", kres, 1e-10));
    let mono = table
        .windows(2)
        .filter(|w| w[1].omega <= w[0].omega)
        .count();
    checks.push(check("eigen_monotone_violations", mono as f64, 0.0));

    let modes = 16;
    let ev = Evolver::new(m, ef.period, EvolutionConfig::new(modes))?;
    let q = FourierField::constant(ef.period, modes, m.p_bar);
    checks.push(check(
        "quiet_fixed_point",
        ev.nonlinear(&q)?.max_abs_diff(&q),
        1e-13,
    ));

    let mut lin: f64 = 0.0;
    for j in 1..=4 {
        let (_, d) = ev.linearized(&q, &FourierField::cos_mode(ef.period, modes, j, 1.0))?;
        let psi = fundamental_matrix(&m.profile, j as f64 * d.nu())?;
        lin = lin
            .max((d.a[j] - psi.m[0][0]).abs())
            .max((d.b[j] - psi.m[1][0]).abs());
    }
    checks.push(check("linearized_vs_transfer", lin, 1e-6));

    let quiet = quiet_field(&m.profile, m.p_bar, ef.period, 16, 16, chi)?;
    let ext = extend_tile(&quiet, chi, 0.0)?;
    let spread = ext
        .p
        .iter()
        .fold(0.0f64, |a, v| a.max((v - m.p_bar).abs()))
        .max(ext.u.iter().fold(0.0, |a, v| a.max(v.abs())));
    checks.push(check("quiet_tile_constant", spread, 0.0));

    let d2 = second_derivative_quiet(m, &ef)?;
    checks.push(check(
        "genuine_nonlinearity_b_ell",
        d2.b_ell,
        -f64::MIN_POSITIVE,
    ));

    let scan = resonance_scan(
        &m.profile,
        k,
        chi,
        2 * modes,
        ResonanceThresholds::default(),
    )?;
    if scan.verdict == Verdict::Nonresonant {
        let p = BifurcationProblem::new(m.clone(), k, chi, modes);
        let dg = p.dgdz_check(1e-4)?;
        checks.push(check(
            "dgdz_relative_difference",
            dg.relative_difference,
            1e-4,
        ));
        checks.push(check(
            "dgdz_sign_mismatch",
            if dg.sign_agrees { 0.0 } else { 1.0 },
            0.0,
        ));
    }
    Ok(checks)
}

fn cmd_verify(a: &VerifyArgs, dir: &Path) -> Result<Outcome> {
    let (m, hash) = match &a.profile {
        Some(p) => {
            let (m, h) = load(p)?;
            (m, Some(h))
        }
        None => (default_medium(), None),
    };
    let checks = verify_suite(&m, a.k, a.chi.into())?;
    write_json(&dir.join("verify.json"), &checks)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    let mut out = Outcome::new(
        &["verify.json"],
        json!({ "checks": checks.len(), "failed": failed }),
        hash,
    );
    if !failed.is_empty() {
        out.deferred = Some(Error::Verification(failed.join(", ")));
    }
    Ok(out)
}

/// JSON error object written to stderr.
pub fn error_json(e: &Error) -> Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
    if let Some(p) = e.path() {
        v["path"] = json!(p.display().to_string());
    }
    v
}

/// Parses arguments, runs, reports errors, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!(
                "{}",
                json!({ "error": "usage", "message": e.to_string(), "exit_code": 2 })
            );
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
