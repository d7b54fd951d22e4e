//! File-driven commands: one TOML config in, one JSON report (plus an
//! optional CSV table) out.
//!
//! Exit status: 0 on success, 2 when the analysis ran but reports a negative
//! finding (infeasible scenario, failed inequality, identity residual above
//! tolerance, exhausted jump search), 1 on any error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::iteration::{
    common_jump_search, index_monotonicity_check, iterate, jump_checks, mean_index, minimal_period_k, MonodromyProfile,
    RATIONAL_QMAX,
};
use crate::ledger::{
    chi_hat_profile, identity_check, morse_counts, morse_inequalities, parse_ratio, scenario_check, IterateTypes,
    LedgerOrbit, MeanValue, MorseTable,
};
use crate::orbit::{analyze_orbit, analytic_orbits, refine_orbit, ConvexSurface, NewtonSettings, OrbitAnalysis};
use crate::symplectic::{
    classify_blocks, elliptic_height, BlockLabel, floquet_multipliers, matrix_from_rows, rotation_function, splitting_jump,
    SymplecticMatrix, Tolerances,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    MatrixAnalyze,
    OrbitFind,
    Iterate,
    MeanIndex,
    IdentityCheck,
    MorseCheck,
    JumpSearch,
    ScenarioCheck,
}

#[derive(Debug, Parser)]
#[command(name = "sympidx", version, about = "Index theory of closed characteristics on convex hypersurfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Multipliers, elliptic height and normal-form blocks of a symplectic matrix.
    MatrixAnalyze(Flags),
    /// Closed orbits of a convex surface with monodromy, index and mean index.
    OrbitFind(Flags),
    /// i(y,m), ν(y,m) of a monodromy profile.
    Iterate(Flags),
    /// Mean index, K(y) and monotonicity of a profile.
    MeanIndex(Flags),
    /// Σ χ̂/î against 1/2.
    IdentityCheck(Flags),
    /// Morse counts M_q against b_q.
    MorseCheck(Flags),
    /// Common index jump certificate for a set of profiles.
    JumpSearch(Flags),
    /// Replay a labelled case argument.
    ScenarioCheck(Flags),
}

#[derive(Debug, Clone, Default, clap::Args, Serialize)]
pub struct Flags {
    /// TOML config (optional for scenario-check).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// JSON report path; a CSV table goes next to it. Stdout when absent.
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub qmax: Option<i64>,
    #[arg(long)]
    pub tmax: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scenario label for scenario-check.
    #[arg(long = "case")]
    pub case: Option<String>,
}

impl Sub {
    pub fn parts(&self) -> (Command, &Flags) {
        match self {
            Sub::MatrixAnalyze(f) => (Command::MatrixAnalyze, f),
            Sub::OrbitFind(f) => (Command::OrbitFind, f),
            Sub::Iterate(f) => (Command::Iterate, f),
            Sub::MeanIndex(f) => (Command::MeanIndex, f),
            Sub::IdentityCheck(f) => (Command::IdentityCheck, f),
            Sub::MorseCheck(f) => (Command::MorseCheck, f),
            Sub::JumpSearch(f) => (Command::JumpSearch, f),
            Sub::ScenarioCheck(f) => (Command::ScenarioCheck, f),
        }
    }
}

/// Result of one command: the report body, an optional CSV table, and
/// whether the finding is negative (exit 2).
pub struct Outcome {
    pub config: Value,
    pub result: Value,
    pub csv: Option<String>,
    pub negative: bool,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn read_input(flags: &Flags) -> Result<String> {
    let path = flags.input.as_ref().ok_or_else(|| Error::Config("--input is required for this command".into()))?;
    Ok(fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Per-command schemas.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guess {
    pub x0: Vec<f64>,
    pub period: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub surface: ConvexSurface,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_qmax")]
    pub q_max: i64,
    #[serde(default)]
    pub seed: u64,
    /// Starting points for Newton refinement; by default the planar circles
    /// of the underlying ellipsoid.
    #[serde(default)]
    pub guess: Vec<Guess>,
}

fn default_steps() -> usize {
    10_000
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    30
}
fn default_qmax() -> i64 {
    RATIONAL_QMAX
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    pub profile: MonodromyProfile,
    #[serde(default = "default_m_max")]
    pub m_max: u64,
}

fn default_m_max() -> u64 {
    100
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanIndexConfig {
    pub profile: MonodromyProfile,
    #[serde(default = "default_m_max")]
    pub monotonicity_m: u64,
}

/// One orbit of an identity check: χ̂ given or computed from a profile, î
/// given or computed from the profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityOrbit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_hat: Option<String>,
    /// Exact "p/q" string or a float.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_index: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<MonodromyProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub types: Vec<IterateTypes>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    /// Compute every orbit of this surface numerically instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<ConvexSurface>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_identity_tol")]
    pub tol: f64,
    #[serde(default)]
    pub orbit: Vec<IdentityOrbit>,
}

fn default_identity_tol() -> f64 {
    1e-6
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseConfig {
    #[serde(default = "default_morse_q")]
    pub q_max: i64,
    /// Given columns M_0.. instead of orbit data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<u64>>,
    #[serde(default)]
    pub orbit: Vec<LedgerOrbit>,
}

fn default_morse_q() -> i64 {
    40
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub profile: Vec<MonodromyProfile>,
    #[serde(default = "default_tmax")]
    pub t_max: u64,
}

fn default_tmax() -> u64 {
    100_000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default = "default_grid")]
    pub grid_step: f64,
}

fn default_grid() -> f64 {
    1e-3
}

// ---------------------------------------------------------------------------
// Commands.

fn matrix_analyze(flags: &Flags) -> Result<Outcome> {
    let mut cfg: MatrixConfig = parse(&read_input(flags)?)?;
    if let Some(t) = flags.tol {
        cfg.tolerances.symplectic = t;
    }
    let entries = matrix_from_rows(&cfg.matrix)?;
    let m = SymplecticMatrix::with_tolerance(entries, cfg.tolerances.symplectic)?;
    let multipliers = floquet_multipliers(&m)?;
    let e = elliptic_height(&m, cfg.tolerances.circle)?;
    let dec = classify_blocks(&m, &cfg.tolerances)?;
    // 2S⁺ − ν over the N1(1,b) blocks; other blocks do not enter.
    let at_one: Vec<BlockLabel> =
        dec.blocks.iter().copied().filter(|b| matches!(b, BlockLabel::N1 { eig: 1, .. })).collect();
    let splitting = if at_one.is_empty() { None } else { splitting_jump(&at_one).ok() };
    let rho = rotation_function(m.entries());
    let mut csv = String::from("re,im,modulus,arg\n");
    for z in &multipliers {
        csv.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", z.re, z.im, z.norm(), z.arg()));
    }
    let negative = !dec.is_complete();
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        result: json!({
            "n": m.n(),
            "sympl_residual": m.sympl_residual(),
            "multipliers": multipliers,
            "multipliers_polar": multipliers.iter().map(|z| [z.norm(), z.arg()]).collect::<Vec<_>>(),
            "elliptic_height": e,
            "decomposition": dec,
            "splitting_jump": splitting,
            "rotation_function": rho,
        }),
        csv: Some(csv),
        negative,
    })
}

fn find_orbits(cfg: &OrbitConfig) -> Result<Vec<OrbitAnalysis>> {
    let s = &cfg.surface;
    let probe = s.convexity_probe(1000, cfg.seed)?;
    if !probe.convex {
        return Err(Error::Input(format!(
            "surface fails the convexity probe (min H″ eigenvalue {:.3e})",
            probe.min_hessian_eigenvalue
        )));
    }
    let settings = NewtonSettings { tol: cfg.newton_tol, max_iter: cfg.max_iter, steps: cfg.steps };
    let orbits = if cfg.guess.is_empty() {
        let base = ConvexSurface::ellipsoid(s.radii())?.with_alpha(s.alpha)?;
        let circles = analytic_orbits(&base, cfg.steps)?;
        if base == *s {
            circles
        } else {
            circles.iter().map(|c| refine_orbit(s, &c.x0, c.period, &settings)).collect::<Result<_>>()?
        }
    } else {
        cfg.guess.iter().map(|g| refine_orbit(s, &g.x0, g.period, &settings)).collect::<Result<_>>()?
    };
    orbits.into_iter().map(|o| analyze_orbit(o, cfg.steps, cfg.q_max)).collect()
}

fn orbit_find(flags: &Flags) -> Result<Outcome> {
    let mut cfg: OrbitConfig = parse(&read_input(flags)?)?;
    if let Some(s) = flags.steps {
        cfg.steps = s;
    }
    if let Some(t) = flags.tol {
        cfg.newton_tol = t;
    }
    if let Some(q) = flags.qmax {
        cfg.q_max = q;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    let found = find_orbits(&cfg)?;
    let mut csv = String::from("orbit,period,i_maslov,i_ekeland,nu,mean_index,elliptic_height,elliptic,hyperbolic,non_degenerate,irrational_mean_index\n");
    for (j, a) in found.iter().enumerate() {
        let c = &a.classification;
        csv.push_str(&format!(
            "{},{:.17e},{},{},{},{},{},{},{},{},{}\n",
            j + 1,
            a.orbit.period,
            a.index.i_maslov,
            a.index.i_ekeland,
            a.index.nu,
            a.mean_index().map(|v| format!("{v:.17e}")).unwrap_or_default(),
            c.elliptic_height,
            c.elliptic,
            c.hyperbolic,
            c.non_degenerate,
            c.irrational_mean_index
        ));
    }
    Ok(Outcome { config: serde_json::to_value(&cfg)?, result: json!({ "orbits": found }), csv: Some(csv), negative: false })
}

fn iterate_cmd(flags: &Flags) -> Result<Outcome> {
    let cfg: IterateConfig = parse(&read_input(flags)?)?;
    let rows = (1..=cfg.m_max).map(|m| iterate(&cfg.profile, m)).collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("m,i_maslov,nu,i_ekeland\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.m, r.i_maslov, r.nu, r.i_ekeland));
    }
    Ok(Outcome { config: serde_json::to_value(&cfg)?, result: json!({ "iterates": rows }), csv: Some(csv), negative: false })
}

fn mean_index_cmd(flags: &Flags) -> Result<Outcome> {
    let cfg: MeanIndexConfig = parse(&read_input(flags)?)?;
    let mi = mean_index(&cfg.profile)?;
    let k = minimal_period_k(&cfg.profile)?;
    let mono = index_monotonicity_check(&cfg.profile, cfg.monotonicity_m)?;
    let negative = !mono.holds;
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        result: json!({ "mean_index": mi, "K": k, "monotonicity": mono }),
        csv: None,
        negative,
    })
}

fn mean_value(v: &toml::Value) -> Result<MeanValue> {
    match v {
        toml::Value::String(s) => Ok(MeanValue::Exact { value: parse_ratio(s)? }),
        toml::Value::Integer(i) => Ok(MeanValue::Exact { value: Rational64::from_integer(*i) }),
        toml::Value::Float(f) => Ok(MeanValue::Float { value: *f }),
        other => Err(Error::Config(format!("mean_index must be a number or \"p/q\", got {other}"))),
    }
}

fn identity_cmd(flags: &Flags) -> Result<Outcome> {
    let mut cfg: IdentityConfig = parse(&read_input(flags)?)?;
    if let Some(s) = flags.steps {
        cfg.steps = s;
    }
    if let Some(t) = flags.tol {
        cfg.tol = t;
    }
    let mut inputs = Vec::new();
    let mut orbit_rows = Vec::new();
    if let Some(surface) = &cfg.surface {
        let oc = OrbitConfig {
            surface: surface.clone(),
            steps: cfg.steps,
            newton_tol: default_newton_tol(),
            max_iter: default_max_iter(),
            q_max: default_qmax(),
            seed: flags.seed.unwrap_or(0),
            guess: vec![],
        };
        for (j, a) in find_orbits(&oc)?.iter().enumerate() {
            let p = a.classification.profile.as_ref().ok_or_else(|| {
                Error::Structure(format!("orbit {}: no iteration profile ({:?})", j + 1, a.classification.notes))
            })?;
            let chi = chi_hat_profile(p, &[], j + 1)?;
            let mi = mean_index(p)?;
            orbit_rows.push(json!({ "period": a.orbit.period, "i_maslov": a.index.i_maslov, "profile": p, "K": chi.k_period }));
            let mean = match mi.exact {
                Some(r) => MeanValue::Exact { value: r },
                None => MeanValue::Float { value: mi.value },
            };
            inputs.push((chi.value, mean));
        }
    }
    for (j, o) in cfg.orbit.iter().enumerate() {
        let chi = match (&o.chi_hat, &o.profile) {
            (Some(c), _) => parse_ratio(c)?,
            (None, Some(p)) => chi_hat_profile(p, &o.types, j + 1)?.value,
            (None, None) => return Err(Error::Config(format!("orbit {}: give chi_hat or a profile", j + 1))),
        };
        let mean = match (&o.mean_index, &o.profile) {
            (Some(v), _) => mean_value(v)?,
            (None, Some(p)) => {
                let mi = mean_index(p)?;
                match mi.exact {
                    Some(r) => MeanValue::Exact { value: r },
                    None => MeanValue::Float { value: mi.value },
                }
            }
            (None, None) => return Err(Error::Config(format!("orbit {}: give mean_index or a profile", j + 1))),
        };
        inputs.push((chi, mean));
    }
    let rep = identity_check(&inputs)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    let negative = rep.residual > cfg.tol;
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        result: json!({ "identity": rep, "orbits": orbit_rows, "within_tolerance": !negative }),
        csv: Some(String::from_utf8_lossy(&csv).into_owned()),
        negative,
    })
}

fn morse_cmd(flags: &Flags) -> Result<Outcome> {
    let mut cfg: MorseConfig = parse(&read_input(flags)?)?;
    if let Some(q) = flags.qmax {
        cfg.q_max = q;
    }
    let table = match &cfg.columns {
        Some(cols) => {
            let mut cols = cols.clone();
            cols.resize((cfg.q_max + 1).max(0) as usize, 0);
            MorseTable::from_columns(cols)
        }
        None => morse_counts(&cfg.orbit, cfg.q_max)?,
    };
    let rep = morse_inequalities(&table);
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        result: json!({ "table": table, "inequalities": rep }),
        csv: Some(String::from_utf8_lossy(&csv).into_owned()),
        negative: !rep.passed,
    })
}

fn jump_cmd(flags: &Flags) -> Result<Outcome> {
    let mut cfg: JumpConfig = parse(&read_input(flags)?)?;
    if let Some(t) = flags.tmax {
        cfg.t_max = t;
    }
    let config = serde_json::to_value(&cfg)?;
    match common_jump_search(&cfg.profile, cfg.t_max) {
        Ok(cert) => {
            // Re-verify each profile by direct iterate calls.
            let recheck = cfg
                .profile
                .iter()
                .zip(&cert.m_list)
                .zip(&cert.above_window)
                .map(|((p, &m), &w)| jump_checks(p, cert.t, m, w))
                .collect::<Result<Vec<_>>>()?;
            let verified = recheck.iter().all(|c| c.all());
            Ok(Outcome {
                config,
                result: json!({ "certificate": cert, "reverified": verified }),
                csv: None,
                negative: !verified,
            })
        }
        Err(Error::JumpExhausted { t_max, near_miss }) => Ok(Outcome {
            config,
            result: json!({ "exhausted": true, "t_max": t_max, "near_miss": near_miss }),
            csv: None,
            negative: true,
        }),
        Err(e) => Err(e),
    }
}

fn scenario_cmd(flags: &Flags) -> Result<Outcome> {
    let mut cfg: ScenarioConfig = match &flags.input {
        Some(_) => parse(&read_input(flags)?)?,
        None => ScenarioConfig { case: None, grid_step: default_grid() },
    };
    if let Some(c) = &flags.case {
        cfg.case = Some(c.clone());
    }
    if let Some(t) = flags.tol {
        cfg.grid_step = t;
    }
    let label = cfg.case.clone().ok_or_else(|| Error::Config("scenario-check needs --case or `case`".into()))?;
    let rep = scenario_check(&label, cfg.grid_step)?;
    let mut csv = String::from("step,holds,claim\n");
    for (i, s) in rep.steps.iter().enumerate() {
        csv.push_str(&format!("{},{},\"{}\"\n", i + 1, s.holds, s.claim.replace('"', "'")));
    }
    let negative = !rep.feasible || !rep.steps.iter().all(|s| s.holds);
    Ok(Outcome { config: serde_json::to_value(&cfg)?, result: serde_json::to_value(&rep)?, csv: Some(csv), negative })
}

pub fn run(command: Command, flags: &Flags) -> Result<Outcome> {
    match command {
        Command::MatrixAnalyze => matrix_analyze(flags),
        Command::OrbitFind => orbit_find(flags),
        Command::Iterate => iterate_cmd(flags),
        Command::MeanIndex => mean_index_cmd(flags),
        Command::IdentityCheck => identity_cmd(flags),
        Command::MorseCheck => morse_cmd(flags),
        Command::JumpSearch => jump_cmd(flags),
        Command::ScenarioCheck => scenario_cmd(flags),
    }
}

/// The JSON document written for a run.
pub fn report(command: Command, flags: &Flags, out: &Outcome) -> Value {
    json!({
        "tool": "sympidx",
        "version": VERSION,
        "command": command,
        "flags": flags,
        "config": out.config,
        "status": if out.negative { "negative" } else { "ok" },
        "result": out.result,
    })
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Run a parsed command line and return the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let (command, flags) = cli.command.parts();
    match run(command, flags) {
        Ok(out) => {
            let doc = report(command, flags, &out);
            let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
            let written = match &flags.output {
                Some(path) => write_atomic(path, text.as_bytes()).and_then(|_| match &out.csv {
                    Some(csv) => write_atomic(&path.with_extension("csv"), csv.as_bytes()),
                    None => Ok(()),
                }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => {
                    if out.negative {
                        eprintln!("sympidx: negative finding (status recorded in the report)");
                        2
                    } else {
                        0
                    }
                }
                Err(e) => {
                    eprintln!("sympidx: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("sympidx: {e}");
            1
        }
    }
}

pub fn main_from_env() -> i32 {
    execute(&Cli::parse())
}
