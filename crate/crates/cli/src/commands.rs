//! Subcommands. Each produces a report document and an exit code:
//! 0 pass, 1 verdict failure, 2 input error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use trichotomy_core::coupling::{self, ForwardOutcome, Overrides, DICHOTOMY_EXPONENT};
use trichotomy_core::genlab::{self, Defect, GeneratorSpec};
use trichotomy_core::projections::{self, check_range_orthogonality};
use trichotomy_core::rates::{self, DEFAULT_DIVERGENCE_FLOOR};
use trichotomy_core::report::Location;
use trichotomy_core::spectral::{self, ExponentGrid, Flag, FpDichotomyParams, Tolerances};
use trichotomy_core::{CheckOutcome, DiProjectionFamily, LtvSystem, RateSequence, TriProjectionFamily};

use crate::document::{self, FpModel, Loaded, Model, ParamsDoc, SystemDocument, TriModel};
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "trichotomy-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Worst tolerated relative deviation of the propagator identity.
pub const PROPAGATOR_TOL: f64 = 1e-10;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub window: Option<usize>,
    /// Relative tolerance on comparisons of sharp constants.
    pub tol: Option<f64>,
    /// Divergence floor for growth-rate checks.
    pub floor: Option<f64>,
    /// Rotation seed for `generate`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Diagonal `diag(1/2, 2, 1)` with `h = k = 2^n`, `mu = nu = n + 1`.
    E1,
    /// Nonuniform scalar example embedded with an unstable and a central
    /// coordinate.
    E2Embedded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Validate {
        input: PathBuf,
    },
    Verify {
        input: PathBuf,
    },
    Couple {
        input: PathBuf,
        out_b: Option<PathBuf>,
        out_c: Option<PathBuf>,
    },
    Roundtrip {
        input: PathBuf,
        b: Option<PathBuf>,
        c: Option<PathBuf>,
    },
    Estimate {
        input: PathBuf,
        /// Inline JSON object or path to one.
        grid: String,
    },
    Generate {
        input: Option<PathBuf>,
        preset: Option<Preset>,
        horizon: Option<usize>,
        corrupt: Option<Defect>,
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Verify { .. } => "verify",
            Command::Couple { .. } => "couple",
            Command::Roundtrip { .. } => "roundtrip",
            Command::Estimate { .. } => "estimate",
            Command::Generate { .. } => "generate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    pub pass: bool,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
}

/// What the process prints and returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: u8,
    pub stdout: String,
    /// Message for standard error when the command failed before a verdict.
    pub error: Option<String>,
}

/// Report fields filled in while a command runs.
struct Context {
    command: &'static str,
    inputs: Vec<InputDigest>,
    window: Option<usize>,
    tolerances: Option<Tolerances>,
}

impl Context {
    fn load(&mut self, role: &'static str, path: &Path) -> CliResult<Loaded> {
        let loaded = document::read(path)?;
        self.digest(role, &loaded.bytes);
        Ok(loaded)
    }

    fn digest(&mut self, role: &'static str, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            role,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    fn window(&mut self, opts: &Options, horizon: usize) -> CliResult<usize> {
        let w = match opts.window {
            None => horizon,
            Some(w) if w <= horizon => w,
            Some(w) => {
                return Err(CliError::Input(format!("--window {w} exceeds the horizon {horizon}")));
            }
        };
        self.window = Some(w);
        Ok(w)
    }

    fn tolerances(&mut self, opts: &Options) -> CliResult<Tolerances> {
        let mut t = Tolerances::default();
        if let Some(v) = opts.tol {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Input(format!("--tol must be nonnegative and finite, got {v}")));
            }
            t.verdict = v;
        }
        self.tolerances = Some(t);
        Ok(t)
    }

    fn finish(self, result: CliResult<(bool, Value)>) -> Outcome {
        let (pass, exit_code, error, result) = match result {
            Ok((pass, v)) => (pass, if pass { 0 } else { 1 }, None, Some(v)),
            Err(e) => (false, e.exit_code(), Some(e.to_string()), None),
        };
        let report = ReportDocument {
            tool: TOOL,
            version: VERSION,
            command: self.command,
            inputs: self.inputs,
            window: self.window,
            tolerances: self.tolerances,
            pass,
            exit_code,
            error: error.clone(),
            result,
        };
        Outcome {
            exit_code,
            stdout: pretty(&report),
            error,
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn run(cmd: &Command, opts: &Options) -> Outcome {
    let mut ctx = Context {
        command: cmd.name(),
        inputs: Vec::new(),
        window: None,
        tolerances: None,
    };
    let result = match cmd {
        Command::Validate { input } => validate(&mut ctx, opts, input),
        Command::Verify { input } => verify(&mut ctx, opts, input),
        Command::Couple { input, out_b, out_c } => couple(&mut ctx, opts, input, out_b.as_deref(), out_c.as_deref()),
        Command::Roundtrip { input, b, c } => roundtrip(&mut ctx, opts, input, b.as_deref(), c.as_deref()),
        Command::Estimate { input, grid } => estimate(&mut ctx, opts, input, grid),
        Command::Generate {
            input,
            preset,
            horizon,
            corrupt,
            out,
        } => match generate(&mut ctx, opts, input.as_deref(), *preset, *horizon, *corrupt) {
            Ok(doc) => {
                let text = document::to_json(&doc);
                match out {
                    None => {
                        return Outcome {
                            exit_code: 0,
                            stdout: text,
                            error: None,
                        }
                    }
                    Some(path) => write_atomic(path, &text).map(|()| (true, json!({ "written": path.display().to_string() }))),
                }
            }
            Err(e) => Err(e),
        },
    };
    ctx.finish(result)
}

fn tri_model(ctx: &mut Context, role: &'static str, path: &Path) -> CliResult<TriModel> {
    match ctx.load(role, path)?.doc.model()? {
        Model::Tri(m) => Ok(m),
        Model::Fp(_) => Err(CliError::Input(format!(
            "{}: expected a trichotomy document",
            path.display()
        ))),
    }
}

fn fp_model(ctx: &mut Context, role: &'static str, path: &Path) -> CliResult<FpModel> {
    match ctx.load(role, path)?.doc.model()? {
        Model::Fp(m) => Ok(m),
        Model::Tri(_) => Err(CliError::Input(format!("{}: expected a dichotomy document", path.display()))),
    }
}

fn require_family(family: &Option<TriProjectionFamily>) -> CliResult<&TriProjectionFamily> {
    family
        .as_ref()
        .ok_or_else(|| CliError::Input("projections required for a trichotomy check".into()))
}

fn require_splitting(splitting: &Option<DiProjectionFamily>) -> CliResult<&DiProjectionFamily> {
    splitting
        .as_ref()
        .ok_or_else(|| CliError::Input("projections required for a dichotomy check".into()))
}

fn propagator_check(sys: &LtvSystem, window: usize) -> CliResult<CheckOutcome> {
    let r = sys.check_propagator(window, PROPAGATOR_TOL)?;
    let (m, n, p) = r.witness;
    Ok(CheckOutcome {
        clause: "propagator".into(),
        pass: r.pass,
        worst: r.worst_relative_deviation,
        tol: r.tol,
        location: Some(Location {
            step: n,
            detail: format!("T({m},{n}) against T({m},{p}) T({p},{n})"),
        }),
    })
}

fn growth_rates(rates: &[(&'static str, &RateSequence)], window: usize, floor: f64) -> CliResult<(Value, Vec<Flag>)> {
    if window < 2 {
        return Ok((Value::Array(Vec::new()), Vec::new()));
    }
    let mut out = Vec::new();
    let mut flags = Vec::new();
    for (role, r) in rates {
        let v = rates::validate_growth_rate(r, window, floor)?;
        if v.heuristic {
            flags.push(Flag::HeuristicDivergence { rate: role.to_string() });
        }
        out.push(json!({ "rate": role, "verdict": value(&v) }));
    }
    Ok((Value::Array(out), flags))
}

fn floor(opts: &Options) -> CliResult<f64> {
    let f = opts.floor.unwrap_or(DEFAULT_DIVERGENCE_FLOOR);
    if !(f.is_finite() && f > 0.0) {
        return Err(CliError::Input(format!("--floor must be positive and finite, got {f}")));
    }
    Ok(f)
}

fn validate(ctx: &mut Context, opts: &Options, input: &Path) -> CliResult<(bool, Value)> {
    let model = ctx.load("system", input)?.doc.model()?;
    let tol = ctx.tolerances(opts)?;
    let floor = floor(opts)?;
    let (kind, sys, checks, orthogonality, growth) = match &model {
        Model::Tri(m) => {
            let fam = require_family(&m.family)?;
            let window = ctx.window(opts, m.system.horizon())?;
            let mut checks = vec![propagator_check(&m.system, window)?];
            checks.extend(projections::validate_tri(fam, tol.projection).checks);
            checks.extend(projections::check_invariance(&m.system, fam, tol.projection)?.checks);
            let orth = check_range_orthogonality(fam, tol.projection);
            checks.push(orth.ranges.clone());
            checks.push(orth.pythagoras.clone());
            let p = &m.params;
            let growth = growth_rates(
                &[
                    ("h", &p.stable_rate),
                    ("k", &p.unstable_rate),
                    ("mu", &p.start_weight),
                    ("nu", &p.end_weight),
                ],
                window,
                floor,
            )?;
            ("trichotomy", &m.system, checks, orth, growth)
        }
        Model::Fp(m) => {
            let di = require_splitting(&m.splitting)?;
            let window = ctx.window(opts, m.system.horizon())?;
            let mut checks = vec![propagator_check(&m.system, window)?];
            checks.extend(projections::validate_di(di, tol.projection).checks);
            checks.extend(projections::check_invariance(&m.system, di, tol.projection)?.checks);
            let orth = check_range_orthogonality(di, tol.projection);
            let p = &m.params;
            let growth = growth_rates(&[("mu", &p.start_weight), ("nu", &p.end_weight)], window, floor)?;
            ("fp-dichotomy", &m.system, checks, orth, growth)
        }
    };
    let pass = checks.iter().all(|c| c.pass);
    let failing: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.clause.as_str()).collect();
    let (growth, flags) = growth;
    Ok((
        pass,
        json!({
            "kind": kind,
            "checks": value(&checks),
            "failing": failing,
            "range_orthogonality": value(&orthogonality),
            "reversibility": value(&sys.is_reversible(tol.rank)),
            "growth_rates": growth,
            "divergence_floor": floor,
            "flags": value(&flags),
        }),
    ))
}

fn verify(ctx: &mut Context, opts: &Options, input: &Path) -> CliResult<(bool, Value)> {
    let model = ctx.load("system", input)?.doc.model()?;
    let tol = ctx.tolerances(opts)?;
    let report = match &model {
        Model::Tri(m) => {
            let fam = require_family(&m.family)?;
            let window = ctx.window(opts, m.system.horizon())?;
            spectral::verify_trichotomy(&m.system, fam, &m.params, window, &tol)?
        }
        Model::Fp(m) => {
            let di = require_splitting(&m.splitting)?;
            let window = ctx.window(opts, m.system.horizon())?;
            spectral::verify_fp_dichotomy(&m.system, di, &m.params, window, &tol)?
        }
    };
    Ok((report.pass, value(&report)))
}

fn forward_document(out: &ForwardOutcome, m: &TriModel) -> CliResult<SystemDocument> {
    let params = FpDichotomyParams::new(
        out.report.constant,
        m.params.nonuniformity,
        DICHOTOMY_EXPONENT,
        out.rate.clone(),
        m.params.start_weight.clone(),
        m.params.end_weight.clone(),
    )?;
    document::fp_document(&out.system, &out.splitting, &params)
}

fn forward_summary(out: &ForwardOutcome) -> Value {
    json!({
        "report": value(&out.report),
        "downgraded": out.downgraded,
        "range_orthogonality": value(&out.orthogonality),
    })
}

fn couple(
    ctx: &mut Context,
    opts: &Options,
    input: &Path,
    out_b: Option<&Path>,
    out_c: Option<&Path>,
) -> CliResult<(bool, Value)> {
    let m = tri_model(ctx, "system", input)?;
    let fam = require_family(&m.family)?;
    let tol = ctx.tolerances(opts)?;
    let window = ctx.window(opts, m.system.horizon())?;
    let fb = coupling::forward_b(&m.system, fam, &m.params, window, &tol)?;
    let fc = coupling::forward_c(&m.system, fam, &m.params, window, &tol)?;
    let doc_b = forward_document(&fb, &m)?;
    let doc_c = forward_document(&fc, &m)?;
    for (path, doc) in [(out_b, &doc_b), (out_c, &doc_c)] {
        if let Some(path) = path {
            write_atomic(path, &document::to_json(doc))?;
        }
    }
    Ok((
        true,
        json!({
            "b": forward_summary(&fb),
            "c": forward_summary(&fc),
        }),
    ))
}

fn roundtrip(
    ctx: &mut Context,
    opts: &Options,
    input: &Path,
    b: Option<&Path>,
    c: Option<&Path>,
) -> CliResult<(bool, Value)> {
    let m = tri_model(ctx, "system", input)?;
    let fam = require_family(&m.family)?;
    let mut overrides = Overrides::default();
    for (role, path, slot) in [("b", b, &mut overrides.b), ("c", c, &mut overrides.c)] {
        if let Some(path) = path {
            let fp = fp_model(ctx, role, path)?;
            let di = require_splitting(&fp.splitting)?.clone();
            *slot = Some((fp.system, di));
        }
    }
    let tol = ctx.tolerances(opts)?;
    let window = ctx.window(opts, m.system.horizon())?;
    let report = coupling::equivalence_round_trip_with(&m.system, fam, &m.params, window, &tol, &overrides);
    Ok((report.pass, value(&report)))
}

/// Candidate lists; a missing list falls back to the document's value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub eps: Option<Vec<f64>>,
}

fn estimate(ctx: &mut Context, opts: &Options, input: &Path, grid: &str) -> CliResult<(bool, Value)> {
    let m = tri_model(ctx, "system", input)?;
    let fam = require_family(&m.family)?;
    let text = if grid.trim_start().starts_with('{') {
        grid.as_bytes().to_vec()
    } else {
        std::fs::read(grid).map_err(|e| CliError::Input(format!("{grid}: {e}")))?
    };
    ctx.digest("grid", &text);
    let g: GridDoc = serde_json::from_slice(&text)
        .map_err(|e| CliError::Input(format!("grid: {e}")))?;
    let p = &m.params;
    let grid = ExponentGrid {
        a: g.a.unwrap_or_else(|| vec![p.decay_exponent]),
        b: g.b.unwrap_or_else(|| vec![p.growth_exponent]),
        eps: g.eps.unwrap_or_else(|| vec![p.nonuniformity]),
    };
    let tol = ctx.tolerances(opts)?;
    let window = ctx.window(opts, m.system.horizon())?;
    let (best, report) = spectral::estimate_exponents(&m.system, fam, p, &grid, window)?;
    let pass = report.best.k_min <= p.constant * (1.0 + tol.verdict);
    let best = ParamsDoc {
        constant: report.best.k_min,
        a: Some(best.decay_exponent),
        b: Some(best.growth_exponent),
        eps: best.nonuniformity,
        c: None,
    };
    Ok((
        pass,
        json!({
            "declared_constant": p.constant,
            "best": value(&best),
            "report": value(&report),
        }),
    ))
}

fn generate(
    ctx: &mut Context,
    opts: &Options,
    input: Option<&Path>,
    preset: Option<Preset>,
    horizon: Option<usize>,
    corrupt: Option<Defect>,
) -> CliResult<SystemDocument> {
    let mut spec: GeneratorSpec = match (input, preset) {
        (Some(_), Some(_)) => return Err(CliError::Input("give either an input document or --preset".into())),
        (None, None) => return Err(CliError::Input("an input document or --preset is required".into())),
        (Some(path), None) => ctx
            .load("spec", path)?
            .doc
            .generate
            .ok_or_else(|| CliError::Input(format!("{}: no `generate` section", path.display())))?,
        (None, Some(Preset::E1)) => genlab::e1_spec(),
        (None, Some(Preset::E2Embedded)) => genlab::e2_embedded_spec(horizon.unwrap_or(40)),
    };
    if let Some(h) = horizon {
        spec.horizon = h;
    }
    if let Some(seed) = opts.seed {
        spec.rotation = Some(seed);
    }
    if corrupt.is_some() {
        spec.corruption = corrupt;
    }
    let f = genlab::gen_block_diagonal(&spec)?;
    let rates = document::RatesDoc {
        h: spec.rates.h.clone(),
        k: Some(spec.rates.k.clone()),
        mu: spec.rates.mu.clone(),
        nu: spec.rates.nu.clone(),
    };
    Ok(document::tri_document(&f.system, &f.family, &f.params, rates))
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, text: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
