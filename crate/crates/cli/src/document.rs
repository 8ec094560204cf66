//! System documents: parsing, validation against the schema rules and
//! conversion to core types.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use trichotomy_core::genlab::{self, GeneratorSpec};
use trichotomy_core::linalg;
use trichotomy_core::rates::RateSpec;
use trichotomy_core::spectral::FpDichotomyParams;
use trichotomy_core::{BoundParams, DiProjectionFamily, LtvSystem, ProjectionFamily, RateSequence, TriProjectionFamily};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Per-step matrices, steps outermost, each row-major.
pub type Steps = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocumentKind {
    #[default]
    Trichotomy,
    FpDichotomy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesDoc {
    pub h: RateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<RateSpec>,
    pub mu: RateSpec,
    pub nu: RateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    #[serde(rename = "K")]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default)]
    pub eps: f64,
    /// Exponent on the rate ratio of a dichotomy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionsDoc {
    #[serde(rename = "P1")]
    pub p1: Steps,
    #[serde(rename = "P2")]
    pub p2: Steps,
    #[serde(rename = "P3", default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<Steps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub version: u32,
    #[serde(default)]
    pub kind: DocumentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Steps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<ProjectionsDoc>,
}

/// Raw bytes of a document together with its parsed form.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub bytes: Vec<u8>,
    pub doc: SystemDocument,
}

pub fn read(path: &Path) -> CliResult<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let doc = parse(&bytes).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(Loaded { bytes, doc })
}

/// Parse and check the schema version; parse errors carry line and column.
pub fn parse(bytes: &[u8]) -> CliResult<SystemDocument> {
    let doc: SystemDocument = serde_json::from_slice(bytes).map_err(|e| CliError::Input(e.to_string()))?;
    if doc.version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "unrecognized schema version {} (expected {SCHEMA_VERSION})",
            doc.version
        )));
    }
    Ok(doc)
}

/// Canonical JSON text of a document, newline terminated.
pub fn to_json(doc: &SystemDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn matrices(steps: &Steps, dim: usize, what: &str) -> CliResult<Vec<DMatrix<f64>>> {
    steps
        .iter()
        .enumerate()
        .map(|(n, rows)| {
            let m = linalg::from_rows(rows).ok_or_else(|| CliError::Input(format!("{what}[{n}]: ragged rows")))?;
            if m.shape() != (dim, dim) {
                return Err(CliError::Input(format!(
                    "{what}[{n}]: expected {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        })
        .collect()
}

pub fn steps(ms: &[DMatrix<f64>]) -> Steps {
    ms.iter().map(linalg::to_rows).collect()
}

/// A trichotomy document resolved to core types.
#[derive(Debug, Clone)]
pub struct TriModel {
    pub system: LtvSystem,
    pub family: Option<TriProjectionFamily>,
    pub params: BoundParams,
    pub rates: RatesDoc,
}

/// A dichotomy document resolved to core types.
#[derive(Debug, Clone)]
pub struct FpModel {
    pub system: LtvSystem,
    pub splitting: Option<DiProjectionFamily>,
    pub params: FpDichotomyParams,
    pub rates: RatesDoc,
}

#[derive(Debug, Clone)]
pub enum Model {
    Tri(TriModel),
    Fp(FpModel),
}

fn build_rate(spec: &RateSpec, role: &str) -> CliResult<RateSequence> {
    spec.build().map_err(|e| CliError::Input(format!("rates.{role}: {e}")))
}

fn generator_rates(spec: &GeneratorSpec) -> RatesDoc {
    RatesDoc {
        h: spec.rates.h.clone(),
        k: Some(spec.rates.k.clone()),
        mu: spec.rates.mu.clone(),
        nu: spec.rates.nu.clone(),
    }
}

fn system_from(doc: &SystemDocument) -> CliResult<(LtvSystem, Option<genlab::Fixture>)> {
    match (&doc.coeffs, &doc.generate) {
        (Some(_), Some(_)) => Err(CliError::Input("`coeffs` and `generate` are mutually exclusive".into())),
        (None, None) => Err(CliError::Input("one of `coeffs` or `generate` is required".into())),
        (None, Some(spec)) => {
            let fixture = genlab::gen_block_diagonal(spec)?;
            if doc.dim.is_some_and(|d| d != fixture.system.dim()) {
                return Err(CliError::Input(format!(
                    "`dim` {} does not match the generated dimension {}",
                    doc.dim.unwrap_or_default(),
                    fixture.system.dim()
                )));
            }
            if doc.horizon.is_some_and(|h| h != spec.horizon) {
                return Err(CliError::Input("`horizon` does not match `generate.horizon`".into()));
            }
            Ok((fixture.system.clone(), Some(fixture)))
        }
        (Some(coeffs), None) => {
            let dim = doc.dim.ok_or_else(|| CliError::Input("`dim` is required with `coeffs`".into()))?;
            let horizon = doc
                .horizon
                .ok_or_else(|| CliError::Input("`horizon` is required with `coeffs`".into()))?;
            if coeffs.len() != horizon {
                return Err(CliError::Input(format!(
                    "`coeffs` has {} steps, `horizon` is {horizon}",
                    coeffs.len()
                )));
            }
            Ok((LtvSystem::new(dim, matrices(coeffs, dim, "coeffs")?)?, None))
        }
    }
}

fn projection_steps(p: &Steps, dim: usize, horizon: usize, name: &str) -> CliResult<Vec<DMatrix<f64>>> {
    if p.len() != horizon + 1 {
        return Err(CliError::Input(format!(
            "projections.{name} has {} steps, need horizon + 1 = {}",
            p.len(),
            horizon + 1
        )));
    }
    matrices(p, dim, &format!("projections.{name}"))
}

impl SystemDocument {
    pub fn model(&self) -> CliResult<Model> {
        let (system, fixture) = system_from(self)?;
        let (dim, horizon) = (system.dim(), system.horizon());
        match self.kind {
            DocumentKind::Trichotomy => {
                let rates = match (&self.rates, &self.generate) {
                    (Some(r), _) => r.clone(),
                    (None, Some(spec)) => generator_rates(spec),
                    (None, None) => return Err(CliError::Input("`rates` is required".into())),
                };
                let k = rates
                    .k
                    .as_ref()
                    .ok_or_else(|| CliError::Input("rates.k is required for a trichotomy".into()))?;
                let (h, k, mu, nu) = (
                    build_rate(&rates.h, "h")?,
                    build_rate(k, "k")?,
                    build_rate(&rates.mu, "mu")?,
                    build_rate(&rates.nu, "nu")?,
                );
                let params = match (&self.params, &fixture) {
                    (Some(p), _) => {
                        if p.c.is_some() {
                            return Err(CliError::Input("params.c applies to dichotomy documents only".into()));
                        }
                        let a = p.a.ok_or_else(|| CliError::Input("params.a is required".into()))?;
                        let b = p.b.ok_or_else(|| CliError::Input("params.b is required".into()))?;
                        BoundParams::new(p.constant, a, b, p.eps, h, k, mu, nu)?
                    }
                    (None, Some(f)) => {
                        let q = &f.params;
                        BoundParams::new(q.constant, q.decay_exponent, q.growth_exponent, q.nonuniformity, h, k, mu, nu)?
                    }
                    (None, None) => return Err(CliError::Input("`params` is required".into())),
                };
                let family = match (&self.projections, fixture) {
                    (Some(p), _) => {
                        let p3 = p
                            .p3
                            .as_ref()
                            .ok_or_else(|| CliError::Input("projections.P3 is required for a trichotomy".into()))?;
                        let (s1, s2, s3) = (
                            projection_steps(&p.p1, dim, horizon, "P1")?,
                            projection_steps(&p.p2, dim, horizon, "P2")?,
                            projection_steps(p3, dim, horizon, "P3")?,
                        );
                        let steps = s1.into_iter().zip(s2).zip(s3).map(|((a, b), c)| [a, b, c]).collect();
                        Some(TriProjectionFamily::new(dim, steps)?)
                    }
                    (None, Some(f)) => Some(f.family),
                    (None, None) => None,
                };
                Ok(Model::Tri(TriModel {
                    system,
                    family,
                    params,
                    rates,
                }))
            }
            DocumentKind::FpDichotomy => {
                if self.generate.is_some() {
                    return Err(CliError::Input("`generate` produces trichotomy documents only".into()));
                }
                let rates = self
                    .rates
                    .clone()
                    .ok_or_else(|| CliError::Input("`rates` is required".into()))?;
                if rates.k.is_some() {
                    return Err(CliError::Input("rates.k applies to trichotomy documents only".into()));
                }
                let p = self
                    .params
                    .as_ref()
                    .ok_or_else(|| CliError::Input("`params` is required".into()))?;
                if p.a.is_some() || p.b.is_some() {
                    return Err(CliError::Input("params.a and params.b apply to trichotomy documents only".into()));
                }
                let c = p.c.ok_or_else(|| CliError::Input("params.c is required for a dichotomy".into()))?;
                let params = FpDichotomyParams::new(
                    p.constant,
                    p.eps,
                    c,
                    build_rate(&rates.h, "h")?,
                    build_rate(&rates.mu, "mu")?,
                    build_rate(&rates.nu, "nu")?,
                )?;
                let splitting = match &self.projections {
                    Some(pr) => {
                        if pr.p3.is_some() {
                            return Err(CliError::Input("projections.P3 applies to trichotomy documents only".into()));
                        }
                        let s1 = projection_steps(&pr.p1, dim, horizon, "P1")?;
                        let s2 = projection_steps(&pr.p2, dim, horizon, "P2")?;
                        Some(DiProjectionFamily::new(dim, s1.into_iter().zip(s2).map(|(a, b)| [a, b]).collect())?)
                    }
                    None => None,
                };
                Ok(Model::Fp(FpModel {
                    system,
                    splitting,
                    params,
                    rates,
                }))
            }
        }
    }
}

/// Fully expanded trichotomy document for a fixture whose rates are `rates`.
pub fn tri_document(system: &LtvSystem, family: &TriProjectionFamily, params: &BoundParams, rates: RatesDoc) -> SystemDocument {
    let comp = |i: usize| steps(&family.component_sequence(i));
    SystemDocument {
        version: SCHEMA_VERSION,
        kind: DocumentKind::Trichotomy,
        dim: Some(system.dim()),
        horizon: Some(system.horizon()),
        coeffs: Some(steps(system.coeffs())),
        generate: None,
        rates: Some(rates),
        params: Some(ParamsDoc {
            constant: params.constant,
            a: Some(params.decay_exponent),
            b: Some(params.growth_exponent),
            eps: params.nonuniformity,
            c: None,
        }),
        projections: Some(ProjectionsDoc {
            p1: comp(0),
            p2: comp(1),
            p3: Some(comp(2)),
        }),
    }
}

/// Dichotomy document; tabulated rates cover the whole horizon.
pub fn fp_document(
    system: &LtvSystem,
    splitting: &DiProjectionFamily,
    params: &FpDichotomyParams,
) -> CliResult<SystemDocument> {
    let len = system.horizon() + 1;
    Ok(SystemDocument {
        version: SCHEMA_VERSION,
        kind: DocumentKind::FpDichotomy,
        dim: Some(system.dim()),
        horizon: Some(system.horizon()),
        coeffs: Some(steps(system.coeffs())),
        generate: None,
        rates: Some(RatesDoc {
            h: RateSpec::describe(&params.rate, len)?,
            k: None,
            mu: RateSpec::describe(&params.start_weight, len)?,
            nu: RateSpec::describe(&params.end_weight, len)?,
        }),
        params: Some(ParamsDoc {
            constant: params.constant,
            a: None,
            b: None,
            eps: params.nonuniformity,
            c: Some(params.exponent),
        }),
        projections: Some(ProjectionsDoc {
            p1: steps(&splitting.component_sequence(0)),
            p2: steps(&splitting.component_sequence(1)),
            p3: None,
        }),
    })
}
