//! JSON experiment configuration: parsing, validation, and materialization
//! into problem/manifold/method objects.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::integrators::{BregmanParams, Method, StopCriteria, DEFAULT_C_MAX};
use crate::manifold::{Manifold, PointProjection, RetractionMethod};
use crate::matops::DenseMatrix;
use crate::problems::{self, OracleInfo, Problem};

/// Top-level experiment description. All randomness is seeded explicitly;
/// there are no wall-clock defaults anywhere.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub manifold: ManifoldConfig,
    pub methods: Vec<MethodConfig>,
    pub stop: StopConfig,
    /// Seed for the shared initial point.
    pub init_seed: u64,
    /// Record every n-th iteration (plus the final one).
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Where output CSVs go; overridable from the command line.
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Rayleigh {
        /// Load the symmetric matrix from CSV instead of generating it.
        #[serde(default)]
        matrix_csv: Option<String>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        /// Condition number of the generated log-spaced spectrum.
        #[serde(default)]
        kappa: Option<f64>,
        /// Largest generated eigenvalue; spectrum spans [scale/kappa, scale].
        #[serde(default)]
        scale: Option<f64>,
        /// Explicit spectrum; overrides kappa/scale.
        #[serde(default)]
        spectrum: Option<Vec<f64>>,
    },
    Brockett {
        weights: Vec<f64>,
        #[serde(default)]
        matrix_csv: Option<String>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        spectrum: Option<Vec<f64>>,
    },
    Procrustes {
        #[serde(default)]
        a_csv: Option<String>,
        #[serde(default)]
        b_csv: Option<String>,
        #[serde(default)]
        l: Option<usize>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        /// Noise level of the generated instance; 0 plants an exact solution.
        #[serde(default)]
        sigma: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    /// "sphere" or "stiefel"; must match the problem's natural domain.
    pub kind: String,
    /// "normalize" | "polar" | "qf" | "polar-series"; defaults per kind.
    #[serde(default)]
    pub projection: Option<String>,
    /// "exponential" | "projective-normalize" | "polar" | "qf".
    #[serde(default)]
    pub retraction: Option<String>,
    /// Order of the series projection (1..=3).
    #[serde(default)]
    pub series_order: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// "el-i" | "el-ii" | "htvi-direct" | "htvi-adaptive" | "rgd".
    pub method: String,
    #[serde(default)]
    pub params: ParamsConfig,
    /// Per-method record grid override; `compare` requires all grids equal.
    #[serde(default)]
    pub record_every: Option<usize>,
}

/// Integrator parameters as they appear in JSON. `p` and `h` are mandatory
/// for the variational methods (`h` alone for rgd); the rest default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub p_ring: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub c_max: Option<f64>,
    #[serde(default)]
    pub project_momentum: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    pub max_iter: usize,
    #[serde(default)]
    pub f_tol: Option<f64>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
}

/// A configuration materialized into runnable objects.
pub struct Experiment {
    pub problem: Problem,
    pub manifold: Manifold,
    pub oracle: Option<OracleInfo>,
    pub methods: Vec<PreparedMethod>,
    pub x0: DenseMatrix,
    pub stop: StopCriteria,
    pub record_every: usize,
    pub output_dir: Option<String>,
}

pub struct PreparedMethod {
    pub method: Method,
    pub params: BregmanParams,
    pub record_every: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
    }

    /// Validate and build everything the commands need. `config_dir` anchors
    /// relative CSV paths.
    pub fn build(&self, config_dir: &Path) -> Result<Experiment> {
        if self.methods.is_empty() {
            return Err(Error::ConfigInvalid(
                "methods: at least one method is required".to_string(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::ConfigInvalid(
                "record_every must be >= 1".to_string(),
            ));
        }
        let problem = self.build_problem(config_dir)?;
        let manifold = self.build_manifold(&problem)?;
        let oracle = known_oracle(&self.problem, &problem)?;
        if self.stop.f_tol.is_some() && oracle.is_none() {
            return Err(Error::ConfigInvalid(
                "stop.f_tol needs a problem with a known optimal value".to_string(),
            ));
        }
        let mut methods = Vec::new();
        for (i, mc) in self.methods.iter().enumerate() {
            let method = Method::parse(&mc.method)
                .map_err(|e| Error::ConfigInvalid(format!("methods[{i}]: {e}")))?;
            let params = mc.params.materialize(method, i)?;
            params
                .validate(method)
                .map_err(|e| Error::ConfigInvalid(format!("methods[{i}]: {e}")))?;
            let record_every = mc.record_every.unwrap_or(self.record_every);
            if record_every == 0 {
                return Err(Error::ConfigInvalid(format!(
                    "methods[{i}].record_every must be >= 1"
                )));
            }
            methods.push(PreparedMethod {
                method,
                params,
                record_every,
            });
        }
        let x0 = manifold.random_point(self.init_seed);
        Ok(Experiment {
            problem,
            manifold,
            oracle,
            methods,
            x0,
            stop: StopCriteria {
                max_iter: self.stop.max_iter,
                f_tol: self.stop.f_tol,
                grad_tol: self.stop.grad_tol,
            },
            record_every: self.record_every,
            output_dir: self.output_dir.clone(),
        })
    }

    fn build_problem(&self, dir: &Path) -> Result<Problem> {
        match &self.problem {
            ProblemConfig::Rayleigh {
                matrix_csv,
                n,
                seed,
                kappa,
                scale,
                spectrum,
            } => {
                let a = symmetric_from_parts(
                    "problem", matrix_csv, *n, *seed, *kappa, *scale, spectrum, dir,
                )?;
                Problem::rayleigh(a)
            }
            ProblemConfig::Brockett {
                weights,
                matrix_csv,
                n,
                seed,
                kappa,
                scale,
                spectrum,
            } => {
                let a = symmetric_from_parts(
                    "problem", matrix_csv, *n, *seed, *kappa, *scale, spectrum, dir,
                )?;
                Problem::brockett(a, weights.clone())
            }
            ProblemConfig::Procrustes {
                a_csv,
                b_csv,
                l,
                n,
                m,
                seed,
                sigma,
            } => match (a_csv, b_csv) {
                (Some(ap), Some(bp)) => {
                    let a = load_matrix_csv(&dir.join(ap))?;
                    let b = load_matrix_csv(&dir.join(bp))?;
                    Problem::procrustes(a, b)
                }
                (None, None) => {
                    let (l, n, m) = match (l, n, m) {
                        (Some(l), Some(n), Some(m)) => (*l, *n, *m),
                        _ => {
                            return Err(Error::ConfigInvalid(
                                "problem: generated procrustes needs l, n, m".to_string(),
                            ))
                        }
                    };
                    let seed = seed.ok_or_else(|| {
                        Error::ConfigInvalid("problem.seed is required when generating".into())
                    })?;
                    let (a, b) =
                        problems::gen_procrustes(l, n, m, sigma.unwrap_or(0.0), seed)?;
                    Problem::procrustes(a, b)
                }
                _ => Err(Error::ConfigInvalid(
                    "problem: a_csv and b_csv must be given together".to_string(),
                )),
            },
        }
    }

    fn build_manifold(&self, problem: &Problem) -> Result<Manifold> {
        let natural = problem.domain();
        let (rows, cols) = natural.point_shape();
        let mc = &self.manifold;
        let mut manifold = match (mc.kind.as_str(), natural.is_sphere()) {
            ("sphere", true) => Manifold::sphere(rows)?,
            ("stiefel", false) => Manifold::stiefel(rows, cols)?,
            ("sphere" | "stiefel", _) => {
                return Err(Error::ConfigInvalid(format!(
                    "manifold.kind '{}' does not match the problem's domain",
                    mc.kind
                )))
            }
            (other, _) => {
                return Err(Error::ConfigInvalid(format!(
                    "manifold.kind '{other}' (expected sphere or stiefel)"
                )))
            }
        };
        if let Some(name) = &mc.projection {
            let projection = match name.as_str() {
                "normalize" => PointProjection::Normalize,
                "polar" => PointProjection::Polar,
                "qf" => PointProjection::Qf,
                "polar-series" => PointProjection::PolarSeries {
                    order: mc.series_order.unwrap_or(3),
                },
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "manifold.projection '{other}' (expected normalize, polar, qf or polar-series)"
                    )))
                }
            };
            manifold = manifold
                .with_projection(projection)
                .map_err(|e| Error::ConfigInvalid(format!("manifold.projection: {e}")))?;
        } else if mc.series_order.is_some() {
            return Err(Error::ConfigInvalid(
                "manifold.series_order needs projection = \"polar-series\"".to_string(),
            ));
        }
        if let Some(name) = &mc.retraction {
            let retraction = match name.as_str() {
                "exponential" => RetractionMethod::Exponential,
                "projective-normalize" => RetractionMethod::ProjectiveNormalize,
                "polar" => RetractionMethod::Polar,
                "qf" => RetractionMethod::Qf,
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "manifold.retraction '{other}' (expected exponential, projective-normalize, polar or qf)"
                    )))
                }
            };
            manifold = manifold
                .with_retraction(retraction)
                .map_err(|e| Error::ConfigInvalid(format!("manifold.retraction: {e}")))?;
        }
        Ok(manifold)
    }
}

impl ParamsConfig {
    fn materialize(&self, method: Method, index: usize) -> Result<BregmanParams> {
        let h = self.h.ok_or_else(|| {
            Error::ConfigInvalid(format!("methods[{index}].params.h is required"))
        })?;
        let mut params = BregmanParams {
            h,
            ..BregmanParams::default()
        };
        if method != Method::Rgd {
            params.p = self.p.ok_or_else(|| {
                Error::ConfigInvalid(format!("methods[{index}].params.p is required"))
            })?;
        }
        params.p_ring = match (method, self.p_ring) {
            (Method::HtviAdaptive, Some(pr)) => pr,
            (Method::HtviAdaptive, None) => {
                return Err(Error::ConfigInvalid(format!(
                    "methods[{index}].params.p_ring is required for htvi-adaptive"
                )))
            }
            // Direct integrates on its own clock; EL and RGD never look.
            // Reject rather than ignore so a mistyped method is caught.
            (_, Some(_)) => {
                return Err(Error::ConfigInvalid(format!(
                    "methods[{index}].params.p_ring only applies to htvi-adaptive"
                )))
            }
            (_, None) => params.p,
        };
        if let Some(c) = self.c {
            params.c = c;
        }
        if let Some(zeta) = self.zeta {
            params.zeta = zeta;
        }
        if let Some(lambda) = self.lambda {
            params.lambda = lambda;
        }
        if let Some(t0) = self.t0 {
            params.t0 = t0;
        }
        params.c_max = self.c_max.unwrap_or(DEFAULT_C_MAX);
        params.project_momentum = self.project_momentum.unwrap_or(false);
        Ok(params)
    }
}

#[allow(clippy::too_many_arguments)]
fn symmetric_from_parts(
    key: &str,
    matrix_csv: &Option<String>,
    n: Option<usize>,
    seed: Option<u64>,
    kappa: Option<f64>,
    scale: Option<f64>,
    spectrum: &Option<Vec<f64>>,
    dir: &Path,
) -> Result<DenseMatrix> {
    if let Some(path) = matrix_csv {
        if n.is_some() || seed.is_some() || kappa.is_some() || scale.is_some() || spectrum.is_some()
        {
            return Err(Error::ConfigInvalid(format!(
                "{key}: matrix_csv excludes the generator fields (n, seed, kappa, scale, spectrum)"
            )));
        }
        return load_matrix_csv(&dir.join(path));
    }
    let seed = seed.ok_or_else(|| {
        Error::ConfigInvalid(format!("{key}.seed is required when generating"))
    })?;
    let spectrum: Vec<f64> = match spectrum {
        Some(s) => {
            if let Some(n) = n {
                if n != s.len() {
                    return Err(Error::ConfigInvalid(format!(
                        "{key}: n = {n} disagrees with spectrum length {}",
                        s.len()
                    )));
                }
            }
            s.clone()
        }
        None => {
            let n = n.ok_or_else(|| {
                Error::ConfigInvalid(format!("{key}.n is required when generating"))
            })?;
            if n < 2 {
                return Err(Error::ConfigInvalid(format!("{key}.n must be >= 2")));
            }
            let kappa = kappa.unwrap_or(1e3);
            let scale = scale.unwrap_or(1.0);
            if !(kappa > 1.0) || !(scale > 0.0) {
                return Err(Error::ConfigInvalid(format!(
                    "{key}: kappa must be > 1 and scale > 0"
                )));
            }
            problems::log_spaced(n, scale / kappa, scale)
        }
    };
    problems::gen_symmetric(&spectrum, seed)
}

/// Oracles the harness trusts enough to drive error columns: closed-form
/// ones, plus the planted zero-residual Procrustes construction. The
/// numerical fallback oracle is available through the library but is not
/// silently invoked here.
fn known_oracle(config: &ProblemConfig, problem: &Problem) -> Result<Option<OracleInfo>> {
    match config {
        ProblemConfig::Rayleigh { .. } | ProblemConfig::Brockett { .. } => {
            Ok(Some(problem.oracle()?))
        }
        ProblemConfig::Procrustes {
            sigma,
            seed,
            l,
            n,
            m,
            a_csv,
            ..
        } => {
            let (rows, cols) = problem.point_shape();
            if rows == cols {
                return Ok(Some(problem.oracle()?));
            }
            let generated = a_csv.is_none();
            if generated && sigma.unwrap_or(0.0) == 0.0 {
                // Planted construction: B = A X0 exactly, so f_star = 0.
                let (l, n, m) = (l.unwrap(), n.unwrap(), m.unwrap());
                let (_, _, x0) = problems::gen_procrustes_planted(l, n, m, 0.0, seed.unwrap())?;
                return Ok(Some(OracleInfo {
                    f_star: 0.0,
                    x_star: Some(x0),
                    method: "planted construction",
                }));
            }
            Ok(None)
        }
    }
}

/// Plain CSV matrix: one row per line, comma-separated decimal entries.
pub fn load_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::ConfigInvalid(format!(
                        "{}:{}: '{}' is not a number",
                        path.display(),
                        lineno + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::ConfigInvalid(format!(
                    "{}:{}: ragged row ({} cells, expected {})",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ConfigInvalid(format!(
            "{}: empty matrix",
            path.display()
        )));
    }
    let (r, c) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DenseMatrix::from_row_slice(r, c, &flat))
}
