use std::path::PathBuf;

use harness_core::dynamics::uniform_field;
use harness_core::lattice::{FieldLiteral, KernelLiteral};
use harness_core::{HeightField, Kernel, LatticeBox, ModelParams, Site};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),
    #[error("CheckFailed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::ConfigInvalid(msg.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GroundState,
    Kernel,
    Simulate,
    DualCheck,
    GibbsVerify,
    FullSuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Kernel => "kernel",
            Command::Simulate => "simulate",
            Command::DualCheck => "dual-check",
            Command::GibbsVerify => "gibbs-verify",
            Command::FullSuite => "full-suite",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub model: ModelSection,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub fields: FieldsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    /// Nearest-neighbour kernel when absent.
    #[serde(default)]
    pub kernel: Option<KernelLiteral>,
    pub alpha: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
}

fn default_sigma2() -> f64 {
    ModelParams::DEFAULT_SIGMA2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    #[serde(default = "default_shell")]
    pub shell: u32,
}

fn default_shell() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `intercept + Σ_k slope[k] x_k`.
    Ramp {
        slope: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// `value` at `site`, zero elsewhere.
    Delta {
        site: Vec<i64>,
        #[serde(default = "one")]
        value: f64,
    },
    /// Independent uniform values in `[lo, hi)`.
    Random { lo: f64, hi: f64, seed: u64 },
    Literal {
        sites: Vec<Vec<i64>>,
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }
}

impl FieldSpec {
    /// Evaluates the generator on `sites`.
    pub fn build(&self, name: &str, sites: &[Site], dim: usize) -> Result<HeightField, CliError> {
        let bad = |msg: String| CliError::config(format!("fields.{name}: {msg}"));
        match self {
            FieldSpec::Constant { value } => Ok(HeightField::constant(sites.iter().cloned(), *value)),
            FieldSpec::Ramp { slope, intercept } => {
                if slope.len() != dim {
                    return Err(bad(format!("slope has {} entries, expected {dim}", slope.len())));
                }
                Ok(HeightField::from_fn(sites.iter().cloned(), |s| {
                    intercept + s.coords().iter().zip(slope).map(|(&c, a)| c as f64 * a).sum::<f64>()
                }))
            }
            FieldSpec::Delta { site, value } => {
                if site.len() != dim {
                    return Err(bad(format!("delta site has dimension {}, expected {dim}", site.len())));
                }
                let at = Site::new(site.clone());
                Ok(HeightField::from_fn(sites.iter().cloned(), |s| if *s == at { *value } else { 0.0 }))
            }
            FieldSpec::Random { lo, hi, seed } => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(bad("random generator needs lo < hi".into()));
                }
                Ok(uniform_field(sites.iter().cloned(), *lo, *hi, *seed))
            }
            FieldSpec::Literal { sites: given, values } => {
                let lit = FieldLiteral {
                    sites: given.iter().cloned().map(Site::new).collect(),
                    values: values.clone(),
                };
                let field = lit.parse().map_err(|e| bad(e.to_string()))?;
                field.restricted(sites).map_err(|e| bad(e.to_string()))
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    #[serde(default)]
    pub d: FieldSpec,
    #[serde(default)]
    pub y: FieldSpec,
    #[serde(default)]
    pub z_init: FieldSpec,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub window: Option<[f64; 2]>,
    pub burn_in: Option<f64>,
    pub thin: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_walks: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub site: Option<Vec<i64>>,
    /// `exact`, `jacobi`, `neumann` or `monte_carlo`.
    pub method: Option<String>,
    pub max_iter: Option<usize>,
    pub snapshots: Option<usize>,
    pub n_states: Option<usize>,
    pub n_seeds: Option<usize>,
    pub betas: Option<Vec<f64>>,
    pub u_grid: Option<Vec<f64>>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("harness-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Everything a command needs, resolved from a [`RunConfig`].
pub struct Instance {
    pub bx: LatticeBox,
    pub kernel: Kernel,
    pub params: ModelParams,
    pub d: HeightField,
    pub y: HeightField,
    pub z_init: HeightField,
}

impl RunConfig {
    pub fn instance(&self) -> Result<Instance, CliError> {
        let dim = self.model.dim;
        if dim == 0 {
            return Err(CliError::config("model.dim must be at least 1"));
        }
        let kernel = match &self.model.kernel {
            None => Kernel::nearest_neighbor(dim),
            Some(lit) => {
                if lit.dim != dim {
                    return Err(CliError::config(format!(
                        "model.kernel.dim is {} but model.dim is {dim}",
                        lit.dim
                    )));
                }
                lit.parse().map_err(|e| CliError::config(format!("model.kernel: {e}")))?
            }
        };
        let params = ModelParams::new(self.model.alpha, self.model.sigma2)
            .map_err(|e| CliError::config(format!("model: {e}")))?;
        let g = &self.geometry;
        if g.lower.len() != dim || g.upper.len() != dim {
            return Err(CliError::config(format!("geometry.lower and geometry.upper must have {dim} entries")));
        }
        let bx = LatticeBox::new(Site::new(g.lower.clone()), Site::new(g.upper.clone()), g.shell)
            .map_err(|e| CliError::config(format!("geometry: {e}")))?;
        if kernel.radius() > g.shell {
            return Err(CliError::config(format!(
                "geometry.shell is {} but the kernel jumps up to {}",
                g.shell,
                kernel.radius()
            )));
        }
        let sites = bx.sites();
        let shell = bx.shell();
        Ok(Instance {
            d: self.fields.d.build("d", &sites, dim)?,
            y: self.fields.y.build("y", &shell, dim)?,
            z_init: self.fields.z_init.build("z_init", &sites, dim)?,
            bx,
            kernel,
            params,
        })
    }

    pub fn seed(&self, command: Command) -> Result<u64, CliError> {
        self.run
            .seed
            .ok_or_else(|| CliError::config(format!("run.seed is required for `{}`", command.name())))
    }

    pub fn window(&self, command: Command) -> Result<(f64, f64), CliError> {
        let [s, t] = self
            .run
            .window
            .ok_or_else(|| CliError::config(format!("run.window is required for `{}`", command.name())))?;
        if !(s.is_finite() && t.is_finite() && s <= t) {
            return Err(CliError::config("run.window must be [start, end] with start <= end"));
        }
        Ok((s, t))
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}

/// Reads a JSON document and applies `path=value` overrides to scalar leaves.
/// Values are parsed as JSON scalars when possible and kept as strings
/// otherwise. Array elements are addressed by index (`run.window.1=20`).
pub fn load(text: &str, overrides: &[String]) -> Result<(Value, RunConfig), CliError> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg = serde_json::from_value(doc.clone()).map_err(|e| CliError::config(e.to_string()))?;
    Ok((doc, cfg))
}

fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{assignment}` is not of the form path=value")))?;
    let value = match serde_json::from_str::<Value>(raw) {
        Ok(v @ (Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_))) => v,
        Ok(_) => return Err(CliError::config(format!("override `{assignment}` must set a scalar"))),
        Err(_) => Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::config(format!("override path `{path}` is malformed")));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        node = child(node, key, true, path)?;
    }
    let last = keys[keys.len() - 1];
    match node {
        Value::Object(map) => {
            if matches!(map.get(last), Some(Value::Object(_) | Value::Array(_))) {
                return Err(CliError::config(format!("override `{path}` targets a non-scalar")));
            }
            map.insert(last.to_string(), value);
        }
        Value::Array(_) => *child(node, last, false, path)? = value,
        _ => return Err(CliError::config(format!("override path `{path}` passes through a scalar"))),
    }
    Ok(())
}

fn child<'a>(node: &'a mut Value, key: &str, create: bool, path: &str) -> Result<&'a mut Value, CliError> {
    match node {
        Value::Object(map) => {
            if create {
                Ok(map.entry(key).or_insert_with(|| Value::Object(Default::default())))
            } else {
                map.get_mut(key)
                    .ok_or_else(|| CliError::config(format!("override path `{path}` not found")))
            }
        }
        Value::Array(items) => {
            let len = items.len();
            key.parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| CliError::config(format!("override `{path}`: `{key}` is not an index below {len}")))
        }
        _ => Err(CliError::config(format!("override path `{path}` passes through a scalar"))),
    }
}
