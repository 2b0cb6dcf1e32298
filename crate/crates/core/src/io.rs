//! File formats: model and matrix JSON, experiment records, run configs.
//!
//! Every document carries `"schema": "wcl-1"`. Complex matrices are stored
//! as `{"re": [[..]], "im": [[..]]}` row-major nested arrays. Floats use the
//! shortest decimal that parses back to the same bits, so model files round
//! trip exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::ExperimentResult;
use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, TransitionTime};
use crate::model::{build_random_model, QuasiContinuum, SystemModel};
use crate::opalg::{Operator, C64};

pub const SCHEMA: &str = "wcl-1";

/// Column order of experiment CSV files.
pub const CSV_COLUMNS: [&str; 7] = ["lambda", "T_lambda", "sup_error", "argmax_t", "max_norm", "a0_plateau", "wall_ms"];

fn schema() -> String {
    SCHEMA.to_string()
}

fn check_schema(found: &str) -> Result<()> {
    if found != SCHEMA {
        return Err(Error::InvalidArgument(format!("unsupported schema {found:?}, expected {SCHEMA:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let rows = |f: fn(&C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        let nrows = self.re.len();
        let ncols = self.re.first().map_or(0, Vec::len);
        let ragged = |parts: &Vec<Vec<f64>>| parts.len() != nrows || parts.iter().any(|r| r.len() != ncols);
        if ragged(&self.re) || ragged(&self.im) {
            return Err(Error::InvalidArgument("matrix re/im parts must be rectangular and of equal shape".into()));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }
}

/// Serialized [`SystemModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default = "schema")]
    pub schema: String,
    pub n0: usize,
    pub n1: usize,
    pub omega: Vec<f64>,
    #[serde(rename = "A")]
    pub a: ComplexMatrix,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelDoc {
    pub fn from_model(m: &SystemModel) -> Self {
        Self {
            schema: schema(),
            n0: m.n0,
            n1: m.n1,
            omega: m.omega.clone(),
            a: ComplexMatrix::from_matrix(m.a.matrix()),
            lambda: m.lambda,
            seed: m.seed,
        }
    }

    pub fn to_model(&self) -> Result<SystemModel> {
        check_schema(&self.schema)?;
        let a = Operator::new(self.a.to_matrix()?)?;
        SystemModel::new(self.n0, self.n1, self.omega.clone(), a, self.lambda, self.seed)
    }
}

pub fn model_to_json(m: &SystemModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDoc::from_model(m))?)
}

pub fn model_from_json(s: &str) -> Result<SystemModel> {
    serde_json::from_str::<ModelDoc>(s)?.to_model()
}

pub fn save_model(m: &SystemModel, path: &Path) -> Result<()> {
    write_text(path, &model_to_json(m)?)
}

pub fn load_model(path: &Path) -> Result<SystemModel> {
    model_from_json(&fs::read_to_string(path)?)
}

/// Writes `text` followed by a single LF.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Recipe for a generated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelRecipe {
    Random {
        seed: u64,
        n0: usize,
        n1: usize,
        #[serde(default = "one")]
        omega_band: f64,
        #[serde(default = "one")]
        coupling_scale: f64,
        #[serde(default)]
        lambda: f64,
    },
    QuasiContinuum {
        seed: u64,
        n0: usize,
        n1: usize,
        bandwidth: f64,
        profile_width: f64,
        #[serde(default)]
        profile_center: f64,
        #[serde(default = "one")]
        coupling_scale: f64,
        #[serde(default)]
        system_omega: Option<Vec<f64>>,
        #[serde(default)]
        lambda: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelRecipe {
    pub fn build(&self) -> Result<SystemModel> {
        match self {
            Self::Random { seed, n0, n1, omega_band, coupling_scale, lambda } => {
                build_random_model(*seed, *n0, *n1, *omega_band, *coupling_scale)?.with_lambda(*lambda)
            }
            Self::QuasiContinuum {
                seed,
                n0,
                n1,
                bandwidth,
                profile_width,
                profile_center,
                coupling_scale,
                system_omega,
                lambda,
            } => {
                let mut b = QuasiContinuum::new(*seed, *n0, *n1, *bandwidth, *profile_width, *coupling_scale)
                    .profile_center(*profile_center);
                if let Some(w) = system_omega {
                    b = b.system_omega(w.clone());
                }
                b.build()?.with_lambda(*lambda)
            }
        }
    }
}

/// Where a run takes its model from: a file path (relative to the config
/// file) holding a model document or a recipe, an inline model document, or
/// a recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(ModelDoc),
    Generate(ModelRecipe),
}

impl ModelSource {
    pub fn load(&self, base: &Path) -> Result<SystemModel> {
        match self {
            Self::Path(p) => {
                let path = base.join(p);
                match serde_json::from_str::<ModelSource>(&fs::read_to_string(&path)?)? {
                    Self::Path(_) => Err(Error::InvalidArgument(format!("{} holds a path, not a model", path.display()))),
                    inner => inner.load(base),
                }
            }
            Self::Inline(doc) => doc.to_model(),
            Self::Generate(r) => r.build(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

fn default_time_nodes() -> usize {
    200
}

fn default_output() -> PathBuf {
    PathBuf::from("wcl-out")
}

/// Experiment configuration shared by the `convergence` and `contraction`
/// commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "schema")]
    pub schema: String,
    #[serde(default)]
    pub command: Option<String>,
    pub model: ModelSource,
    pub generator: GeneratorSpec,
    #[serde(default = "TransitionTime::natural")]
    pub transition_time: TransitionTime,
    pub lambda_grid: Vec<f64>,
    pub tau_bar: f64,
    #[serde(default = "default_time_nodes")]
    pub time_nodes: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; returns it together with its directory, against
    /// which relative paths resolve.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let cfg = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|&l| l == 0.0 || !l.is_finite() || l.abs() > 1.0) {
            return Err(Error::InvalidArgument("lambda_grid must be non-empty with 0 < |λ| <= 1".into()));
        }
        if !(self.tau_bar > 0.0) || !self.tau_bar.is_finite() {
            return Err(Error::InvalidArgument(format!("tau_bar must be positive, got {}", self.tau_bar)));
        }
        if self.time_nodes < 2 {
            return Err(Error::InvalidArgument("time_nodes must be >= 2".into()));
        }
        self.generator.validate()?;
        self.transition_time.validate()
    }

    pub fn echo(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// Generator matrix with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDoc {
    pub schema: String,
    pub config: Value,
    pub spec: GeneratorSpec,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub estimates: Estimates,
    pub matrix: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub self_convergence: f64,
    pub tail_bound: Option<f64>,
    pub rounding_floor: f64,
    pub total: f64,
}

impl GeneratorDoc {
    pub fn operator(&self) -> Result<Operator> {
        check_schema(&self.schema)?;
        Operator::new(self.matrix.to_matrix()?)
    }
}

pub fn load_generator(path: &Path) -> Result<GeneratorDoc> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// JSON envelope: schema, config echo, payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub config: Value,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(config: Value, result: T) -> Self {
        Self { schema: schema(), config, result }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// CSV text with `#`-prefixed schema and config lines ahead of the header.
pub fn csv_with_echo(config: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut out = format!("# schema: {SCHEMA}\n# config: {}\n", serde_json::to_string(config)?);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn experiment_csv(config: &Value, res: &ExperimentResult) -> Result<String> {
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                fmt_opt(r.t_lambda),
                r.sup_error.to_string(),
                r.argmax_t.to_string(),
                r.max_norm.to_string(),
                r.a0_plateau.to_string(),
                r.wall_ms.to_string(),
            ]
        })
        .collect();
    csv_with_echo(config, &CSV_COLUMNS, &rows)
}

/// Reads the data rows of a CSV written by [`csv_with_echo`].
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()).map_err(csv_err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Writes `<prefix>.csv` and/or `<prefix>.json`; returns the paths written.
pub fn write_outputs<T: Serialize>(
    prefix: &Path,
    format: OutputFormat,
    config: &Value,
    result: &T,
    csv: impl FnOnce() -> Result<String>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let p = prefix.with_extension("json");
        write_text(&p, &Envelope::new(config.clone(), result).to_json()?)?;
        written.push(p);
    }
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let p = prefix.with_extension("csv");
        write_text(&p, &csv()?)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{DynAvgForm, GeneratorKind};
    use proptest::prelude::*;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = build_random_model(7, 2, 8, 1.0, 1.0).unwrap().with_lambda(0.3).unwrap();
        let s = model_to_json(&m).unwrap();
        let back = model_from_json(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back).unwrap(), s);
        assert!(s.contains("\"schema\": \"wcl-1\""));
    }

    #[test]
    fn rejects_bad_documents() {
        let m = build_random_model(1, 1, 2, 1.0, 1.0).unwrap();
        let mut doc = ModelDoc::from_model(&m);
        doc.schema = "wcl-0".into();
        assert!(doc.to_model().is_err());
        let mut doc = ModelDoc::from_model(&m);
        doc.a.im.pop();
        assert!(doc.to_model().is_err());
    }

    #[test]
    fn run_config_sources() {
        let cfg = r#"{
            "model": {"kind": "random", "seed": 7, "n0": 2, "n1": 8},
            "generator": {"kind": "dynavg", "form": "q-average"},
            "lambda_grid": [0.4, 0.2],
            "tau_bar": 0.5
        }"#;
        let c = RunConfig::from_json(cfg).unwrap();
        assert_eq!(c.time_nodes, 200);
        assert_eq!(c.format, OutputFormat::Both);
        assert!(matches!(c.model, ModelSource::Generate(_)));
        let m = c.model.load(Path::new(".")).unwrap();
        assert_eq!((m.n0, m.n1), (2, 8));
        assert!(matches!(c.generator.kind, GeneratorKind::DynAvg { t: None, form: DynAvgForm::QAverage }));

        let inline = serde_json::json!({
            "model": ModelDoc::from_model(&m),
            "generator": {"kind": "davies", "x_max": 10.0},
            "lambda_grid": [0.1],
            "tau_bar": 1.0
        });
        let c = RunConfig::from_json(&inline.to_string()).unwrap();
        assert_eq!(c.model.load(Path::new(".")).unwrap(), m);

        let bad = cfg.replace("[0.4, 0.2]", "[0.4, 0.0]");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn path_source_resolves_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_random_model(3, 1, 3, 1.0, 1.0).unwrap();
        save_model(&m, &dir.path().join("m.json")).unwrap();
        let src: ModelSource = serde_json::from_str("\"m.json\"").unwrap();
        assert_eq!(src.load(dir.path()).unwrap(), m);
        write_text(&dir.path().join("r.json"), r#"{"kind": "random", "seed": 3, "n0": 1, "n1": 3}"#).unwrap();
        let src: ModelSource = serde_json::from_str("\"r.json\"").unwrap();
        assert_eq!(src.load(dir.path()).unwrap(), m);
    }

    #[test]
    fn csv_layout() {
        let text = csv_with_echo(&serde_json::json!({"a": 1}), &CSV_COLUMNS, &[vec!["1".into(); 7]]).unwrap();
        assert!(text.starts_with("# schema: wcl-1\n# config: {\"a\":1}\n"));
        assert!(!text.contains('\r'));
        let (h, rows) = read_csv(&text).unwrap();
        assert_eq!(h, CSV_COLUMNS);
        assert_eq!(rows.len(), 1);
    }

    proptest! {
        #[test]
        fn float_bits_survive(re in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
                              im in proptest::num::f64::NORMAL) {
            let cm = ComplexMatrix::from_matrix(&DMatrix::from_element(1, 1, C64::new(re, im)));
            let back: ComplexMatrix = serde_json::from_str(&serde_json::to_string(&cm).unwrap()).unwrap();
            prop_assert_eq!(back.re[0][0].to_bits(), re.to_bits());
            prop_assert_eq!(back.im[0][0].to_bits(), im.to_bits());
        }
    }
}
