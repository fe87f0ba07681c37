//! Semi-discretized distributed models: Matrix Market ingestion, the bar
//! generator, and the manifest that bundles a model with its sources, BoI
//! selectors, initial conditions and projections.
//!
//! Manifest format (JSON, `"format": 1`, paths relative to the manifest):
//!
//! ```json
//! {
//!   "format": 1,
//!   "matrices": {"M": "m.mtx", "K": "k.mtx", "R": "r.mtx", "F": "f.mtx", "Cout": "c.mtx"},
//!   "inputs": [{"kind": "step", "amplitude": 1.0, "horizon": 2.0}],
//!   "sources": [{"nodes": [7, 8], "weights": [0.5, 0.5], "signal": {"kind": "step", "amplitude": 1.0, "horizon": 2.0}}],
//!   "boi": [{"label": "tip", "nodes": [9]}],
//!   "initial": {"x0": [], "v0": []},
//!   "projection": {"gamma_n": [[1.0]], "gamma_i": [{"nodes": [9]}]}
//! }
//! ```
//!
//! Instead of `matrices`, a `bar` object (see [`BarSpec`]) generates the
//! model. `sources` (nodal force shares per unit input, one input channel per
//! entry) replaces `F`; `inputs` then must be absent. `boi` replaces `Cout`.
//! Node indices are zero-based degrees of freedom after constraints.

pub mod bar;
pub mod mtx;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bar::{assemble_bar_fem, bar_free_matrices, BarSpec, MassModel};
pub use mtx::{parse_matrix_market, read_matrix_market, write_dense_matrix_market, write_matrix_market};

use crate::error::{Error, Result};
use crate::linalg::modal::rayleigh_coefficients;
use crate::linalg::SparseMatrix;
use crate::scalar::Real;
use crate::signal::InputSignal;
use crate::system::SecondOrderSystem;

/// `1ᵀ M 1`.
pub fn dpm_total_mass<T: Real>(sys: &SecondOrderSystem<T>) -> f64 {
    sys.mass().sum().as_f64()
}

/// Output row averaging `nodes` with normalized `weights`.
pub fn build_boi_selector<T: Real>(n: usize, nodes: &[usize], weights: &[f64]) -> Result<DMatrix<T>> {
    if nodes.is_empty() {
        return Err(Error::InvalidModel("BoI selector has an empty node set".into()));
    }
    if nodes.len() != weights.len() {
        return Err(Error::dim("BoI weights", nodes.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidModel(format!("BoI weights must be non-negative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidModel("BoI weights sum to zero".into()));
    }
    let mut row = DMatrix::zeros(1, n);
    for (&i, &w) in nodes.iter().zip(weights) {
        if i >= n {
            return Err(Error::InvalidModel(format!("BoI node {i} out of range for {n} nodes")));
        }
        row[(0, i)] += T::lit(w / total);
    }
    Ok(row)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPaths {
    #[serde(rename = "M")]
    pub m: PathBuf,
    #[serde(rename = "K")]
    pub k: PathBuf,
    #[serde(rename = "R")]
    pub r: PathBuf,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<PathBuf>,
    #[serde(rename = "Cout", default, skip_serializing_if = "Option::is_none")]
    pub cout: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSourceDecl {
    pub nodes: Vec<usize>,
    /// Force share per node per unit input; defaults to ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub signal: InputSignal,
}

/// Weighted node average. Weights default to uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAverage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl NodeAverage {
    fn weights_or_uniform(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.nodes.len()])
    }

    /// Normalized row over `n` nodes.
    pub fn selector<T: Real>(&self, n: usize) -> Result<DMatrix<T>> {
        build_boi_selector(n, &self.nodes, &self.weights_or_uniform())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDecl {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v0: Vec<f64>,
}

/// User-declared projections between the DPM and an LPM.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionDecl {
    /// LPM inputs × DPM inputs, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_n: Option<Vec<Vec<f64>>>,
    /// One node average per LPM mass, applied to displacements and velocities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_i: Option<Vec<NodeAverage>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpmManifest {
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<MatrixPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<BarSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputSignal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<NodeSourceDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boi: Vec<NodeAverage>,
    #[serde(default)]
    pub initial: InitialDecl,
    #[serde(default)]
    pub projection: ProjectionDecl,
}

/// How the damping matrix was obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DampingOrigin {
    /// Generated as `αM + βK`; a stand-in for damping the discretization does not provide.
    RayleighStandIn { alpha: f64, beta: f64 },
    /// Read from file and found to be of Rayleigh form.
    RayleighFitted { alpha: f64, beta: f64 },
    /// Read from file, not of Rayleigh form.
    General,
}

/// A loaded DPM with everything needed to compare it against an LPM.
#[derive(Clone, Debug)]
pub struct DpmModel<T: Real> {
    pub system: SecondOrderSystem<T>,
    /// One signal per input-map column.
    pub inputs: Vec<InputSignal>,
    pub boi_labels: Vec<String>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub projection: ProjectionDecl,
    pub damping: DampingOrigin,
}

/// Reads a manifest and everything it references.
pub fn load_dpm<T: Real>(path: impl AsRef<Path>) -> Result<DpmModel<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DpmManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .build(base)
        .map_err(|e| match e {
            Error::Document { context, message } => Error::doc(format!("{}: {context}", path.display()), message),
            other => other,
        })
}

impl DpmManifest {
    /// Builds the model; relative matrix paths resolve against `base`.
    pub fn build<T: Real>(&self, base: &Path) -> Result<DpmModel<T>> {
        if self.format != 1 {
            return Err(Error::doc("format", format!("unsupported format version {}", self.format)));
        }
        let (mut sys, damping) = match (&self.matrices, &self.bar) {
            (Some(p), None) => {
                let read = |rel: &Path| read_matrix_market::<T>(base.join(rel));
                let (m, k, r) = (read(&p.m)?, read(&p.k)?, read(&p.r)?);
                let n = m.nrows();
                let f = match &p.f {
                    Some(f) => read(f)?.to_dense(),
                    None => DMatrix::zeros(n, 0),
                };
                let cout = match &p.cout {
                    Some(c) => read(c)?.to_dense(),
                    None => DMatrix::zeros(0, n),
                };
                let damping = match rayleigh_coefficients(&m, &k, &r, T::lit(1e-10)) {
                    Some((a, b)) => DampingOrigin::RayleighFitted {
                        alpha: a.as_f64(),
                        beta: b.as_f64(),
                    },
                    None => DampingOrigin::General,
                };
                (SecondOrderSystem::new(m, k, r, f, cout)?, damping)
            }
            (None, Some(spec)) => (
                assemble_bar_fem::<T>(spec)?,
                DampingOrigin::RayleighStandIn {
                    alpha: spec.rayleigh.0,
                    beta: spec.rayleigh.1,
                },
            ),
            _ => return Err(Error::doc("model", "give exactly one of \"matrices\" or \"bar\"")),
        };
        let n = sys.dofs();

        let inputs = if !self.sources.is_empty() {
            if !self.inputs.is_empty() {
                return Err(Error::doc("inputs", "\"inputs\" and \"sources\" are mutually exclusive"));
            }
            let mut f = DMatrix::zeros(n, self.sources.len());
            for (j, s) in self.sources.iter().enumerate() {
                let weights = s.weights.clone().unwrap_or_else(|| vec![1.0; s.nodes.len()]);
                if weights.len() != s.nodes.len() || s.nodes.is_empty() {
                    return Err(Error::doc(format!("sources[{j}]"), "need one weight per node and at least one node"));
                }
                for (&i, &w) in s.nodes.iter().zip(&weights) {
                    if i >= n {
                        return Err(Error::doc(format!("sources[{j}]"), format!("node {i} out of range for {n} nodes")));
                    }
                    f[(i, j)] += T::lit(w);
                }
                s.signal
                    .validate()
                    .map_err(|e| Error::doc(format!("sources[{j}].signal"), e.to_string()))?;
            }
            sys = sys.with_input_map(f)?;
            self.sources.iter().map(|s| s.signal.clone()).collect()
        } else {
            if self.inputs.len() != sys.inputs() {
                return Err(Error::doc(
                    "inputs",
                    format!("{} signals declared for {} input-map columns", self.inputs.len(), sys.inputs()),
                ));
            }
            for (j, s) in self.inputs.iter().enumerate() {
                s.validate().map_err(|e| Error::doc(format!("inputs[{j}]"), e.to_string()))?;
            }
            self.inputs.clone()
        };
        if sys.inputs() == 0 {
            return Err(Error::doc("sources", "the model has no inputs"));
        }

        let boi_labels = if !self.boi.is_empty() {
            let mut cout = DMatrix::zeros(self.boi.len(), n);
            for (row, b) in self.boi.iter().enumerate() {
                let sel = b
                    .selector::<T>(n)
                    .map_err(|e| Error::doc(format!("boi[{row}]"), e.to_string()))?;
                cout.row_mut(row).copy_from(&sel.row(0));
            }
            sys = sys.with_output_map(cout)?;
            self.boi
                .iter()
                .enumerate()
                .map(|(i, b)| b.label.clone().unwrap_or_else(|| format!("y{}", i + 1)))
                .collect()
        } else {
            (1..=sys.outputs()).map(|i| format!("y{i}")).collect()
        };
        if sys.outputs() == 0 {
            return Err(Error::doc("boi", "the model has no outputs"));
        }

        let ic = |v: &Vec<f64>, name: &str| -> Result<Vec<f64>> {
            match v.len() {
                0 => Ok(vec![0.0; n]),
                len if len == n => Ok(v.clone()),
                len => Err(Error::doc(format!("initial.{name}"), format!("expected {n} values, found {len}"))),
            }
        };
        Ok(DpmModel {
            x0: ic(&self.initial.x0, "x0")?,
            v0: ic(&self.initial.v0, "v0")?,
            system: sys,
            inputs,
            boi_labels,
            projection: self.projection.clone(),
            damping,
        })
    }
}

/// Writes a model's matrices as Matrix Market files next to a manifest.
pub fn save_dpm_matrices<T: Real>(dir: &Path, stem: &str, sys: &SecondOrderSystem<T>) -> Result<MatrixPaths> {
    let name = |m: &str| PathBuf::from(format!("{stem}_{m}.mtx"));
    let paths = MatrixPaths {
        m: name("M"),
        k: name("K"),
        r: name("R"),
        f: Some(name("F")),
        cout: Some(name("Cout")),
    };
    write_matrix_market(dir.join(&paths.m), sys.mass())?;
    write_matrix_market(dir.join(&paths.k), sys.stiffness())?;
    write_matrix_market(dir.join(&paths.r), sys.damping())?;
    write_matrix_market(dir.join(paths.f.as_ref().unwrap()), &SparseMatrix::from_dense(sys.input_map()))?;
    write_matrix_market(dir.join(paths.cout.as_ref().unwrap()), &SparseMatrix::from_dense(sys.output_map()))?;
    Ok(paths)
}
