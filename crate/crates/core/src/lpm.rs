//! Lumped-parameter networks of masses, springs and dampers.
//!
//! Document format (JSON, `"format": 1`):
//!
//! ```json
//! {
//!   "format": 1,
//!   "masses":  [{"id": "m1", "value": 2.0, "x0": 0.0, "v0": 0.0}],
//!   "springs": [{"id": "k1", "between": ["ground", "m1"], "k": 10.0}],
//!   "dampers": [{"id": "r1", "between": ["ground", "m1"], "r": 0.5}],
//!   "signals": {"push": {"kind": "step", "amplitude": 1.0, "horizon": 2.0}},
//!   "sources": [{"mass": "m1", "signal": "push", "scale": 1.0}],
//!   "boi":     [{"label": "tip", "masses": ["m1"]}]
//! }
//! ```
//!
//! `ground` is reserved. `x0`, `v0` and `scale` default to 0, 0 and 1. A BoI
//! entry either lists `masses` (uniform weights `1/count`) or gives an
//! explicit `weights` map from mass id to weight.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::scalar::Real;
use crate::signal::InputSignal;
use crate::system::SecondOrderSystem;

/// Reserved node id for the fixed reference.
pub const GROUND: &str = "ground";

#[derive(Clone, Debug, PartialEq)]
pub struct Mass {
    pub id: String,
    pub value: f64,
    pub x0: f64,
    pub v0: f64,
}

/// Spring or damper between two nodes; `None` endpoints are ground.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub coefficient: f64,
}

/// One column of the input map: a signal and the masses it pushes.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceChannel {
    pub signal_name: String,
    pub signal: InputSignal,
    /// `(mass index, scale)` pairs.
    pub loads: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoiSelector {
    pub label: String,
    /// `(mass index, weight)` pairs.
    pub weights: Vec<(usize, f64)>,
}

/// Validated lumped network.
#[derive(Clone, Debug, PartialEq)]
pub struct LpmNetwork {
    pub masses: Vec<Mass>,
    pub springs: Vec<Edge>,
    pub dampers: Vec<Edge>,
    pub sources: Vec<SourceChannel>,
    pub boi: Vec<BoiSelector>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    format: u32,
    masses: Vec<MassDoc>,
    #[serde(default)]
    springs: Vec<SpringDoc>,
    #[serde(default)]
    dampers: Vec<DamperDoc>,
    #[serde(default)]
    signals: BTreeMap<String, InputSignal>,
    #[serde(default)]
    sources: Vec<SourceDoc>,
    #[serde(default)]
    boi: Vec<BoiDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MassDoc {
    id: String,
    value: f64,
    #[serde(default)]
    x0: f64,
    #[serde(default)]
    v0: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpringDoc {
    id: String,
    between: [String; 2],
    k: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DamperDoc {
    id: String,
    between: [String; 2],
    r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    mass: String,
    signal: String,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoiDoc {
    label: String,
    #[serde(default)]
    masses: Option<Vec<String>>,
    #[serde(default)]
    weights: Option<BTreeMap<String, f64>>,
}

/// Reads and validates an LPM document from disk.
pub fn load_lpm(path: impl AsRef<Path>) -> Result<LpmNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lpm_named(&text, &path.display().to_string())
}

/// Parses and validates an LPM document.
pub fn parse_lpm(text: &str) -> Result<LpmNetwork> {
    parse_lpm_named(text, "<lpm>")
}

fn parse_lpm_named(text: &str, name: &str) -> Result<LpmNetwork> {
    let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: name.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if doc.format != 1 {
        return Err(Error::doc(format!("{name}: format"), format!("unsupported format version {}", doc.format)));
    }
    let ctx = |field: String| format!("{name}: {field}");

    let mut index = HashMap::new();
    let mut masses = Vec::with_capacity(doc.masses.len());
    for (i, m) in doc.masses.into_iter().enumerate() {
        let here = ctx(format!("masses[{i}]"));
        if m.id == GROUND {
            return Err(Error::doc(here, "\"ground\" is reserved and cannot be a mass id"));
        }
        if !(m.value > 0.0 && m.value.is_finite()) {
            return Err(Error::doc(here, format!("mass \"{}\" must be positive, got {}", m.id, m.value)));
        }
        if !(m.x0.is_finite() && m.v0.is_finite()) {
            return Err(Error::doc(here, "initial conditions must be finite"));
        }
        if index.insert(m.id.clone(), i).is_some() {
            return Err(Error::doc(here, format!("duplicate mass id \"{}\"", m.id)));
        }
        masses.push(Mass {
            id: m.id,
            value: m.value,
            x0: m.x0,
            v0: m.v0,
        });
    }
    if masses.is_empty() {
        return Err(Error::doc(ctx("masses".into()), "network has no masses"));
    }

    let resolve = |name: &str, here: &str| -> Result<Option<usize>> {
        if name == GROUND {
            return Ok(None);
        }
        index
            .get(name)
            .copied()
            .map(Some)
            .ok_or_else(|| Error::doc(here, format!("unknown mass \"{name}\"")))
    };

    let mut edge_ids = HashSet::new();
    let mut edge = |list: &str, i: usize, id: String, between: [String; 2], c: f64, sym: &str| -> Result<Edge> {
        let here = ctx(format!("{list}[{i}]"));
        if !edge_ids.insert(id.clone()) {
            return Err(Error::doc(here, format!("duplicate element id \"{id}\"")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::doc(here, format!("{sym} of \"{id}\" must be positive, got {c}")));
        }
        let a = resolve(&between[0], &format!("{here}.between[0]"))?;
        let b = resolve(&between[1], &format!("{here}.between[1]"))?;
        if a == b {
            return Err(Error::doc(here, format!("\"{id}\" connects \"{}\" to itself", between[0])));
        }
        Ok(Edge {
            id,
            a,
            b,
            coefficient: c,
        })
    };
    let springs = doc
        .springs
        .into_iter()
        .enumerate()
        .map(|(i, s)| edge("springs", i, s.id, s.between, s.k, "k"))
        .collect::<Result<Vec<_>>>()?;
    let dampers = doc
        .dampers
        .into_iter()
        .enumerate()
        .map(|(i, d)| edge("dampers", i, d.id, d.between, d.r, "r"))
        .collect::<Result<Vec<_>>>()?;

    for (name, s) in &doc.signals {
        s.validate().map_err(|e| Error::doc(ctx(format!("signals.{name}")), e.to_string()))?;
    }
    let mut sources: Vec<SourceChannel> = Vec::new();
    for (i, s) in doc.sources.into_iter().enumerate() {
        let here = ctx(format!("sources[{i}]"));
        let m = resolve(&s.mass, &format!("{here}.mass"))?
            .ok_or_else(|| Error::doc(&here, "a source cannot act on ground"))?;
        let signal = doc
            .signals
            .get(&s.signal)
            .ok_or_else(|| Error::doc(format!("{here}.signal"), format!("unknown signal \"{}\"", s.signal)))?;
        if !s.scale.is_finite() {
            return Err(Error::doc(here, "scale must be finite"));
        }
        match sources.iter_mut().find(|c| c.signal_name == s.signal) {
            Some(ch) => ch.loads.push((m, s.scale)),
            None => sources.push(SourceChannel {
                signal_name: s.signal.clone(),
                signal: signal.clone(),
                loads: vec![(m, s.scale)],
            }),
        }
    }

    let mut boi = Vec::new();
    for (i, b) in doc.boi.into_iter().enumerate() {
        let here = ctx(format!("boi[{i}]"));
        let weights = match (b.masses, b.weights) {
            (Some(list), None) => {
                if list.is_empty() {
                    return Err(Error::doc(here, "empty mass list"));
                }
                let w = 1.0 / list.len() as f64;
                list.iter()
                    .enumerate()
                    .map(|(j, id)| {
                        resolve(id, &format!("{here}.masses[{j}]"))?
                            .map(|k| (k, w))
                            .ok_or_else(|| Error::doc(&here, "ground cannot be observed"))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            (None, Some(map)) => {
                if map.is_empty() {
                    return Err(Error::doc(here, "empty weight map"));
                }
                map.iter()
                    .map(|(id, &w)| {
                        if !w.is_finite() {
                            return Err(Error::doc(format!("{here}.weights.{id}"), "weight must be finite"));
                        }
                        resolve(id, &format!("{here}.weights.{id}"))?
                            .map(|k| (k, w))
                            .ok_or_else(|| Error::doc(&here, "ground cannot be observed"))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            _ => return Err(Error::doc(here, "give exactly one of \"masses\" or \"weights\"")),
        };
        boi.push(BoiSelector { label: b.label, weights });
    }
    if boi.is_empty() {
        return Err(Error::doc(ctx("boi".into()), "at least one behavior-of-interest selector is required"));
    }

    let net = LpmNetwork {
        masses,
        springs,
        dampers,
        sources,
        boi,
    };
    net.check_connected().map_err(|e| Error::doc(ctx("springs/dampers".into()), e))?;
    Ok(net)
}

impl LpmNetwork {
    fn check_connected(&self) -> std::result::Result<(), String> {
        // union-find over masses plus ground (index n)
        let n = self.masses.len();
        let mut parent: Vec<usize> = (0..=n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.springs.iter().chain(&self.dampers) {
            let a = find(&mut parent, e.a.unwrap_or(n));
            let b = find(&mut parent, e.b.unwrap_or(n));
            parent[a] = b;
        }
        let root = find(&mut parent, n);
        let floating: Vec<&str> = (0..n)
            .filter(|&i| find(&mut parent, i) != root)
            .map(|i| self.masses[i].id.as_str())
            .collect();
        if floating.is_empty() {
            Ok(())
        } else {
            Err(format!("masses not connected to ground: {}", floating.join(", ")))
        }
    }

    pub fn mass_index(&self, id: &str) -> Option<usize> {
        self.masses.iter().position(|m| m.id == id)
    }

    /// Input signals in input-map column order.
    pub fn input_signals(&self) -> Vec<InputSignal> {
        self.sources.iter().map(|s| s.signal.clone()).collect()
    }

    /// Initial displacements and velocities.
    pub fn initial_conditions(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.masses.iter().map(|m| m.x0).collect(),
            self.masses.iter().map(|m| m.v0).collect(),
        )
    }
}

/// Sum of all lumped masses.
pub fn total_mass(net: &LpmNetwork) -> f64 {
    net.masses.iter().map(|m| m.value).sum()
}

fn stamp<T: Real>(n: usize, edges: &[Edge]) -> Result<SparseMatrix<T>> {
    let mut t = Vec::with_capacity(4 * edges.len());
    for e in edges {
        let c = T::lit(e.coefficient);
        if let Some(a) = e.a {
            t.push((a, a, c));
        }
        if let Some(b) = e.b {
            t.push((b, b, c));
        }
        if let (Some(a), Some(b)) = (e.a, e.b) {
            t.push((a, b, -c));
            t.push((b, a, -c));
        }
    }
    SparseMatrix::from_triplets(n, n, &t)
}

/// Stamps the network into `M q̈ + R q̇ + K q = F h`, `y = Cout q`.
pub fn assemble_lpm<T: Real>(net: &LpmNetwork) -> Result<SecondOrderSystem<T>> {
    let n = net.masses.len();
    let m = SparseMatrix::from_diagonal(&net.masses.iter().map(|m| T::lit(m.value)).collect::<Vec<_>>());
    let k = stamp(n, &net.springs)?;
    let r = stamp(n, &net.dampers)?;
    let mut f = DMatrix::zeros(n, net.sources.len());
    for (j, src) in net.sources.iter().enumerate() {
        for &(i, s) in &src.loads {
            f[(i, j)] += T::lit(s);
        }
    }
    let mut cout = DMatrix::zeros(net.boi.len(), n);
    for (row, b) in net.boi.iter().enumerate() {
        for &(i, w) in &b.weights {
            cout[(row, i)] += T::lit(w);
        }
    }
    SecondOrderSystem::new(m, k, r, f, cout)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: &str = r#"{
        "format": 1,
        "masses": [{"id": "m", "value": 1}],
        "springs": [{"id": "k", "between": ["ground", "m"], "k": 1}],
        "dampers": [{"id": "r", "between": ["m", "ground"], "r": 1}],
        "signals": {"s": {"kind": "step", "amplitude": 1, "horizon": 1}},
        "sources": [{"mass": "m", "signal": "s"}],
        "boi": [{"label": "y", "masses": ["m"]}]
    }"#;

    #[test]
    fn minimal_network() {
        let net = parse_lpm(UNIT).unwrap();
        assert_eq!((net.masses.len(), net.springs.len(), net.dampers.len()), (1, 1, 1));
        let sys = assemble_lpm::<f64>(&net).unwrap();
        assert_eq!(sys.mass().to_dense()[(0, 0)], 1.0);
        assert_eq!(sys.stiffness().to_dense()[(0, 0)], 1.0);
        assert_eq!(sys.damping().to_dense()[(0, 0)], 1.0);
        assert_eq!(total_mass(&net), 1.0);
    }

    #[test]
    fn unknown_mass_is_named() {
        let doc = UNIT.replace(r#""between": ["ground", "m"]"#, r#""between": ["ground", "m9"]"#);
        let err = parse_lpm(&doc).unwrap_err().to_string();
        assert!(err.contains("\"m9\"") && err.contains("springs[0].between[1]"), "{err}");
    }

    #[test]
    fn disconnected_mass_is_rejected() {
        let doc = UNIT.replace(
            r#"[{"id": "m", "value": 1}]"#,
            r#"[{"id": "m", "value": 1}, {"id": "loose", "value": 2}]"#,
        );
        let err = parse_lpm(&doc).unwrap_err().to_string();
        assert!(err.contains("loose"), "{err}");
    }

    #[test]
    fn duplicate_and_nonpositive_are_rejected() {
        let dup = UNIT.replace(r#""id": "r""#, r#""id": "k""#);
        assert!(parse_lpm(&dup).unwrap_err().to_string().contains("duplicate"));
        let neg = UNIT.replace(r#""k": 1"#, r#""k": -1"#);
        assert!(parse_lpm(&neg).unwrap_err().to_string().contains("must be positive"));
    }

    #[test]
    fn two_masses_with_ground_springs() {
        let doc = r#"{
            "format": 1,
            "masses": [{"id": "a", "value": 1}, {"id": "b", "value": 1}],
            "springs": [
                {"id": "kab", "between": ["a", "b"], "k": 3},
                {"id": "ga", "between": ["ground", "a"], "k": 2},
                {"id": "gb", "between": ["ground", "b"], "k": 2}
            ],
            "boi": [{"label": "mean", "masses": ["a", "b"]}]
        }"#;
        let sys = assemble_lpm::<f64>(&parse_lpm(doc).unwrap()).unwrap();
        let k = sys.stiffness().to_dense();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[5.0, -3.0, -3.0, 5.0]));
        let v = nalgebra::DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(&k * &v, v * 2.0);
        assert_eq!(sys.output_map().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn parallel_edges_sum() {
        let doc = UNIT.replace(
            r#""springs": [{"id": "k", "between": ["ground", "m"], "k": 1}]"#,
            r#""springs": [{"id": "k", "between": ["ground", "m"], "k": 1}, {"id": "k2", "between": ["m", "ground"], "k": 2.5}]"#,
        );
        let sys = assemble_lpm::<f64>(&parse_lpm(&doc).unwrap()).unwrap();
        assert_eq!(sys.stiffness().get(0, 0), 3.5);
    }

    #[test]
    fn syntax_errors_carry_line() {
        match parse_lpm("{\n\"format\": 1,\n\"masses\": [,]\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
