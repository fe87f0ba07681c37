use std::path::Path;

use anyhow::{Context, Result};
use h2cert::dpm::{load_dpm, DpmModel};
use h2cert::lpm::{assemble_lpm, load_lpm, LpmNetwork};
use h2cert::{second_order_to_state_space, InputSignal, StateSpaceSystem};

/// Either kind of model document.
pub enum Model {
    Lpm(LpmNetwork),
    Dpm(DpmModel<f64>),
}

impl Model {
    /// LPM documents are recognized by their `masses` list; anything else
    /// is read as a DPM manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_lpm = serde_json::from_str::<serde_json::Value>(&text)
            .map(|v| v.get("masses").is_some())
            .unwrap_or(false);
        if is_lpm {
            Ok(Model::Lpm(load_lpm(path)?))
        } else {
            Ok(Model::Dpm(load_dpm(path)?))
        }
    }

    pub fn state_space(&self) -> Result<StateSpaceSystem<f64>> {
        let so = match self {
            Model::Lpm(net) => assemble_lpm(net)?,
            Model::Dpm(d) => d.system.clone(),
        };
        Ok(second_order_to_state_space(&so)?)
    }

    pub fn inputs(&self) -> Vec<InputSignal> {
        match self {
            Model::Lpm(net) => net.input_signals(),
            Model::Dpm(d) => d.inputs.clone(),
        }
    }

    /// `[x0; v0]`.
    pub fn initial_state(&self) -> Vec<f64> {
        let (x, v) = match self {
            Model::Lpm(net) => net.initial_conditions(),
            Model::Dpm(d) => (d.x0.clone(), d.v0.clone()),
        };
        x.into_iter().chain(v).collect()
    }
}

pub fn load_dpm_model(path: &Path) -> Result<DpmModel<f64>> {
    if !path.exists() {
        anyhow::bail!("DPM manifest {} not found", path.display());
    }
    Ok(load_dpm(path)?)
}
