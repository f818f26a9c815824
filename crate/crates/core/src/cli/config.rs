use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::{Backend, Hamiltonian};
use crate::models::{fermion_ops, pauli, spin_matrices, ModelSpec, Param};
use crate::numerics::Mat;
use crate::optimizer::{Algorithm, BondSchedule, RunOptions, Tolerances};

use super::{CliError, Result};

/// Model name and its parameters, e.g. `{ name = "tfi", h = 0.48 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, Param>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Measurements {
    /// Local operators evaluated on every site of the final state.
    pub observables: Vec<String>,
    /// Keep the Schmidt spectrum in every k-th telemetry line; 0 keeps none.
    pub schmidt_every: usize,
    /// Record the two-site truncation error in every telemetry line.
    pub truncation_every_iteration: bool,
}

impl Default for Measurements {
    fn default() -> Self {
        Self {
            observables: Vec::new(),
            schmidt_every: 1,
            truncation_every_iteration: false,
        }
    }
}

/// Run configuration. Written as TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Overrides the model's preferred backend.
    #[serde(default)]
    pub backend: Option<Backend>,
    /// Unit cell size; the model's suggestion when absent.
    #[serde(default)]
    pub cell: Option<usize>,
    /// Initial bond dimension.
    pub bond_dim: usize,
    #[serde(default)]
    pub schedule: BondSchedule,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Single-site for one-site cells and parallel otherwise when absent.
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub multiplet_guard: bool,
    #[serde(default = "default_stagnation")]
    pub stagnation_window: usize,
    pub output: PathBuf,
    /// Write `checkpoint.bin` every k iterations; 0 writes it only at the end.
    #[serde(default)]
    pub checkpoint_interval: usize,
    #[serde(default)]
    pub measure: Measurements,
}

fn default_stagnation() -> usize {
    RunOptions::default().stagnation_window
}

/// A configuration with the model resolved and every input validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub ham: Hamiltonian,
    pub cell: usize,
    pub options: RunOptions,
    pub observables: Vec<(String, Mat)>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Resolves the model and checks every setting without touching the
    /// file system.
    pub fn prepare(&self) -> Result<Prepared> {
        let spec = ModelSpec::from_params(&self.model.name, &self.model.params)?;
        let ham = spec.hamiltonian(self.backend)?;
        let cell = self.cell.unwrap_or_else(|| spec.suggested_cell());
        if cell == 0 {
            return Err(CliError::Config("cell must be at least 1".into()));
        }
        if self.bond_dim == 0 {
            return Err(CliError::Config("bond_dim must be at least 1".into()));
        }
        let algorithm = self.algorithm.unwrap_or(if cell == 1 {
            Algorithm::SingleSite
        } else {
            Algorithm::Parallel
        });
        let options = RunOptions {
            tol: self.tolerances.clone(),
            schedule: self.schedule.clone(),
            algorithm,
            multiplet_guard: self.multiplet_guard,
            stagnation_window: self.stagnation_window,
            record_truncation: self.measure.truncation_every_iteration,
        };
        let invalid = |e: crate::optimizer::OptimizerError| CliError::Config(e.to_string());
        options.tol.validate().map_err(invalid)?;
        options.schedule.validate().map_err(invalid)?;
        if algorithm == Algorithm::SingleSite && cell != 1 {
            return Err(CliError::Config(format!(
                "single-site algorithm needs cell = 1, got {cell}"
            )));
        }
        let observables = self
            .measure
            .observables
            .iter()
            .map(|name| Ok((name.clone(), observable(&spec, name)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            config: self.clone(),
            spec,
            ham,
            cell,
            options,
            observables,
        })
    }
}

/// Local observables by name: `x`, `y`, `z` (Pauli) for the Ising models,
/// `sx`, `sy`, `sz` for spin models, and `n`, `n_up`, `n_dn`, `sz`,
/// `double` for the Hubbard chain.
pub fn observable(spec: &ModelSpec, name: &str) -> Result<Mat> {
    let unknown = || {
        CliError::Config(format!(
            "observable '{name}' is not defined for model '{}'",
            spec.name()
        ))
    };
    let op = match spec {
        ModelSpec::Tfi { .. } | ModelSpec::LrTfi { .. } => {
            let (x, y, z) = pauli();
            match name {
                "x" => x,
                "y" => y,
                "z" => z,
                _ => return Err(unknown()),
            }
        }
        ModelSpec::Xxz { .. } | ModelSpec::HaldaneShastry { .. } => {
            let two_s = spec.phys_dim() - 1;
            let (x, y, z) = spin_matrices(two_s);
            match name {
                "sx" => x,
                "sy" => y,
                "sz" => z,
                _ => return Err(unknown()),
            }
        }
        ModelSpec::Hubbard { .. } => {
            let f = fermion_ops();
            match name {
                "n" => &f.n_up + &f.n_dn,
                "n_up" => f.n_up,
                "n_dn" => f.n_dn,
                "sz" => (&f.n_up - &f.n_dn).mapv(|v| v * 0.5),
                "double" => f.n_up.dot(&f.n_dn),
                _ => return Err(unknown()),
            }
        }
    };
    Ok(op)
}

/// Command-line overrides of configuration keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub bond_dim: Option<usize>,
    pub seed: Option<u64>,
    pub target: Option<f64>,
    pub max_iterations: Option<usize>,
    pub algorithm: Option<Algorithm>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(d) = self.bond_dim {
            cfg.bond_dim = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.target {
            cfg.tolerances.target = t;
        }
        if let Some(m) = self.max_iterations {
            cfg.tolerances.max_iterations = m;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = Some(a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TFI: &str = r#"
        bond_dim = 8
        output = "out"
        [model]
        name = "tfi"
        h = 0.48
    "#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = RunConfig::from_toml(TFI).unwrap();
        let p = cfg.prepare().unwrap();
        assert_eq!(p.cell, 1);
        assert_eq!(p.options.algorithm, Algorithm::SingleSite);
        assert_eq!(p.ham.backend(), Backend::Nn);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
            bond_dim = 4
            output = "runs/xxz"
            backend = "mpo"
            cell = 2
            seed = 7
            algorithm = "sequential"
            multiplet_guard = true
            checkpoint_interval = 5
            schedule = [
                { trigger = { gradient = 1e-4 }, target = 8 },
                { trigger = { iteration = 40 }, target = 16 },
            ]
            [model]
            name = "xxz"
            spin = 1
            delta = 2.0
            rotated = false
            [tolerances]
            target = 1e-9
            env_policy = { relative = 0.1 }
            factorize = "polar"
            [measure]
            observables = ["sz"]
            schmidt_every = 10
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let p = cfg.prepare().unwrap();
        assert_eq!(p.spec.phys_dim(), 3);
        assert_eq!(p.options.schedule.steps.len(), 2);
        assert_eq!(p.ham.backend(), Backend::Mpo);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let extra = format!("colour = 1\n{TFI}");
        assert!(matches!(RunConfig::from_toml(&extra), Err(CliError::Config(_))));
        let nested = TFI.replace("h = 0.48", "h = 0.48\ng = 1");
        let cfg = RunConfig::from_toml(&nested).unwrap();
        assert!(matches!(cfg.prepare(), Err(CliError::Model(_))));
        let bad_tol = format!("{TFI}\n[tolerances]\ntarget = 1e-10\nsloppy = true");
        assert!(RunConfig::from_toml(&bad_tol).is_err());
        let unknown = TFI.replace("\"tfi\"", "\"ising\"");
        assert!(RunConfig::from_toml(&unknown).unwrap().prepare().is_err());
        let obs = format!("{TFI}\n[measure]\nobservables = [\"sz\"]");
        assert!(RunConfig::from_toml(&obs).unwrap().prepare().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::from_toml(TFI).unwrap();
        Overrides {
            bond_dim: Some(12),
            target: Some(1e-6),
            ..Overrides::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.bond_dim, 12);
        assert_eq!(cfg.tolerances.target, 1e-6);
    }
}
