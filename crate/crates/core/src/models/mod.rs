//! Model catalogue: lattice Hamiltonians in the backend descriptors of
//! [`crate::environments`], a name-and-parameters registry for run
//! configurations, and reference energy densities.

mod builders;
mod operators;
mod reference;


pub use builders::{
    build_haldane_shastry, build_hubbard, build_lr_tfi, build_tfi, build_xxz, build_xxz_rotated,
    lr_to_mpo, two_site_to_mpo, FitSettings,
};
pub use operators::{fermion_ops, pauli, spin_matrices, FermionOps};
pub use reference::{
    haldane_shastry_energy, hubbard_energy, tfi_energy, xxz_half_energy, Provenance, Reference,
    SPIN_ONE_HEISENBERG,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::{Backend, EnvError, Hamiltonian, LongRangeCoupling};
use crate::numerics::{Mat, NumericsError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model '{model}' has no {backend:?} representation")]
    UnsupportedBackend { model: &'static str, backend: Backend },
    #[error("exponential fit failed: best residual {best_residual:e} with {terms} terms")]
    FitFailure { best_residual: f64, terms: usize },
    #[error("no reference energy: {0}")]
    NoReference(String),
    #[error(transparent)]
    Env(EnvError),
}

impl From<NumericsError> for ModelError {
    fn from(e: NumericsError) -> Self {
        ModelError::Env(EnvError::Numerics(e))
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A model parameter as written in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Flag(bool),
    Number(f64),
}

/// Catalogue entry with validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `−Σ X X − h Σ Z`, Pauli matrices.
    Tfi { h: f64 },
    /// `Σ X X + Y Y + Δ Z Z` with spin-`S` generators, `two_s = 2S`.
    /// `rotated` flips the sign of the planar part.
    Xxz { two_s: usize, delta: f64, rotated: bool },
    Hubbard { t: f64, u: f64 },
    HaldaneShastry { fit: FitSettings },
    /// `−J Σ λ^{n−1} X_j X_{j+n} − h Σ Z`.
    LrTfi { j: f64, h: f64, lambda: f64 },
}

struct Params<'a> {
    model: &'static str,
    map: &'a BTreeMap<String, Param>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn number(&mut self, key: &'static str, default: Option<f64>) -> Result<f64> {
        self.used.push(key);
        match (self.map.get(key), default) {
            (Some(Param::Number(x)), _) if x.is_finite() => Ok(*x),
            (Some(_), _) => Err(ModelError::InvalidParameter(format!(
                "{}: '{key}' must be a finite number",
                self.model
            ))),
            (None, Some(x)) => Ok(x),
            (None, None) => Err(ModelError::InvalidParameter(format!(
                "{}: missing parameter '{key}'",
                self.model
            ))),
        }
    }

    fn flag(&mut self, key: &'static str, default: bool) -> Result<bool> {
        self.used.push(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(Param::Flag(b)) => Ok(*b),
            Some(_) => Err(ModelError::InvalidParameter(format!(
                "{}: '{key}' must be true or false",
                self.model
            ))),
        }
    }

    fn count(&mut self, key: &'static str, default: usize) -> Result<usize> {
        let x = self.number(key, Some(default as f64))?;
        if x < 1.0 || x.fract() != 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "{}: '{key}' must be a positive integer",
                self.model
            )));
        }
        Ok(x as usize)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(ModelError::InvalidParameter(format!(
                "{}: unknown parameter '{k}'",
                self.model
            ))),
            None => Ok(()),
        }
    }
}

fn two_spin(spin: f64) -> Result<usize> {
    let two_s = 2.0 * spin;
    if spin <= 0.0 || (two_s - two_s.round()).abs() > 1e-12 {
        return Err(ModelError::InvalidParameter(format!(
            "spin {spin} is not a positive half-integer"
        )));
    }
    Ok(two_s.round() as usize)
}

impl ModelSpec {
    pub const NAMES: [&'static str; 6] =
        ["tfi", "xxz", "heisenberg", "hubbard", "haldane_shastry", "lr_tfi"];

    /// Looks up `name` in the catalogue. Unknown parameters are rejected.
    ///
    /// | name | parameters (default) |
    /// |---|---|
    /// | `tfi` | `h` |
    /// | `xxz` | `spin` (0.5), `delta`, `rotated` (false) |
    /// | `heisenberg` | `spin` (0.5), `rotated` (true); `delta = 1` |
    /// | `hubbard` | `t` (1), `u` |
    /// | `haldane_shastry` | `max_terms` (20), `window` (1000), `fit_target` (1e-6) |
    /// | `lr_tfi` | `j` (1), `h`, `lambda` |
    pub fn from_params(name: &str, params: &BTreeMap<String, Param>) -> Result<Self> {
        let model = Self::NAMES
            .iter()
            .find(|n| **n == name)
            .ok_or_else(|| ModelError::UnknownModel(name.into()))?;
        let mut p = Params {
            model,
            map: params,
            used: Vec::new(),
        };
        let spec = match name {
            "tfi" => ModelSpec::Tfi {
                h: p.number("h", None)?,
            },
            "xxz" | "heisenberg" => {
                let two_s = two_spin(p.number("spin", Some(0.5))?)?;
                let delta = if name == "xxz" {
                    p.number("delta", None)?
                } else {
                    1.0
                };
                ModelSpec::Xxz {
                    two_s,
                    delta,
                    rotated: p.flag("rotated", name == "heisenberg")?,
                }
            }
            "hubbard" => ModelSpec::Hubbard {
                t: p.number("t", Some(1.0))?,
                u: p.number("u", None)?,
            },
            "haldane_shastry" => {
                let d = FitSettings::default();
                let fit = FitSettings {
                    max_terms: p.count("max_terms", d.max_terms)?,
                    window: p.count("window", d.window)?,
                    target: p.number("fit_target", Some(d.target))?,
                };
                if !(fit.target > 0.0) || fit.window < 2 * fit.max_terms {
                    return Err(ModelError::InvalidParameter(
                        "haldane_shastry: need fit_target > 0 and window ≥ 2 max_terms".into(),
                    ));
                }
                ModelSpec::HaldaneShastry { fit }
            }
            _ => {
                let spec = ModelSpec::LrTfi {
                    j: p.number("j", Some(1.0))?,
                    h: p.number("h", None)?,
                    lambda: p.number("lambda", None)?,
                };
                if let ModelSpec::LrTfi { lambda, .. } = spec {
                    if !(0.0..1.0).contains(&lambda) {
                        return Err(ModelError::InvalidParameter(format!(
                            "lr_tfi: λ = {lambda} outside [0, 1)"
                        )));
                    }
                }
                spec
            }
        };
        p.finish()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Tfi { .. } => "tfi",
            ModelSpec::Xxz { .. } => "xxz",
            ModelSpec::Hubbard { .. } => "hubbard",
            ModelSpec::HaldaneShastry { .. } => "haldane_shastry",
            ModelSpec::LrTfi { .. } => "lr_tfi",
        }
    }

    pub fn phys_dim(&self) -> usize {
        match self {
            ModelSpec::Xxz { two_s, .. } => two_s + 1,
            ModelSpec::Hubbard { .. } => 4,
            _ => 2,
        }
    }

    pub fn preferred_backend(&self) -> Backend {
        match self {
            ModelSpec::Tfi { .. } | ModelSpec::Xxz { .. } => Backend::Nn,
            ModelSpec::Hubbard { .. } | ModelSpec::LrTfi { .. } => Backend::Mpo,
            ModelSpec::HaldaneShastry { .. } => Backend::LongRange,
        }
    }

    /// Smallest cell with a uniform fixed point: the unrotated
    /// antiferromagnet alternates between sublattices, the rotation leaves
    /// the Ising-like Néel order above `Δ = 1` in place, and the Hubbard
    /// chain is run on two sites.
    pub fn suggested_cell(&self) -> usize {
        match self {
            ModelSpec::Xxz { delta, rotated, .. } if *delta > -1.0 && !rotated => 2,
            ModelSpec::Xxz { delta, .. } if *delta > 1.0 => 2,
            ModelSpec::Hubbard { .. } => 2,
            _ => 1,
        }
    }

    /// Builds the Hamiltonian in `backend`, or the preferred one.
    pub fn hamiltonian(&self, backend: Option<Backend>) -> Result<Hamiltonian> {
        let backend = backend.unwrap_or_else(|| self.preferred_backend());
        let unsupported = || ModelError::UnsupportedBackend {
            model: self.name(),
            backend,
        };
        let ham = match (self, backend) {
            (ModelSpec::Tfi { h }, Backend::Nn) => Hamiltonian::Nn(build_tfi(*h)?.0),
            (ModelSpec::Tfi { h }, Backend::Mpo) => Hamiltonian::Mpo(build_tfi(*h)?.1),
            (ModelSpec::Tfi { h }, Backend::LongRange) => {
                Hamiltonian::LongRange(build_lr_tfi(1.0, *h, 0.0)?.1)
            }
            (ModelSpec::Xxz { two_s, delta, rotated }, _) => {
                let term = if *rotated {
                    build_xxz_rotated(*two_s, *delta)?
                } else {
                    build_xxz(*two_s, *delta)?
                };
                match backend {
                    Backend::Nn => Hamiltonian::Nn(term),
                    Backend::Mpo => Hamiltonian::Mpo(two_site_to_mpo(&term)?),
                    Backend::LongRange => Hamiltonian::LongRange(LongRangeCoupling::new(
                        Vec::new(),
                        Some(term.h),
                        None::<Mat>,
                        None,
                    )?),
                }
            }
            (ModelSpec::Hubbard { t, u }, Backend::Mpo) => Hamiltonian::Mpo(build_hubbard(*t, *u)?),
            (ModelSpec::Hubbard { .. }, _) => return Err(unsupported()),
            (ModelSpec::HaldaneShastry { fit }, Backend::LongRange) => {
                Hamiltonian::LongRange(build_haldane_shastry(*fit)?)
            }
            (ModelSpec::HaldaneShastry { fit }, Backend::Mpo) => {
                Hamiltonian::Mpo(lr_to_mpo(&build_haldane_shastry(*fit)?)?)
            }
            (ModelSpec::HaldaneShastry { .. }, Backend::Nn) => return Err(unsupported()),
            (ModelSpec::LrTfi { j, h, lambda }, _) => {
                let (mpo, lr) = build_lr_tfi(*j, *h, *lambda)?;
                match backend {
                    Backend::Mpo => Hamiltonian::Mpo(mpo),
                    Backend::LongRange => Hamiltonian::LongRange(lr),
                    Backend::Nn if *lambda == 0.0 => {
                        let (x, _, z) = pauli();
                        let term = crate::environments::TwoSiteTerm::product(&x, &x)
                            .mapv(|v| v * -*j)
                            + crate::environments::TwoSiteTerm::split_site_term(&z)
                                .mapv(|v| v * -*h);
                        Hamiltonian::Nn(crate::environments::TwoSiteTerm::new(term, 2)?)
                    }
                    Backend::Nn => return Err(unsupported()),
                }
            }
        };
        Ok(ham)
    }

    /// Reference ground-state energy density, with its provenance.
    pub fn exact_energy(&self) -> Result<Reference> {
        match self {
            ModelSpec::Tfi { h } => Ok(tfi_energy(*h)),
            ModelSpec::Xxz { two_s: 1, delta, .. } => xxz_half_energy(*delta),
            ModelSpec::Xxz { two_s: 2, delta, .. } if *delta == 1.0 => Ok(Reference {
                value: SPIN_ONE_HEISENBERG,
                provenance: Provenance::Internal,
                source: "single-site run of this code at D = 128".into(),
            }),
            ModelSpec::Hubbard { t, u } => hubbard_energy(*t, *u),
            ModelSpec::HaldaneShastry { .. } => Ok(haldane_shastry_energy()),
            ModelSpec::LrTfi { j, h, lambda } if *lambda == 0.0 && *j > 0.0 => {
                let mut r = tfi_energy(h / j);
                r.value *= j;
                Ok(r)
            }
            other => Err(ModelError::NoReference(format!("{other:?}"))),
        }
    }
}
