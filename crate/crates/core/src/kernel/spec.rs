use serde::{Deserialize, Serialize};

use super::DomainDescriptor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Linear,
    Periodic,
    SquaredExponential,
    Diagonal,
    Ellipsoid,
    Hyperboloid,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 6] = [
        KernelFamily::Linear,
        KernelFamily::Periodic,
        KernelFamily::SquaredExponential,
        KernelFamily::Diagonal,
        KernelFamily::Ellipsoid,
        KernelFamily::Hyperboloid,
    ];

    /// Surface families live on 3D domains only.
    pub fn is_surface(self) -> bool {
        matches!(
            self,
            KernelFamily::Diagonal | KernelFamily::Ellipsoid | KernelFamily::Hyperboloid
        )
    }

    pub fn admits_dim(self, dim: usize) -> bool {
        if self.is_surface() {
            dim == 3
        } else {
            dim == 1 || dim == 2
        }
    }

    pub(crate) fn check_point_dim(self, dim: usize) -> Result<()> {
        if self.admits_dim(dim) {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!(
                "{self:?} kernel does not accept {dim}-dimensional points"
            )))
        }
    }

    /// Families admissible on `domain`.
    pub fn admissible(domain: &DomainDescriptor) -> Vec<KernelFamily> {
        let dim = domain.point_dim();
        Self::ALL.into_iter().filter(|f| f.admits_dim(dim)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AgentSpecific(usize),
    AgentAgnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    AgentStart,
    Goal,
    Origin,
    Custom(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    AllPositive,
    ZeroMean,
}

fn default_band_width() -> f64 {
    1.0
}

fn default_decay() -> f64 {
    1.0
}

/// Declarative description of one governance kernel.
///
/// `sigma` is the amplitude scale: field values are multiplied by `sigma²`.
/// Parameters a family does not use are carried along untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub scope: Scope,
    pub sigma: f64,
    pub length_scale: f64,
    pub period: f64,
    pub offset_c: f64,
    pub semi_axes: [f64; 3],
    #[serde(default = "default_band_width")]
    pub band_width: f64,
    pub anchor: Anchor,
    pub sign_mode: SignMode,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// Use `|x - x'|` instead of `|x - x'|²` inside the periodic sine.
    #[serde(default)]
    pub periodic_standard_form: bool,
}

impl KernelSpec {
    /// A spec with unit parameters, anchored at the agent start for
    /// agent-specific scope and at the goal otherwise.
    pub fn new(family: KernelFamily, scope: Scope) -> Self {
        let anchor = match scope {
            Scope::AgentSpecific(_) => Anchor::AgentStart,
            Scope::AgentAgnostic => Anchor::Goal,
        };
        KernelSpec {
            family,
            scope,
            sigma: 1.0,
            length_scale: 1.0,
            period: 4.0,
            offset_c: 0.0,
            semi_axes: [1.0, 1.0, 1.0],
            band_width: 1.0,
            anchor,
            sign_mode: SignMode::AllPositive,
            decay: 1.0,
            noise_std: 0.0,
            periodic_standard_form: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("length_scale", self.length_scale),
            ("period", self.period),
            ("semi_axes[0]", self.semi_axes[0]),
            ("semi_axes[1]", self.semi_axes[1]),
            ("semi_axes[2]", self.semi_axes[2]),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.offset_c.is_finite() {
            return Err(Error::InvalidInput("offset_c must be finite".into()));
        }
        if !(self.band_width.is_finite() && self.band_width >= 0.0) {
            return Err(Error::InvalidInput("band_width must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::InvalidInput(format!("decay {} outside [0, 1]", self.decay)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidInput("noise_std must be non-negative".into()));
        }
        if let Anchor::Custom(p) = &self.anchor {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("custom anchor must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn check_domain(&self, domain: &DomainDescriptor) -> Result<()> {
        self.family.check_point_dim(domain.point_dim())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: KernelSpec =
            toml::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}
