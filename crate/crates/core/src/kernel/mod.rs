//! Governance kernels: parametric reward fields over grid states or
//! flattened joint-action spaces.
//!
//! A [`KernelSpec`] is the declarative form. [`build_reward_field`] evaluates
//! it at every cell of a [`DomainDescriptor`] against a resolved anchor and
//! produces a raw [`RewardField`], which [`normalize_field`] turns into the
//! bounded form handed to the governance layer.

mod field;
mod sample;
mod spec;

pub use field::{normalize_field, superimpose, Owner, RewardField};
pub use sample::{mutate, sample_kernel_population, SamplingRanges};
pub use spec::{Anchor, KernelFamily, KernelSpec, Scope, SignMode};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The space a reward field is laid over.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainDescriptor {
    /// Grid with dims `(l, w[, h])`, row-major with the last coordinate fastest.
    Grid(Vec<usize>),
    /// Flattened joint-action space (or cooperator-count space) of the given size.
    JointAction(usize),
}

impl DomainDescriptor {
    pub fn grid2(l: usize, w: usize) -> Self {
        DomainDescriptor::Grid(vec![l, w])
    }

    pub fn grid3(l: usize, w: usize, h: usize) -> Self {
        DomainDescriptor::Grid(vec![l, w, h])
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        match self {
            DomainDescriptor::Grid(dims) => dims.iter().product(),
            DomainDescriptor::JointAction(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimensionality of the points that index this domain.
    pub fn point_dim(&self) -> usize {
        match self {
            DomainDescriptor::Grid(dims) => dims.len(),
            DomainDescriptor::JointAction(_) => 1,
        }
    }

    /// Extent along each axis.
    pub fn extents(&self) -> Vec<usize> {
        match self {
            DomainDescriptor::Grid(dims) => dims.clone(),
            DomainDescriptor::JointAction(n) => vec![*n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainDescriptor::Grid(dims) => {
                if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
                    return Err(Error::InvalidInput(format!("bad grid dims {dims:?}")));
                }
            }
            DomainDescriptor::JointAction(0) => {
                return Err(Error::InvalidInput("empty joint-action domain".into()))
            }
            DomainDescriptor::JointAction(_) => {}
        }
        Ok(())
    }

    /// Integer coordinates of a cell.
    pub fn coords(&self, cell: usize) -> Vec<usize> {
        let extents = self.extents();
        let mut out = vec![0; extents.len()];
        let mut rem = cell;
        for (slot, &ext) in out.iter_mut().zip(extents.iter()).rev() {
            *slot = rem % ext;
            rem /= ext;
        }
        out
    }

    pub fn point(&self, cell: usize) -> Vec<f64> {
        self.coords(cell).into_iter().map(|c| c as f64).collect()
    }

    /// Cell index of integer coordinates, `None` when out of bounds.
    pub fn cell(&self, coords: &[usize]) -> Option<usize> {
        let extents = self.extents();
        if coords.len() != extents.len() {
            return None;
        }
        let mut idx = 0;
        for (&c, &ext) in coords.iter().zip(extents.iter()) {
            if c >= ext {
                return None;
            }
            idx = idx * ext + c;
        }
        Some(idx)
    }

    /// Parses `5x5`, `3x3x3` or `joint:65536`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse domain `{text}`"));
        if let Some(size) = text.strip_prefix("joint:") {
            let n = size.trim().parse().map_err(|_| bad())?;
            let d = DomainDescriptor::JointAction(n);
            d.validate()?;
            return Ok(d);
        }
        let dims = text
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let d = DomainDescriptor::Grid(dims);
        d.validate()?;
        Ok(d)
    }
}

/// Data needed to turn an [`Anchor`] into a concrete reference point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorContext {
    pub agent_starts: Vec<Vec<f64>>,
    pub goal: Option<Vec<f64>>,
}

/// Resolves the reference point a field is evaluated against.
pub fn resolve_anchor(
    spec: &KernelSpec,
    domain: &DomainDescriptor,
    context: &AnchorContext,
) -> Result<Vec<f64>> {
    let dim = domain.point_dim();
    let point = match (&spec.anchor, spec.scope) {
        (Anchor::Origin, _) => vec![0.0; dim],
        (Anchor::Custom(p), _) => p.clone(),
        (Anchor::Goal, _) => context
            .goal
            .clone()
            .ok_or_else(|| Error::MissingContext("goal location not provided".into()))?,
        (Anchor::AgentStart, Scope::AgentSpecific(agent)) => context
            .agent_starts
            .get(agent)
            .cloned()
            .ok_or_else(|| Error::MissingContext(format!("no start position for agent {agent}")))?,
        (Anchor::AgentStart, Scope::AgentAgnostic) => {
            return Err(Error::MissingContext(
                "agent-agnostic kernel cannot anchor at an agent start".into(),
            ))
        }
    };
    if point.len() != dim {
        return Err(Error::DomainMismatch(format!(
            "anchor has {} coordinates, domain has {dim}",
            point.len()
        )));
    }
    Ok(point)
}

/// Raw, noise-free kernel value at `x` against reference point `x_ref`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x_ref: &[f64]) -> Result<f64> {
    if x.len() != x_ref.len() {
        return Err(Error::DomainMismatch(format!(
            "point dims {} vs reference dims {}",
            x.len(),
            x_ref.len()
        )));
    }
    spec.family.check_point_dim(x.len())?;
    if x.iter().chain(x_ref).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let amp = spec.sigma * spec.sigma;
    let sq_dist: f64 = x.iter().zip(x_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = match spec.family {
        KernelFamily::Linear => {
            amp * x
                .iter()
                .zip(x_ref)
                .map(|(a, b)| (a - spec.offset_c) * (b - spec.offset_c))
                .sum::<f64>()
        }
        KernelFamily::Periodic => {
            let arg = if spec.periodic_standard_form {
                sq_dist.sqrt()
            } else {
                sq_dist
            };
            let s = (std::f64::consts::PI * arg / spec.period).sin();
            amp * (-2.0 * s * s / (spec.length_scale * spec.length_scale)).exp()
        }
        KernelFamily::SquaredExponential => {
            amp * (-sq_dist / (2.0 * spec.length_scale * spec.length_scale)).exp()
        }
        KernelFamily::Diagonal | KernelFamily::Ellipsoid | KernelFamily::Hyperboloid => {
            let rel: Vec<f64> = x.iter().zip(x_ref).map(|(a, b)| a - b).collect();
            let dist = surface_distance(spec, &rel);
            amp * band_taper(dist, spec.band_width)
        }
    };
    Ok(value)
}

/// 1 on the surface, linearly down to 0 at `band_width`.
fn band_taper(dist: f64, band_width: f64) -> f64 {
    if band_width <= 0.0 {
        if dist <= 1e-9 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - dist / band_width).max(0.0)
    }
}

/// Distance from `u` (relative to the anchor) to the family's implicit surface.
///
/// Diagonal is exact. Ellipsoid uses the radial projection onto the surface.
/// Hyperboloid uses the radial projection where the ray meets the surface and
/// the first-order (Sampson) estimate elsewhere.
fn surface_distance(spec: &KernelSpec, u: &[f64]) -> f64 {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [a, b, c] = spec.semi_axes;
    match spec.family {
        KernelFamily::Diagonal => {
            let proj = u.iter().sum::<f64>() / 3.0;
            u.iter().map(|v| (v - proj) * (v - proj)).sum::<f64>().sqrt()
        }
        KernelFamily::Ellipsoid => {
            let rho = ((u[0] / a).powi(2) + (u[1] / b).powi(2) + (u[2] / c).powi(2)).sqrt();
            if rho == 0.0 {
                a.min(b).min(c)
            } else {
                norm * (1.0 - 1.0 / rho).abs()
            }
        }
        KernelFamily::Hyperboloid => {
            let q = (u[0] / a).powi(2) + (u[1] / b).powi(2) - (u[2] / c).powi(2);
            if q > 0.0 {
                norm * (1.0 - 1.0 / q.sqrt()).abs()
            } else {
                let grad = ((2.0 * u[0] / (a * a)).powi(2)
                    + (2.0 * u[1] / (b * b)).powi(2)
                    + (2.0 * u[2] / (c * c)).powi(2))
                .sqrt();
                if grad == 0.0 {
                    a.min(b)
                } else {
                    (q - 1.0).abs() / grad
                }
            }
        }
        _ => unreachable!("not a surface family"),
    }
}

/// Evaluates `spec` over every cell of `domain`, adding uniform noise on
/// `[-noise_std, noise_std]` when `noise_std > 0`.
pub fn build_reward_field<R: Rng + ?Sized>(
    spec: &KernelSpec,
    domain: &DomainDescriptor,
    context: &AnchorContext,
    rng: &mut R,
) -> Result<RewardField> {
    spec.validate()?;
    domain.validate()?;
    spec.check_domain(domain)?;
    let anchor = resolve_anchor(spec, domain, context)?;
    let mut values = Vec::with_capacity(domain.len());
    for cell in 0..domain.len() {
        let mut v = eval_kernel(spec, &domain.point(cell), &anchor)?;
        if spec.noise_std > 0.0 {
            v += rng.gen_range(-spec.noise_std..=spec.noise_std);
        }
        values.push(v);
    }
    let owner = match spec.scope {
        Scope::AgentSpecific(i) => Owner::Agent(i),
        Scope::AgentAgnostic => Owner::Shared,
    };
    RewardField::from_values(domain.clone(), owner, values, spec.decay)
}
