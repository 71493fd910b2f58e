use rand::seq::SliceRandom;
use rand::Rng;

use super::{Anchor, DomainDescriptor, KernelFamily, KernelSpec, Scope, SignMode};
use crate::error::{Error, Result};

const MIN_POSITIVE: f64 = 1e-6;

/// Ranges used when drawing fresh kernel specs for a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingRanges {
    pub sigma: (f64, f64),
    pub length_scale: (f64, f64),
    pub period: (f64, f64),
    /// Upper bound per axis; lower bound is 1.
    pub semi_axes_max: [f64; 3],
    pub decay_choices: Vec<f64>,
    pub band_width: f64,
}

impl SamplingRanges {
    pub fn for_domain(domain: &DomainDescriptor) -> Self {
        let extents = domain.extents();
        let max_dim = extents.iter().copied().max().unwrap_or(1) as f64;
        let size = match domain {
            DomainDescriptor::Grid(_) => max_dim,
            DomainDescriptor::JointAction(n) => *n as f64,
        };
        let mut axes = [1.0; 3];
        for (slot, &e) in axes.iter_mut().zip(extents.iter()) {
            *slot = (e as f64).max(1.0);
        }
        SamplingRanges {
            sigma: (0.5, 2.0),
            length_scale: (0.5, max_dim.max(0.5)),
            period: (2.0, size.max(2.0)),
            semi_axes_max: axes,
            decay_choices: vec![1.0, 0.5, 0.25, 0.0],
            band_width: 1.0,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws `n` kernel specs admissible on `domain`.
///
/// Scopes cycle through `AgentSpecific(0..n_agents)` then `AgentAgnostic`.
/// On grids agent-specific kernels anchor at the agent start and shared ones
/// at the goal; on joint-action domains every kernel anchors at the goal
/// (the all-cooperate index).
pub fn sample_kernel_population<R: Rng + ?Sized>(
    n: usize,
    domain: &DomainDescriptor,
    n_agents: usize,
    sign_mode: SignMode,
    rng: &mut R,
) -> Result<Vec<KernelSpec>> {
    if n == 0 {
        return Err(Error::InvalidInput("population size must be at least 1".into()));
    }
    domain.validate()?;
    let families = KernelFamily::admissible(domain);
    let ranges = SamplingRanges::for_domain(domain);
    let scopes: Vec<Scope> = (0..n_agents)
        .map(Scope::AgentSpecific)
        .chain(std::iter::once(Scope::AgentAgnostic))
        .collect();
    let joint = matches!(domain, DomainDescriptor::JointAction(_));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let family = *families.choose(rng).expect("every domain admits some family");
        let scope = scopes[i % scopes.len()];
        let mut spec = KernelSpec::new(family, scope);
        if joint {
            spec.anchor = Anchor::Goal;
        }
        spec.sign_mode = sign_mode;
        spec.sigma = uniform(rng, ranges.sigma);
        spec.length_scale = uniform(rng, ranges.length_scale);
        spec.period = uniform(rng, ranges.period);
        for (axis, &hi) in spec.semi_axes.iter_mut().zip(&ranges.semi_axes_max) {
            *axis = uniform(rng, (1.0, hi));
        }
        spec.band_width = ranges.band_width;
        spec.decay = *ranges.decay_choices.choose(rng).expect("non-empty decay choices");
        out.push(spec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Param {
    Sigma,
    LengthScale,
    Period,
    OffsetC,
    SemiAxis(usize),
    BandWidth,
    Decay,
}

fn params_for(family: KernelFamily) -> &'static [Param] {
    use Param::*;
    match family {
        KernelFamily::Linear => &[Sigma, OffsetC, Decay],
        KernelFamily::Periodic => &[Sigma, LengthScale, Period, Decay],
        KernelFamily::SquaredExponential => &[Sigma, LengthScale, Decay],
        KernelFamily::Diagonal => &[Sigma, BandWidth, Decay],
        KernelFamily::Ellipsoid | KernelFamily::Hyperboloid => &[
            Sigma,
            SemiAxis(0),
            SemiAxis(1),
            SemiAxis(2),
            BandWidth,
            Decay,
        ],
    }
}

fn scaled(spec: &KernelSpec, param: Param, factor: f64) -> KernelSpec {
    let mut out = spec.clone();
    match param {
        Param::Sigma => out.sigma = (spec.sigma * factor).max(MIN_POSITIVE),
        Param::LengthScale => out.length_scale = (spec.length_scale * factor).max(MIN_POSITIVE),
        Param::Period => out.period = (spec.period * factor).max(MIN_POSITIVE),
        Param::OffsetC => out.offset_c = spec.offset_c * factor,
        Param::SemiAxis(i) => out.semi_axes[i] = (spec.semi_axes[i] * factor).max(MIN_POSITIVE),
        Param::BandWidth => out.band_width = (spec.band_width * factor).max(0.0),
        Param::Decay => out.decay = (spec.decay * factor).clamp(0.0, 1.0),
    }
    out
}

/// With probability `m`, rescales one of the family's continuous parameters
/// by a factor drawn from `[0.5, 2.0]` and clamps it back into range.
///
/// Only parameters the rescale actually changes are eligible, so a mutated
/// spec differs from its parent in exactly one field. Family and scope never
/// change.
pub fn mutate<R: Rng + ?Sized>(spec: &KernelSpec, rng: &mut R, m: f64) -> KernelSpec {
    if rng.gen::<f64>() >= m {
        return spec.clone();
    }
    let factor = rng.gen_range(0.5..=2.0);
    let candidates: Vec<(Param, KernelSpec)> = params_for(spec.family)
        .iter()
        .map(|&p| (p, scaled(spec, p, factor)))
        .filter(|(_, child)| child != spec)
        .collect();
    match candidates.choose(rng) {
        Some((_, child)) => child.clone(),
        None => spec.clone(),
    }
}
