//! Exact Bayes updates on a discretized phase grid.
//!
//! The grid is the reference the rejection filter is tested against: it applies
//! Bayes' rule node by node with no sampling and no Gaussian refit. It also
//! checks the bound on how far a nearly flat likelihood can move the mean.

use std::f64::consts::{PI, TAU};

use crate::circular::{signed_difference, wrap};
use crate::error::{Error, Result};
use crate::likelihood::{ExperimentSpec, Likelihood, Outcome};

pub const DEFAULT_GRID_SIZE: usize = 1 << 14;

/// Below this width a prior is gridded on `μ ± 10σ` instead of the full circle.
pub const LOCAL_GRID_SIGMA: f64 = 1e-3;

const RESULTANT_FLOOR: f64 = 1e-8;

/// Probability masses on uniformly spaced nodes.
///
/// Each node stands for the cell of width `spacing` centred on it. Nodes are
/// kept unwrapped so a local window around the branch cut stays contiguous;
/// likelihoods are evaluated at the wrapped angle.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
}

impl GridPosterior {
    /// Uniform grid on `[start, start + n·spacing)` with the given (unnormalized) weights.
    pub fn from_weights(start: f64, spacing: f64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || !(spacing > 0.0) {
            return Err(Error::InvalidConfig("grid needs at least one node and positive spacing".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("grid weights must be finite and non-negative".into()));
        }
        let nodes = (0..weights.len()).map(|j| start + j as f64 * spacing).collect();
        let mut grid = Self { nodes, weights, spacing };
        grid.normalize()?;
        Ok(grid)
    }

    /// Uniform distribution over the full circle.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(0.0, TAU / n as f64, vec![1.0; n])
    }

    /// Wrapped normal prior; the grid covers the full circle unless `sigma` is
    /// below [`LOCAL_GRID_SIGMA`], in which case it covers `μ ± 10σ`.
    pub fn wrapped_normal(mu: f64, sigma: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidModel { mu, sigma });
        }
        if sigma < LOCAL_GRID_SIGMA {
            Self::normal_window(mu, sigma, 10.0, n)
        } else {
            let spacing = TAU / n as f64;
            let weights = (0..n).map(|j| wrapped_normal_density(j as f64 * spacing, mu, sigma)).collect();
            Self::from_weights(0.0, spacing, weights)
        }
    }

    /// Normal prior restricted to `μ ± half_width·σ`, on the real line.
    pub fn normal_window(mu: f64, sigma: f64, half_width: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0) || n == 0 {
            return Err(Error::InvalidModel { mu, sigma });
        }
        let spacing = 2.0 * half_width * sigma / n as f64;
        let start = mu - half_width * sigma + 0.5 * spacing;
        let weights = (0..n)
            .map(|j| {
                let z = (start + j as f64 * spacing - mu) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self::from_weights(start, spacing, weights)
    }

    fn normalize(&mut self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroPosterior);
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Posterior weights `∝ f(node)·prior`, where `f` receives the wrapped node.
    pub fn reweight<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<Self> {
        let weights = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(wrap(x))).collect();
        let mut out = Self { nodes: self.nodes.clone(), weights, spacing: self.spacing };
        out.normalize()?;
        Ok(out)
    }

    /// Arithmetic mean and standard deviation of the unwrapped nodes.
    pub fn linear_moments(&self) -> (f64, f64) {
        let mean: f64 = self.nodes.iter().zip(&self.weights).map(|(x, w)| x * w).sum();
        let var: f64 = self.nodes.iter().zip(&self.weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
        (mean, var.sqrt())
    }

    /// Edges, as displacements from `center`, that split the mass into about
    /// `bins` equal parts along cell boundaries, with the mass of each bin.
    pub fn quantile_bins(&self, center: f64, bins: usize) -> (Vec<f64>, Vec<f64>) {
        let mut cells: Vec<(f64, f64)> =
            self.nodes.iter().zip(&self.weights).map(|(&x, &w)| (signed_difference(x, center), w)).collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = 0.5 * self.spacing;
        let mut edges = vec![cells[0].0 - half];
        let mut masses = Vec::with_capacity(bins);
        let mut acc = 0.0;
        let mut cum = 0.0;
        for (i, &(d, w)) in cells.iter().enumerate() {
            acc += w;
            cum += w;
            let target = (masses.len() + 1) as f64 / bins as f64;
            let last = i + 1 == cells.len();
            if (cum >= target && masses.len() + 1 < bins) || last {
                edges.push(d + half);
                masses.push(acc);
                acc = 0.0;
            }
        }
        (edges, masses)
    }
}

/// Density of the wrapped normal distribution at `x`.
pub fn wrapped_normal_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let images = (6.0 * sigma / TAU).ceil() as i64 + 1;
    let d = signed_difference(x, mu);
    let norm = 1.0 / (sigma * TAU.sqrt());
    (-images..=images)
        .map(|k| {
            let y = (d + TAU * k as f64) / sigma;
            (-0.5 * y * y).exp()
        })
        .sum::<f64>()
        * norm
}

/// One exact Bayes update on the grid.
pub fn grid_posterior<L>(prior: &GridPosterior, e: Outcome, exp: &ExperimentSpec, likelihood: &L) -> Result<GridPosterior>
where
    L: Likelihood + ?Sized,
{
    prior.reweight(|x| likelihood.probability(e, x, exp))
}

/// Circular summary statistics of a grid distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularSummary {
    pub mean: f64,
    /// Wrapped-normal standard deviation `sqrt(−2 ln ρ)`.
    pub sd: f64,
    pub rho: f64,
    /// `E[sin² d]` for displacements `d` from the circular mean.
    pub mean_sin2: f64,
    /// `Var[cos d]` for displacements from the circular mean.
    pub var_cos: f64,
}

impl CircularSummary {
    /// Standard errors of the circular mean and standard deviation estimated from `n` samples.
    pub fn standard_errors(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let se_mean = (self.mean_sin2 / n).sqrt() / self.rho;
        let se_sd = (self.var_cos / n).sqrt() / (self.rho * self.sd);
        (se_mean, se_sd)
    }
}

/// Circular mean and circular standard deviation.
pub fn grid_moments(p: &GridPosterior) -> Result<(f64, f64)> {
    circular_summary(p).map(|s| (s.mean, s.sd))
}

pub fn circular_summary(p: &GridPosterior) -> Result<CircularSummary> {
    let (mut c, mut s) = (0.0, 0.0);
    for (&x, &w) in p.nodes.iter().zip(&p.weights) {
        c += w * x.cos();
        s += w * x.sin();
    }
    let rough = c.hypot(s);
    if rough < RESULTANT_FLOOR {
        return Err(Error::DegenerateResultant(rough));
    }
    let origin = s.atan2(c);
    // second pass about the rough mean keeps 1 − ρ accurate for narrow grids
    let (mut sin_sum, mut versine) = (0.0, 0.0);
    for (&x, &w) in p.nodes.iter().zip(&p.weights) {
        let d = signed_difference(x, origin);
        let h = (0.5 * d).sin();
        sin_sum += w * d.sin();
        versine += w * 2.0 * h * h;
    }
    let cos_mean = 1.0 - versine;
    let one_minus_rho2 = (2.0 * versine - versine * versine - sin_sum * sin_sum).max(0.0);
    let rho = cos_mean.hypot(sin_sum);
    let shift = sin_sum.atan2(cos_mean);
    let mean = wrap(origin + shift);
    let sd = (-(-one_minus_rho2).ln_1p()).sqrt();

    // spread terms about the refined mean
    let (mut e_sin2, mut e_cos, mut e_cos2) = (0.0, 0.0, 0.0);
    for (&x, &w) in p.nodes.iter().zip(&p.weights) {
        let d = signed_difference(x, mean);
        e_sin2 += w * d.sin().powi(2);
        e_cos += w * d.cos();
        e_cos2 += w * d.cos().powi(2);
    }
    Ok(CircularSummary { mean, sd, rho, mean_sin2: e_sin2, var_cos: (e_cos2 - e_cos * e_cos).max(0.0) })
}

/// Arithmetic moments on the better of the two branch cuts at `0` and `π`.
///
/// This is the large-sample limit of the two-cut refit in
/// [`crate::filter::update_incremental`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutMoments {
    pub mean: f64,
    pub sd: f64,
    /// Fourth central moment on the chosen cut.
    pub m4: f64,
}

impl CutMoments {
    pub fn standard_errors(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let var = self.sd * self.sd;
        ((var / n).sqrt(), ((self.m4 - var * var).max(0.0) / n).sqrt() / (2.0 * self.sd))
    }
}

pub fn cut_moments(p: &GridPosterior) -> CutMoments {
    let moments = |shift: f64| {
        let mean: f64 = p.nodes.iter().zip(&p.weights).map(|(&x, &w)| w * wrap(x + shift)).sum();
        let (mut var, mut m4) = (0.0, 0.0);
        for (&x, &w) in p.nodes.iter().zip(&p.weights) {
            let d2 = (wrap(x + shift) - mean).powi(2);
            var += w * d2;
            m4 += w * d2 * d2;
        }
        (mean, var, m4)
    };
    let (m0, v0, q0) = moments(0.0);
    let (m1, v1, q1) = moments(PI);
    if v1 < v0 {
        CutMoments { mean: wrap(m1 - PI), sd: v1.sqrt(), m4: q1 }
    } else {
        CutMoments { mean: wrap(m0), sd: v0.sqrt(), m4: q0 }
    }
}

/// Likelihood of the form `α + δ_j` with `|δ_j| ≤ δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessDiagnostic {
    pub alpha: f64,
    pub delta: f64,
}

impl FlatnessDiagnostic {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !(alpha >= 10.0 * delta) || !(alpha > 0.0) {
            return Err(Error::FlatnessNotApplicable { alpha, delta });
        }
        Ok(Self { alpha, delta })
    }
}

/// Mean shift caused by a nearly flat likelihood, against the bound `2δσ/α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftBound {
    pub shift: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub prior_sd: f64,
    pub posterior_sd: f64,
    /// `σ²(1 − 10δ/α)`, the smallest posterior variance the flatness model allows.
    pub variance_floor: f64,
}

/// Applies the likelihood values exactly and compares the mean shift with `2δσ/α`.
///
/// Moments are arithmetic over the unwrapped nodes.
pub fn flatness_shift_bound(prior: &GridPosterior, diag: &FlatnessDiagnostic, likelihood: &[f64]) -> Result<ShiftBound> {
    let FlatnessDiagnostic { alpha, delta } = *diag;
    if !(alpha >= 10.0 * delta) {
        return Err(Error::FlatnessNotApplicable { alpha, delta });
    }
    if likelihood.len() != prior.nodes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} likelihood values for {} grid nodes",
            likelihood.len(),
            prior.nodes.len()
        )));
    }
    let slack = 1e-12 * alpha.max(1.0);
    if let Some((index, &value)) =
        likelihood.iter().enumerate().find(|(_, &v)| (v - alpha).abs() > delta + slack)
    {
        return Err(Error::FlatnessViolated { index, value });
    }
    let (mu0, sigma) = prior.linear_moments();
    let weights = prior.weights.iter().zip(likelihood).map(|(w, l)| w * l).collect();
    let mut post = GridPosterior { nodes: prior.nodes.clone(), weights, spacing: prior.spacing };
    post.normalize()?;
    let (_, sigma1) = post.linear_moments();
    // Σ δ_j w_j (x_j − μ0) / Σ L_j w_j avoids cancelling two nearly equal means
    let evidence: f64 = prior.weights.iter().zip(likelihood).map(|(w, l)| w * l).sum();
    let moved: f64 = prior
        .nodes
        .iter()
        .zip(&prior.weights)
        .zip(likelihood)
        .map(|((x, w), l)| (l - alpha) * w * (x - mu0))
        .sum();
    let shift = (moved / evidence).abs();
    let bound = 2.0 * delta * sigma / alpha;
    Ok(ShiftBound {
        shift,
        bound,
        satisfied: shift <= bound,
        prior_sd: sigma,
        posterior_sd: sigma1,
        variance_floor: sigma * sigma * (1.0 - 10.0 * delta / alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::PhaseLikelihood;

    #[test]
    fn constant_likelihood_is_identity() {
        let prior = GridPosterior::wrapped_normal(1.0, 0.4, 4096).unwrap();
        let post = grid_posterior(&prior, Outcome::Zero, &ExperimentSpec::new(1.0, 0.0).unwrap(), &|_, _, _: &ExperimentSpec| 0.3)
            .unwrap();
        for (a, b) in prior.weights().iter().zip(post.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_is_normalized() {
        let prior = GridPosterior::wrapped_normal(5.5, 0.9, 4096).unwrap();
        for (m, theta, e) in [(1.0, 0.0, Outcome::One), (7.3, 2.0, Outcome::Zero), (40.0, 5.0, Outcome::One)] {
            let post = grid_posterior(&prior, e, &ExperimentSpec::new(m, theta).unwrap(), &PhaseLikelihood::ideal()).unwrap();
            let total: f64 = post.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(post.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn impossible_datum_is_an_error() {
        let prior = GridPosterior::from_weights(0.0, 0.1, vec![0.0, 1.0, 0.0]).unwrap();
        let r = prior.reweight(|x| if (x - 0.1).abs() < 1e-9 { 0.0 } else { 1.0 });
        assert_eq!(r, Err(Error::ZeroPosterior));
    }

    #[test]
    fn point_mass_moments() {
        let mut w = vec![0.0; 1024];
        w[100] = 1.0;
        let p = GridPosterior::from_weights(0.0, TAU / 1024.0, w).unwrap();
        let (mean, sd) = grid_moments(&p).unwrap();
        assert!((mean - p.nodes()[100]).abs() < 1e-12);
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn uniform_is_degenerate() {
        let p = GridPosterior::uniform(1024).unwrap();
        assert!(matches!(grid_moments(&p), Err(Error::DegenerateResultant(_))));
    }

    #[test]
    fn wrapped_normal_sd_is_recovered() {
        for (mu, sigma) in [(1.0, 0.3), (0.05, 0.3), (3.0, 1.2), (6.2, 0.01)] {
            let p = GridPosterior::wrapped_normal(mu, sigma, DEFAULT_GRID_SIZE).unwrap();
            let (m, s) = grid_moments(&p).unwrap();
            assert!((s - sigma).abs() < 1e-3, "{sigma}: {s}");
            assert!(signed_difference(m, mu).abs() < 1e-9);
        }
        let p = GridPosterior::wrapped_normal(2.0, 1e-7, 4096).unwrap();
        let (_, s) = grid_moments(&p).unwrap();
        assert!((s / 1e-7 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cut_moments_match_circular_for_narrow_grids() {
        for mu in [0.001, 3.0, 6.28] {
            let p = GridPosterior::wrapped_normal(mu, 0.05, DEFAULT_GRID_SIZE).unwrap();
            let c = cut_moments(&p);
            let (m, s) = grid_moments(&p).unwrap();
            assert!(signed_difference(c.mean, m).abs() < 1e-9);
            assert!((c.sd - s).abs() < 1e-6);
            // Gaussian fourth moment
            assert!((c.m4 / c.sd.powi(4) - 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn quantile_bins_partition_mass() {
        let p = GridPosterior::wrapped_normal(0.1, 0.2, 4096).unwrap();
        let (edges, masses) = p.quantile_bins(0.1, 20);
        assert_eq!(edges.len(), masses.len() + 1);
        assert_eq!(masses.len(), 20);
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(edges.windows(2).all(|w| w[1] > w[0]));
        for m in &masses {
            assert!((m - 0.05).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn flatness_requires_applicability() {
        assert!(FlatnessDiagnostic::new(1.0, 0.2).is_err());
        let prior = GridPosterior::normal_window(0.0, 1.0, 8.0, 512).unwrap();
        let diag = FlatnessDiagnostic { alpha: 1.0, delta: 0.2 };
        assert!(matches!(
            flatness_shift_bound(&prior, &diag, &vec![1.0; 512]),
            Err(Error::FlatnessNotApplicable { .. })
        ));
        let diag = FlatnessDiagnostic::new(1.0, 0.05).unwrap();
        let mut l = vec![1.0; 512];
        l[7] = 1.2;
        assert!(matches!(flatness_shift_bound(&prior, &diag, &l), Err(Error::FlatnessViolated { index: 7, .. })));
    }

    #[test]
    fn zero_delta_gives_zero_shift() {
        let prior = GridPosterior::normal_window(0.3, 0.7, 8.0, 1000).unwrap();
        let diag = FlatnessDiagnostic::new(0.4, 0.0).unwrap();
        let r = flatness_shift_bound(&prior, &diag, &vec![0.4; 1000]).unwrap();
        assert_eq!(r.bound, 0.0);
        assert_eq!(r.shift, 0.0);
        assert!(r.satisfied);
    }
}
