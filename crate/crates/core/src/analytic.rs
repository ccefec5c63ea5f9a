//! Closed-form performance expressions: cluster-size law, span densities,
//! RSU-count laws, coverage, shared-rate moments and bounds, the multilane
//! reduction and the placement tradeoff curve.
//!
//! Span distributions are realized numerically: the within-cluster gap is an
//! exponential truncated to (0, d], and the conditional cluster length given
//! n members is 2d plus an (n-1)-fold convolution of that gap density,
//! computed by trapezoid convolution on a grid (default step d/400).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::highway::{MultilaneSpec, SingleLaneSpec};

/// Default grid resolution: step = d / GRID_STEP_DIVISOR.
pub const GRID_STEP_DIVISOR: f64 = 400.0;

/// Deepest sum computed by exact grid convolution; beyond this the gap-sum
/// law switches to its normal limit (relative pmf weight out there is
/// negligible for any parameter set this tool targets).
const MAX_CONVOLUTION_DEPTH: usize = 600;

/// Raw per-stage quadrature drift above which the grid step is rejected.
const MAX_STAGE_DRIFT: f64 = 1e-4;

/// Truncation policy for the infinite sums over cluster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfTruncationPolicy {
    /// Remaining size-biased tail mass at which a sum may stop.
    pub epsilon: f64,
    /// Hard cap on the number of terms.
    pub n_max: usize,
}

impl Default for PmfTruncationPolicy {
    fn default() -> Self {
        PmfTruncationPolicy { epsilon: 1e-9, n_max: 100_000 }
    }
}

impl PmfTruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::config(format!(
                "truncation epsilon must be in (0, 1e-6], got {}",
                self.epsilon
            )));
        }
        if self.n_max < 1 {
            return Err(Error::config("truncation n_max must be >= 1"));
        }
        Ok(())
    }
}

/// Density samples on a uniform grid; trapezoid integral is 1 (renormalized
/// at construction, which errors out if the raw quadrature drift betrays a
/// step too coarse for the shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    /// Left edge of the support (meters).
    pub l_min: f64,
    /// Grid step (meters).
    pub step: f64,
    /// Density values (1/meters) at nodes l_min + i * step.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn l_max(&self) -> f64 {
        self.l_min + self.step * (self.values.len() - 1) as f64
    }

    /// Trapezoid integral of the stored values.
    pub fn integral(&self) -> f64 {
        trapezoid_mass(&self.values, self.step)
    }

    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == self.values.len() - 1 { 0.5 } else { 1.0 };
            acc += w * v * (self.l_min + self.step * i as f64);
        }
        acc * self.step
    }
}

/// Conditional span law for a given member count: a point mass for n = 1,
/// a density grid otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum SpanDensity {
    PointMass(f64),
    Grid(DensityGrid),
}

impl SpanDensity {
    pub fn mean(&self) -> f64 {
        match self {
            SpanDensity::PointMass(l) => *l,
            SpanDensity::Grid(g) => g.mean(),
        }
    }
}

/// Which conditional RSU-count law to evaluate.
///
/// `GridDerived` is the uniform-grid-phase law P(M >= m | L = l) =
/// clamp(l/s - m + 1, 0, 1); `PaperVerbatim` is the complement of the
/// published piecewise table, kept verbatim so the two can be compared
/// against a simulation oracle (they disagree outside m = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsuLawMode {
    #[default]
    GridDerived,
    PaperVerbatim,
}

/// Probability that no V2V-capable vehicle follows within the communication
/// range: 1 - gamma * (1 - exp(-lambda_v * d)).
pub fn phi(gamma: f64, lambda_v: f64, d: f64) -> f64 {
    1.0 - gamma * (1.0 - (-lambda_v * d).exp())
}

/// Cluster-size pmf: geometric(phi) for a typical cluster, or its
/// size-biased variant n * phi^2 * (1-phi)^(n-1) for a typical vehicle.
pub fn cluster_size_pmf(phi: f64, n: usize, size_biased: bool) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain("cluster size n must be >= 1"));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::domain(format!("phi must be in [0, 1], got {phi}")));
    }
    let geo = phi * (1.0 - phi).powi(n as i32 - 1);
    Ok(if size_biased { n as f64 * phi * geo } else { geo })
}

/// Mean cluster size E[N] = 1/phi.
pub fn mean_cluster_size(phi: f64) -> f64 {
    1.0 / phi
}

/// Mean cluster size seen from a typical vehicle: E[N^2]/E[N] = (2-phi)/phi.
pub fn mean_vehicle_cluster_size(phi: f64) -> f64 {
    (2.0 - phi) / phi
}

/// Mean within-cluster gap E[T] for an exponential(lambda_v) truncated to
/// (0, d].
pub fn mean_truncated_gap(lambda_v: f64, d: f64) -> f64 {
    let x = lambda_v * d;
    if x < 1e-8 {
        // Uniform limit.
        return d / 2.0;
    }
    1.0 / lambda_v - d * (-x).exp() / (1.0 - (-x).exp())
}

fn var_truncated_gap(lambda_v: f64, d: f64) -> f64 {
    let x = lambda_v * d;
    if x < 1e-8 {
        return d * d / 12.0;
    }
    let e = (-x).exp();
    let m2 = (2.0 / (lambda_v * lambda_v)
        - e * (d * d + 2.0 * d / lambda_v + 2.0 / (lambda_v * lambda_v)))
        / (1.0 - e);
    let m1 = mean_truncated_gap(lambda_v, d);
    m2 - m1 * m1
}

/// Mean cluster span 2d + (E[N] - 1) * E[T].
pub fn mean_cluster_span(lambda_v: f64, gamma: f64, d: f64) -> f64 {
    let p = phi(gamma, lambda_v, d);
    2.0 * d + (1.0 / p - 1.0) * mean_truncated_gap(lambda_v, d)
}

/// Full-penetration mean span in the convention without the 2d footprint
/// extension: (exp(lambda_v d) - lambda_v d - 1) / lambda_v.
pub fn mean_cluster_span_no_footprint(lambda_v: f64, d: f64) -> f64 {
    let x = lambda_v * d;
    (x.exp() - x - 1.0) / lambda_v
}

/// Fraction of RSUs with at least one V2V vehicle in range:
/// 1 - exp(-2 gamma lambda_v d).
pub fn busy_rsu_fraction(spec: &SingleLaneSpec) -> f64 {
    1.0 - (-2.0 * spec.gamma * spec.lambda_v * spec.d).exp()
}

/// P(M >= m | L = l) under the chosen law. m = 0 always yields 1.
pub fn rsu_ccdf_given_span(m: usize, l: f64, rsu_spacing: f64, mode: RsuLawMode) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let s = rsu_spacing;
    match mode {
        RsuLawMode::GridDerived => (l / s - m as f64 + 1.0).clamp(0.0, 1.0),
        RsuLawMode::PaperVerbatim => {
            let m = m as f64;
            let table = if m * s < l {
                1.0
            } else if (m - 1.0) * s < l && l <= m * s {
                1.0 - l / (m * s)
            } else {
                0.0
            };
            1.0 - table
        }
    }
}

// ---------------------------------------------------------------------------
// Conditional span law machinery.
// ---------------------------------------------------------------------------

fn trapezoid_mass(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let sum: f64 = values.iter().sum();
    (sum - 0.5 * (values[0] + values[values.len() - 1])) * h
}

/// Trapezoid convolution of two node-sampled densities with the same step.
fn convolve(f: &[f64], g: &[f64], h: f64) -> Vec<f64> {
    let (nf, ng) = (f.len(), g.len());
    let mut out = vec![0.0; nf + ng - 1];
    for (m, slot) in out.iter_mut().enumerate() {
        let j_lo = m.saturating_sub(ng - 1);
        let j_hi = (nf - 1).min(m);
        if j_lo >= j_hi {
            continue; // degenerate integration interval
        }
        let mut acc = 0.5 * (f[j_lo] * g[m - j_lo] + f[j_hi] * g[m - j_hi]);
        for j in j_lo + 1..j_hi {
            acc += f[j] * g[m - j];
        }
        *slot = acc * h;
    }
    out
}

/// One conditional law of the gap sum S_k, with its CDF and integrated CDF
/// on the grid (or a normal limit for very deep k).
enum GapSumLaw {
    Grid {
        /// Node index of the first stored value.
        offset: usize,
        values: Vec<f64>,
        /// cdf[i] = P(S <= (offset + i) h)
        cdf: Vec<f64>,
        /// intcdf[i] = integral of the cdf from 0 to (offset + i) h
        intcdf: Vec<f64>,
    },
    Normal { mu: f64, sigma: f64 },
}

impl GapSumLaw {
    /// P(S <= x).
    fn cdf_at(&self, x: f64, h: f64) -> f64 {
        match self {
            GapSumLaw::Grid { offset, cdf, .. } => {
                let lo = *offset as f64 * h;
                let hi = (*offset + cdf.len() - 1) as f64 * h;
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    let t = (x - lo) / h;
                    let i = (t.floor() as usize).min(cdf.len() - 2);
                    let frac = t - i as f64;
                    cdf[i] + frac * (cdf[i + 1] - cdf[i])
                }
            }
            GapSumLaw::Normal { mu, sigma } => normal_cdf((x - mu) / sigma),
        }
    }

    /// Integral of the CDF from 0 to x (x may exceed the grid).
    fn intcdf_at(&self, x: f64, h: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            GapSumLaw::Grid { offset, cdf, intcdf, .. } => {
                let lo = *offset as f64 * h;
                let hi = (*offset + cdf.len() - 1) as f64 * h;
                if x <= lo {
                    0.0
                } else if x >= hi {
                    intcdf[intcdf.len() - 1] + (x - hi)
                } else {
                    let t = (x - lo) / h;
                    let i = (t.floor() as usize).min(intcdf.len() - 2);
                    let frac = t - i as f64;
                    intcdf[i] + frac * (intcdf[i + 1] - intcdf[i])
                }
            }
            GapSumLaw::Normal { mu, sigma } => {
                // integral of Phi((v-mu)/sigma) dv from 0 to x
                let anti = |v: f64| {
                    let z = (v - mu) / sigma;
                    (v - mu) * normal_cdf(z) + sigma * normal_pdf(z)
                };
                anti(x) - anti(0.0)
            }
        }
    }

    /// E[S * 1{a < S <= b}].
    fn partial_mean(&self, a: f64, b: f64, h: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            GapSumLaw::Grid { .. } => {
                // integration by parts: b F(b) - a F(a) - int_a^b F
                b * self.cdf_at(b, h)
                    - a * self.cdf_at(a, h)
                    - (self.intcdf_at(b, h) - self.intcdf_at(a, h))
            }
            GapSumLaw::Normal { mu, sigma } => {
                let (za, zb) = ((a - mu) / sigma, (b - mu) / sigma);
                mu * (normal_cdf(zb) - normal_cdf(za)) - sigma * (normal_pdf(zb) - normal_pdf(za))
            }
        }
    }
}

/// Lazily built family of gap-sum laws for one (lambda_v, d, step) triple.
struct ClusterLengthLaw {
    d: f64,
    h: f64,
    lambda_v: f64,
    gap_density: Vec<f64>,
    /// laws[k] is the law of the sum of k+1 gaps.
    laws: Vec<GapSumLaw>,
    max_raw_drift: f64,
}

impl ClusterLengthLaw {
    fn new(lambda_v: f64, d: f64, step: f64) -> Result<Self> {
        if !(lambda_v > 0.0) {
            return Err(Error::domain("span law needs lambda_v > 0"));
        }
        if !(step > 0.0 && step <= d / 2.0) {
            return Err(Error::config(format!("grid step must be in (0, d/2], got {step}")));
        }
        let k = (d / step).round().max(2.0) as usize;
        let h = d / k as f64;
        let norm = 1.0 - (-lambda_v * d).exp();
        let mut gap_density: Vec<f64> =
            (0..=k).map(|i| lambda_v * (-lambda_v * h * i as f64).exp() / norm).collect();
        let mass = trapezoid_mass(&gap_density, h);
        for v in &mut gap_density {
            *v /= mass;
        }
        Ok(ClusterLengthLaw {
            d,
            h,
            lambda_v,
            gap_density,
            laws: Vec::new(),
            max_raw_drift: (mass - 1.0).abs(),
        })
    }

    /// Law of the sum of `k` gaps (k >= 1).
    fn law(&mut self, k: usize) -> Result<&GapSumLaw> {
        while self.laws.len() < k {
            let next = self.laws.len() + 1;
            let law = if next > MAX_CONVOLUTION_DEPTH {
                GapSumLaw::Normal {
                    mu: next as f64 * mean_truncated_gap(self.lambda_v, self.d),
                    sigma: (next as f64 * var_truncated_gap(self.lambda_v, self.d)).sqrt(),
                }
            } else if next == 1 {
                self.finish_stage(0, self.gap_density.clone())?
            } else {
                let (prev_offset, raw) = {
                    let (offset, prev) = match &self.laws[next - 2] {
                        GapSumLaw::Grid { offset, values, .. } => (*offset, values),
                        GapSumLaw::Normal { .. } => unreachable!("normal laws only past the cap"),
                    };
                    (offset, convolve(prev, &self.gap_density, self.h))
                };
                self.finish_stage(prev_offset, raw)?
            };
            self.laws.push(law);
        }
        Ok(&self.laws[k - 1])
    }

    fn finish_stage(&mut self, offset: usize, mut values: Vec<f64>) -> Result<GapSumLaw> {
        let mass = trapezoid_mass(&values, self.h);
        let drift = (mass - 1.0).abs();
        self.max_raw_drift = self.max_raw_drift.max(drift);
        if drift > MAX_STAGE_DRIFT {
            return Err(Error::numerical(format!(
                "grid step {} too coarse: normalization drifts by {drift:.2e}",
                self.h
            )));
        }
        for v in &mut values {
            *v /= mass;
        }
        // Prune numerically dead tails to keep deep convolutions affordable.
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let cut = peak * 1e-16;
        let lo = values.iter().position(|v| *v > cut).unwrap_or(0);
        let hi = values.iter().rposition(|v| *v > cut).unwrap_or(values.len() - 1);
        let trimmed: Vec<f64> = values[lo..=hi].to_vec();
        let offset = offset + lo;

        let mut cdf = Vec::with_capacity(trimmed.len());
        let mut intcdf = Vec::with_capacity(trimmed.len());
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let mut prev_cdf = 0.0;
        for (i, v) in trimmed.iter().enumerate() {
            if i > 0 {
                acc += 0.5 * self.h * (trimmed[i - 1] + v);
                acc = acc.min(1.0);
                acc2 += 0.5 * self.h * (prev_cdf + acc);
            }
            prev_cdf = acc;
            cdf.push(acc);
            intcdf.push(acc2);
        }
        Ok(GapSumLaw::Grid { offset, values: trimmed, cdf, intcdf })
    }

    /// P(M >= m | N = n) for m >= 1, under the chosen RSU law.
    fn rsu_ccdf(&mut self, m: usize, n: usize, rsu_spacing: f64, mode: RsuLawMode) -> Result<f64> {
        debug_assert!(m >= 1 && n >= 1);
        let (s, d) = (rsu_spacing, self.d);
        if n == 1 {
            return Ok(rsu_ccdf_given_span(m, 2.0 * d, s, mode));
        }
        let (a, b) = ((m - 1) as f64 * s, m as f64 * s);
        // Spans are confined to [2d, (n+1) d]: settle out-of-support
        // thresholds without touching the grid.
        let max_span = (n + 1) as f64 * d;
        match mode {
            RsuLawMode::GridDerived => {
                if b <= 2.0 * d {
                    return Ok(1.0);
                }
                if a >= max_span {
                    return Ok(0.0);
                }
            }
            RsuLawMode::PaperVerbatim => {
                if a >= max_span {
                    return Ok(1.0);
                }
                if b <= 2.0 * d {
                    return Ok(0.0);
                }
            }
        }
        let h = self.h;
        let law = self.law(n - 1)?;
        match mode {
            RsuLawMode::GridDerived => {
                // (1/s) * integral over (a, b] of P(L > u) du, L = 2d + S.
                let covered = (b - a) - (law.intcdf_at(b - 2.0 * d, h) - law.intcdf_at(a - 2.0 * d, h));
                Ok((covered / s).clamp(0.0, 1.0))
            }
            RsuLawMode::PaperVerbatim => {
                // P(L <= a) + E[L 1{a < L <= b}] / (m s), per the printed table.
                let short = law.cdf_at(a - 2.0 * d, h);
                let partial = if b <= 2.0 * d {
                    0.0
                } else {
                    let (xa, xb) = ((a - 2.0 * d).max(0.0), b - 2.0 * d);
                    let mass = law.cdf_at(xb, h) - law.cdf_at(xa, h);
                    law.partial_mean(xa, xb, h) + 2.0 * d * mass
                };
                Ok((short + partial / (m as f64 * s)).clamp(0.0, 1.0))
            }
        }
    }
}

/// Conditional span density of a cluster with `n` members: 2d plus an
/// (n-1)-fold convolution of the truncated-exponential gap density.
pub fn span_density_given_n(n: usize, lambda_v: f64, d: f64, step: f64) -> Result<SpanDensity> {
    if n < 1 {
        return Err(Error::domain("n must be >= 1"));
    }
    if n == 1 {
        return Ok(SpanDensity::PointMass(2.0 * d));
    }
    let mut law = ClusterLengthLaw::new(lambda_v, d, step)?;
    let k = n - 1;
    if k > MAX_CONVOLUTION_DEPTH {
        return Err(Error::numerical(format!(
            "span density materialization is limited to n <= {}",
            MAX_CONVOLUTION_DEPTH + 1
        )));
    }
    let h = law.h;
    let nodes_per_d = (d / h).round() as usize;
    let (offset, values) = match law.law(k)? {
        GapSumLaw::Grid { offset, values, .. } => (*offset, values.clone()),
        GapSumLaw::Normal { .. } => unreachable!(),
    };
    // Materialize the full documented support [2d, 2d + (n-1) d].
    let mut full = vec![0.0; k * nodes_per_d + 1];
    for (i, v) in values.iter().enumerate() {
        if offset + i < full.len() {
            full[offset + i] = *v;
        }
    }
    Ok(SpanDensity::Grid(DensityGrid { l_min: 2.0 * d, step: h, values: full }))
}

/// P(M >= m | N = n) for a cluster of `n` members on the given highway.
pub fn rsu_ccdf_given_n(m: usize, n: usize, spec: &SingleLaneSpec, mode: RsuLawMode) -> Result<f64> {
    spec.validate()?;
    if n < 1 {
        return Err(Error::domain("n must be >= 1"));
    }
    if m == 0 {
        return Ok(1.0);
    }
    if n == 1 {
        return Ok(rsu_ccdf_given_span(m, 2.0 * spec.d, spec.rsu_spacing, mode));
    }
    let mut law = ClusterLengthLaw::new(spec.lambda_v, spec.d, spec.d / GRID_STEP_DIVISOR)?;
    law.rsu_ccdf(m, n, spec.rsu_spacing, mode)
}

/// Size-biased sum phi^2 sum_n n (1-phi)^(n-1) c(n) with tail control.
///
/// `threshold(n)` gives the RSU count whose ccdf enters term n (0 means the
/// term is just the pmf weight). When `saturating` is set, a run of c(n)
/// within 1e-12 of 1 closes the remaining tail in closed form.
fn size_biased_sum(
    spec: &SingleLaneSpec,
    policy: &PmfTruncationPolicy,
    mode: RsuLawMode,
    saturating: bool,
    mut threshold: impl FnMut(usize) -> usize,
) -> Result<f64> {
    spec.validate()?;
    policy.validate()?;
    let p = phi(spec.gamma, spec.lambda_v, spec.d);
    let q = 1.0 - p;
    let mut law = if q > 0.0 && spec.lambda_v > 0.0 {
        Some(ClusterLengthLaw::new(spec.lambda_v, spec.d, spec.d / GRID_STEP_DIVISOR)?)
    } else {
        None
    };

    let mut acc = 0.0; // sum of n q^(n-1) c_n
    let mut biased_mass = 0.0; // phi^2 sum of n q^(n-1) so far
    let mut q_pow = 1.0;
    for n in 1..=policy.n_max {
        let m = threshold(n);
        let c = if m == 0 {
            1.0
        } else if n == 1 || law.is_none() {
            rsu_ccdf_given_span(m, 2.0 * spec.d, spec.rsu_spacing, mode)
        } else {
            law.as_mut().unwrap().rsu_ccdf(m, n, spec.rsu_spacing, mode)?
        };
        let weight = n as f64 * q_pow;
        acc += weight * c;
        biased_mass += p * p * weight;
        let tail = (1.0 - biased_mass).max(0.0);
        if tail <= policy.epsilon {
            return Ok(p * p * acc);
        }
        if saturating && c >= 1.0 - 1e-12 {
            // All deeper terms are within 1e-12 of 1: close the tail exactly.
            return Ok(p * p * acc + tail);
        }
        q_pow *= q;
    }
    Err(Error::numerical(format!(
        "cluster-size sum did not converge within n_max = {} (tail mass {:.2e} > epsilon {:.2e})",
        policy.n_max,
        (1.0 - biased_mass).max(0.0),
        policy.epsilon
    )))
}

/// Coverage probability of a typical vehicle in the V2V+V2I network:
/// phi^2 sum_n n (1-phi)^(n-1) P(M >= 1 | N = n).
pub fn coverage_v2v(
    spec: &SingleLaneSpec,
    policy: &PmfTruncationPolicy,
    mode: RsuLawMode,
) -> Result<f64> {
    size_biased_sum(spec, policy, mode, true, |_| 1)
}

/// Coverage probability of a typical vehicle without relaying: 2d / spacing.
pub fn coverage_v2i(spec: &SingleLaneSpec) -> Result<f64> {
    if 2.0 * spec.d > spec.rsu_spacing {
        return Err(Error::domain("coverage_v2i requires 2d <= rsu_spacing"));
    }
    Ok(2.0 * spec.d / spec.rsu_spacing)
}

/// Mean shared rate of a typical vehicle (equal for V2V+V2I and V2I):
/// rho / (gamma lambda_v s) * (1 - exp(-2 gamma lambda_v d)).
pub fn mean_shared_rate(spec: &SingleLaneSpec) -> Result<f64> {
    spec.validate()?;
    let glv = spec.gamma * spec.lambda_v;
    if glv <= 0.0 {
        return Err(Error::domain(
            "mean shared rate needs gamma * lambda_v > 0 (the empty-network limit is 2 d rho / rsu_spacing per vehicle as densities vanish)",
        ));
    }
    Ok(spec.rho_rsu / (glv * spec.rsu_spacing) * (1.0 - (-2.0 * glv * spec.d).exp()))
}

/// Lower bound on the CDF of the V2V+V2I shared rate at `r`:
/// 1 - phi^2 sum_n n (1-phi)^(n-1) P(M >= ceil(r n / rho) | N = n).
///
/// The bound ignores RSU sharing between neighboring clusters, so the true
/// CDF is at least this value.
pub fn rate_cdf_v2v_bound(
    r: f64,
    spec: &SingleLaneSpec,
    policy: &PmfTruncationPolicy,
    mode: RsuLawMode,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain("rate_cdf_v2v_bound needs r > 0"));
    }
    let rho = spec.rho_rsu;
    let tail = size_biased_sum(spec, policy, mode, false, |n| {
        let x = r * n as f64 / rho;
        // Guard against fp noise pushing an exact integer over its ceiling.
        let m = (x - 1e-9 * x.max(1.0)).ceil();
        m.max(1.0) as usize
    })?;
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

/// CDF of the V2I-only shared rate, left-continuous form P(R* < r):
/// 1 - (2d/s) * P(Poisson(2 gamma lambda_v d) <= floor((rho - r)/r)).
pub fn rate_cdf_v2i(r: f64, spec: &SingleLaneSpec) -> Result<f64> {
    spec.validate()?;
    if !(r > 0.0) {
        return Err(Error::domain("rate_cdf_v2i needs r > 0"));
    }
    let rho = spec.rho_rsu;
    if r > rho {
        return Ok(1.0);
    }
    let k = ((rho - r) / r + 1e-12).floor() as u64;
    let mu = 2.0 * spec.gamma * spec.lambda_v * spec.d;
    let cover = 2.0 * spec.d / spec.rsu_spacing;
    Ok(1.0 - cover * poisson_cdf(k, mu))
}

/// Lower bound on the expected number of RSUs serving a typical cluster.
pub fn multihoming_lower_bound(spec: &SingleLaneSpec) -> Result<f64> {
    spec.validate()?;
    let glv = spec.gamma * spec.lambda_v;
    if glv <= 0.0 {
        return Err(Error::domain("multihoming bound needs gamma * lambda_v > 0"));
    }
    let num = 1.0 - (-2.0 * glv * spec.d).exp();
    let den = glv * spec.rsu_spacing * (1.0 - spec.gamma + spec.gamma * (-glv * spec.d).exp());
    Ok(num / den)
}

/// Full-penetration form of the multihoming bound: 2 sinh(lambda_v d) / (lambda_v s).
pub fn multihoming_lower_bound_full_penetration(lambda_v: f64, d: f64, rsu_spacing: f64) -> f64 {
    2.0 * (lambda_v * d).sinh() / (lambda_v * rsu_spacing)
}

/// Deterministic-placement tradeoff point for clusters of fixed size n:
/// coverage min((n+1) d / s, 1) and RSU utilization min((n+1)/n d lambda_v, 1).
pub fn tradeoff_point(n: usize, lambda_v: f64, d: f64, rsu_spacing: f64) -> (f64, f64) {
    let np1 = (n + 1) as f64;
    let coverage = (np1 * d / rsu_spacing).min(1.0);
    let utilization = (np1 / n as f64 * d * lambda_v).min(1.0);
    (coverage, utilization)
}

/// Convex combination of two tradeoff points; `weight_b` is the fraction of
/// clusters of size `n_b`.
pub fn tradeoff_mix(
    n_a: usize,
    n_b: usize,
    weight_b: f64,
    lambda_v: f64,
    d: f64,
    rsu_spacing: f64,
) -> (f64, f64) {
    let (ca, ua) = tradeoff_point(n_a, lambda_v, d, rsu_spacing);
    let (cb, ub) = tradeoff_point(n_b, lambda_v, d, rsu_spacing);
    let t = weight_b.clamp(0.0, 1.0);
    ((1.0 - t) * ca + t * cb, (1.0 - t) * ua + t * ub)
}

/// Largest useful fixed cluster size when mixing: floor(1/(d lambda_r) + 1).
pub fn tradeoff_max_mixing_size(d: f64, rsu_spacing: f64) -> usize {
    (rsu_spacing / d + 1.0).floor() as usize
}

/// Single-lane system associated with a multilane highway: total intensity,
/// penetration, and the effective blocker intensity. Its performance lower
/// bounds the multilane one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSingleLane {
    /// Total vehicle intensity lambda = lambda_v2v + lambda_b.
    pub lambda_total: f64,
    /// V2V fraction of the total.
    pub gamma: f64,
    /// Effective blocker intensity of the reduced lane.
    pub lambda_b_eff: f64,
    pub d: f64,
    pub rsu_spacing: f64,
    pub rho_rsu: f64,
    pub blocker_length: f64,
}

impl ReducedSingleLane {
    /// V2V intensity (shared with the multilane system).
    pub fn lambda_v2v(&self) -> f64 {
        self.gamma * self.lambda_total
    }

    /// The reduced lane as a plain single-lane spec: total intensity
    /// lambda_v2v + lambda_b_eff with the matching penetration.
    pub fn effective_spec(&self) -> Result<SingleLaneSpec> {
        let v2v = self.lambda_v2v();
        let total = v2v + self.lambda_b_eff;
        let gamma = if total > 0.0 { v2v / total } else { 0.0 };
        SingleLaneSpec::new(total, gamma, self.d, self.rsu_spacing, self.rho_rsu)
    }

    /// The reduced lane as a one-lane multilane spec, for sampling.
    pub fn to_multilane(&self) -> Result<MultilaneSpec> {
        MultilaneSpec::new(
            vec![self.lambda_v2v()],
            vec![self.lambda_b_eff],
            self.d,
            self.rsu_spacing,
            self.rho_rsu,
            self.blocker_length,
        )
    }
}

/// Reduce a multilane highway to its associated single-lane system.
pub fn reduce_multilane(spec: &MultilaneSpec) -> Result<ReducedSingleLane> {
    spec.validate()?;
    let v2v = spec.total_v2v();
    let total = v2v + spec.total_blockers();
    Ok(ReducedSingleLane {
        lambda_total: total,
        gamma: if total > 0.0 { v2v / total } else { 0.0 },
        lambda_b_eff: spec.effective_blocker_intensity(),
        d: spec.d,
        rsu_spacing: spec.rsu_spacing,
        rho_rsu: spec.rho_rsu,
        blocker_length: spec.blocker_length,
    })
}

// ---------------------------------------------------------------------------
// Small special-function helpers.
// ---------------------------------------------------------------------------

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 polynomial
/// (absolute error below 7.5e-8).
pub(crate) fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    0.5 * (1.0 + erf(x))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// P(Poisson(mu) <= k) by direct stable summation.
pub(crate) fn poisson_cdf(k: u64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 1.0;
    }
    let mut term = (-mu).exp();
    let mut acc = term;
    for i in 1..=k {
        term *= mu / i as f64;
        acc += term;
        if i as f64 > mu && term < 1e-18 * acc {
            break;
        }
    }
    acc.min(1.0)
}
