//! Highway parameterizations and Poisson snapshot sampling.
//!
//! A highway is modeled on a torus of length `window`: vehicle positions are
//! a Poisson point process per lane and kind, the RSU grid has fixed spacing
//! and a uniformly random phase. All positions are in meters, intensities in
//! vehicles per meter.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum window, in multiples of the RSU spacing.
pub const MIN_WINDOW_SPACINGS: f64 = 10.0;
/// Default window, in multiples of the RSU spacing.
pub const DEFAULT_WINDOW_SPACINGS: f64 = 1000.0;

/// Distance between two points on a torus of length `window`.
pub fn torus_distance(a: f64, b: f64, window: f64) -> f64 {
    let d = (a - b).abs() % window;
    d.min(window - d)
}

/// Length of the forward arc from `a` to `b` on a torus of length `window`.
pub fn forward_gap(a: f64, b: f64, window: f64) -> f64 {
    (b - a).rem_euclid(window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    V2v,
    Blocker,
}

impl std::fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VehicleKind::V2v => write!(f, "v2v"),
            VehicleKind::Blocker => write!(f, "blocker"),
        }
    }
}

/// One vehicle of a sampled snapshot. `lane` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub position: f64,
    pub kind: VehicleKind,
    pub lane: u32,
}

/// Single-lane highway parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleLaneSpec {
    /// Total vehicle intensity (vehicles/meter).
    pub lambda_v: f64,
    /// V2V market penetration in [0, 1].
    pub gamma: f64,
    /// Communication range (meters).
    pub d: f64,
    /// Inter-RSU distance (meters).
    pub rsu_spacing: f64,
    /// Per-RSU capacity (rate units).
    pub rho_rsu: f64,
}

impl SingleLaneSpec {
    pub fn new(lambda_v: f64, gamma: f64, d: f64, rsu_spacing: f64, rho_rsu: f64) -> Result<Self> {
        let spec = SingleLaneSpec { lambda_v, gamma, d, rsu_spacing, rho_rsu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda_v.is_finite() || self.lambda_v < 0.0 {
            return Err(Error::config(format!("lambda_v must be >= 0, got {}", self.lambda_v)));
        }
        if !self.gamma.is_finite() || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !self.d.is_finite() || self.d <= 0.0 {
            return Err(Error::config(format!("d must be > 0, got {}", self.d)));
        }
        if !self.rsu_spacing.is_finite() || self.rsu_spacing <= 0.0 {
            return Err(Error::config(format!(
                "rsu_spacing must be > 0, got {}",
                self.rsu_spacing
            )));
        }
        if 2.0 * self.d > self.rsu_spacing {
            return Err(Error::config(format!(
                "communication range too large: 2*d = {} exceeds rsu_spacing = {}",
                2.0 * self.d,
                self.rsu_spacing
            )));
        }
        if !self.rho_rsu.is_finite() || self.rho_rsu <= 0.0 {
            return Err(Error::config(format!("rho_rsu must be > 0, got {}", self.rho_rsu)));
        }
        Ok(())
    }

    /// Intensity of V2V-capable vehicles.
    pub fn lambda_v2v(&self) -> f64 {
        self.gamma * self.lambda_v
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SingleLaneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Multilane highway parameters: independent PPPs of V2V vehicles and
/// blockers per lane, shared range and RSU grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultilaneSpec {
    /// Lane count; lanes are indexed 1..=eta.
    pub eta: usize,
    /// Per-lane V2V intensities (vehicles/meter), length eta.
    pub lambda_v2v: Vec<f64>,
    /// Per-lane blocker intensities (vehicles/meter), length eta.
    pub lambda_b: Vec<f64>,
    /// Communication range (meters).
    pub d: f64,
    /// Inter-RSU distance (meters).
    pub rsu_spacing: f64,
    /// Per-RSU capacity (rate units).
    pub rho_rsu: f64,
    /// Physical blocker extent (meters); 0 means point blockers.
    #[serde(default)]
    pub blocker_length: f64,
}

impl MultilaneSpec {
    pub fn new(
        lambda_v2v: Vec<f64>,
        lambda_b: Vec<f64>,
        d: f64,
        rsu_spacing: f64,
        rho_rsu: f64,
        blocker_length: f64,
    ) -> Result<Self> {
        let spec = MultilaneSpec {
            eta: lambda_v2v.len(),
            lambda_v2v,
            lambda_b,
            d,
            rsu_spacing,
            rho_rsu,
            blocker_length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 1 {
            return Err(Error::config("eta must be >= 1"));
        }
        if self.lambda_v2v.len() != self.eta || self.lambda_b.len() != self.eta {
            return Err(Error::config(format!(
                "intensity vectors must have length eta = {}: got {} and {}",
                self.eta,
                self.lambda_v2v.len(),
                self.lambda_b.len()
            )));
        }
        for (name, v) in [("lambda_v2v", &self.lambda_v2v), ("lambda_b", &self.lambda_b)] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config(format!("{name} entries must be >= 0")));
            }
        }
        if !self.blocker_length.is_finite() || self.blocker_length < 0.0 {
            return Err(Error::config("blocker_length must be >= 0"));
        }
        // Range and RSU grid constraints are shared with the single-lane model.
        SingleLaneSpec {
            lambda_v: 0.0,
            gamma: 0.0,
            d: self.d,
            rsu_spacing: self.rsu_spacing,
            rho_rsu: self.rho_rsu,
        }
        .validate()
    }

    /// Total V2V intensity across lanes.
    pub fn total_v2v(&self) -> f64 {
        self.lambda_v2v.iter().sum()
    }

    /// Total blocker intensity across lanes.
    pub fn total_blockers(&self) -> f64 {
        self.lambda_b.iter().sum()
    }

    /// Worst-case blocker intensity seen between two consecutive V2V
    /// vehicles: max of the first lane, the last lane and the sum of the
    /// middle lanes.
    pub fn effective_blocker_intensity(&self) -> f64 {
        let first = self.lambda_b[0];
        let last = self.lambda_b[self.eta - 1];
        let middle: f64 = if self.eta > 2 { self.lambda_b[1..self.eta - 1].iter().sum() } else { 0.0 };
        first.max(last).max(middle)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MultilaneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One sampled realization on a torus of length `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Road length (meters); the road wraps around.
    pub window: f64,
    /// Lane count of the generating spec.
    pub eta: usize,
    /// Inter-RSU distance of the generating spec (meters).
    pub rsu_spacing: f64,
    /// Offset of the RSU grid in [0, rsu_spacing).
    pub rsu_phase: f64,
    /// Vehicles sorted by position (ties by lane then kind).
    pub vehicles: Vec<Vehicle>,
}

impl Snapshot {
    pub fn v2v_count(&self) -> usize {
        self.vehicles.iter().filter(|v| v.kind == VehicleKind::V2v).count()
    }

    /// Indices (into `vehicles`) of V2V vehicles, in position order.
    pub fn v2v_indices(&self) -> Vec<usize> {
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VehicleKind::V2v)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of RSUs on the grid. The window is expected to be an integer
    /// multiple of the spacing; any remainder is truncated.
    pub fn rsu_count(&self) -> usize {
        (self.window / self.rsu_spacing).round() as usize
    }

    /// Export as CSV with columns `position,kind,lane`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["position", "kind", "lane"])?;
        for v in &self.vehicles {
            w.write_record([v.position.to_string(), v.kind.to_string(), v.lane.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn sort_vehicles(vehicles: &mut Vec<Vehicle>) {
        vehicles.sort_by(|a, b| {
            a.position
                .partial_cmp(&b.position)
                .unwrap()
                .then(a.lane.cmp(&b.lane))
                .then(a.kind.cmp(&b.kind))
        });
    }
}

fn check_window(window: f64, rsu_spacing: f64) -> Result<()> {
    if !window.is_finite() || window < MIN_WINDOW_SPACINGS * rsu_spacing {
        return Err(Error::config(format!(
            "window {} is too small: must be at least {} rsu spacings ({})",
            window,
            MIN_WINDOW_SPACINGS,
            MIN_WINDOW_SPACINGS * rsu_spacing
        )));
    }
    Ok(())
}

/// Poisson point process on [0, window) via exponential gaps. Returns sorted
/// positions; the count is Poisson(intensity * window).
fn sample_ppp<R: Rng>(rng: &mut R, intensity: f64, window: f64) -> Vec<f64> {
    let mut points = Vec::new();
    if intensity <= 0.0 {
        return points;
    }
    let mut x = 0.0f64;
    loop {
        let u: f64 = rng.gen::<f64>();
        x += -(1.0 - u).ln() / intensity;
        if x >= window {
            return points;
        }
        points.push(x);
    }
}

fn sample_phase<R: Rng>(rng: &mut R, rsu_spacing: f64) -> f64 {
    rng.gen::<f64>() * rsu_spacing
}

/// Sample a single-lane snapshot: one PPP of intensity `lambda_v`, each
/// vehicle independently V2V-capable with probability `gamma`.
pub fn sample_single_lane(spec: &SingleLaneSpec, window: f64, seed: u64) -> Result<Snapshot> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_single_lane_with(spec, window, &mut rng)
}

pub fn sample_single_lane_with<R: Rng>(
    spec: &SingleLaneSpec,
    window: f64,
    rng: &mut R,
) -> Result<Snapshot> {
    spec.validate()?;
    check_window(window, spec.rsu_spacing)?;
    let vehicles = sample_ppp(rng, spec.lambda_v, window)
        .into_iter()
        .map(|position| Vehicle {
            position,
            kind: if rng.gen::<f64>() < spec.gamma { VehicleKind::V2v } else { VehicleKind::Blocker },
            lane: 1,
        })
        .collect();
    Ok(Snapshot {
        window,
        eta: 1,
        rsu_spacing: spec.rsu_spacing,
        rsu_phase: sample_phase(rng, spec.rsu_spacing),
        vehicles,
    })
}

/// Sample a multilane snapshot: independent PPP per lane and kind, merged
/// and position-sorted.
pub fn sample_multilane(spec: &MultilaneSpec, window: f64, seed: u64) -> Result<Snapshot> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_multilane_with(spec, window, &mut rng)
}

pub fn sample_multilane_with<R: Rng>(
    spec: &MultilaneSpec,
    window: f64,
    rng: &mut R,
) -> Result<Snapshot> {
    spec.validate()?;
    check_window(window, spec.rsu_spacing)?;
    let mut vehicles = Vec::new();
    for lane in 0..spec.eta {
        for (kind, intensity) in [
            (VehicleKind::V2v, spec.lambda_v2v[lane]),
            (VehicleKind::Blocker, spec.lambda_b[lane]),
        ] {
            vehicles.extend(sample_ppp(rng, intensity, window).into_iter().map(|position| {
                Vehicle { position, kind, lane: (lane + 1) as u32 }
            }));
        }
    }
    Snapshot::sort_vehicles(&mut vehicles);
    Ok(Snapshot {
        window,
        eta: spec.eta,
        rsu_spacing: spec.rsu_spacing,
        rsu_phase: sample_phase(rng, spec.rsu_spacing),
        vehicles,
    })
}

/// Lanes whose blockers can obstruct a link between lanes `a` and `b`:
/// the common lane when `a == b`, the lanes strictly between otherwise.
pub fn blocking_lanes(a: u32, b: u32) -> std::ops::RangeInclusive<u32> {
    if a == b {
        a..=b
    } else {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        lo + 1..=hi.saturating_sub(1) // empty when lanes are adjacent
    }
}

/// Sample a coupled (multilane, single-lane) pair of snapshots.
///
/// Both snapshots share the V2V positions and the RSU phase. The single-lane
/// snapshot inherits, between each pair of consecutive V2V vehicles, exactly
/// the multilane blockers that could obstruct their link, topped up by an
/// independent PPP so that its blocker process is a PPP with the effective
/// blocker intensity. Its marginal law is the reduced single-lane system,
/// and per realization its clusters refine the multilane clusters.
pub fn sample_coupled_pair(
    spec: &MultilaneSpec,
    window: f64,
    seed: u64,
) -> Result<(Snapshot, Snapshot)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_coupled_pair_with(spec, window, &mut rng)
}

pub fn sample_coupled_pair_with<R: Rng>(
    spec: &MultilaneSpec,
    window: f64,
    rng: &mut R,
) -> Result<(Snapshot, Snapshot)> {
    spec.validate()?;
    check_window(window, spec.rsu_spacing)?;

    let lambda_v2v_total = spec.total_v2v();
    let lambda_eff = spec.effective_blocker_intensity();

    // Shared V2V process with categorical lane labels.
    let v2v_positions = sample_ppp(rng, lambda_v2v_total, window);
    let v2v_lanes: Vec<u32> = v2v_positions
        .iter()
        .map(|_| {
            let mut u = rng.gen::<f64>() * lambda_v2v_total;
            for (lane, w) in spec.lambda_v2v.iter().enumerate() {
                if u < *w {
                    return (lane + 1) as u32;
                }
                u -= w;
            }
            spec.eta as u32
        })
        .collect();

    // Multilane blockers, kept per lane for the coupling below.
    let blockers_by_lane: Vec<Vec<f64>> =
        (0..spec.eta).map(|lane| sample_ppp(rng, spec.lambda_b[lane], window)).collect();

    let rsu_phase = sample_phase(rng, spec.rsu_spacing);

    let mut multi_vehicles: Vec<Vehicle> = v2v_positions
        .iter()
        .zip(&v2v_lanes)
        .map(|(&position, &lane)| Vehicle { position, kind: VehicleKind::V2v, lane })
        .collect();
    for (lane, positions) in blockers_by_lane.iter().enumerate() {
        multi_vehicles.extend(positions.iter().map(|&position| Vehicle {
            position,
            kind: VehicleKind::Blocker,
            lane: (lane + 1) as u32,
        }));
    }
    Snapshot::sort_vehicles(&mut multi_vehicles);
    let multi = Snapshot {
        window,
        eta: spec.eta,
        rsu_spacing: spec.rsu_spacing,
        rsu_phase,
        vehicles: multi_vehicles,
    };

    // Single-lane blockers: per cyclic V2V interval, the qualifying-lane
    // blockers plus an independent top-up to intensity lambda_eff.
    let n = v2v_positions.len();
    let mut single_blockers: Vec<f64> = Vec::new();
    if n == 0 {
        single_blockers = sample_ppp(rng, lambda_eff, window);
    } else {
        // Copy each multilane blocker that falls in an interval whose lane
        // pair qualifies it.
        for (lane0, positions) in blockers_by_lane.iter().enumerate() {
            let lane = (lane0 + 1) as u32;
            for &x in positions {
                // x belongs to the cyclic interval (t[j-1], t[j]].
                let j = v2v_positions.partition_point(|&t| t < x);
                let (prev, next) = if j == 0 || j == n {
                    (v2v_lanes[n - 1], v2v_lanes[0])
                } else {
                    (v2v_lanes[j - 1], v2v_lanes[j])
                };
                if blocking_lanes(prev, next).contains(&lane) {
                    single_blockers.push(x);
                }
            }
        }
        // Independent top-up so every interval carries intensity lambda_eff.
        for i in 0..n {
            let start = v2v_positions[i];
            let len = if i + 1 < n {
                v2v_positions[i + 1] - start
            } else {
                window - start + v2v_positions[0]
            };
            let copied: f64 = blocking_lanes(v2v_lanes[i], v2v_lanes[(i + 1) % n])
                .filter(|lane| (*lane as usize) <= spec.eta)
                .map(|lane| spec.lambda_b[lane as usize - 1])
                .sum();
            let top_up = (lambda_eff - copied).max(0.0);
            single_blockers.extend(
                sample_ppp(rng, top_up, len).into_iter().map(|u| (start + u) % window),
            );
        }
    }

    let mut single_vehicles: Vec<Vehicle> = v2v_positions
        .iter()
        .map(|&position| Vehicle { position, kind: VehicleKind::V2v, lane: 1 })
        .collect();
    single_vehicles.extend(
        single_blockers
            .into_iter()
            .map(|position| Vehicle { position, kind: VehicleKind::Blocker, lane: 1 }),
    );
    Snapshot::sort_vehicles(&mut single_vehicles);
    let single = Snapshot {
        window,
        eta: 1,
        rsu_spacing: spec.rsu_spacing,
        rsu_phase,
        vehicles: single_vehicles,
    };

    Ok((multi, single))
}

/// Heterogeneous lane intensity profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanePresetKind {
    /// Equal intensity on every lane.
    Homogeneous,
    /// Traffic concentrated on the first and last lanes, thinnest in the
    /// middle.
    V,
    /// Traffic restricted to the first and last lanes, equally split.
    C,
    /// Traffic restricted to the first lane.
    I,
    /// 90% of traffic in the first lane, the rest spread evenly.
    L,
}

impl std::str::FromStr for LanePresetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "homogeneous" => Ok(LanePresetKind::Homogeneous),
            "v" => Ok(LanePresetKind::V),
            "c" => Ok(LanePresetKind::C),
            "i" => Ok(LanePresetKind::I),
            "l" => Ok(LanePresetKind::L),
            other => Err(Error::config(format!("unknown lane preset: {other}"))),
        }
    }
}

impl std::fmt::Display for LanePresetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LanePresetKind::Homogeneous => "homogeneous",
            LanePresetKind::V => "v",
            LanePresetKind::C => "c",
            LanePresetKind::I => "i",
            LanePresetKind::L => "l",
        };
        write!(f, "{s}")
    }
}

/// Per-lane intensity vector for a preset. `lambda` is the nominal per-lane
/// intensity: the returned entries sum to `lambda * eta`.
pub fn lane_preset(kind: LanePresetKind, eta: usize, lambda: f64) -> Result<Vec<f64>> {
    if eta < 1 {
        return Err(Error::config("lane preset needs eta >= 1"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::config("lane preset intensity must be >= 0"));
    }
    let total = lambda * eta as f64;
    match kind {
        LanePresetKind::Homogeneous => Ok(vec![lambda; eta]),
        LanePresetKind::V => {
            // Weights (m_max - m)^2 + 1, with m the distance to the nearest
            // edge lane; for eta = 5 this is [5, 2, 1, 2, 5] / 15.
            let m_max = (eta - 1) / 2;
            let weights: Vec<f64> = (0..eta)
                .map(|k| {
                    let m = k.min(eta - 1 - k);
                    ((m_max - m) as f64).powi(2) + 1.0
                })
                .collect();
            let sum: f64 = weights.iter().sum();
            Ok(weights.into_iter().map(|w| total * w / sum).collect())
        }
        LanePresetKind::C => {
            if eta < 2 {
                return Err(Error::config("lane preset C needs eta >= 2 (two occupied lanes)"));
            }
            let mut v = vec![0.0; eta];
            v[0] = total / 2.0;
            v[eta - 1] = total / 2.0;
            Ok(v)
        }
        LanePresetKind::I => {
            let mut v = vec![0.0; eta];
            v[0] = total;
            Ok(v)
        }
        LanePresetKind::L => {
            if eta == 1 {
                return Ok(vec![total]);
            }
            let mut v = vec![0.1 * total / (eta - 1) as f64; eta];
            v[0] = 0.9 * total;
            Ok(v)
        }
    }
}

/// Multilane spec with the first lane reserved for V2V vehicles.
///
/// A fraction `alpha` of the V2V intensity drives on lane 1 (no blockers
/// there); the remaining V2V vehicles and all blockers spread uniformly over
/// lanes 2..=eta. `base` carries the highway totals.
pub fn segregated_multilane(
    base: &SingleLaneSpec,
    eta: usize,
    alpha: f64,
    blocker_length: f64,
) -> Result<MultilaneSpec> {
    base.validate()?;
    if eta < 2 {
        return Err(Error::config("segregation needs eta >= 2 (lane 1 plus mixed lanes)"));
    }
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let v2v_total = base.gamma * base.lambda_v;
    let blocker_total = (1.0 - base.gamma) * base.lambda_v;
    let rest = (eta - 1) as f64;
    let mut lambda_v2v = vec![(1.0 - alpha) * v2v_total / rest; eta];
    lambda_v2v[0] = alpha * v2v_total;
    let mut lambda_b = vec![blocker_total / rest; eta];
    lambda_b[0] = 0.0;
    MultilaneSpec::new(lambda_v2v, lambda_b, base.d, base.rsu_spacing, base.rho_rsu, blocker_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(lambda_v: f64, gamma: f64) -> SingleLaneSpec {
        SingleLaneSpec::new(lambda_v, gamma, 150.0, 1000.0, 1.0).unwrap()
    }

    #[test]
    fn zero_intensity_gives_empty_snapshot() {
        let snap = sample_single_lane(&spec(0.0, 0.5), 20_000.0, 7).unwrap();
        assert!(snap.vehicles.is_empty());
    }

    #[test]
    fn full_penetration_gives_only_v2v() {
        let snap = sample_single_lane(&spec(0.02, 1.0), 50_000.0, 3).unwrap();
        assert!(!snap.vehicles.is_empty());
        assert!(snap.vehicles.iter().all(|v| v.kind == VehicleKind::V2v));
    }

    #[test]
    fn window_too_small_is_rejected() {
        let err = sample_single_lane(&spec(0.02, 1.0), 5_000.0, 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn positions_are_sorted_and_in_window() {
        let snap = sample_single_lane(&spec(0.03, 0.4), 30_000.0, 11).unwrap();
        for pair in snap.vehicles.windows(2) {
            assert!(pair[0].position <= pair[1].position);
        }
        assert!(snap.vehicles.iter().all(|v| (0.0..30_000.0).contains(&v.position)));
        assert!((0.0..snap.rsu_spacing).contains(&snap.rsu_phase));
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let a = sample_single_lane(&spec(0.02, 0.6), 20_000.0, 42).unwrap();
        let b = sample_single_lane(&spec(0.02, 0.6), 20_000.0, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multilane_empty_when_all_intensities_zero() {
        let spec = MultilaneSpec::new(vec![0.0; 3], vec![0.0; 3], 150.0, 1000.0, 1.0, 0.0).unwrap();
        let snap = sample_multilane(&spec, 20_000.0, 5).unwrap();
        assert!(snap.vehicles.is_empty());
        assert_eq!(snap.eta, 3);
    }

    #[test]
    fn multilane_rejects_mismatched_vectors() {
        assert!(MultilaneSpec::new(vec![0.01; 3], vec![0.01; 2], 150.0, 1000.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(0.02, 0.8);
        let json = s.to_json().unwrap();
        assert_eq!(SingleLaneSpec::from_json(&json).unwrap(), s);
        // Unknown fields and invariant violations are rejected.
        assert!(SingleLaneSpec::from_json("{\"lambda_v\":1,\"bogus\":2}").is_err());
        let bad = "{\"lambda_v\":0.01,\"gamma\":0.5,\"d\":600.0,\"rsu_spacing\":1000.0,\"rho_rsu\":1.0}";
        assert!(matches!(SingleLaneSpec::from_json(bad).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn blocking_lanes_cases() {
        // Same lane: only that lane.
        assert_eq!(blocking_lanes(2, 2).collect::<Vec<_>>(), vec![2]);
        // Adjacent lanes: nothing in between.
        assert_eq!(blocking_lanes(1, 2).count(), 0);
        // Two lanes apart, both directions.
        assert_eq!(blocking_lanes(1, 3).collect::<Vec<_>>(), vec![2]);
        assert_eq!(blocking_lanes(4, 1).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn coupled_pair_with_one_lane_is_identical() {
        let spec = MultilaneSpec::new(vec![0.012], vec![0.008], 150.0, 1000.0, 1.0, 0.0).unwrap();
        let (multi, single) = sample_coupled_pair(&spec, 30_000.0, 9).unwrap();
        assert_eq!(multi.vehicles, single.vehicles);
        assert_eq!(multi.rsu_phase, single.rsu_phase);
    }

    #[test]
    fn coupled_pair_copies_exactly_the_qualifying_blockers() {
        // With three lanes and V2V traffic only in lanes 1 and 3, every
        // consecutive pair either shares a lane or brackets lane 2, so the
        // copied blockers between vehicles in lanes (1,3) are the lane-2
        // blockers of that interval.
        let spec = MultilaneSpec::new(
            vec![0.004, 0.0, 0.004],
            vec![0.0, 0.006, 0.0],
            150.0,
            1000.0,
            1.0,
            0.0,
        )
        .unwrap();
        let (multi, single) = sample_coupled_pair(&spec, 50_000.0, 21).unwrap();
        // lambda_eff = max(0, 0, 0.006) = 0.006: between cross-lane pairs the
        // copied set is lane 2 in full and no top-up is added, so blocker
        // positions of the pair intervals must agree exactly.
        let v2v: Vec<&Vehicle> =
            multi.vehicles.iter().filter(|v| v.kind == VehicleKind::V2v).collect();
        let single_blockers: Vec<f64> = single
            .vehicles
            .iter()
            .filter(|v| v.kind == VehicleKind::Blocker)
            .map(|v| v.position)
            .collect();
        for pair in v2v.windows(2) {
            if pair[0].lane != pair[1].lane {
                let in_multi: Vec<f64> = multi
                    .vehicles
                    .iter()
                    .filter(|v| {
                        v.kind == VehicleKind::Blocker
                            && v.lane == 2
                            && v.position > pair[0].position
                            && v.position <= pair[1].position
                    })
                    .map(|v| v.position)
                    .collect();
                let in_single: Vec<f64> = single_blockers
                    .iter()
                    .copied()
                    .filter(|&x| x > pair[0].position && x <= pair[1].position)
                    .collect();
                assert_eq!(in_multi, in_single);
            }
        }
    }

    #[test]
    fn lane_preset_vectors() {
        let total = |v: &Vec<f64>| v.iter().sum::<f64>();
        let lambda = 0.004;

        let h = lane_preset(LanePresetKind::Homogeneous, 5, lambda).unwrap();
        assert_eq!(h, vec![lambda; 5]);

        let i = lane_preset(LanePresetKind::I, 5, lambda).unwrap();
        assert_eq!(i, vec![5.0 * lambda, 0.0, 0.0, 0.0, 0.0]);

        let l = lane_preset(LanePresetKind::L, 5, lambda).unwrap();
        let exp = 5.0 * lambda;
        assert_relative_eq!(l[0], 0.9 * exp);
        for k in 1..5 {
            assert_relative_eq!(l[k], exp / 40.0);
        }

        let v = lane_preset(LanePresetKind::V, 5, lambda).unwrap();
        for (got, w) in v.iter().zip([5.0, 2.0, 1.0, 2.0, 5.0]) {
            assert_relative_eq!(*got, exp * w / 15.0, max_relative = 1e-12);
        }
        assert_relative_eq!(total(&v), exp, max_relative = 1e-12);

        let c = lane_preset(LanePresetKind::C, 5, lambda).unwrap();
        assert_eq!(c, vec![exp / 2.0, 0.0, 0.0, 0.0, exp / 2.0]);
        assert!(lane_preset(LanePresetKind::C, 1, lambda).is_err());
    }

    #[test]
    fn segregated_intensities() {
        // alpha=0.5, gamma=0.4, lambda_v=0.02, eta=3.
        let base = SingleLaneSpec::new(0.02, 0.4, 150.0, 1000.0, 1.0).unwrap();
        let m = segregated_multilane(&base, 3, 0.5, 0.0).unwrap();
        assert_relative_eq!(m.lambda_v2v[0], 0.004);
        assert_relative_eq!(m.lambda_b[0], 0.0);
        for lane in 1..3 {
            assert_relative_eq!(m.lambda_v2v[lane], 0.002);
            assert_relative_eq!(m.lambda_b[lane], 0.006);
        }

        // alpha=0: lane 1 empty, everything uniform on the rest.
        let m0 = segregated_multilane(&base, 3, 0.0, 0.0).unwrap();
        assert_relative_eq!(m0.lambda_v2v[0], 0.0);
        assert_relative_eq!(m0.lambda_v2v[1], 0.004);

        // alpha=1, gamma=1: everything in lane 1, no blockers anywhere.
        let pure = SingleLaneSpec::new(0.02, 1.0, 150.0, 1000.0, 1.0).unwrap();
        let m1 = segregated_multilane(&pure, 3, 1.0, 0.0).unwrap();
        assert_relative_eq!(m1.lambda_v2v[0], 0.02);
        assert!(m1.lambda_v2v[1..].iter().all(|&x| x == 0.0));
        assert!(m1.lambda_b.iter().all(|&x| x == 0.0));

        assert!(segregated_multilane(&base, 1, 0.5, 0.0).is_err());
    }

    #[test]
    fn effective_blocker_intensity_resolution() {
        // First lane, last lane, sum of the middle lanes.
        let m = MultilaneSpec::new(vec![0.0; 4], vec![0.002, 0.003, 0.004, 0.005], 150.0, 1000.0, 1.0, 0.0)
            .unwrap();
        assert_relative_eq!(m.effective_blocker_intensity(), 0.007);
        let one = MultilaneSpec::new(vec![0.0], vec![0.002], 150.0, 1000.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(one.effective_blocker_intensity(), 0.002);
    }

    #[test]
    fn snapshot_csv_has_expected_columns() {
        let snap = sample_single_lane(&spec(0.02, 0.5), 20_000.0, 1).unwrap();
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "position,kind,lane");
        let first = lines.next().unwrap();
        assert!(first.ends_with(",v2v,1") || first.ends_with(",blocker,1"));
    }
}
