//! Seeded generation of battery fleets, renewable profiles and complete
//! tracking / expansion-planning instances.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bess::{BessInitial, BessParams};

pub const HOURS: usize = 24;

/// Double-peak daily demand shape (morning and evening peaks, max 1).
pub const DEMAND_SHAPE: [f64; HOURS] = [
    0.55, 0.50, 0.48, 0.47, 0.50, 0.60, 0.78, 0.92, 1.00, 0.90, 0.80, 0.75, 0.72, 0.70, 0.72, 0.78,
    0.88, 0.97, 1.00, 0.95, 0.85, 0.75, 0.65, 0.58,
];

/// Largest hour-to-hour change of a synthetic wind profile.
pub const WIND_MAX_STEP: f64 = 0.15;

const DEFAULT_TEP: &str = include_str!("../data/tep_default.toml");

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected 25 columns (day + 24 hours), found {found}")]
    ColumnCount { row: usize, found: usize },
    #[error("row {row}, column {column}: {message}")]
    Malformed {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}, column {column}: value {value} outside [0, 1]")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("profile needs {HOURS} values in [0, 1]")]
    BadProfile,
    #[error("profile pool is empty")]
    EmptyPool,
    #[error("invalid dataset: {0}")]
    Dataset(String),
}

/// Deterministic random stream.
#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream keyed by `(master, index, tag)`, so an instance
    /// does not depend on the order in which others are generated.
    pub fn derive(master: u64, index: u64, tag: &str) -> Rng {
        let mut h = Sha256::new();
        h.update(master.to_le_bytes());
        h.update(index.to_le_bytes());
        h.update(tag.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        Rng(ChaCha8Rng::from_seed(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

/// Draws a battery from the uniform parameter ranges, initially half full.
pub fn sample_bess(rng: &mut Rng) -> (BessParams, BessInitial) {
    let e_min = rng.uniform(0.0, 30.0);
    let e_max = rng.uniform(40.0, 80.0);
    let p_c_max = rng.uniform(10.0, 20.0);
    let p_d_max = rng.uniform(10.0, 20.0);
    let eta_c = rng.uniform(0.75, 1.0);
    let eta_d = rng.uniform(0.75, 1.0);
    (
        BessParams {
            e_min,
            e_max,
            p_c_max,
            p_d_max,
            eta_c,
            eta_d,
        },
        BessInitial {
            e0: 0.5 * (e_max + e_min),
        },
    )
}

/// Normalized output of a unit-capacity plant over one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Profile {
    values: Vec<f64>,
}

impl Profile {
    pub fn new(values: Vec<f64>) -> Result<Profile, InstanceError> {
        if values.len() != HOURS || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(InstanceError::BadProfile);
        }
        Ok(Profile { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for Profile {
    type Error = InstanceError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Profile::new(v)
    }
}

impl From<Profile> for Vec<f64> {
    fn from(p: Profile) -> Self {
        p.values
    }
}

pub fn load_profiles(path: &Path) -> Result<Vec<Profile>, InstanceError> {
    read_profiles(std::fs::File::open(path)?)
}

/// Parses the `day,h1,...,h24` profile CSV.
pub fn read_profiles<R: Read>(r: R) -> Result<Vec<Profile>, InstanceError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rd.headers()?.clone();
    let expected: Vec<String> = std::iter::once("day".to_string())
        .chain((1..=HOURS).map(|h| format!("h{h}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(InstanceError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != HOURS + 1 {
            return Err(InstanceError::ColumnCount {
                row,
                found: rec.len(),
            });
        }
        let mut values = Vec::with_capacity(HOURS);
        for h in 1..=HOURS {
            let column = format!("h{h}");
            let v: f64 = rec[h].parse().map_err(|e: std::num::ParseFloatError| {
                InstanceError::Malformed {
                    row,
                    column: column.clone(),
                    message: e.to_string(),
                }
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(InstanceError::OutOfRange {
                    row,
                    column,
                    value: v,
                });
            }
            values.push(v);
        }
        out.push(Profile { values });
    }
    Ok(out)
}

pub fn write_profiles<W: Write>(w: W, profiles: &[Profile]) -> Result<(), InstanceError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["day".to_string()];
    header.extend((1..=HOURS).map(|h| format!("h{h}")));
    wr.write_record(&header)?;
    for (d, p) in profiles.iter().enumerate() {
        let mut rec = vec![(d + 1).to_string()];
        rec.extend(p.values.iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResKind {
    Solar,
    Wind,
}

/// Synthetic daily profile. Solar is a noisy sine hump over hours 6–21 and
/// zero at night; wind is a smoothed, mean-reverting bounded walk.
pub fn synth_profile(rng: &mut Rng, kind: ResKind) -> Profile {
    let mut v = vec![0.0; HOURS];
    match kind {
        ResKind::Solar => {
            let peak = rng.uniform(0.5, 1.0);
            // Hours are 1-based: h = t + 1, daylight h ∈ 6..=21.
            for (t, slot) in v.iter_mut().enumerate() {
                let h = t + 1;
                if (6..=21).contains(&h) {
                    let phase = (h as f64 - 5.5) / 16.0 * std::f64::consts::PI;
                    let noise = 1.0 + rng.uniform(-0.2, 0.2);
                    *slot = (peak * phase.sin().powf(1.5) * noise).clamp(0.0, 1.0);
                }
            }
        }
        ResKind::Wind => {
            let level = rng.uniform(0.4, 0.6);
            let mut x = (level + rng.uniform(-0.1, 0.1)).clamp(0.0, 1.0);
            let mut step = 0.0f64;
            for slot in v.iter_mut() {
                let push = (0.3 * (level - x) + rng.uniform(-0.1, 0.1))
                    .clamp(-WIND_MAX_STEP, WIND_MAX_STEP);
                step = 0.6 * step + 0.4 * push;
                x = (x + step).clamp(0.0, 1.0);
                *slot = x;
            }
        }
    }
    Profile { values: v }
}

/// Pool of `count` synthetic profiles, alternating solar and wind.
pub fn synthetic_pool(seed: u64, count: usize) -> Vec<Profile> {
    (0..count)
        .map(|i| {
            let kind = if i % 2 == 0 { ResKind::Solar } else { ResKind::Wind };
            synth_profile(&mut Rng::derive(seed, i as u64, "profile"), kind)
        })
        .collect()
}

/// Pool of `count` synthetic wind profiles.
pub fn synthetic_wind_pool(seed: u64, count: usize) -> Vec<Profile> {
    (0..count)
        .map(|i| synth_profile(&mut Rng::derive(seed, i as u64, "wind"), ResKind::Wind))
        .collect()
}

/// Scaling of the tracking signal `shape·D − res·R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptScaling {
    pub demand_shape: Vec<f64>,
    /// `D` as a multiple of the fleet's mean discharge rating.
    pub demand_factor: f64,
    /// `R` as a multiple of `D`.
    pub res_factor: f64,
}

impl Default for SptScaling {
    fn default() -> Self {
        SptScaling {
            demand_shape: DEMAND_SHAPE.to_vec(),
            demand_factor: 1.2,
            res_factor: 1.5,
        }
    }
}

impl SptScaling {
    /// Reads a demand shape of 24 comma- or whitespace-separated values.
    pub fn with_shape_file(mut self, path: &Path) -> Result<SptScaling, InstanceError> {
        let text = std::fs::read_to_string(path)?;
        let vals: Result<Vec<f64>, _> = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        let vals = vals.map_err(|e| InstanceError::Dataset(format!("demand shape: {e}")))?;
        if vals.len() != HOURS || vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(InstanceError::Dataset(
                "demand shape needs 24 nonnegative values".into(),
            ));
        }
        self.demand_shape = vals;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptInstance {
    pub horizon: usize,
    pub signal: Vec<f64>,
    pub fleet: Vec<(BessParams, BessInitial)>,
    /// Position of the renewable profile in the pool.
    pub profile: usize,
}

pub fn make_spt_instance(
    rng: &mut Rng,
    n_bess: usize,
    profiles: &[Profile],
) -> Result<SptInstance, InstanceError> {
    make_spt_instance_with(rng, n_bess, profiles, &SptScaling::default())
}

pub fn make_spt_instance_with(
    rng: &mut Rng,
    n_bess: usize,
    profiles: &[Profile],
    scaling: &SptScaling,
) -> Result<SptInstance, InstanceError> {
    if profiles.is_empty() {
        return Err(InstanceError::EmptyPool);
    }
    if n_bess == 0 {
        return Err(InstanceError::Dataset("fleet must be nonempty".into()));
    }
    let fleet: Vec<_> = (0..n_bess).map(|_| sample_bess(rng)).collect();
    let profile = rng.index(profiles.len());
    let mean_pd = fleet.iter().map(|(p, _)| p.p_d_max).sum::<f64>() / n_bess as f64;
    let d = scaling.demand_factor * mean_pd;
    let r = scaling.res_factor * d;
    let res = profiles[profile].values();
    let signal = (0..HOURS)
        .map(|t| scaling.demand_shape[t] * d - res[t] * r)
        .collect();
    Ok(SptInstance {
        horizon: HOURS,
        signal,
        fleet,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub from: usize,
    pub to: usize,
    pub existing: f64,
    pub candidate: f64,
    pub count: usize,
    /// Cost of one candidate line per represented day.
    pub capex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub node: usize,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSite {
    pub node: usize,
    pub capacity: f64,
}

/// Network, cost and demand data of the expansion study (nodes 1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TepDataset {
    pub shed_penalty: f64,
    pub storage_node: usize,
    pub demand_node: usize,
    pub demand_peak: f64,
    pub demand_shape: Vec<f64>,
    pub corridors: Vec<Corridor>,
    pub generators: Vec<Generator>,
    pub wind: Vec<WindSite>,
}

pub const TEP_NODES: usize = 3;

impl TepDataset {
    pub fn default_dataset() -> TepDataset {
        TepDataset::from_toml(DEFAULT_TEP).expect("bundled dataset is valid")
    }

    pub fn from_toml(text: &str) -> Result<TepDataset, InstanceError> {
        let d: TepDataset =
            toml::from_str(text).map_err(|e| InstanceError::Dataset(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<TepDataset, InstanceError> {
        TepDataset::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |m: String| Err(InstanceError::Dataset(m));
        let node_ok = |n: usize| (1..=TEP_NODES).contains(&n);
        if self.demand_shape.len() != HOURS || self.demand_shape.iter().any(|v| *v < 0.0) {
            return bad("demand_shape needs 24 nonnegative values".into());
        }
        if !(self.demand_peak >= 0.0 && self.shed_penalty > 0.0) {
            return bad("demand_peak must be >= 0 and shed_penalty > 0".into());
        }
        if !node_ok(self.storage_node) || !node_ok(self.demand_node) {
            return bad("storage and demand nodes must be 1..=3".into());
        }
        for c in &self.corridors {
            if !node_ok(c.from) || !node_ok(c.to) || c.from == c.to {
                return bad(format!("corridor {}-{} must join distinct nodes", c.from, c.to));
            }
            if c.existing < 0.0 || c.candidate < 0.0 || c.capex < 0.0 {
                return bad(format!("corridor {}-{} has negative data", c.from, c.to));
            }
        }
        if self.generators.iter().any(|g| !node_ok(g.node) || g.capacity < 0.0) {
            return bad("generators need a valid node and capacity >= 0".into());
        }
        if self.wind.iter().any(|w| !node_ok(w.node) || w.capacity < 0.0) {
            return bad("wind sites need a valid node and capacity >= 0".into());
        }
        Ok(())
    }

    /// Total capacity if every candidate line is built.
    pub fn candidate_capacity(&self) -> f64 {
        self.corridors
            .iter()
            .map(|c| c.candidate * c.count as f64)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TepInstance {
    pub data: TepDataset,
    pub days: usize,
    /// `demand[node][hour]`, nodes 0-based.
    pub demand: Vec<Vec<f64>>,
    /// `wind_profiles[site][day]`, one profile per wind site and day.
    pub wind_profiles: Vec<Vec<Profile>>,
    /// Batteries at `data.storage_node`.
    pub fleet: Vec<(BessParams, BessInitial)>,
}

pub fn make_tep_instance(
    rng: &mut Rng,
    n_bess: usize,
    days: usize,
    profiles: &[Profile],
) -> Result<TepInstance, InstanceError> {
    make_tep_instance_with(rng, n_bess, days, profiles, &TepDataset::default_dataset())
}

pub fn make_tep_instance_with(
    rng: &mut Rng,
    n_bess: usize,
    days: usize,
    profiles: &[Profile],
    data: &TepDataset,
) -> Result<TepInstance, InstanceError> {
    if profiles.is_empty() {
        return Err(InstanceError::EmptyPool);
    }
    if days == 0 {
        return Err(InstanceError::Dataset("days must be >= 1".into()));
    }
    data.validate()?;
    let fleet = (0..n_bess).map(|_| sample_bess(rng)).collect();
    let wind_profiles = data
        .wind
        .iter()
        .map(|_| {
            (0..days)
                .map(|_| profiles[rng.index(profiles.len())].clone())
                .collect()
        })
        .collect();
    let mut demand = vec![vec![0.0; HOURS]; TEP_NODES];
    for (t, s) in data.demand_shape.iter().enumerate() {
        demand[data.demand_node - 1][t] = s * data.demand_peak;
    }
    Ok(TepInstance {
        data: data.clone(),
        days,
        demand,
        wind_profiles,
        fleet,
    })
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("instances serialize");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_are_order_independent() {
        let a1 = Rng::derive(7, 3, "spt").uniform(0.0, 1.0);
        let _ = Rng::derive(7, 2, "spt").uniform(0.0, 1.0);
        let a2 = Rng::derive(7, 3, "spt").uniform(0.0, 1.0);
        assert_eq!(a1.to_bits(), a2.to_bits());
        assert_ne!(a1, Rng::derive(7, 3, "tep").uniform(0.0, 1.0));
    }

    #[test]
    fn sampled_batteries_are_valid_and_half_full() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let (p, i) = sample_bess(&mut rng);
            p.validate().unwrap();
            assert!(p.e_min < 30.0 && p.e_max > 40.0);
            assert_eq!(i.e0, 0.5 * (p.e_min + p.e_max));
            assert!(i.e0 > p.e_min && i.e0 < p.e_max);
        }
    }

    #[test]
    fn zero_profile_row_parses() {
        let mut text = String::from("day");
        for h in 1..=24 {
            text.push_str(&format!(",h{h}"));
        }
        text.push_str("\n1");
        text.push_str(&",0".repeat(24));
        text.push('\n');
        let p = read_profiles(text.as_bytes()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_value_names_row_and_column() {
        let mut text = String::from("day");
        for h in 1..=24 {
            text.push_str(&format!(",h{h}"));
        }
        text.push_str("\n1,1.2");
        text.push_str(&",0".repeat(23));
        text.push('\n');
        let err = read_profiles(text.as_bytes()).unwrap_err();
        assert!(matches!(err, InstanceError::OutOfRange { row: 1, ref column, .. } if column == "h1"));
        assert!(err.to_string().contains("h1"));
    }

    #[test]
    fn short_rows_are_rejected() {
        let mut text = String::from("day");
        for h in 1..=24 {
            text.push_str(&format!(",h{h}"));
        }
        text.push_str("\n1,0.5,0.5\n");
        assert!(matches!(
            read_profiles(text.as_bytes()),
            Err(InstanceError::ColumnCount { row: 1, found: 3 })
        ));
    }

    #[test]
    fn solar_is_dark_at_night() {
        for seed in 0..50 {
            let p = synth_profile(&mut Rng::new(seed), ResKind::Solar);
            for h in (1..=5).chain(22..=24) {
                assert_eq!(p.values()[h - 1], 0.0);
            }
        }
    }

    #[test]
    fn wind_steps_are_bounded() {
        for seed in 0..50 {
            let p = synth_profile(&mut Rng::new(seed), ResKind::Wind);
            for w in p.values().windows(2) {
                assert!((w[1] - w[0]).abs() <= WIND_MAX_STEP + 1e-15);
            }
        }
    }

    #[test]
    fn no_renewables_gives_scaled_demand() {
        let pool = vec![Profile::new(vec![0.0; 24]).unwrap()];
        let inst = make_spt_instance(&mut Rng::new(3), 2, &pool).unwrap();
        assert_eq!(inst.fleet.len(), 2);
        let mean_pd = (inst.fleet[0].0.p_d_max + inst.fleet[1].0.p_d_max) / 2.0;
        for t in 0..24 {
            assert!((inst.signal[t] - DEMAND_SHAPE[t] * 1.2 * mean_pd).abs() < 1e-12);
            assert!(inst.signal[t] >= 0.0);
        }
        assert!(matches!(
            make_spt_instance(&mut Rng::new(3), 1, &[]),
            Err(InstanceError::EmptyPool)
        ));
    }

    #[test]
    fn default_dataset_shape() {
        let d = TepDataset::default_dataset();
        assert_eq!(d.corridors.len(), 3);
        assert_eq!(d.candidate_capacity(), 270.0);
        let g1 = d.generators.iter().find(|g| g.node == 1).unwrap();
        let g2 = d.generators.iter().find(|g| g.node == 2).unwrap();
        assert!(g1.cost < g2.cost);
        assert!(d.shed_penalty > 100.0 * g2.cost);
    }

    #[test]
    fn tep_instance_attaches_profiles_per_site_and_day() {
        let pool = synthetic_wind_pool(1, 20);
        let inst = make_tep_instance(&mut Rng::new(5), 3, 50, &pool).unwrap();
        assert_eq!(inst.fleet.len(), 3);
        assert_eq!(inst.wind_profiles.len(), 3);
        assert!(inst.wind_profiles.iter().all(|d| d.len() == 50));
        assert!(make_tep_instance(&mut Rng::new(5), 1, 1, &pool).is_ok());
    }

    #[test]
    fn digest_is_stable() {
        let pool = synthetic_pool(2, 10);
        let a = make_spt_instance(&mut Rng::derive(1, 0, "x"), 1, &pool).unwrap();
        let b = make_spt_instance(&mut Rng::derive(1, 0, "x"), 1, &pool).unwrap();
        assert_eq!(digest(&a), digest(&b));
        assert_eq!(digest(&a).len(), 64);
    }
}
