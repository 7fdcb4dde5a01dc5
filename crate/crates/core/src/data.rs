//! Shared domain types and the JSON-lines trajectory dataset format.
//!
//! One trajectory per line; a sidecar `*.manifest.json` carries dataset-level
//! metadata (environment id, provenance, degradation levels, generation seed).
//! Reals round-trip bit-exactly through the shortest-decimal encoding, so
//! `load(save(d)) == d` field for field.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State or action space description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Continuous {
        dim: usize,
        /// Per-dimension [lo, hi].
        bounds: Vec<(f64, f64)>,
    },
    Discrete {
        cardinality: usize,
    },
}

impl SpaceSpec {
    pub fn continuous(bounds: Vec<(f64, f64)>) -> Self {
        SpaceSpec::Continuous {
            dim: bounds.len(),
            bounds,
        }
    }

    pub fn discrete(cardinality: usize) -> Self {
        SpaceSpec::Discrete { cardinality }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceSpec::Continuous { dim, bounds } => {
                if *dim == 0 {
                    return Err(Error::Validation("continuous space needs dim >= 1".into()));
                }
                if bounds.len() != *dim {
                    return Err(Error::Validation(format!(
                        "bounds length {} != dim {dim}",
                        bounds.len()
                    )));
                }
                for (i, (lo, hi)) in bounds.iter().enumerate() {
                    if !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::NonFinite(format!("bounds[{i}]")));
                    }
                    if lo >= hi {
                        return Err(Error::Validation(format!(
                            "bounds[{i}]: lo {lo} must be < hi {hi}"
                        )));
                    }
                }
                Ok(())
            }
            SpaceSpec::Discrete { cardinality } => {
                if *cardinality < 2 {
                    return Err(Error::Validation(format!(
                        "discrete space needs cardinality >= 2, got {cardinality}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Width of the vector encoding used as network input: raw components for
    /// continuous, one-hot for discrete.
    pub fn encoded_dim(&self) -> usize {
        match self {
            SpaceSpec::Continuous { dim, .. } => *dim,
            SpaceSpec::Discrete { cardinality } => *cardinality,
        }
    }
}

/// A single action: an index into a discrete space or a vector in a box.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn is_finite(&self) -> bool {
        match self {
            Action::Discrete(_) => true,
            Action::Continuous(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    pub fn matches_space(&self, space: &SpaceSpec) -> bool {
        match (self, space) {
            (Action::Discrete(a), SpaceSpec::Discrete { cardinality }) => a < cardinality,
            (Action::Continuous(v), SpaceSpec::Continuous { dim, .. }) => v.len() == *dim,
            _ => false,
        }
    }
}

/// One rollout: states and actions of equal length T (the state at each
/// decision paired with the action taken; no terminal state), per-step
/// initial-reward estimates once scored, and the degradation label.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Degradation level in [0, 1]; 1 is most degraded.
    pub eta: f64,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    /// Per-step estimates from the scoring reward model; empty until scored.
    pub initial_rewards: Vec<f64>,
    /// Discounted ground-truth return. Evaluation only, hidden from learning.
    pub gt_return: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() {
            return Err(Error::NonFinite("eta".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Validation(format!("eta out of [0,1]: {}", self.eta)));
        }
        if self.states.is_empty() {
            return Err(Error::Validation("trajectory has no states".into()));
        }
        if self.actions.len() != self.states.len() {
            return Err(Error::Validation(format!(
                "actions length {} != states length {}",
                self.actions.len(),
                self.states.len()
            )));
        }
        if !self.initial_rewards.is_empty() && self.initial_rewards.len() != self.states.len() {
            return Err(Error::Validation(format!(
                "initial_rewards length {} != states length {}",
                self.initial_rewards.len(),
                self.states.len()
            )));
        }
        let dim = self.states[0].len();
        for (t, s) in self.states.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Validation(format!(
                    "states[{t}] has dim {} != {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("states[{t}]")));
            }
        }
        for (t, a) in self.actions.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("actions[{t}]")));
            }
        }
        if self.initial_rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("initial_rewards".into()));
        }
        if let Some(g) = self.gt_return {
            if !g.is_finite() {
                return Err(Error::NonFinite("gt_return".into()));
            }
        }
        Ok(())
    }
}

/// Undiscounted sum of the per-step initial-reward estimates.
pub fn trajectory_return(t: &Trajectory) -> Result<f64> {
    if t.initial_rewards.is_empty() {
        return Err(Error::Validation(
            "trajectory has no initial rewards; score it first".into(),
        ));
    }
    Ok(t.initial_rewards.iter().sum())
}

/// How a degradation dataset was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Noise,
    DemoCount,
    Capacity,
    Sparsity,
    /// Raw demonstration sets that reuse the trajectory line format.
    Demo,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::Noise => "noise",
            Provenance::DemoCount => "demo_count",
            Provenance::Capacity => "capacity",
            Provenance::Sparsity => "sparsity",
            Provenance::Demo => "demo",
        };
        f.write_str(s)
    }
}

/// Labeled trajectories spanning degradation levels; the interface between
/// trajectory generation and curve fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationDataset {
    pub env_id: String,
    pub provenance: Provenance,
    /// Sorted distinct degradation levels present.
    pub levels: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

impl DegradationDataset {
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::Validation(format!(
                ">=2 levels required, got {}",
                self.levels.len()
            )));
        }
        for w in self.levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Validation(
                    "levels must be strictly ascending".into(),
                ));
            }
        }
        for l in &self.levels {
            if !l.is_finite() {
                return Err(Error::NonFinite("levels".into()));
            }
            if !(0.0..=1.0).contains(l) {
                return Err(Error::Validation(format!("level out of [0,1]: {l}")));
            }
        }
        let mut per_level = vec![0usize; self.levels.len()];
        for (i, t) in self.trajectories.iter().enumerate() {
            t.validate()
                .map_err(|e| Error::Validation(format!("trajectory {i}: {e}")))?;
            match self.levels.iter().position(|&l| l == t.eta) {
                Some(k) => per_level[k] += 1,
                None => {
                    return Err(Error::Validation(format!(
                        "trajectory {i} eta {} not in levels",
                        t.eta
                    )))
                }
            }
        }
        if let Some(k) = per_level.iter().position(|&c| c == 0) {
            return Err(Error::Validation(format!(
                "level {} has no trajectories",
                self.levels[k]
            )));
        }
        Ok(())
    }
}

// --- wire format ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ActionWire {
    Discrete([u64; 1]),
    Continuous(Vec<f64>),
}

impl From<&Action> for ActionWire {
    fn from(a: &Action) -> Self {
        match a {
            Action::Discrete(i) => ActionWire::Discrete([*i as u64]),
            Action::Continuous(v) => ActionWire::Continuous(v.clone()),
        }
    }
}

impl From<ActionWire> for Action {
    fn from(w: ActionWire) -> Self {
        match w {
            ActionWire::Discrete([i]) => Action::Discrete(i as usize),
            ActionWire::Continuous(v) => Action::Continuous(v),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    eta: f64,
    states: Vec<Vec<f64>>,
    actions: Vec<ActionWire>,
    initial_rewards: Vec<f64>,
    gt_return: Option<f64>,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        TrajectoryRecord {
            eta: t.eta,
            states: t.states.clone(),
            actions: t.actions.iter().map(ActionWire::from).collect(),
            initial_rewards: t.initial_rewards.clone(),
            gt_return: t.gt_return,
        }
    }
}

impl From<TrajectoryRecord> for Trajectory {
    fn from(r: TrajectoryRecord) -> Self {
        Trajectory {
            eta: r.eta,
            states: r.states,
            actions: r.actions.into_iter().map(Action::from).collect(),
            initial_rewards: r.initial_rewards,
            gt_return: r.gt_return,
        }
    }
}

/// Sidecar metadata next to a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub env_id: String,
    pub provenance: Provenance,
    pub levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Digest of the reward model that filled `initial_rewards`, when scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_model_digest: Option<String>,
    /// Method-specific control values behind each level, when systematic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<f64>>,
}

/// `dataset.jsonl` -> `dataset.manifest.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Write raw trajectories, one JSON record per line. No sidecar.
pub fn save_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    for (i, t) in trajectories.iter().enumerate() {
        t.validate()
            .map_err(|e| Error::Validation(format!("trajectory {i}: {e}")))?;
    }
    let file = File::create(path).map_err(|e| Error::io(display(path), e))?;
    let mut w = BufWriter::new(file);
    for t in trajectories {
        let line = serde_json::to_string(&TrajectoryRecord::from(t))
            .map_err(|e| Error::Validation(format!("serialize: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(display(path), e))?;
    }
    w.flush().map_err(|e| Error::io(display(path), e))?;
    Ok(())
}

/// Read raw trajectories; parse errors name the failing record index.
pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(display(path), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(display(path), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: display(path),
            record: i,
            msg: e.to_string(),
        })?;
        let t = Trajectory::from(rec);
        t.validate().map_err(|e| Error::Parse {
            path: display(path),
            record: i,
            msg: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Validate and write a dataset plus its sidecar manifest.
pub fn save_dataset(dataset: &DegradationDataset, path: &Path, seed: Option<u64>) -> Result<()> {
    save_dataset_with(dataset, path, seed, None, None)
}

pub fn save_dataset_with(
    dataset: &DegradationDataset,
    path: &Path,
    seed: Option<u64>,
    scoring_model_digest: Option<String>,
    controls: Option<Vec<f64>>,
) -> Result<()> {
    dataset.validate()?;
    save_trajectories(&dataset.trajectories, path)?;
    let manifest = DatasetManifest {
        env_id: dataset.env_id.clone(),
        provenance: dataset.provenance,
        levels: dataset.levels.clone(),
        seed,
        scoring_model_digest,
        controls,
    };
    let side = sidecar_path(path);
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Validation(format!("serialize manifest: {e}")))?;
    std::fs::write(&side, body).map_err(|e| Error::io(display(&side), e))?;
    Ok(())
}

/// Load a dataset and its sidecar; invariants are re-validated.
pub fn load_dataset(path: &Path) -> Result<DegradationDataset> {
    let side = sidecar_path(path);
    let body = std::fs::read_to_string(&side).map_err(|e| Error::io(display(&side), e))?;
    let manifest: DatasetManifest = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: display(&side),
        record: 0,
        msg: e.to_string(),
    })?;
    let trajectories = load_trajectories(path)?;
    let dataset = DegradationDataset {
        env_id: manifest.env_id,
        provenance: manifest.provenance,
        levels: manifest.levels,
        trajectories,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Load just the sidecar metadata.
pub fn load_dataset_manifest(path: &Path) -> Result<DatasetManifest> {
    let side = sidecar_path(path);
    let body = std::fs::read_to_string(&side).map_err(|e| Error::io(display(&side), e))?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: display(&side),
        record: 0,
        msg: e.to_string(),
    })
}

// --- curve + run manifest types ------------------------------------------

/// Parameters of the degradation–performance curve
/// `sigma(eta) = c / (1 + exp(-k (eta - x0))) + y0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    /// Range scale.
    pub c: f64,
    /// Steepness.
    pub k: f64,
    /// Midpoint.
    pub x0: f64,
    /// Offset.
    pub y0: f64,
}

impl SigmoidParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("k", self.k), ("x0", self.x0), ("y0", self.y0)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sigmoid parameter {name}")));
            }
        }
        Ok(())
    }
}

/// Record of one artifact written by a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub artifacts: Vec<ArtifactRecord>,
}

/// Self-describing run metadata: seed + config digest + per-stage artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config_digest: String,
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: u64, config_digest: String) -> Self {
        RunManifest {
            seed,
            config_digest,
            stages: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Digest of a JSON value, stable under field reordering (object keys are
/// serialized sorted).
pub fn canonical_digest(value: &serde_json::Value) -> String {
    // serde_json's default Map is a BTreeMap, so keys come out sorted.
    sha256_hex(value.to_string().as_bytes())
}
