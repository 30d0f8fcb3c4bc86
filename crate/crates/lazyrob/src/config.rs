//! Experiment configuration: one JSON file per experiment, every field
//! optional, command-line flags applied on top.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lazyrob_core::attacks::PgdStep;
use lazyrob_core::training::{LazyRadius, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Project inputs onto the unit sphere (dropping all-zero images).
    pub normalize: bool,
    pub grid: Grid,
    pub seeds: Vec<u64>,
    pub trainer: TrainerSpec,
    pub attack: AttackSpec,
    pub verify: VerifySpec,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            normalize: true,
            grid: Grid::default(),
            seeds: vec![0],
            trainer: TrainerSpec::default(),
            attack: AttackSpec::default(),
            verify: VerifySpec::default(),
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two classes separated along `e₁` by `margin`; see `synth_sphere`.
    Synth { n_train: usize, n_test: usize, margin: f64, seed: u64 },
    /// IDX files (plain or gzip). `neg_digit` maps to `−1`, `pos_digit` to `+1`.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        pos_digit: u8,
        neg_digit: u8,
        max_train: Option<usize>,
        max_test: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synth { n_train: 1000, n_test: 200, margin: 0.5, seed: 1 }
    }
}

/// How the `v` grid values become lazy radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VScale {
    Absolute,
    /// `V = v/√m`.
    InvSqrtM,
}

/// How the `r` grid values become perturbation budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RScale {
    Absolute,
    /// `R = r/√d`.
    InvSqrtD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub d: Vec<usize>,
    pub m: Vec<usize>,
    /// Lazy constants for `train` (radius `C₀/√m`).
    pub c0: Vec<f64>,
    /// Lazy radii for `advtrain`.
    pub v: Vec<f64>,
    pub v_scale: VScale,
    /// Perturbation budgets for `advtrain`.
    pub r: Vec<f64>,
    pub r_scale: RScale,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            d: vec![25, 49, 100, 196, 400],
            m: vec![1000],
            c0: vec![10.0],
            v: vec![10.0],
            v_scale: VScale::InvSqrtM,
            r: vec![2.0, 10.0],
            r_scale: RScale::InvSqrtD,
        }
    }
}

impl Grid {
    pub fn lazy_radius(&self, v: f64, m: usize) -> f64 {
        match self.v_scale {
            VScale::Absolute => v,
            VScale::InvSqrtM => v / (m as f64).sqrt(),
        }
    }

    pub fn budget(&self, r: f64, d: usize) -> f64 {
        match self.r_scale {
            RScale::Absolute => r,
            RScale::InvSqrtD => r / (d as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Sgd,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Normalized,
    Raw,
}

impl From<StepRule> for PgdStep {
    fn from(s: StepRule) -> Self {
        match s {
            StepRule::Normalized => PgdStep::Normalized,
            StepRule::Raw => PgdStep::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSpec {
    /// Trainer used by `train`; `advtrain` is always adversarial.
    pub kind: TrainerKind,
    pub lr_sgd: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub inner_pgd_steps: usize,
    pub pgd_alpha: Option<f64>,
    pub pgd_step: StepRule,
    /// Budget used by `train` with the adversarial trainer.
    pub pgd_budget: f64,
}

impl Default for TrainerSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            kind: TrainerKind::Sgd,
            lr_sgd: t.lr_sgd,
            beta: t.beta,
            batch_size: t.batch_size,
            max_epochs: 50,
            patience: t.patience,
            inner_pgd_steps: t.inner_pgd_steps,
            pgd_alpha: None,
            pgd_step: StepRule::Normalized,
            pgd_budget: t.pgd_budget,
        }
    }
}

impl TrainerSpec {
    pub fn train_config(&self, radius: LazyRadius, pgd_budget: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            lr_sgd: self.lr_sgd,
            beta: self.beta,
            batch_size: self.batch_size,
            radius,
            max_epochs: self.max_epochs,
            inner_pgd_steps: self.inner_pgd_steps,
            pgd_budget,
            pgd_alpha: self.pgd_alpha,
            pgd_step: self.pgd_step.into(),
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Smallest flipping step along the gradient, searched up to `eta_max`.
    MinimalEta,
    /// One step with `|η| = c2/‖∇f‖²`.
    SingleStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub eta_max: f64,
    pub tol: f64,
    pub c2: f64,
    /// PGD iterations when measuring robust accuracy.
    pub pgd_steps: usize,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self { kind: AttackKind::MinimalEta, eta_max: 10.0, tol: 1e-9, c2: 1.0, pgd_steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub d: Vec<usize>,
    pub m: Vec<usize>,
    pub c0: Vec<f64>,
    pub gammas: Vec<f64>,
    pub seed_start: u64,
    pub n_seeds: usize,
    /// Random perturbations per gradient-difference probe.
    pub grad_diff_probes: usize,
    /// Constant `C₁` of the gradient-difference bound; probes use `R = C₁/√d`.
    pub c1: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            d: vec![100, 400],
            m: vec![1000, 10_000],
            c0: vec![1.0, 10.0],
            gammas: vec![0.1, 0.3],
            seed_start: 0,
            n_seeds: 300,
            grad_diff_probes: 100,
            c1: 1.0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed_offset: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies overrides. Any IDX path flag switches the dataset to IDX input;
    /// missing paths are then a config error at validation time.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        for s in self.seeds.iter_mut() {
            *s = s.wrapping_add(o.seed_offset);
        }
        self.verify.seed_start = self.verify.seed_start.wrapping_add(o.seed_offset);
        let flags = [&o.train_images, &o.train_labels, &o.test_images, &o.test_labels];
        if flags.iter().all(|f| f.is_none()) {
            return;
        }
        if !matches!(self.dataset, DatasetSpec::Mnist { .. }) {
            self.dataset = DatasetSpec::Mnist {
                train_images: PathBuf::new(),
                train_labels: PathBuf::new(),
                test_images: PathBuf::new(),
                test_labels: PathBuf::new(),
                pos_digit: 1,
                neg_digit: 0,
                max_train: None,
                max_test: None,
            };
        }
        if let DatasetSpec::Mnist { train_images, train_labels, test_images, test_labels, .. } = &mut self.dataset {
            for (slot, flag) in [train_images, train_labels, test_images, test_labels].into_iter().zip(flags) {
                if let Some(p) = flag {
                    *slot = p.clone();
                }
            }
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        match &self.dataset {
            DatasetSpec::Synth { n_train, n_test, margin, .. } => {
                if *n_train == 0 || *n_test == 0 {
                    return bad("synthetic dataset sizes must be positive");
                }
                if !(0.0..1.0).contains(margin) {
                    return bad("synthetic margin must lie in [0, 1)");
                }
            }
            DatasetSpec::Mnist {
                train_images, train_labels, test_images, test_labels, pos_digit, neg_digit, ..
            } => {
                if [train_images, train_labels, test_images, test_labels].iter().any(|p| p.as_os_str().is_empty()) {
                    return bad("all four IDX paths are required");
                }
                if pos_digit == neg_digit || *pos_digit > 9 || *neg_digit > 9 {
                    return bad("digits must be distinct and in 0..=9");
                }
                for &d in &self.grid.d {
                    let k = (d as f64).sqrt().round() as usize;
                    if k * k != d || k == 0 || k > 28 {
                        return bad("image inputs need d = k² with 1 ≤ k ≤ 28");
                    }
                }
            }
        }
        let g = &self.grid;
        if g.d.iter().chain(&g.m).any(|&v| v == 0) {
            return bad("grid dimensions must be positive");
        }
        if g.c0.iter().chain(&g.v).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return bad("lazy constants must be finite and non-negative");
        }
        if g.r.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("perturbation budgets must be positive");
        }
        let t = &self.trainer;
        self.trainer
            .train_config(LazyRadius::C0(1.0), t.pgd_budget, 0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(t.pgd_budget > 0.0) {
            return bad("trainer pgd_budget must be positive");
        }
        let a = &self.attack;
        if !(a.eta_max > 0.0) || !(a.tol > 0.0) || !(a.c2 > 0.0) || a.pgd_steps == 0 {
            return bad("attack eta_max, tol, c2 and pgd_steps must be positive");
        }
        let v = &self.verify;
        if v.d.iter().chain(&v.m).any(|&x| x == 0) || v.c0.iter().any(|&c| !(c >= 0.0)) {
            return bad("verify grid values must be positive");
        }
        if v.gammas.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return bad("gammas must lie in (0, 1)");
        }
        if !(v.c1 > 0.0) {
            return bad("verify c1 must be positive");
        }
        Ok(())
    }

    /// Rejects empty grids for the axes a command sweeps over.
    pub fn require_nonempty(&self, axes: &[(&str, usize)]) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        match axes.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(CliError::Config(format!("grid `{name}` is empty"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"grid": {"d": [4]}, "seeds": [3, 4]}"#).unwrap();
        assert_eq!(c.grid.d, vec![4]);
        assert_eq!(c.grid.m, Grid::default().m);
        assert_eq!(c.seeds, vec![3, 4]);
    }

    #[test]
    fn unknown_fields_and_duplicate_seeds_are_config_errors() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"sedes": [1]}"#), Err(CliError::Config(_))));
        let c = ExperimentConfig { seeds: vec![1, 1], ..Default::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn overrides_shift_seeds_and_switch_dataset() {
        let mut c = ExperimentConfig { seeds: vec![0, 5], ..Default::default() };
        let o = Overrides {
            seed_offset: 10,
            train_images: Some("a".into()),
            out: Some("elsewhere".into()),
            ..Default::default()
        };
        c.apply(&o);
        assert_eq!(c.seeds, vec![10, 15]);
        assert_eq!(c.out, PathBuf::from("elsewhere"));
        assert!(matches!(&c.dataset, DatasetSpec::Mnist { train_images, .. } if train_images == Path::new("a")));
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn scaled_axes() {
        let g = Grid::default();
        assert!((g.lazy_radius(10.0, 100) - 1.0).abs() < 1e-15);
        assert!((g.budget(2.0, 100) - 0.2).abs() < 1e-15);
    }
}
