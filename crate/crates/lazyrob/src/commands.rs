//! The five subcommands. Each expands its grid into independent runs,
//! executes them on up to `jobs` threads and writes results in grid order,
//! so output never depends on scheduling.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lazyrob_core::attacks::{minimal_eta_search, robust_accuracy, single_step_attack, AttackOutcome, PgdConfig};
use lazyrob_core::data::{downsample, extract_binary, synth_sphere, to_sphere_dataset, LabeledDataset, RawImageSet};
use lazyrob_core::network::init_network;
use lazyrob_core::theory::{grad_diff_probe, LemmaMonteCarlo};
use lazyrob_core::training::{
    projected_adversarial_train_with, sgd_lazy_train_with, EpochRecord, LazyRadius, TrainReport,
};
use lazyrob_core::{linalg::norm2, NetworkParams, Rng};

use crate::config::{AttackKind, DatasetSpec, ExperimentConfig, TrainerKind};
use crate::error::{CliError, CliResult};
use crate::files::{load_idx_pair, save_dataset, Checkpoint};
use crate::report::{median, num, Provenance, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Advtrain,
    Attack,
    Verify,
    DataPrepare,
}

/// Runs `command` and returns a one-line summary.
pub fn run(command: Command, cfg: &ExperimentConfig, jobs: usize) -> CliResult<String> {
    cfg.validate()?;
    match command {
        Command::Train => cmd_train(cfg, jobs),
        Command::Advtrain => cmd_advtrain(cfg, jobs),
        Command::Attack => cmd_attack(cfg, jobs),
        Command::Verify => cmd_verify(cfg, jobs),
        Command::DataPrepare => cmd_data_prepare(cfg),
    }
}

/// Evaluates `f(0..n)` on up to `jobs` threads; results keep index order and
/// the lowest-index error wins.
pub fn run_pool<T, F>(n: usize, jobs: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every index ran")).collect()
}

/// Train and test sets at one input dimension.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub dropped_train: usize,
    pub dropped_test: usize,
}

/// Where examples come from: the synthetic generator or decoded IDX files.
pub enum DataSource {
    Synth { n_train: usize, n_test: usize, margin: f64, seed: u64 },
    Images { train: RawImageSet, test: RawImageSet, neg_digit: u8, max_train: Option<usize>, max_test: Option<usize> },
}

impl DataSource {
    pub fn open(cfg: &ExperimentConfig) -> CliResult<Self> {
        Ok(match &cfg.dataset {
            &DatasetSpec::Synth { n_train, n_test, margin, seed } => {
                DataSource::Synth { n_train, n_test, margin, seed }
            }
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                pos_digit,
                neg_digit,
                max_train,
                max_test,
            } => {
                let binary = |img: &Path, lab: &Path| -> CliResult<RawImageSet> {
                    let raw = load_idx_pair(img, lab)?;
                    extract_binary(&raw, *pos_digit, *neg_digit).map_err(|e| CliError::Data(e.to_string()))
                };
                DataSource::Images {
                    train: binary(train_images, train_labels)?,
                    test: binary(test_images, test_labels)?,
                    neg_digit: *neg_digit,
                    max_train: *max_train,
                    max_test: *max_test,
                }
            }
        })
    }

    /// Builds the split at input dimension `d` (images are downsampled to
    /// `√d × √d`). Synthetic points are always on the sphere.
    pub fn split(&self, d: usize, normalize: bool) -> CliResult<Split> {
        match self {
            &DataSource::Synth { n_train, n_test, margin, seed } => Ok(Split {
                train: synth_sphere(&mut Rng::with_stream(seed, 1), d, n_train, margin)?,
                test: synth_sphere(&mut Rng::with_stream(seed, 2), d, n_test, margin)?,
                dropped_train: 0,
                dropped_test: 0,
            }),
            DataSource::Images { train, test, neg_digit, max_train, max_test } => {
                let k = (d as f64).sqrt().round() as usize;
                let convert = |raw: &RawImageSet, cap: Option<usize>| -> CliResult<(LabeledDataset, usize)> {
                    let conv = to_sphere_dataset(&downsample(raw, k)?, *neg_digit, normalize)?;
                    let data = match cap {
                        Some(n) => conv.dataset.take(n),
                        None => conv.dataset,
                    };
                    Ok((data, conv.dropped))
                };
                let (train, dropped_train) = convert(train, *max_train)?;
                let (test, dropped_test) = convert(test, *max_test)?;
                Ok(Split { train, test, dropped_train, dropped_test })
            }
        }
    }
}

fn splits(cfg: &ExperimentConfig, ds: &[usize]) -> CliResult<Vec<Split>> {
    let source = DataSource::open(cfg)?;
    ds.iter().map(|&d| source.split(d, cfg.normalize)).collect()
}

pub fn run_tag(d: usize, m: usize, c0: f64, seed: u64) -> String {
    format!("d{d}_m{m}_c{c0}_s{seed}")
}

pub fn checkpoint_path(out: &Path, d: usize, m: usize, c0: f64, seed: u64) -> PathBuf {
    out.join("checkpoints").join(format!("{}.ckpt", run_tag(d, m, c0, seed)))
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn report_table(report: &TrainReport) -> Table {
    let mut t = Table::new(&["epoch", "loss", "acc", "robust_acc", "lazy_dev", "stop_reason"]);
    let last = report.epochs.len();
    for (i, e) in report.epochs.iter().enumerate() {
        let reason = if i + 1 == last { report.stop_reason.as_str().to_string() } else { String::new() };
        t.push(vec![e.epoch.to_string(), num(e.loss), num(e.acc), opt(e.robust_acc), num(e.lazy_dev), reason]);
    }
    t
}

/// Trains `p`, rewriting the checkpoint at `ckpt` after every epoch.
fn train_with_checkpoints(
    p: NetworkParams,
    data: &LabeledDataset,
    tc: &lazyrob_core::training::TrainConfig,
    adversarial: bool,
    ckpt: &Path,
    c0: f64,
) -> CliResult<(NetworkParams, TrainReport)> {
    let mut save_err = None;
    let on_epoch = |_: &EpochRecord, q: &NetworkParams| {
        if save_err.is_none() {
            let ck = Checkpoint { params: q.clone(), seed: tc.seed, c0 };
            save_err = ck.save(ckpt).err();
        }
    };
    let out = if adversarial {
        projected_adversarial_train_with(p, data, tc, on_epoch)?
    } else {
        sgd_lazy_train_with(p, data, tc, on_epoch)?
    };
    if let Some(e) = save_err {
        return Err(e);
    }
    Checkpoint { params: out.0.clone(), seed: tc.seed, c0 }.save(ckpt)?;
    Ok(out)
}

fn cmd_train(cfg: &ExperimentConfig, jobs: usize) -> CliResult<String> {
    let g = &cfg.grid;
    cfg.require_nonempty(&[("d", g.d.len()), ("m", g.m.len()), ("c0", g.c0.len())])?;
    let adversarial = cfg.trainer.kind == TrainerKind::Adversarial;
    let data = splits(cfg, &g.d)?;
    if adversarial && !data.iter().all(|s| s.train.normalized()) {
        return Err(CliError::Config("adversarial training needs normalize = true".into()));
    }
    let mut runs = Vec::new();
    for (di, &d) in g.d.iter().enumerate() {
        for &m in &g.m {
            for &c0 in &g.c0 {
                for &seed in &cfg.seeds {
                    runs.push((di, d, m, c0, seed));
                }
            }
        }
    }
    let prov = Provenance::of(cfg);
    let rows = run_pool(runs.len(), jobs, |i| {
        let (di, d, m, c0, seed) = runs[i];
        let split = &data[di];
        let p = init_network(&mut Rng::new(seed), d, m)?;
        let tc = cfg.trainer.train_config(LazyRadius::C0(c0), cfg.trainer.pgd_budget, seed);
        let ckpt = checkpoint_path(&cfg.out, d, m, c0, seed);
        let (q, report) = train_with_checkpoints(p, &split.train, &tc, adversarial, &ckpt, c0)?;
        let tag = run_tag(d, m, c0, seed);
        report_table(&report).write(&cfg.out.join("train").join(format!("{tag}.csv")), &prov)?;
        let last = report.epochs.last();
        Ok(vec![
            d.to_string(),
            m.to_string(),
            num(c0),
            seed.to_string(),
            report.epochs_run().to_string(),
            report.stop_reason.as_str().to_string(),
            report.steps_committed.to_string(),
            opt(last.map(|e| e.loss)),
            num(q.accuracy(split.train.iter())),
            num(q.accuracy(split.test.iter())),
            num(q.lazy_deviation()),
            num(report.radius),
        ])
    })?;
    let mut t = Table::new(&[
        "d",
        "m",
        "C0",
        "seed",
        "epochs",
        "stop_reason",
        "steps",
        "train_loss",
        "train_acc",
        "test_acc",
        "lazy_dev",
        "radius",
    ]);
    rows.into_iter().for_each(|r| t.push(r));
    t.write(&cfg.out.join("train_summary.csv"), &prov)?;
    Ok(format!("trained {} networks", t.len()))
}

/// Per-example attack result; a vanishing gradient yields a non-flipped row.
fn attack_one(cfg: &ExperimentConfig, p: &NetworkParams, x: &[f64]) -> CliResult<AttackOutcome> {
    let a = &cfg.attack;
    let r = match a.kind {
        AttackKind::MinimalEta => minimal_eta_search(p, x, a.eta_max, a.tol),
        AttackKind::SingleStep => single_step_attack(p, x, a.c2),
    };
    match r {
        Err(lazyrob_core::Error::DegenerateGradient) => {
            let f = p.forward(x)?;
            Ok(AttackOutcome {
                eta: 0.0,
                delta_norm: 0.0,
                grad_norm: 0.0,
                f_before: f,
                f_after: f,
                flipped: false,
                boundary_case: false,
            })
        }
        r => Ok(r?),
    }
}

/// Medians over one run: `|η|` and `‖δ‖/‖x‖` over flipped examples,
/// `‖∇f‖` over all examples.
pub fn attack_aggregate(rows: &[(AttackOutcome, f64)]) -> (usize, f64, f64, f64) {
    let flipped: Vec<_> = rows.iter().filter(|(o, _)| o.flipped).collect();
    let mut eta: Vec<f64> = flipped.iter().map(|(o, _)| o.eta.abs()).collect();
    let mut rel: Vec<f64> = flipped.iter().map(|(o, xn)| o.delta_norm / xn).collect();
    let mut grad: Vec<f64> = rows.iter().map(|(o, _)| o.grad_norm).collect();
    (flipped.len(), median(&mut eta), median(&mut grad), median(&mut rel))
}

fn cmd_attack(cfg: &ExperimentConfig, jobs: usize) -> CliResult<String> {
    let g = &cfg.grid;
    cfg.require_nonempty(&[("d", g.d.len()), ("m", g.m.len()), ("c0", g.c0.len())])?;
    let mut runs = Vec::new();
    for (di, &d) in g.d.iter().enumerate() {
        for &m in &g.m {
            for &c0 in &g.c0 {
                for &seed in &cfg.seeds {
                    let path = checkpoint_path(&cfg.out, d, m, c0, seed);
                    if !path.is_file() {
                        return Err(CliError::Data(format!("missing checkpoint {}", path.display())));
                    }
                    runs.push((di, d, m, c0, seed, path));
                }
            }
        }
    }
    let data = splits(cfg, &g.d)?;
    let results = run_pool(runs.len(), jobs, |i| {
        let (di, d, _, _, _, ref path) = runs[i];
        let ck = Checkpoint::load(path)?;
        if ck.params.d() != d {
            return Err(CliError::Data(format!("{}: checkpoint has d = {}", path.display(), ck.params.d())));
        }
        data[di]
            .test
            .iter()
            .map(|(x, _)| Ok((attack_one(cfg, &ck.params, x)?, norm2(x))))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let mut ex = Table::new(&[
        "d",
        "m",
        "C0",
        "seed",
        "example_id",
        "label",
        "x_norm",
        "f_before",
        "f_after",
        "eta_min",
        "grad_norm",
        "delta_norm",
        "delta_rel",
        "flipped",
        "boundary",
    ]);
    let mut agg =
        Table::new(&["d", "m", "C0", "seed", "n", "n_flipped", "median_eta", "median_grad_norm", "median_delta_rel"]);
    for ((di, d, m, c0, seed, _), rows) in runs.iter().zip(&results) {
        let key = [d.to_string(), m.to_string(), num(*c0), seed.to_string()];
        for (i, ((o, xn), y)) in rows.iter().zip(data[*di].test.labels()).enumerate() {
            let mut r = key.to_vec();
            r.extend([
                i.to_string(),
                y.to_string(),
                num(*xn),
                num(o.f_before),
                num(o.f_after),
                num(o.eta),
                num(o.grad_norm),
                num(o.delta_norm),
                num(o.delta_norm / xn),
                (o.flipped as u8).to_string(),
                (o.boundary_case as u8).to_string(),
            ]);
            ex.push(r);
        }
        let (n_flipped, eta, grad, rel) = attack_aggregate(rows);
        let mut r = key.to_vec();
        r.extend([rows.len().to_string(), n_flipped.to_string(), num(eta), num(grad), num(rel)]);
        agg.push(r);
    }
    let prov = Provenance::of(cfg);
    ex.write(&cfg.out.join("attack_examples.csv"), &prov)?;
    agg.write(&cfg.out.join("attack_aggregate.csv"), &prov)?;
    Ok(format!("attacked {} networks, {} examples", agg.len(), ex.len()))
}

fn cmd_advtrain(cfg: &ExperimentConfig, jobs: usize) -> CliResult<String> {
    let g = &cfg.grid;
    cfg.require_nonempty(&[("d", g.d.len()), ("m", g.m.len()), ("v", g.v.len()), ("r", g.r.len())])?;
    let data = splits(cfg, &g.d)?;
    if !data.iter().all(|s| s.train.normalized() && s.test.normalized()) {
        return Err(CliError::Config("adversarial training needs normalize = true".into()));
    }
    // (d index, m index, v index, r index, seed)
    let mut runs = Vec::new();
    for di in 0..g.d.len() {
        for mi in 0..g.m.len() {
            for vi in 0..g.v.len() {
                for ri in 0..g.r.len() {
                    for &seed in &cfg.seeds {
                        runs.push((di, mi, vi, ri, seed));
                    }
                }
            }
        }
    }
    let cells = run_pool(runs.len(), jobs, |i| {
        let (di, mi, vi, ri, seed) = runs[i];
        let (d, m) = (g.d[di], g.m[mi]);
        let v = g.lazy_radius(g.v[vi], m);
        let r = g.budget(g.r[ri], d);
        let split = &data[di];
        let p = init_network(&mut Rng::new(seed), d, m)?;
        let tc = cfg.trainer.train_config(LazyRadius::V(v), r, seed);
        let (q, report) = projected_adversarial_train_with(p, &split.train, &tc, |_, _| {})?;
        let mut eval = PgdConfig::standard(r, cfg.attack.pgd_steps);
        eval.step = cfg.trainer.pgd_step.into();
        let robust = robust_accuracy(&q, &split.test, &eval)?;
        Ok((robust, q.accuracy(split.test.iter()), report, q.lazy_deviation()))
    })?;
    let mut t =
        Table::new(&["d", "m", "V", "R", "seed", "robust_acc", "clean_acc", "epochs", "stop_reason", "lazy_dev"]);
    for (&(di, mi, vi, ri, seed), (robust, clean, report, dev)) in runs.iter().zip(&cells) {
        let (d, m) = (g.d[di], g.m[mi]);
        t.push(vec![
            d.to_string(),
            m.to_string(),
            num(g.lazy_radius(g.v[vi], m)),
            num(g.budget(g.r[ri], d)),
            seed.to_string(),
            num(*robust),
            num(*clean),
            report.epochs_run().to_string(),
            report.stop_reason.as_str().to_string(),
            num(*dev),
        ]);
    }
    let prov = Provenance::of(cfg);
    t.write(&cfg.out.join("advtrain.csv"), &prov)?;

    // seed means per cell, in grid order
    let per_cell = cfg.seeds.len();
    let mut summary = Table::new(&["d", "m", "v", "V", "r", "R", "robust_acc", "clean_acc", "n_seeds"]);
    let mut means = Vec::new();
    for (chunk, cell) in runs.chunks(per_cell).zip(cells.chunks(per_cell)) {
        let (di, mi, vi, ri, _) = chunk[0];
        let (d, m) = (g.d[di], g.m[mi]);
        let robust = cell.iter().map(|c| c.0).sum::<f64>() / per_cell as f64;
        let clean = cell.iter().map(|c| c.1).sum::<f64>() / per_cell as f64;
        means.push(((di, mi, vi, ri), robust));
        summary.push(vec![
            d.to_string(),
            m.to_string(),
            num(g.v[vi]),
            num(g.lazy_radius(g.v[vi], m)),
            num(g.r[ri]),
            num(g.budget(g.r[ri], d)),
            num(robust),
            num(clean),
            per_cell.to_string(),
        ]);
    }
    summary.write(&cfg.out.join("advtrain_summary.csv"), &prov)?;

    // robust accuracy over (R, d) at the first m and v, and over (V, m) at
    // the first d and the budget closest to 0.2
    let mut rd = Table::new(&["d", "r", "R", "robust_acc"]);
    let mut vm = Table::new(&["m", "v", "V", "robust_acc"]);
    let r_near = (0..g.r.len())
        .min_by(|&a, &b| (g.budget(g.r[a], g.d[0]) - 0.2).abs().total_cmp(&(g.budget(g.r[b], g.d[0]) - 0.2).abs()))
        .unwrap_or(0);
    for &((di, mi, vi, ri), robust) in &means {
        if mi == 0 && vi == 0 {
            rd.push(vec![g.d[di].to_string(), num(g.r[ri]), num(g.budget(g.r[ri], g.d[di])), num(robust)]);
        }
        if di == 0 && ri == r_near {
            vm.push(vec![g.m[mi].to_string(), num(g.v[vi]), num(g.lazy_radius(g.v[vi], g.m[mi])), num(robust)]);
        }
    }
    rd.write(&cfg.out.join("fig3_r_d.csv"), &prov)?;
    vm.write(&cfg.out.join("fig3_v_m.csv"), &prov)?;
    Ok(format!("adversarially trained {} networks", t.len()))
}

/// A verify row with its `(name, d, m)` sort key.
type KeyedRow = ((&'static str, usize, usize), Vec<String>);

fn cmd_verify(cfg: &ExperimentConfig, jobs: usize) -> CliResult<String> {
    let v = &cfg.verify;
    let mut t = Table::new(&[
        "name",
        "gamma",
        "d",
        "m",
        "C0",
        "R",
        "theoretical",
        "measured",
        "satisfied",
        "trials",
        "violations",
        "allowed",
        "vacuous",
    ]);
    let mut keyed: Vec<KeyedRow> = Vec::new();
    let mut failures = Vec::new();
    for &d in &v.d {
        for &m in &v.m {
            let mc = LemmaMonteCarlo {
                d,
                m,
                c0s: v.c0.clone(),
                gammas: v.gammas.clone(),
                seeds: v.seed_start..v.seed_start + v.n_seeds as u64,
            };
            let stats = run_pool(v.n_seeds, jobs, |i| Ok(mc.draw(v.seed_start + i as u64)?))?;
            for f in mc.tally(&stats)? {
                let ok = f.vacuous || f.frequency() <= f.allowed();
                if !ok {
                    failures.push(format!("{} d={d} m={m} C0={} gamma={}", f.lemma.as_str(), f.c0, f.gamma));
                }
                keyed.push((
                    (f.lemma.as_str(), d, m),
                    vec![
                        f.lemma.as_str().into(),
                        num(f.gamma),
                        d.to_string(),
                        m.to_string(),
                        num(f.c0),
                        "0".into(),
                        num(f.theoretical),
                        num(f.frequency()),
                        ok.to_string(),
                        f.trials.to_string(),
                        f.violations.to_string(),
                        num(f.allowed()),
                        f.vacuous.to_string(),
                    ],
                ));
            }
            if v.grad_diff_probes == 0 {
                continue;
            }
            let p = init_network(&mut Rng::new(v.seed_start), d, m)?;
            let x = Rng::with_stream(v.seed_start, 7).unit_vector(d)?;
            let r = v.c1 / (d as f64).sqrt();
            for &c0 in &v.c0 {
                let mut rng = Rng::with_stream(v.seed_start, 8);
                let probe = grad_diff_probe(&p, &x, r, v.grad_diff_probes, c0, v.c1, &mut rng)?;
                let rep = probe.report;
                keyed.push((
                    (rep.name, d, m),
                    vec![
                        rep.name.into(),
                        String::new(),
                        d.to_string(),
                        m.to_string(),
                        num(c0),
                        num(r),
                        num(rep.theoretical),
                        num(rep.measured),
                        rep.satisfied.to_string(),
                        "1".into(),
                        (!rep.satisfied as u8).to_string(),
                        String::new(),
                        "false".into(),
                    ],
                ));
            }
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let n = keyed.len();
    keyed.into_iter().for_each(|(_, r)| t.push(r));
    let prov = Provenance::of(cfg).with_seed_range(v.seed_start, v.n_seeds);
    t.write(&cfg.out.join("verify.csv"), &prov)?;
    if failures.is_empty() {
        Ok(format!("verified {n} bound rows"))
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

fn cmd_data_prepare(cfg: &ExperimentConfig) -> CliResult<String> {
    let g = &cfg.grid;
    cfg.require_nonempty(&[("d", g.d.len())])?;
    let data = splits(cfg, &g.d)?;
    let mut t = Table::new(&["d", "split", "n", "positives", "dropped", "normalized", "file"]);
    for (&d, s) in g.d.iter().zip(&data) {
        for (name, set, dropped) in [("train", &s.train, s.dropped_train), ("test", &s.test, s.dropped_test)] {
            let file = format!("{name}_d{d}.lzds");
            save_dataset(&cfg.out.join("data").join(&file), set)?;
            let pos = set.labels().iter().filter(|&&y| y > 0).count();
            t.push(vec![
                d.to_string(),
                name.into(),
                set.len().to_string(),
                pos.to_string(),
                dropped.to_string(),
                set.normalized().to_string(),
                file,
            ]);
        }
    }
    t.write(&cfg.out.join("data_summary.csv"), &Provenance::of(cfg))?;
    Ok(format!("wrote {} dataset caches", t.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_keeps_order_and_first_error() {
        let v = run_pool(20, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..20).map(|i| i * i).collect::<Vec<_>>());
        let e = run_pool(10, 3, |i| if i >= 4 { Err(CliError::Data(i.to_string())) } else { Ok(i) });
        assert!(matches!(e, Err(CliError::Data(s)) if s == "4"));
        assert!(run_pool(0, 4, Ok).unwrap().is_empty());
    }

    #[test]
    fn tags_are_stable() {
        assert_eq!(run_tag(25, 1000, 10.0, 3), "d25_m1000_c10_s3");
        assert_eq!(run_tag(4, 8, 0.5, 0), "d4_m8_c0.5_s0");
    }
}
