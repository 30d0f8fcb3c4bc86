//! Closed-form concentration bounds for lazy networks and the probes that
//! measure the corresponding quantities.
//!
//! Each bound holds with probability at least `1 − γ` over the draw of
//! `(a, W₀)`. A single network can therefore never falsify one; the
//! [`LemmaMonteCarlo`] driver counts violations over many independent
//! initialisations and compares the frequency with `γ` plus a binomial slack.
//!
//! Bounds whose value is `≤ 0` carry no information and are flagged
//! `vacuous` instead of being dropped.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::attacks::{minimal_eta_search, pgd_attack, PgdConfig};
use crate::data::LabeledDataset;
use crate::linalg::{dot_unchecked, norm2};
use crate::network::NetworkParams;
use crate::rng::Rng;
use crate::{Error, Result};

/// Inputs are treated as unit norm when `|‖x‖ − 1|` is below this.
pub const UNIT_NORM_TOL: f64 = 1e-9;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("gamma must lie in (0, 1)"))
    }
}

fn check_unit(x: &[f64]) -> Result<()> {
    if (norm2(x) - 1.0).abs() <= UNIT_NORM_TOL {
        Ok(())
    } else {
        Err(Error::InvalidArgument("input must lie on the unit sphere"))
    }
}

#[inline]
fn sqrt0(v: f64) -> f64 {
    libm::sqrt(v.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundContext {
    pub d: usize,
    pub m: usize,
    pub c0: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub gamma: f64,
    pub theoretical: f64,
    pub measured: f64,
    /// The inequality holds in its stated direction (always true when vacuous).
    pub satisfied: bool,
    pub vacuous: bool,
    /// The hypotheses of the bound hold for the supplied arguments.
    pub precondition_ok: bool,
    pub context: BoundContext,
}

/// `|f(x; a, W)| ≤ √(2 ln(2/γ)) + 2 ln(2/γ)/√m + C₀` on the lazy ball of radius `C₀/√m`.
pub fn fvalue_bound(gamma: f64, m: usize, c0: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let l = libm::log(2.0 / gamma);
    Ok(libm::sqrt(2.0 * l) + 2.0 * l / libm::sqrt(m as f64) + c0)
}

/// Exact `sup |f(x; a, W)|` over `max_s ‖w_s − w_{s,0}‖ ≤ radius`.
///
/// Neuron `s` can move its pre-activation anywhere in
/// `[z_s − radius‖x‖, z_s + radius‖x‖]` independently of the others, so the
/// extremes are attained neuron by neuron.
pub fn fvalue_ball_sup(p: &NetworkParams, x: &[f64], radius: f64) -> Result<f64> {
    let z = p.w0().tr_mul_vec(x)?;
    let (hi, lo) = ball_extremes(&z, p.a(), radius * norm2(x));
    Ok(hi.max(-lo) / libm::sqrt(p.m() as f64))
}

/// `(Σ max contribution, Σ min contribution)` before the `1/√m` factor.
fn ball_extremes(z: &[f64], a: &[i8], spread: f64) -> (f64, f64) {
    let relu = |t: f64| if t > 0.0 { t } else { 0.0 };
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (&zs, &s) in z.iter().zip(a) {
        if s > 0 {
            hi += relu(zs + spread);
            lo += relu(zs - spread);
        } else {
            hi -= relu(zs - spread);
            lo -= relu(zs + spread);
        }
    }
    (hi, lo)
}

fn lazy_precondition(p: &NetworkParams, c0: f64) -> bool {
    p.lazy_deviation() <= c0 / libm::sqrt(p.m() as f64) * (1.0 + 1e-12)
}

/// Compares `|f(x)|` at the current weights with [`fvalue_bound`].
pub fn check_fvalue(p: &NetworkParams, x: &[f64], gamma: f64, c0: f64) -> Result<BoundReport> {
    let theoretical = fvalue_bound(gamma, p.m(), c0)?;
    let measured = p.forward(x)?.abs();
    Ok(BoundReport {
        name: "fvalue",
        gamma,
        theoretical,
        measured,
        satisfied: measured <= theoretical,
        vacuous: false,
        precondition_ok: lazy_precondition(p, c0) && check_unit(x).is_ok(),
        context: BoundContext { d: p.d(), m: p.m(), c0, r: 0.0 },
    })
}

/// Compares the worst case of `|f(x)|` over the whole lazy ball with
/// [`fvalue_bound`].
pub fn check_fvalue_ball(p: &NetworkParams, x: &[f64], gamma: f64, c0: f64) -> Result<BoundReport> {
    let theoretical = fvalue_bound(gamma, p.m(), c0)?;
    let measured = fvalue_ball_sup(p, x, c0 / libm::sqrt(p.m() as f64))?;
    Ok(BoundReport {
        name: "fvalue-ball",
        gamma,
        theoretical,
        measured,
        satisfied: measured <= theoretical,
        vacuous: false,
        precondition_ok: check_unit(x).is_ok(),
        context: BoundContext { d: p.d(), m: p.m(), c0, r: 0.0 },
    })
}

/// Lower bound on `‖∇ₓf(x; a, W)‖` over the lazy ball of radius `C₀/√m`:
///
/// `(1/2 − (√(2 ln(4/γ)/m) + ln(4/γ)/m))^{1/2} (d − 5√(d ln(8/γ)))^{1/2}
///  − C₀ − (m^{-1/2}(C₀ + √(ln(4/γ)/2)))^{1/2} (d + 4√(d ln(8m/γ)))^{1/2}`.
///
/// Negative radicands are clamped to zero, which makes the value `≤ 0`
/// (vacuous).
pub fn grad_bound(gamma: f64, d: usize, m: usize, c0: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let (d, m) = (d as f64, m as f64);
    let l4 = libm::log(4.0 / gamma);
    let first =
        sqrt0(0.5 - (libm::sqrt(2.0 * l4 / m) + l4 / m)) * sqrt0(d - 5.0 * libm::sqrt(d * libm::log(8.0 / gamma)));
    let shift = sqrt0((c0 + libm::sqrt(l4 / 2.0)) / libm::sqrt(m))
        * sqrt0(d + 4.0 * libm::sqrt(d * libm::log(8.0 * m / gamma)));
    Ok(first - c0 - shift)
}

pub fn check_grad(p: &NetworkParams, x: &[f64], gamma: f64, c0: f64) -> Result<BoundReport> {
    let theoretical = grad_bound(gamma, p.d(), p.m(), c0)?;
    let measured = norm2(&p.input_gradient(x)?);
    let vacuous = theoretical <= 0.0;
    Ok(BoundReport {
        name: "grad",
        gamma,
        theoretical,
        measured,
        satisfied: vacuous || measured >= theoretical,
        vacuous,
        precondition_ok: lazy_precondition(p, c0) && check_unit(x).is_ok(),
        context: BoundContext { d: p.d(), m: p.m(), c0, r: 0.0 },
    })
}

/// Neurons whose activation at an input can differ from the one at `W₀` for
/// some `W` in the lazy ball of radius `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignFlipSets {
    /// Flippable neurons at `x`.
    pub s_v_exact: Vec<usize>,
    /// Flippable neurons at `x + δ`, when `δ` was supplied.
    pub s_v_prime_exact: Option<Vec<usize>>,
    /// `V·m + √(m ln(1/γ)/2)`.
    pub bound_v: f64,
    /// `bound_v · (1 + ‖δ‖)`.
    pub bound_v_prime: Option<f64>,
}

/// Indices `s` with `−V‖u‖ < w_{s,0}ᵀu ≤ V‖u‖`.
///
/// From the active side (`w_{s,0}ᵀu > 0`) the neuron can be switched off iff
/// `w_{s,0}ᵀu − V‖u‖ ≤ 0`; from the inactive side it can be switched on iff
/// `w_{s,0}ᵀu + V‖u‖ > 0`.
pub fn flippable_neurons(p: &NetworkParams, u: &[f64], v: f64) -> Result<Vec<usize>> {
    let z = p.w0().tr_mul_vec(u)?;
    let reach = v * norm2(u);
    Ok(z.iter().enumerate().filter(|(_, &zs)| -reach < zs && zs <= reach).map(|(s, _)| s).collect())
}

/// `V·m + √(m ln(1/γ)/2)`.
pub fn sign_flip_bound(gamma: f64, m: usize, v: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let m = m as f64;
    Ok(v * m + libm::sqrt(m * libm::log(1.0 / gamma) / 2.0))
}

/// Exact flippable sets at `x` and, optionally, at `x + δ` (`‖δ‖ ≤ 0.5`).
pub fn sign_flip_sets(p: &NetworkParams, x: &[f64], v: f64, delta: Option<&[f64]>, gamma: f64) -> Result<SignFlipSets> {
    check_unit(x)?;
    if !(v >= 0.0) {
        return Err(Error::InvalidArgument("lazy radius V must be non-negative"));
    }
    let bound_v = sign_flip_bound(gamma, p.m(), v)?;
    let s_v_exact = flippable_neurons(p, x, v)?;
    let (s_v_prime_exact, bound_v_prime) = match delta {
        None => (None, None),
        Some(delta) => {
            if delta.len() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), found: delta.len() });
            }
            let r = norm2(delta);
            if r > 0.5 {
                return Err(Error::InvalidArgument("perturbation norm must be at most 0.5"));
            }
            let u: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
            (Some(flippable_neurons(p, &u, v)?), Some(bound_v * (1.0 + r)))
        }
    };
    Ok(SignFlipSets { s_v_exact, s_v_prime_exact, bound_v, bound_v_prime })
}

/// `9(C₁ d² ln²(md) √(ln d / d))^{1/4} + 15 d ln(md)/√m + 327 C̄ C₀ d^{1/4}`,
/// `C̄ = max(1, C₀)`.
pub fn grad_diff_bound(d: usize, m: usize, c0: f64, c1: f64) -> f64 {
    let (df, mf) = (d as f64, m as f64);
    let lmd = libm::log(mf * df);
    let inner = c1 * df * df * lmd * lmd * sqrt0(libm::log(df) / df);
    9.0 * libm::pow(inner.max(0.0), 0.25)
        + 15.0 * df * lmd / libm::sqrt(mf)
        + 327.0 * c0.max(1.0) * c0 * libm::pow(df, 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradDiffProbe {
    pub report: BoundReport,
    /// `measured / √d`.
    pub ratio_sqrt_d: f64,
    /// Largest number of neurons whose activation changed across the probes.
    pub max_switched: usize,
}

/// `max ‖∇f(x) − ∇f(x + δ)‖` over `n_probes` draws of `δ` uniform in
/// `B(0, R)`, against [`grad_diff_bound`].
///
/// `R > C₁/√d` violates the bound's hypothesis; the probe still runs and
/// reports `precondition_ok = false`.
pub fn grad_diff_probe(
    p: &NetworkParams,
    x: &[f64],
    r: f64,
    n_probes: usize,
    c0: f64,
    c1: f64,
    rng: &mut Rng,
) -> Result<GradDiffProbe> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument("probe radius must be non-negative"));
    }
    let (d, m) = (p.d(), p.m());
    let z = p.preactivations(x)?;
    let k = 1.0 / libm::sqrt(m as f64);
    let mut measured: f64 = 0.0;
    let mut max_switched = 0;
    let mut diff = vec![0.0; d];
    for _ in 0..n_probes {
        if r == 0.0 {
            break;
        }
        let delta = rng.in_ball(d, r)?;
        diff.iter_mut().for_each(|v| *v = 0.0);
        let mut switched = 0;
        for ((col, &zs), &a) in p.w().columns().zip(&z).zip(p.a()) {
            let zd = zs + dot_unchecked(col, &delta);
            let before = zs > 0.0;
            let after = zd > 0.0;
            if before != after {
                switched += 1;
                let sgn = if before { a as f64 } else { -(a as f64) };
                crate::linalg::axpy_in_place(sgn, col, &mut diff);
            }
        }
        max_switched = max_switched.max(switched);
        measured = measured.max(norm2(&diff) * k);
    }
    let theoretical = grad_diff_bound(d, m, c0, c1);
    let report = BoundReport {
        name: "grad-diff",
        gamma: f64::NAN,
        theoretical,
        measured,
        satisfied: measured <= theoretical,
        vacuous: false,
        precondition_ok: r <= c1 / libm::sqrt(d as f64),
        context: BoundContext { d, m, c0, r },
    };
    Ok(GradDiffProbe { report, ratio_sqrt_d: measured / libm::sqrt(d as f64), max_switched })
}

/// Attack used to lower-bound the robust error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustAttack {
    Pgd(PgdConfig),
    /// Minimal single-step search with the step capped so that `‖δ‖ ≤ R`.
    MinimalEta {
        tol: f64,
    },
}

/// Attack-based estimate of the robust error `L_R`; `satisfied` when it is at
/// least 0.9. The estimate is a lower bound on the true robust error.
pub fn robust_error_estimate(
    p: &NetworkParams,
    data: &LabeledDataset,
    r: f64,
    attack: RobustAttack,
) -> Result<BoundReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("robust error budget must be positive"));
    }
    let mut errors = 0usize;
    for (x, y) in data.iter() {
        let broken = match attack {
            RobustAttack::Pgd(cfg) => pgd_attack(p, x, y, &PgdConfig { radius: r, ..cfg })?.success,
            RobustAttack::MinimalEta { tol } => {
                let (f, g) = p.forward_and_gradient(x)?;
                let gn = norm2(&g);
                if y as f64 * f <= 0.0 {
                    true
                } else if gn == 0.0 {
                    false
                } else {
                    minimal_eta_search(p, x, r / gn, tol)?.flipped
                }
            }
        };
        if broken {
            errors += 1;
        }
    }
    let measured = errors as f64 / data.len() as f64;
    Ok(BoundReport {
        name: "robust-error",
        gamma: f64::NAN,
        theoretical: 0.9,
        measured,
        satisfied: measured >= 0.9,
        vacuous: false,
        precondition_ok: data.normalized(),
        context: BoundContext { d: p.d(), m: p.m(), c0: f64::NAN, r },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln q = slope · ln d + intercept`.
pub fn scaling_fit(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if pairs.iter().any(|&(d, q)| !(d > 0.0) || !(q > 0.0)) {
        return Err(Error::InvalidArgument("scaling fit needs positive d and quantities"));
    }
    let mut ds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    if ds.len() < 4 {
        return Err(Error::InvalidArgument("scaling fit needs at least 4 distinct d values"));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| libm::log(p.0)).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| libm::log(p.1)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit { slope, intercept: my - slope * mx, r2 })
}

/// `3√(γ(1−γ)/n)`: three binomial standard deviations of a violation frequency.
pub fn binomial_slack(gamma: f64, n: usize) -> f64 {
    3.0 * libm::sqrt(gamma * (1.0 - gamma) / n as f64)
}

/// Quantities of a freshly initialised network at one input, for several lazy
/// radii at once.
#[derive(Debug, Clone, PartialEq)]
pub struct InitStats {
    pub f0: f64,
    pub grad_norm0: f64,
    /// `sup |f|` over the lazy ball, one entry per radius.
    pub f_ball_sup: Vec<f64>,
    /// `|S_V|` at the input, one entry per radius.
    pub flippable: Vec<usize>,
}

/// Streams the initialisation of [`crate::network::init_network`] with
/// `Rng::new(seed)` neuron by neuron and accumulates [`InitStats`] at `x`,
/// so memory stays `O(d)` for any width.
pub fn init_stats(seed: u64, d: usize, m: usize, x: &[f64], radii: &[f64]) -> Result<InitStats> {
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    let mut rng = Rng::new(seed);
    let a = crate::rng::sample_sign_vec(&mut rng, m)?;
    let xn = norm2(x);
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut f0 = 0.0;
    let mut hi = vec![0.0; radii.len()];
    let mut lo = vec![0.0; radii.len()];
    let mut flippable = vec![0usize; radii.len()];
    for &s in &a {
        rng.fill_gaussian(&mut w);
        let z = dot_unchecked(&w, x);
        if z > 0.0 {
            f0 += s as f64 * z;
            crate::linalg::axpy_in_place(s as f64, &w, &mut grad);
        }
        for (k, &r) in radii.iter().enumerate() {
            let (h, l) = ball_extremes(&[z], &[s], r * xn);
            hi[k] += h;
            lo[k] += l;
            let reach = r * xn;
            if -reach < z && z <= reach {
                flippable[k] += 1;
            }
        }
    }
    let k = 1.0 / libm::sqrt(m as f64);
    Ok(InitStats {
        f0: f0 * k,
        grad_norm0: norm2(&grad) * k,
        f_ball_sup: hi.iter().zip(&lo).map(|(h, l)| h.max(-l) * k).collect(),
        flippable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Lemma {
    /// `sup |f|` over the lazy ball against [`fvalue_bound`].
    FValue,
    /// Gradient norm at initialisation against [`grad_bound`].
    Grad,
    /// `|S_V|` at `V = C₀/√m` against [`sign_flip_bound`].
    SignFlip,
}

impl Lemma {
    pub fn as_str(self) -> &'static str {
        match self {
            Lemma::FValue => "fvalue",
            Lemma::Grad => "grad",
            Lemma::SignFlip => "sign-flip",
        }
    }
}

/// Violation count of one lemma over a batch of seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaFrequency {
    pub lemma: Lemma,
    pub gamma: f64,
    pub d: usize,
    pub m: usize,
    pub c0: f64,
    pub theoretical: f64,
    pub trials: usize,
    pub violations: usize,
    pub vacuous: bool,
}

impl LemmaFrequency {
    pub fn frequency(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }

    /// `γ + 3√(γ(1−γ)/n)`.
    pub fn allowed(&self) -> f64 {
        self.gamma + binomial_slack(self.gamma, self.trials)
    }
}

/// Monte-Carlo check of the three initialisation lemmas.
///
/// For every seed a network is initialised as by `init_network(Rng::new(seed))`
/// and a test input is drawn uniformly from the sphere with
/// `Rng::with_stream(seed, 7)`. Every `(C₀, γ)` combination is evaluated on
/// the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaMonteCarlo {
    pub d: usize,
    pub m: usize,
    pub c0s: Vec<f64>,
    pub gammas: Vec<f64>,
    pub seeds: Range<u64>,
}

impl LemmaMonteCarlo {
    pub fn draw(&self, seed: u64) -> Result<InitStats> {
        let x = Rng::with_stream(seed, 7).unit_vector(self.d)?;
        let radii: Vec<f64> = self.c0s.iter().map(|c| c / libm::sqrt(self.m as f64)).collect();
        init_stats(seed, self.d, self.m, &x, &radii)
    }

    /// Runs every seed and tallies violations, ordered by `(lemma, C₀, γ)`.
    pub fn run(&self) -> Result<Vec<LemmaFrequency>> {
        let stats = self.seeds.clone().map(|s| self.draw(s)).collect::<Result<Vec<_>>>()?;
        self.tally(&stats)
    }

    /// Tallies precomputed draws (one per seed, in seed order).
    pub fn tally(&self, stats: &[InitStats]) -> Result<Vec<LemmaFrequency>> {
        if stats.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let sqrt_m = libm::sqrt(self.m as f64);
        for lemma in [Lemma::FValue, Lemma::Grad, Lemma::SignFlip] {
            for (k, &c0) in self.c0s.iter().enumerate() {
                for &gamma in &self.gammas {
                    let theoretical = match lemma {
                        Lemma::FValue => fvalue_bound(gamma, self.m, c0)?,
                        Lemma::Grad => grad_bound(gamma, self.d, self.m, c0)?,
                        Lemma::SignFlip => sign_flip_bound(gamma, self.m, c0 / sqrt_m)?,
                    };
                    let vacuous = lemma == Lemma::Grad && theoretical <= 0.0;
                    let violations = stats
                        .iter()
                        .filter(|s| match lemma {
                            Lemma::FValue => s.f_ball_sup[k] > theoretical,
                            Lemma::Grad => !vacuous && s.grad_norm0 < theoretical,
                            Lemma::SignFlip => s.flippable[k] as f64 > theoretical,
                        })
                        .count();
                    out.push(LemmaFrequency {
                        lemma,
                        gamma,
                        d: self.d,
                        m: self.m,
                        c0,
                        theoretical,
                        trials: stats.len(),
                        violations,
                        vacuous,
                    });
                }
            }
        }
        Ok(out)
    }
}
