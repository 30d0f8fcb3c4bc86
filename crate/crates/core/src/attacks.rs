//! Inference-time attacks on the sign of `f`.
//!
//! * [`single_step_attack`]: `δ = η∇f(x)` with `|η| = C₂/‖∇f(x)‖²` and
//!   `sign(η) = −sign(f(x))`.
//! * [`minimal_eta_search`]: the smallest `|η|` along that ray that flips the
//!   sign.
//! * [`pgd_attack`] / [`robust_accuracy`]: ℓ₂ projected gradient ascent on the
//!   logistic loss.
//!
//! A value with `|f| ≤ SIGN_TIE` counts as a tie and never as a flip.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::linalg::{dist2_unchecked, norm2, project_in_place};
use crate::network::{check_label, sigmoid, NetworkParams};
use crate::{Error, Result};

pub const SIGN_TIE: f64 = 1e-12;

/// Number of geometric seeds probed by [`minimal_eta_search`].
pub const ETA_GRID_POINTS: usize = 64;
/// Ratio between consecutive grid seeds; the grid spans `eta_max·2^{-31.5}..=eta_max`.
pub const ETA_GRID_RATIO: f64 = core::f64::consts::SQRT_2;
/// Minimum number of bisection refinements inside the certified cell.
pub const ETA_BISECTION_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOutcome {
    /// Signed step size; the perturbation is `eta · ∇f(x)`.
    pub eta: f64,
    pub delta_norm: f64,
    pub grad_norm: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub flipped: bool,
    /// `|f(x)| ≤ SIGN_TIE`: there is no sign to flip.
    pub boundary_case: bool,
}

/// `sign(a)·sign(b) < 0`, with ties never counting.
#[inline]
pub fn sign_flipped(before: f64, after: f64) -> bool {
    before.abs() > SIGN_TIE && after.abs() > SIGN_TIE && (before > 0.0) != (after > 0.0)
}

#[inline]
fn attack_direction_sign(f: f64) -> f64 {
    if f > 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `f(x + eta·g)`.
fn value_along(p: &NetworkParams, x: &[f64], g: &[f64], eta: f64, buf: &mut [f64]) -> f64 {
    for ((b, xi), gi) in buf.iter_mut().zip(x).zip(g) {
        *b = xi + eta * gi;
    }
    p.forward_unchecked(buf)
}

/// One gradient step of size `C₂/‖∇f‖²` against the current sign.
///
/// Evaluates `f` exactly twice and never touches `p`.
pub fn single_step_attack(p: &NetworkParams, x: &[f64], c2: f64) -> Result<AttackOutcome> {
    if !(c2 >= 0.0) || !c2.is_finite() {
        return Err(Error::InvalidArgument("C2 must be finite and non-negative"));
    }
    let (f, g) = p.forward_and_gradient(x)?;
    let gn = norm2(&g);
    if gn == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let eta = attack_direction_sign(f) * c2 / (gn * gn);
    let mut buf = vec![0.0; x.len()];
    let f_after = value_along(p, x, &g, eta, &mut buf);
    let boundary_case = f.abs() <= SIGN_TIE;
    Ok(AttackOutcome {
        eta,
        delta_norm: eta.abs() * gn,
        grad_norm: gn,
        f_before: f,
        f_after,
        flipped: !boundary_case && sign_flipped(f, f_after),
        boundary_case,
    })
}

/// Smallest `|η| ∈ (0, eta_max]` such that `x + η∇f(x)` (with `η` signed
/// against `f(x)`) flips the sign of `f`.
///
/// The flip predicate need not be monotone in `|η|`, so the search first scans
/// a geometric grid of [`ETA_GRID_POINTS`] seeds, takes the first seed that
/// flips, then bisects the cell between it and the previous non-flipping seed
/// (or zero) until the cell is narrower than `tol` and at least
/// [`ETA_BISECTION_STEPS`] halvings have been made. The returned `eta` is the
/// flipping end of that cell.
///
/// If nothing on the grid flips, the outcome has `flipped = false` and
/// `|eta| = eta_max`. A tie at `x` is reported with `boundary_case = true`,
/// `eta = 0` and no flip.
pub fn minimal_eta_search(p: &NetworkParams, x: &[f64], eta_max: f64, tol: f64) -> Result<AttackOutcome> {
    if !(eta_max > 0.0) || !eta_max.is_finite() {
        return Err(Error::InvalidArgument("eta_max must be positive and finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    let (f, g) = p.forward_and_gradient(x)?;
    let gn = norm2(&g);
    if f.abs() <= SIGN_TIE {
        return Ok(AttackOutcome {
            eta: 0.0,
            delta_norm: 0.0,
            grad_norm: gn,
            f_before: f,
            f_after: f,
            flipped: false,
            boundary_case: true,
        });
    }
    if gn == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let dir = attack_direction_sign(f);
    let mut buf = vec![0.0; x.len()];
    let flips = |t: f64, buf: &mut [f64]| -> (bool, f64) {
        let v = value_along(p, x, &g, dir * t, buf);
        (sign_flipped(f, v), v)
    };

    let mut lo = 0.0;
    let mut hit = None;
    for k in 0..ETA_GRID_POINTS {
        let t = eta_max * libm::pow(ETA_GRID_RATIO, k as f64 - (ETA_GRID_POINTS - 1) as f64);
        let t = if k == ETA_GRID_POINTS - 1 { eta_max } else { t };
        let (flipped, v) = flips(t, &mut buf);
        if flipped {
            hit = Some((t, v));
            break;
        }
        lo = t;
    }
    let Some((mut hi, mut f_hi)) = hit else {
        let f_after = value_along(p, x, &g, dir * eta_max, &mut buf);
        return Ok(AttackOutcome {
            eta: dir * eta_max,
            delta_norm: eta_max * gn,
            grad_norm: gn,
            f_before: f,
            f_after,
            flipped: false,
            boundary_case: false,
        });
    };
    let mut steps = 0;
    while steps < ETA_BISECTION_STEPS || hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (flipped, v) = flips(mid, &mut buf);
        if flipped {
            hi = mid;
            f_hi = v;
        } else {
            lo = mid;
        }
        steps += 1;
        if steps > 400 {
            break;
        }
    }
    Ok(AttackOutcome {
        eta: dir * hi,
        delta_norm: hi * gn,
        grad_norm: gn,
        f_before: f,
        f_after: f_hi,
        flipped: true,
        boundary_case: false,
    })
}

/// How a PGD iterate moves before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgdStep {
    /// `x̃ + α·g/‖g‖`, the usual ℓ₂ PGD step (step length exactly `α`).
    #[default]
    Normalized,
    /// `x̃ + α·g`, the raw loss gradient.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub radius: f64,
    pub steps: usize,
    pub alpha: f64,
    pub step: PgdStep,
    pub early_stop: bool,
}

impl PgdConfig {
    /// `steps` iterations with `α = 2.5·R/steps`.
    pub fn standard(radius: f64, steps: usize) -> Self {
        Self { radius, steps, alpha: 2.5 * radius / steps.max(1) as f64, step: PgdStep::Normalized, early_stop: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub x_adv: Vec<f64>,
    pub f_before: f64,
    pub f_after: f64,
    pub delta_norm: f64,
    /// Some visited iterate had `y·f ≤ 0`.
    pub success: bool,
}

/// Gradient ascent on `ℓ(y f(x̃))` from `x̃ = x`, projecting onto `B(x, R)`
/// after each step. `success` records whether any visited iterate (the start
/// included) is misclassified. With `early_stop` the attack halts at and
/// returns the first such iterate; otherwise all `steps` are taken and the
/// last iterate is returned.
pub fn pgd_attack(p: &NetworkParams, x: &[f64], y: i8, cfg: &PgdConfig) -> Result<PgdOutcome> {
    check_label(y)?;
    if x.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), found: x.len() });
    }
    if !(cfg.radius > 0.0) {
        return Err(Error::InvalidArgument("PGD radius must be positive"));
    }
    if !(cfg.alpha >= 0.0) {
        return Err(Error::InvalidArgument("PGD step size must be non-negative"));
    }
    let yf = y as f64;
    let mut xt = x.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut f_before = 0.0;
    let mut f: f64;
    let mut k = 0;
    loop {
        f = p.forward_and_gradient_into(&xt, &mut g);
        if k == 0 {
            f_before = f;
        }
        if yf * f <= 0.0 && best.is_none() {
            best = Some((xt.clone(), f));
            if cfg.early_stop {
                break;
            }
        }
        if k == cfg.steps {
            break;
        }
        // ∇ₓ ln(1 + e^{−y f}) = −y σ(−y f) ∇f
        let scale = match cfg.step {
            PgdStep::Raw => -yf * sigmoid(-yf * f) * cfg.alpha,
            PgdStep::Normalized => {
                let gn = norm2(&g);
                if gn == 0.0 {
                    break;
                }
                -yf * cfg.alpha / gn
            }
        };
        for (xi, gi) in xt.iter_mut().zip(&g) {
            *xi += scale * gi;
        }
        project_in_place(&mut xt, x, cfg.radius)?;
        k += 1;
    }
    let success = best.is_some();
    if cfg.early_stop {
        if let Some((xb, fb)) = best {
            xt = xb;
            f = fb;
        }
    }
    Ok(PgdOutcome { delta_norm: dist2_unchecked(&xt, x), x_adv: xt, f_before, f_after: f, success })
}

/// Fraction of `data` on which PGD with budget `cfg.radius` fails to cause a
/// misclassification. PGD can miss adversarial points, so this over-estimates
/// the true robust accuracy.
pub fn robust_accuracy(p: &NetworkParams, data: &LabeledDataset, cfg: &PgdConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut robust = 0usize;
    for (x, y) in data.iter() {
        if !pgd_attack(p, x, y, cfg)?.success {
            robust += 1;
        }
    }
    Ok(robust as f64 / data.len() as f64)
}

/// Minimal-step search result for every example of `data`, in order.
pub fn minimal_eta_all(p: &NetworkParams, data: &LabeledDataset, eta_max: f64, tol: f64) -> Result<Vec<AttackOutcome>> {
    data.iter().map(|(x, _)| minimal_eta_search(p, x, eta_max, tol)).collect()
}
