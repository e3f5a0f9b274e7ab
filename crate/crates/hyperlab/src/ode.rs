//! Adaptive Dormand–Prince 5(4) integrator.
//!
//! Output nodes are hit exactly: the step is truncated at each requested
//! abscissa instead of interpolating, so samples carry the full local
//! accuracy of the scheme.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Call [`OdeSystem::project`] after this many accepted steps (0 = never).
    pub project_every: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-10, max_step: f64::INFINITY, max_steps: 200_000, project_every: 0 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rel_tol: tol, abs_tol: tol, ..Self::default() }
    }
}

pub trait OdeSystem {
    type Error;
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Self::Error>;
    /// Optional drift correction applied between steps.
    fn project(&self, _t: f64, _y: &mut [f64]) {}
    /// Scalar `c(y)` together with the values at which the right-hand side
    /// loses smoothness. Steps are cut so that no step straddles one.
    fn breakpoints(&self, _y: &[f64]) -> Option<(f64, &[f64])> {
        None
    }
}

/// Breakpoint strictly between `c0` and `c1` nearest to `c0`, skipping any
/// the step starts on.
fn crossing(c0: f64, c1: f64, points: &[f64]) -> Option<f64> {
    points
        .iter()
        .copied()
        .filter(|&b| (c0 - b).abs() > landing_gap(b) && (c0 - b) * (c1 - b) < 0.0)
        .min_by(|a, b| (a - c0).abs().total_cmp(&(b - c0).abs()))
}

/// How close a step must land to a breakpoint to count as on it.
fn landing_gap(b: f64) -> f64 {
    1e-9 * b.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError<E> {
    /// Step size collapsed or step budget exhausted.
    StepFailure { t: f64, reason: &'static str },
    /// The right-hand side refused to evaluate (e.g. left its domain).
    Rhs { t: f64, error: E },
}

impl<E: fmt::Display> fmt::Display for OdeError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::StepFailure { t, reason } => write!(f, "step failure at t = {t}: {reason}"),
            OdeError::Rhs { t, error } => write!(f, "right-hand side failed at t = {t}: {error}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th-order minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate from `(t0, y0)` through the increasing `outputs`, calling
/// `on_output(t, y)` at each. Output nodes equal to `t0` are reported
/// without stepping.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_output: F,
) -> Result<OdeStats, OdeError<S::Error>>
where
    S: OdeSystem,
    F: FnMut(f64, &[f64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    let eval = |t: f64, y: &[f64], dy: &mut [f64], stats: &mut OdeStats| -> Result<(), OdeError<S::Error>> {
        stats.evaluations += 1;
        sys.rhs(t, y, dy).map_err(|error| OdeError::Rhs { t, error })
    };

    let mut out_iter = outputs.iter().copied().peekable();
    while let Some(&to) = out_iter.peek() {
        if to <= t0 {
            on_output(t0, &y);
            out_iter.next();
        } else {
            break;
        }
    }
    if out_iter.peek().is_none() {
        return Ok(stats);
    }

    eval(t, &y, &mut k1, &mut stats)?;
    let t_end = *outputs.last().unwrap();
    let mut h = initial_step(sys, t, &y, &k1, t_end - t, opts, &mut stats)?;
    let mut since_project = 0usize;
    // step size forced by a breakpoint, replacing the controller's choice once
    let mut forced: Option<f64> = None;

    while let Some(target) = out_iter.peek().copied() {
        loop {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(OdeError::StepFailure { t, reason: "step budget exhausted" });
            }
            let remaining = target - t;
            let mut hit = false;
            let was_forced = forced.is_some();
            let mut hs = forced.take().unwrap_or(h).min(opts.max_step);
            if hs >= remaining * (1.0 - 1e-12) {
                hs = remaining;
                hit = true;
            }
            if hs <= (t.abs() + 1.0) * 1e-15 && !hit {
                return Err(OdeError::StepFailure { t, reason: "step size underflow" });
            }

            for i in 0..n {
                ytmp[i] = y[i] + hs * A21 * k1[i];
            }
            eval(t + C2 * hs, &ytmp, &mut k2, &mut stats)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            eval(t + C3 * hs, &ytmp, &mut k3, &mut stats)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            eval(t + C4 * hs, &ytmp, &mut k4, &mut stats)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            eval(t + C5 * hs, &ytmp, &mut k5, &mut stats)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            eval(t + hs, &ytmp, &mut k6, &mut stats)?;
            for i in 0..n {
                ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            let t_new = if hit { target } else { t + hs };
            eval(t_new, &ynew, &mut k7, &mut stats)?;

            let mut err = 0.0;
            for i in 0..n {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            err = (err / n as f64).sqrt();
            if !err.is_finite() {
                stats.rejected += 1;
                h = hs * 0.2;
                continue;
            }
            let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            if let Some((c0, pts)) = sys.breakpoints(&y) {
                let c1 = sys.breakpoints(&ynew).map_or(c0, |b| b.0);
                if let Some(b) = crossing(c0, c1, pts) {
                    // aim just short of the breakpoint; the next step starts on it
                    let aim = b - (b - c0).signum() * 0.5 * landing_gap(b);
                    forced = Some(hs * ((aim - c0) / (c1 - c0)).clamp(1e-3, 1.0));
                    stats.rejected += 1;
                    continue;
                }
            }
            if err <= 1.0 {
                stats.accepted += 1;
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                since_project += 1;
                if opts.project_every > 0 && since_project >= opts.project_every {
                    sys.project(t, &mut y);
                    eval(t, &y, &mut k1, &mut stats)?;
                    since_project = 0;
                }
                // a truncated step says nothing about the natural step size
                if (!hit && !was_forced) || fac < 1.0 {
                    h = hs * fac;
                }
                if hit {
                    break;
                }
            } else {
                stats.rejected += 1;
                h = hs * fac.min(1.0);
            }
        }
        on_output(t, &y);
        out_iter.next();
    }
    Ok(stats)
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> Result<f64, OdeError<S::Error>> {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    stats.evaluations += 1;
    sys.rhs(t + h0, &y1, &mut f1).map_err(|error| OdeError::Rhs { t: t + h0, error })?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(span).min(opts.max_step).max(1e-12 * span))
}
