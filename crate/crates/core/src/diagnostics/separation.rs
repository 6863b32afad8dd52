//! Logarithmic trajectory-separation functional between a base run and a
//! perturbed run paired by particle id.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DiagnosticsError;
use crate::ensemble::{Ensemble, Frame};
use crate::vector::dist;

/// Weighted mean over pairs of `log(1 + |dx|/(zeta delta) + |dv|/delta)`.
/// Pairs are matched by id; dead particles are skipped.
pub fn phi_functional(base: &Ensemble, pert: &Ensemble, delta: f64, zeta: f64) -> Result<f64, DiagnosticsError> {
    if base.len() != pert.len() {
        return Err(DiagnosticsError::PairMismatch(format!(
            "{} vs {} particles",
            base.len(),
            pert.len()
        )));
    }
    if base.time() != pert.time() {
        return Err(DiagnosticsError::PairMismatch(format!(
            "times {} vs {}",
            base.time(),
            pert.time()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..base.len() {
        let j = if pert.id(i) == base.id(i) {
            i
        } else {
            pert.index_of(base.id(i))
                .ok_or_else(|| DiagnosticsError::PairMismatch(format!("id {} missing", base.id(i))))?
        };
        if !base.is_alive(i) || !pert.is_alive(j) {
            continue;
        }
        let w = base.weight(i);
        let s = 1.0 + dist(base.pos(i), pert.pos(j)) / (zeta * delta) + dist(base.vel(i), pert.vel(j)) / delta;
        num += w * s.ln();
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSample {
    pub t: f64,
    pub phi: f64,
    /// Finite-difference slope (forward, backward at the last sample).
    pub slope: f64,
}

/// `Phi` over two aligned snapshot sequences.
pub fn phi_series(
    base: &[Ensemble],
    pert: &[Ensemble],
    delta: f64,
    zeta: f64,
) -> Result<Vec<PhiSample>, DiagnosticsError> {
    if base.len() != pert.len() {
        return Err(DiagnosticsError::PairMismatch(format!(
            "{} vs {} snapshots",
            base.len(),
            pert.len()
        )));
    }
    let vals = base
        .iter()
        .zip(pert)
        .map(|(b, p)| Ok((b.time(), phi_functional(b, p, delta, zeta)?)))
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    let n = vals.len();
    Ok((0..n)
        .map(|k| {
            let slope = if n < 2 {
                0.0
            } else {
                let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
                (vals[b].1 - vals[a].1) / (vals[b].0 - vals[a].0)
            };
            PhiSample {
                t: vals[k].0,
                phi: vals[k].1,
                slope,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiGrowth {
    pub max_slope: f64,
    /// `1/zeta + zeta + zeta log(1/(zeta delta))`
    pub bound_shape: f64,
    /// `max_slope / bound_shape`, an empirical fit of the constant.
    pub fitted_constant: f64,
}

impl PhiGrowth {
    /// True when the fitted constant grows between a coarse and a refined
    /// run by more than `factor`.
    pub fn grows_under_refinement(&self, refined: &PhiGrowth, factor: f64) -> bool {
        refined.fitted_constant > factor * self.fitted_constant
    }
}

/// Largest slope within `window = (t_lo, t_hi)` and the bound shape.
pub fn phi_growth_check(series: &[PhiSample], window: (f64, f64), delta: f64, zeta: f64) -> PhiGrowth {
    let max_slope = series
        .iter()
        .filter(|s| s.t >= window.0 && s.t <= window.1)
        .map(|s| s.slope)
        .fold(0.0, f64::max);
    let bound_shape = 1.0 / zeta + zeta + zeta * (1.0 / (zeta * delta)).ln();
    PhiGrowth {
        max_slope,
        bound_shape,
        fitted_constant: max_slope / bound_shape,
    }
}

/// Copy of `e` with every position displaced by `amplitude` in a random
/// direction, keeping particles inside the domain. Problem B pairs are
/// displaced mirror-symmetrically.
pub fn jitter_positions(e: &Ensemble, amplitude: f64, seed: u64) -> Ensemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = e.dim();
    let dom = e.domain();
    let mut out = e.clone();
    let mut shifts: Vec<Vec<f64>> = Vec::with_capacity(e.len());
    for i in 0..e.len() {
        if e.frame() == Frame::ProblemB && i % 2 == 1 {
            let mut m = shifts[i - 1].clone();
            m[0] = -m[0];
            shifts.push(m);
            continue;
        }
        let mut attempt = 0;
        let shift = loop {
            let mut u: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = u.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            u.iter_mut().for_each(|c| *c *= amplitude / n);
            let moved: Vec<f64> = e.pos(i).iter().zip(&u).map(|(a, b)| a + b).collect();
            attempt += 1;
            let ok = match e.frame() {
                Frame::ProblemA => dom.contains(&moved),
                Frame::ProblemB => true,
            };
            if ok || attempt > 64 {
                break if ok { u } else { vec![0.0; d] };
            }
        };
        shifts.push(shift);
    }
    let (x, _) = out.state_mut();
    for (i, s) in shifts.iter().enumerate() {
        for (k, c) in s.iter().enumerate() {
            x[i * d + k] += c;
        }
    }
    out
}
