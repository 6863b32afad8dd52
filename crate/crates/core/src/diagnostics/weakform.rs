//! Weak-form residual of the specular transport equation along recorded
//! trajectories, including the boundary jump terms.

use serde::Serialize;

use super::DiagnosticsError;
use crate::fields::{rbar, rbar_prime};
use crate::flow::Trajectory;
use crate::geometry::{reflect_about, Domain};
use crate::vector::dot;

/// A C^1 test function `phi(t, x, v)` with its partial derivatives.
pub trait TestFunction: Sync {
    fn name(&self) -> &str;
    fn value(&self, t: f64, x: &[f64], v: &[f64]) -> f64;
    fn dt(&self, t: f64, x: &[f64], v: &[f64]) -> f64;
    fn grad_x(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64>;
    fn grad_v(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64>;
}

/// `b(s) = (1 - s^2)^3` on `|s| < 1`, a C^2 bump, and its derivative.
fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let u = 1.0 - s * s;
    (u * u * u, -6.0 * s * u * u)
}

fn rbar_with_slope(s: f64) -> (f64, f64) {
    (rbar(s), rbar_prime(s))
}

/// Separable bump `psi_1(t) psi_2(x) psi_3(v)`.
///
/// `psi_1` is a bump on `[t_lo, t_hi]` (or identically one when `t_lo >=
/// t_hi`), `psi_2` a radial bump of radius `x_radius` around `x_center`
/// (global when the radius is infinite). `psi_3 = g(v . e_1) P(v) B(|v|/v_radius)`
/// with `P(v) = 1 + tilt . v` and `g` vanishing on `|v_1| < 2 eps_grazing`
/// (identically one when `eps_grazing == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct BumpTestFunction {
    pub name: String,
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_center: Vec<f64>,
    pub x_radius: f64,
    pub tilt: Vec<f64>,
    pub v_radius: f64,
    pub eps_grazing: f64,
}

impl BumpTestFunction {
    fn psi_t(&self, t: f64) -> (f64, f64) {
        if self.t_lo >= self.t_hi {
            return (1.0, 0.0);
        }
        let half = 0.5 * (self.t_hi - self.t_lo);
        let (b, db) = bump((t - 0.5 * (self.t_lo + self.t_hi)) / half);
        (b, db / half)
    }

    /// Value and gradient of `psi_2`.
    fn psi_x(&self, x: &[f64]) -> (f64, Vec<f64>) {
        if !self.x_radius.is_finite() {
            return (1.0, vec![0.0; x.len()]);
        }
        let r2: f64 = x
            .iter()
            .zip(&self.x_center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            / (self.x_radius * self.x_radius);
        if r2 >= 1.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let u = 1.0 - r2;
        let g = -6.0 * u * u / (self.x_radius * self.x_radius);
        (
            u * u * u,
            x.iter().zip(&self.x_center).map(|(a, c)| g * (a - c)).collect(),
        )
    }

    /// Value and gradient of `psi_3`.
    fn psi_v(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let d = v.len();
        let (g, dg) = if self.eps_grazing > 0.0 {
            let s = v[0].abs() / (2.0 * self.eps_grazing);
            let (r, dr) = rbar_with_slope(s);
            (r, dr * v[0].signum() / (2.0 * self.eps_grazing))
        } else {
            (1.0, 0.0)
        };
        let p = 1.0 + dot(&self.tilt, v);
        let r2 = v.iter().map(|c| c * c).sum::<f64>() / (self.v_radius * self.v_radius);
        if r2 >= 1.0 {
            return (0.0, vec![0.0; d]);
        }
        let u = 1.0 - r2;
        let b = u * u * u;
        let db_coef = -6.0 * u * u / (self.v_radius * self.v_radius);
        let val = g * p * b;
        let grad = (0..d)
            .map(|k| {
                let dgk = if k == 0 { dg } else { 0.0 };
                dgk * p * b + g * self.tilt[k] * b + g * p * db_coef * v[k]
            })
            .collect();
        (val, grad)
    }
}

impl TestFunction for BumpTestFunction {
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        self.psi_t(t).0 * self.psi_x(x).0 * self.psi_v(v).0
    }
    fn dt(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        self.psi_t(t).1 * self.psi_x(x).0 * self.psi_v(v).0
    }
    fn grad_x(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let s = self.psi_t(t).0 * self.psi_v(v).0;
        self.psi_x(x).1.into_iter().map(|g| s * g).collect()
    }
    fn grad_v(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let s = self.psi_t(t).0 * self.psi_x(x).0;
        self.psi_v(v).1.into_iter().map(|g| s * g).collect()
    }
}

/// The fixed library used for trajectories on `[0, t_end]` in dimension `d`
/// near the wall point `x_center`.
pub fn test_function_library(d: usize, t_end: f64, x_center: &[f64], eps_grazing: f64) -> Vec<BumpTestFunction> {
    let zero = vec![0.0; d];
    let mut tilt_a = zero.clone();
    tilt_a[0] = 0.5;
    if d > 1 {
        tilt_a[1] = 0.25;
    }
    let mut tilt_b = zero.clone();
    tilt_b[0] = -0.3;
    tilt_b[d - 1] += 0.2;
    let base = BumpTestFunction {
        name: String::new(),
        t_lo: 0.0,
        t_hi: 0.0,
        x_center: x_center.to_vec(),
        x_radius: f64::INFINITY,
        tilt: zero.clone(),
        v_radius: 1e6,
        eps_grazing: 0.0,
    };
    vec![
        BumpTestFunction {
            name: "time_bump".into(),
            t_lo: 0.1 * t_end,
            t_hi: 0.9 * t_end,
            ..base.clone()
        },
        BumpTestFunction {
            name: "even_velocity".into(),
            t_lo: 0.05 * t_end,
            t_hi: 1.5 * t_end,
            x_radius: 2.0,
            v_radius: 4.0,
            eps_grazing,
            ..base.clone()
        },
        BumpTestFunction {
            name: "tilted_a".into(),
            t_lo: 0.05 * t_end,
            t_hi: 1.5 * t_end,
            x_radius: 2.0,
            tilt: tilt_a,
            v_radius: 4.0,
            eps_grazing,
            ..base.clone()
        },
        BumpTestFunction {
            name: "tilted_b".into(),
            t_lo: 0.2 * t_end,
            t_hi: 1.2 * t_end,
            x_radius: 1.5,
            tilt: tilt_b,
            v_radius: 3.0,
            eps_grazing,
            ..base
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub trajectory: u64,
    pub test_function: String,
    pub residual: f64,
}

fn check_support(
    phi: &dyn TestFunction,
    domain: &Domain,
    t: f64,
    x: &[f64],
    v: &[f64],
    t0: f64,
    eps: f64,
) -> Result<(), DiagnosticsError> {
    let on_wall = domain.signed_distance(x).abs() <= 1e-9 * domain.scale();
    if !on_wall || phi.value(t, x, v) == 0.0 {
        return Ok(());
    }
    let n = domain.inward_normal(x);
    if t == t0 {
        return Err(DiagnosticsError::SupportViolation(format!(
            "nonzero at the initial corner t = {t}"
        )));
    }
    if dot(&n, v).abs() < 2.0 * eps {
        return Err(DiagnosticsError::SupportViolation(format!(
            "nonzero on the grazing set at t = {t}"
        )));
    }
    Ok(())
}

/// `phi(T, Z_T) - phi(0, Z_0) - int (d_t phi + b . grad phi) dt - sum of
/// jumps`, with the integral split at reflection events and evaluated by
/// per-piece trapezoids. `accel(t, x)` is the field along the path; it also
/// corrects the recorded pre-event velocity (a half-step velocity in the
/// leapfrog) to the event time.
pub fn weakform_residual(
    traj: &Trajectory,
    phi: &dyn TestFunction,
    domain: &Domain,
    accel: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    eps_grazing: f64,
) -> Result<f64, DiagnosticsError> {
    let n = traj.times.len();
    if n == 0 {
        return Ok(0.0);
    }
    let t0 = traj.times[0];
    let integrand = |t: f64, x: &[f64], v: &[f64]| -> f64 {
        let a = accel(t, x);
        phi.dt(t, x, v) + dot(v, &phi.grad_x(t, x, v)) + dot(&a, &phi.grad_v(t, x, v))
    };
    for k in 0..n {
        check_support(phi, domain, traj.times[k], &traj.x[k], &traj.v[k], t0, eps_grazing)?;
    }
    let mut integral = 0.0;
    let mut jumps = 0.0;
    let mut ev = traj.events.iter().peekable();
    for k in 0..n - 1 {
        let (ta, tb) = (traj.times[k], traj.times[k + 1]);
        let t_mid = 0.5 * (ta + tb);
        let mut prev_t = ta;
        let mut prev_f = integrand(ta, &traj.x[k], &traj.v[k]);
        while let Some(e) = ev.next_if(|e| e.t <= tb) {
            let a = accel(e.t, &e.x);
            let vm: Vec<f64> = e.v_minus.iter().zip(&a).map(|(v, ac)| v + (e.t - t_mid) * ac).collect();
            let nrm = domain.inward_normal(&e.x);
            let vp = reflect_about(&nrm, &vm);
            check_support(phi, domain, e.t, &e.x, &vm, t0, eps_grazing)?;
            let fm = integrand(e.t, &e.x, &vm);
            integral += 0.5 * (prev_f + fm) * (e.t - prev_t);
            jumps += phi.value(e.t, &e.x, &vp) - phi.value(e.t, &e.x, &vm);
            prev_t = e.t;
            prev_f = integrand(e.t, &e.x, &vp);
        }
        let fb = integrand(tb, &traj.x[k + 1], &traj.v[k + 1]);
        integral += 0.5 * (prev_f + fb) * (tb - prev_t);
    }
    let end = phi.value(traj.times[n - 1], &traj.x[n - 1], &traj.v[n - 1]);
    let start = phi.value(t0, &traj.x[0], &traj.v[0]);
    Ok(end - start - integral - jumps)
}
