//! Small dense-vector helpers over slices. Dimension is a runtime quantity
//! throughout the crate, so positions and velocities are plain `[f64]`.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `out += s * a`
#[inline]
pub fn axpy(s: f64, a: &[f64], out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += s * x;
    }
}

/// Mirror through `{x_1 = 0}`: flips the first coordinate.
#[inline]
pub fn mirror(a: &[f64]) -> Vec<f64> {
    let mut m = a.to_vec();
    m[0] = -m[0];
    m
}

/// Euclidean norm of the phase-space point `(x, v)`.
#[inline]
pub fn phase_norm(x: &[f64], v: &[f64]) -> f64 {
    (norm_sq(x) + norm_sq(v)).sqrt()
}

/// Euclidean distance between `(xa, va)` and `(xb, vb)` in phase space.
#[inline]
pub fn phase_dist(xa: &[f64], va: &[f64], xb: &[f64], vb: &[f64]) -> f64 {
    let dx: f64 = xa.iter().zip(xb).map(|(a, b)| (a - b) * (a - b)).sum();
    let dv: f64 = va.iter().zip(vb).map(|(a, b)| (a - b) * (a - b)).sum();
    (dx + dv).sqrt()
}

// Error-free transformations, used where a result must be (nearly) correctly
// rounded rather than merely accurate.

#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Dot product evaluated in double-double; returns `(hi, lo)`.
pub(crate) fn dot2(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (p, pe) = two_prod(*x, *y);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += pe + se;
    }
    two_sum(hi, lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot2_recovers_cancellation() {
        let a = [1e16, 1.0, -1e16];
        let b = [1.0, 1.0, 1.0];
        assert_eq!(dot(&a, &b), 0.0);
        let (hi, lo) = dot2(&a, &b);
        assert_eq!(hi + lo, 1.0);
    }

    #[test]
    fn mirror_flips_first_coordinate_only() {
        assert_eq!(mirror(&[1.0, 2.0, 3.0]), vec![-1.0, 2.0, 3.0]);
    }
}
