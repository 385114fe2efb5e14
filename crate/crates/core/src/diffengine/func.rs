use crate::math;

/// Highest derivative order any [`UnaryFn`] provides.
///
/// Jets are propagated up to fourth order, and the reverse pass through a
/// fourth-order composition needs one more.
pub const MAX_FN_DERIV: usize = 5;

/// Elementwise scalar functions that can appear in a [`FieldExpr`](super::FieldExpr).
///
/// Piecewise functions (`Relu`, `Requ`) use the `z <= 0` branch at the kink, so
/// `relu'(0) = 0` and `requ''(0) = 0`. Derivatives beyond their smoothness class
/// are zero everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Gelu,
    Relu,
    Requ,
    Gaussian,
    Exp,
    Ln,
    Recip,
    Powi(i32),
    Powf(f64),
}

const INV_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
// 1/sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl UnaryFn {
    pub fn name(&self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Sigmoid => "sigmoid",
            UnaryFn::Gelu => "gelu",
            UnaryFn::Relu => "relu",
            UnaryFn::Requ => "requ",
            UnaryFn::Gaussian => "gaussian",
            UnaryFn::Exp => "exp",
            UnaryFn::Ln => "ln",
            UnaryFn::Recip => "recip",
            UnaryFn::Powi(_) => "powi",
            UnaryFn::Powf(_) => "powf",
        }
    }

    /// Value of the function at `z`.
    pub fn value(&self, z: f64) -> f64 {
        let mut out = [0.0; 1];
        self.derivatives(z, &mut out);
        out[0]
    }

    /// Fills `out[k]` with the `k`-th derivative at `z` for `k < out.len()`.
    ///
    /// `out.len()` must not exceed `MAX_FN_DERIV + 1`.
    pub fn derivatives(&self, z: f64, out: &mut [f64]) {
        let n = out.len();
        debug_assert!(n <= MAX_FN_DERIV + 1);
        if n == 0 {
            return;
        }
        let mut all = [0.0; MAX_FN_DERIV + 1];
        match *self {
            UnaryFn::Sin => {
                if n == 1 {
                    out[0] = math::sin(z);
                    return;
                }
                let (s, c) = math::sin_cos(z);
                all = [s, c, -s, -c, s, c];
            }
            UnaryFn::Cos => {
                if n == 1 {
                    out[0] = math::cos(z);
                    return;
                }
                let (s, c) = math::sin_cos(z);
                all = [c, -s, -c, s, c, -s];
            }
            UnaryFn::Tanh => {
                let t = math::tanh(z);
                let s = 1.0 - t * t;
                all[0] = t;
                all[1] = 1.0 - t * t;
                all[2] = -2.0 * t + 2.0 * t * t * t;
                all[3] = (6.0 * t * t - 2.0) * s;
                all[4] = (16.0 * t - 24.0 * t * t * t) * (1.0 - t * t);
                all[5] = (16.0 - 120.0 * t * t + 120.0 * t * t * t * t) * s;
            }
            UnaryFn::Sigmoid => {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + math::exp(-z))
                } else {
                    let e = math::exp(z);
                    e / (1.0 + e)
                };
                let q = s * (1.0 - s);
                let s2 = s * s;
                all[0] = s;
                all[1] = q;
                all[2] = q * (1.0 - 2.0 * s);
                all[3] = q * (1.0 - 6.0 * s + 6.0 * s2);
                all[4] = q * (1.0 - 14.0 * s + 36.0 * s2 - 24.0 * s2 * s);
                all[5] = q * (1.0 - 30.0 * s + 150.0 * s2 - 240.0 * s2 * s + 120.0 * s2 * s2);
            }
            UnaryFn::Gelu => {
                let cdf = 0.5 * (1.0 + math::erf(z * INV_SQRT_2));
                let pdf = INV_SQRT_2PI * math::exp(-0.5 * z * z);
                let z2 = z * z;
                all[0] = z * cdf;
                all[1] = cdf + z * pdf;
                all[2] = (2.0 - z2) * pdf;
                all[3] = (z2 * z - 4.0 * z) * pdf;
                all[4] = (-z2 * z2 + 7.0 * z2 - 4.0) * pdf;
                all[5] = (z2 * z2 * z - 11.0 * z2 * z + 18.0 * z) * pdf;
            }
            UnaryFn::Relu => {
                if z > 0.0 {
                    all[0] = z;
                    all[1] = 1.0;
                }
            }
            UnaryFn::Requ => {
                if z > 0.0 {
                    all[0] = z * z;
                    all[1] = 2.0 * z;
                    all[2] = 2.0;
                }
            }
            UnaryFn::Gaussian => {
                let x = z;
                let e = math::exp(-x * x);
                all[0] = e;
                all[1] = -2.0 * x * e;
                all[2] = -2.0 * e + 4.0 * x * x * e;
                all[3] = 12.0 * x * e - 8.0 * x * x * x * e;
                all[4] = 12.0 * e - 48.0 * x * x * e + 16.0 * x * x * x * x * e;
                all[5] = -120.0 * x * e + 160.0 * x * x * x * e - 32.0 * x * x * x * x * x * e;
            }
            UnaryFn::Exp => {
                let e = math::exp(z);
                all = [e; MAX_FN_DERIV + 1];
            }
            UnaryFn::Ln => {
                let r = 1.0 / z;
                all[0] = math::ln(z);
                let mut p = r;
                let mut c = 1.0;
                for (k, slot) in all.iter_mut().enumerate().skip(1) {
                    *slot = c * p;
                    c *= -(k as f64);
                    p *= r;
                }
            }
            UnaryFn::Recip => {
                let r = 1.0 / z;
                let mut p = r;
                let mut c = 1.0;
                for (k, slot) in all.iter_mut().enumerate() {
                    *slot = c * p;
                    c *= -((k + 1) as f64);
                    p *= r;
                }
            }
            UnaryFn::Powi(e) => {
                let mut c = 1.0;
                for (k, slot) in all.iter_mut().enumerate() {
                    let k = k as i32;
                    if e >= 0 && k > e {
                        break;
                    }
                    *slot = c * math::powi(z, e - k);
                    c *= (e - k) as f64;
                }
            }
            UnaryFn::Powf(e) => {
                let mut c = 1.0;
                for (k, slot) in all.iter_mut().enumerate() {
                    *slot = c * math::pow(z, e - k as f64);
                    c *= e - k as f64;
                }
            }
        }
        out.copy_from_slice(&all[..n]);
    }
}
