//! Adaptive Dormand-Prince 5(4) integrator for autonomous complex systems.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ops::CVector;

/// Step-size control settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen from the derivative norm when `None`.
    pub initial_step: Option<f64>,
    /// Steps below `min_step * max(1, |t|)` abort the integration.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            min_step: 1e-14,
            max_steps: 10_000_000,
        }
    }
}

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

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(y)` and returns the state at each of `times`
/// (increasing, all `>= t0`).
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &CVector,
    times: &[f64],
    opts: &OdeOptions,
    mut on_output: impl FnMut(f64, &CVector) -> Result<()>,
) -> Result<()>
where
    F: FnMut(&CVector, &mut CVector),
{
    let n = y0.len();
    let mut y = y0.clone();
    let mut t = t0;
    let mut k: Vec<CVector> = (0..7).map(|_| CVector::zeros(n)).collect();
    let mut tmp = CVector::zeros(n);
    let mut y_new = CVector::zeros(n);

    rhs(&y, &mut k[0]);
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let scale = max_abs(&y).max(opts.atol);
        let deriv = max_abs(&k[0]);
        if deriv > 0.0 {
            (0.01 * scale / deriv).min(1.0)
        } else {
            1.0
        }
    });
    let mut steps = 0usize;

    for &t_out in times {
        while t < t_out {
            let remaining = t_out - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < opts.min_step * t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t, h: step });
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::StepUnderflow { t, h: step });
            }

            stage(&mut tmp, &y, step, &k, &[A21]);
            rhs(&tmp, &mut k[1]);
            stage(&mut tmp, &y, step, &k, &[A31, A32]);
            rhs(&tmp, &mut k[2]);
            stage(&mut tmp, &y, step, &k, &[A41, A42, A43]);
            rhs(&tmp, &mut k[3]);
            stage(&mut tmp, &y, step, &k, &[A51, A52, A53, A54]);
            rhs(&tmp, &mut k[4]);
            stage(&mut tmp, &y, step, &k, &[A61, A62, A63, A64, A65]);
            rhs(&tmp, &mut k[5]);
            stage(&mut y_new, &y, step, &k, &[A71, 0.0, A73, A74, A75, A76]);
            rhs(&y_new, &mut k[6]);

            let mut err = 0.0_f64;
            for i in 0..n {
                let e =
                    (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * step;
                let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err = err.max(e.norm() / sc);
            }

            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // a shortened final step says nothing about the natural step
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).max(0.1);
                if h < opts.min_step * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        on_output(t, &y)?;
    }
    Ok(())
}

fn stage(out: &mut CVector, y: &CVector, h: f64, k: &[CVector], a: &[f64]) {
    out.copy_from(y);
    for (kj, &aj) in k.iter().zip(a) {
        if aj != 0.0 {
            out.axpy(Complex64::new(h * aj, 0.0), kj, Complex64::new(1.0, 0.0));
        }
    }
}

fn max_abs(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
