//! Adaptive Gauss–Kronrod (7/15) integration, scalar and vector valued.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and refinement cap.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-9,
            rel: 0.0,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self {
            abs,
            ..Self::default()
        }
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    value: Vec<f64>,
    err: f64,
    // error estimate is at the rounding floor; splitting cannot help
    saturated: bool,
}

fn kronrod<F: FnMut(f64, &mut [f64])>(f: &mut F, lo: f64, hi: f64, dim: usize, buf: &mut [f64]) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut resk = vec![0.0; dim];
    let mut resg = vec![0.0; dim];
    let mut resabs = vec![0.0; dim];
    // 15 function values, kept for the asc term
    let mut fv = vec![0.0; 15 * dim];

    f(center, buf);
    fv[7 * dim..8 * dim].copy_from_slice(buf);
    for k in 0..dim {
        resk[k] = WGK[7] * buf[k];
        resg[k] = WG[3] * buf[k];
        resabs[k] = WGK[7] * buf[k].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        f(center - dx, buf);
        fv[j * dim..(j + 1) * dim].copy_from_slice(buf);
        f(center + dx, buf);
        fv[(14 - j) * dim..(15 - j) * dim].copy_from_slice(buf);
        for k in 0..dim {
            let f1 = fv[j * dim + k];
            let f2 = fv[(14 - j) * dim + k];
            resk[k] += WGK[j] * (f1 + f2);
            resabs[k] += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg[k] += WG[j / 2] * (f1 + f2);
            }
        }
    }
    let mut err: f64 = 0.0;
    let mut saturated = true;
    for k in 0..dim {
        let mean = 0.5 * resk[k];
        let mut asc = WGK[7] * (fv[7 * dim + k] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((fv[j * dim + k] - mean).abs() + (fv[(14 - j) * dim + k] - mean).abs());
        }
        let asc = asc * half.abs();
        let abs = resabs[k] * half.abs();
        let mut e = ((resk[k] - resg[k]) * half).abs();
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        let floor = 50.0 * f64::EPSILON * abs;
        if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(floor);
        }
        saturated &= e <= floor;
        err = err.max(e);
        resk[k] *= half;
    }
    Panel {
        lo,
        hi,
        value: resk,
        err,
        saturated,
    }
}

/// Integrates a vector-valued `f` over [lo, hi]; `f(x, out)` writes `dim` values.
/// The returned vector holds each component's integral.
pub fn integrate_vec<F>(mut f: F, lo: f64, hi: f64, dim: usize, tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    if hi == lo {
        return Ok(vec![0.0; dim]);
    }
    let mut buf = vec![0.0; dim];
    let mut panels = vec![kronrod(&mut f, lo, hi, dim, &mut buf)];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        let max_abs = (0..dim)
            .map(|k| panels.iter().map(|p| p.value[k]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if total_err <= tol.abs.max(tol.rel * max_abs) {
            break;
        }
        if panels.len() >= tol.max_intervals {
            return Err(Error::Integration {
                lo,
                hi,
                err: total_err,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.total_cmp(&b.1.err))
            .expect("at least one panel");
        if panels[worst].saturated {
            break;
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        if mid <= p.lo || mid >= p.hi {
            // cannot split further; the remaining error is at rounding level
            panels.push(Panel {
                err: 0.0,
                saturated: true,
                ..p
            });
            continue;
        }
        panels.push(kronrod(&mut f, p.lo, mid, dim, &mut buf));
        panels.push(kronrod(&mut f, mid, p.hi, dim, &mut buf));
    }
    let mut out = vec![0.0; dim];
    for p in &panels {
        for (o, v) in out.iter_mut().zip(&p.value) {
            *o += v;
        }
    }
    Ok(out)
}

pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), lo, hi, 1, tol).map(|v| v[0])
}

/// Integrates over consecutive pieces `[b_0, b_1], [b_1, b_2], …`, splitting the
/// absolute tolerance in proportion to piece width. Breakpoints must be sorted.
pub fn integrate_vec_pieces<F>(mut f: F, breaks: &[f64], dim: usize, tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut out = vec![0.0; dim];
    if breaks.len() < 2 {
        return Ok(out);
    }
    let span = breaks[breaks.len() - 1] - breaks[0];
    if span <= 0.0 {
        return Ok(out);
    }
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let piece_tol = Tolerance {
            abs: tol.abs * (w[1] - w[0]) / span,
            ..tol
        };
        let v = integrate_vec(&mut f, w[0], w[1], dim, piece_tol)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0, Tolerance::absolute(1e-13)).unwrap();
        assert!((v - (64.0 / 6.0 - 16.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::absolute(1e-9)).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn vector_components_match_scalar_runs() {
        let v = integrate_vec(
            |x, out| {
                out[0] = x.exp();
                out[1] = (3.0 * x).sin();
            },
            0.0,
            1.5,
            2,
            Tolerance::absolute(1e-12),
        )
        .unwrap();
        assert!((v[0] - (1.5f64.exp() - 1.0)).abs() < 1e-12);
        assert!((v[1] - (1.0 - 4.5f64.cos()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kinks_at_breakpoints() {
        let f = |x: f64, out: &mut [f64]| out[0] = (x - 1.0).abs();
        let v = integrate_vec_pieces(f, &[0.0, 1.0, 3.0], 1, Tolerance::absolute(1e-14)).unwrap();
        assert!((v[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn refinement_cap_is_reported() {
        let tol = Tolerance {
            abs: 1e-15,
            rel: 0.0,
            max_intervals: 3,
        };
        let r = integrate(|x| (50.0 * x).sin() / x.sqrt(), 1e-12, 10.0, tol);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
