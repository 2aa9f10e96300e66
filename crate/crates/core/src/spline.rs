//! Natural cubic spline interpolation of sparse control points onto the
//! dense horizon grid.
//!
//! Knots live on integer step indices. Each axis is fitted independently
//! with the natural boundary condition (zero second derivative at both end
//! knots), so the first and last sampled knot values are reproduced exactly
//! at the horizon ends. The per-axis kernel [`fit_axis`] works on plain
//! slices and knows nothing about the 3-D control type.

use crate::error::{Error, Result};
use crate::model::{ControlSequence, SparseControlPoints, Vec3};

/// One cubic segment `a + b·s + c·s² + d·s³`, `s` measured from the left knot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cubic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Cubic {
    pub fn value(&self, s: f64) -> f64 {
        self.a + s * (self.b + s * (self.c + s * self.d))
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.b + s * (2.0 * self.c + 3.0 * s * self.d)
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        2.0 * self.c + 6.0 * s * self.d
    }
}

/// Per-axis, per-segment cubic coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineCoefficients {
    pub knot_indices: Vec<usize>,
    /// `segments[axis][i]` covers `[knot_indices[i], knot_indices[i + 1]]`.
    pub segments: Vec<Vec<Cubic>>,
}

impl SplineCoefficients {
    /// Evaluates axis `axis` at continuous time `t` (in steps), clamping to
    /// the knot range.
    pub fn eval_axis(&self, axis: usize, t: f64) -> f64 {
        let (seg, s) = self.locate(t);
        self.segments[axis][seg].value(s)
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        Vec3::new(self.eval_axis(0, t), self.eval_axis(1, t), self.eval_axis(2, t))
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let k = &self.knot_indices;
        let last = k.len() - 2;
        let t = t.clamp(k[0] as f64, k[k.len() - 1] as f64);
        let seg = k[1..=last]
            .iter()
            .position(|&knot| t < knot as f64)
            .unwrap_or(last);
        (seg, t - k[seg] as f64)
    }
}

/// `M` knot indices spread as evenly as possible over `0..=T-1`:
/// `round(i·(T−1)/(M−1))`.
pub fn uniform_knots(count: usize, horizon: usize) -> Result<Vec<usize>> {
    if count < 2 || count > horizon {
        return Err(Error::InvalidArgs(format!(
            "need 2 <= M <= T, got M={count} T={horizon}"
        )));
    }
    let span = (horizon - 1) as f64;
    let denom = (count - 1) as f64;
    Ok((0..count)
        .map(|i| (i as f64 * span / denom).round() as usize)
        .collect())
}

/// Fits one axis of a natural cubic spline through `(knots[i], values[i])`.
///
/// The interior second derivatives come from the usual tridiagonal system,
/// solved with the Thomas algorithm.
pub fn fit_axis(knots: &[usize], values: &[f64]) -> Result<Vec<Cubic>> {
    let n = knots.len();
    if n < 2 || values.len() != n {
        return Err(Error::InvalidArgs(format!(
            "fit_axis needs >= 2 matching knots/values, got {} and {}",
            n,
            values.len()
        )));
    }
    for i in 0..n - 1 {
        if knots[i + 1] == knots[i] {
            return Err(Error::DegenerateKnots(i, i + 1));
        }
        if knots[i + 1] < knots[i] {
            return Err(Error::InvalidArgs("knot indices must increase".into()));
        }
    }
    let h: Vec<f64> = knots.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let slope: Vec<f64> = (0..n - 1)
        .map(|i| (values[i + 1] - values[i]) / h[i])
        .collect();

    // Second derivatives; m[0] = m[n-1] = 0.
    let mut m = vec![0.0; n];
    let interior = n - 2;
    if interior > 0 {
        let mut diag = vec![0.0; interior];
        let mut rhs = vec![0.0; interior];
        for j in 0..interior {
            let i = j + 1;
            diag[j] = 2.0 * (h[i - 1] + h[i]);
            rhs[j] = 6.0 * (slope[i] - slope[i - 1]);
        }
        // Forward sweep. Sub-diagonal entry of row j is h[j], super-diagonal h[j+1].
        for j in 1..interior {
            let w = h[j] / diag[j - 1];
            diag[j] -= w * h[j];
            rhs[j] -= w * rhs[j - 1];
        }
        m[interior] = rhs[interior - 1] / diag[interior - 1];
        for j in (0..interior - 1).rev() {
            m[j + 1] = (rhs[j] - h[j + 1] * m[j + 2]) / diag[j];
        }
    }

    Ok((0..n - 1)
        .map(|i| Cubic {
            a: values[i],
            b: slope[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0,
            c: m[i] / 2.0,
            d: (m[i + 1] - m[i]) / (6.0 * h[i]),
        })
        .collect())
}

/// Fits every axis of `points`.
pub fn fit_natural_cubic(points: &SparseControlPoints) -> Result<SplineCoefficients> {
    let knots = points.knot_indices();
    let segments = (0..3)
        .map(|axis| {
            let values: Vec<f64> = points.points().iter().map(|p| p[axis]).collect();
            fit_axis(knots, &values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplineCoefficients {
        knot_indices: knots.to_vec(),
        segments,
    })
}

/// Samples one fitted axis on the integer grid `0..horizon`, writing knot
/// values verbatim.
fn sample_axis(knots: &[usize], values: &[f64], segments: &[Cubic], out: &mut [f64]) {
    for (i, seg) in segments.iter().enumerate() {
        let start = knots[i];
        out[start] = values[i];
        for t in start + 1..knots[i + 1] {
            out[t] = seg.value((t - start) as f64);
        }
    }
    let last = knots.len() - 1;
    out[knots[last]] = values[last];
}

/// Interpolates sparse knots into a dense sequence of length `horizon`.
///
/// Entries at knot indices are copied from the knots bit-for-bit, so with a
/// knot on every step the output equals the input.
pub fn interpolate(points: &SparseControlPoints, horizon: usize) -> Result<ControlSequence> {
    let knots = points.knot_indices();
    if points.horizon() != horizon {
        return Err(Error::InvalidArgs(format!(
            "last knot index {} does not match horizon {horizon}",
            knots[knots.len() - 1]
        )));
    }
    let mut inputs = vec![Vec3::zeros(); horizon];
    if points.len() == horizon {
        inputs.copy_from_slice(points.points());
        return Ok(ControlSequence::new(inputs));
    }
    let coeffs = fit_natural_cubic(points)?;
    let mut buf = vec![0.0; horizon];
    for axis in 0..3 {
        let values: Vec<f64> = points.points().iter().map(|p| p[axis]).collect();
        sample_axis(knots, &values, &coeffs.segments[axis], &mut buf);
        for (u, v) in inputs.iter_mut().zip(&buf) {
            u[axis] = *v;
        }
    }
    Ok(ControlSequence::new(inputs))
}

/// Interpolation weights: the dense sequence is linear in the knot values,
/// `U[t] = Σ_m basis[t][m] · Ũ[m]` (per axis).
///
/// Returned row-major, `horizon × knots.len()`.
pub fn basis(knots: &[usize], horizon: usize) -> Result<Vec<f64>> {
    let count = knots.len();
    if count < 2 || knots[count - 1] + 1 != horizon {
        return Err(Error::InvalidArgs(
            "basis needs >= 2 knots ending at horizon - 1".into(),
        ));
    }
    let mut out = vec![0.0; horizon * count];
    let mut column = vec![0.0; horizon];
    let mut unit = vec![0.0; count];
    for m in 0..count {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[m] = 1.0;
        let segments = fit_axis(knots, &unit)?;
        sample_axis(knots, &unit, &segments, &mut column);
        for t in 0..horizon {
            out[t * count + m] = column[t];
        }
    }
    Ok(out)
}
