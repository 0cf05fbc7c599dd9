//! Derivative-free maximisation.
//!
//! [`nelder_mead_max`] is a textbook Nelder-Mead simplex search (maximising)
//! with randomised restarts around the incumbent. Problems with many
//! coordinates go through [`block_coordinate_max`], which cycles Nelder-Mead
//! over small blocks of coordinates while the rest are held fixed.
//!
//! Box constraints are handled by optimising in an unconstrained space and
//! mapping through [`bounded_transform`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::RngStream;

/// Above this many coordinates the block-coordinate scheme is used.
pub const PLAIN_SIMPLEX_MAX_ARITY: usize = 40;
const INITIAL_STEP: f64 = 0.25;
const RESTART_SCALE: f64 = 0.5;
const MIN_SWEEPS: usize = 2;
const MAX_SWEEPS: usize = 50;
const SWEEP_REL_IMPROVEMENT: f64 = 1e-6;

/// A real-valued function to maximise. Must be deterministic.
pub trait Objective {
    fn arity(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> f64;
}

/// Adapter turning a closure into an [`Objective`].
pub struct FnObjective<F> {
    arity: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnObjective<F> {
    pub fn new(arity: usize, f: F) -> Self {
        Self { arity, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// An objective that can cheaply be restricted to a block of its coordinates.
pub trait BlockObjective: Objective {
    /// The objective as a function of `x[block]` only, other coordinates
    /// frozen at their values in `x`.
    fn restrict<'a>(&'a self, x: &'a [f64], block: Range<usize>) -> Box<dyn Objective + 'a>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimplexOptions {
    /// Iteration budget for each restart.
    pub max_iterations: usize,
    /// Stop once the simplex value spread falls below `tolerance * max(1, |best|)`.
    pub tolerance: f64,
    pub restarts: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Coordinates per block in the block-coordinate scheme.
    pub block_size: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-8,
            restarts: 4,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            block_size: 10,
        }
    }
}

impl SimplexOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be > 0"));
        }
        if !(self.reflection > 0.0) {
            return Err(Error::param("reflection", "must be > 0"));
        }
        if !(self.expansion > 1.0) {
            return Err(Error::param("expansion", "must be > 1"));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::param("contraction", "must lie in (0, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("shrink", "must lie in (0, 1)"));
        }
        if self.block_size == 0 {
            return Err(Error::param("block_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value seen after each iteration (or sweep), across restarts.
    pub trace: Vec<f64>,
}

#[inline]
fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    /// Sort vertices best-first. Stable, so ties keep their earlier position.
    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        self.points = idx.iter().map(|&i| std::mem::take(&mut self.points[i])).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn replace_worst(&mut self, x: Vec<f64>, f: f64) {
        let n = self.values.len() - 1;
        // insert after every vertex that is at least as good
        let pos = self.values[..n].iter().position(|&v| f > v).unwrap_or(n);
        self.points.pop();
        self.values.pop();
        self.points.insert(pos, x);
        self.values.insert(pos, f);
    }

    fn diameter(&self) -> f64 {
        let best = &self.points[0];
        self.points[1..]
            .iter()
            .map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

struct Search<'a> {
    obj: &'a dyn Objective,
    opts: &'a SimplexOptions,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        finite_or_neg_inf(self.obj.evaluate(x))
    }

    /// One Nelder-Mead descent from the given vertices; returns the best vertex.
    fn descend(&mut self, points: Vec<Vec<f64>>, first_value: f64, incumbent: f64, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
        let n = points[0].len();
        let mut values = Vec::with_capacity(n + 1);
        values.push(first_value);
        for p in &points[1..] {
            values.push(self.eval(p));
        }
        let mut s = Simplex { points, values };
        s.sort();
        let o = self.opts;
        let mut centroid = vec![0.0; n];
        for _ in 0..o.max_iterations {
            let best = s.values[0];
            let worst = s.values[n];
            let spread = best - worst;
            if spread.is_finite() && spread <= o.tolerance * best.abs().max(1.0) {
                break;
            }
            if s.diameter() <= 1e-13 {
                break;
            }
            centroid.iter_mut().for_each(|c| *c = 0.0);
            for p in &s.points[..n] {
                for (c, v) in centroid.iter_mut().zip(p) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= n as f64);
            let along = |t: f64, from: &[f64]| -> Vec<f64> {
                centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(o.reflection, &s.points[n]);
            let fr = self.eval(&xr);
            if fr > s.values[0] {
                let xe = along(o.reflection * o.expansion, &s.points[n]);
                let fe = self.eval(&xe);
                if fe > fr {
                    s.replace_worst(xe, fe);
                } else {
                    s.replace_worst(xr, fr);
                }
            } else if fr > s.values[n - 1] {
                s.replace_worst(xr, fr);
            } else {
                let outside = fr > worst;
                let (xc, fc) = if outside {
                    let xc = along(o.reflection * o.contraction, &s.points[n]);
                    let fc = self.eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-o.contraction, &s.points[n]);
                    let fc = self.eval(&xc);
                    (xc, fc)
                };
                let accepted = if outside { fc >= fr } else { fc > worst };
                if accepted {
                    s.replace_worst(xc, fc);
                } else {
                    let anchor = s.points[0].clone();
                    for i in 1..=n {
                        let p: Vec<f64> =
                            anchor.iter().zip(&s.points[i]).map(|(a, v)| a + o.shrink * (v - a)).collect();
                        s.values[i] = self.eval(&p);
                        s.points[i] = p;
                    }
                    s.sort();
                }
            }
            trace.push(s.values[0].max(incumbent));
        }
        let value = s.values[0];
        (s.points.swap_remove(0), value)
    }
}

/// Maximises `obj` from `start` with Nelder-Mead plus `opts.restarts` random
/// restarts around the incumbent. Values that are not finite count as -inf.
pub fn nelder_mead_max(
    obj: &dyn Objective,
    start: &[f64],
    opts: &SimplexOptions,
    rng: &mut RngStream,
) -> Result<SimplexResult> {
    let n = obj.arity();
    if start.len() != n || n == 0 {
        return Err(Error::param("start", format!("expected {n} coordinates, got {}", start.len())));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("start", "coordinates must be finite"));
    }
    let mut search = Search { obj, opts, evaluations: 0 };
    let f0 = search.eval(start);
    if !f0.is_finite() {
        return Err(Error::Initialization);
    }

    let mut best_x = start.to_vec();
    let mut best_f = f0;
    let mut trace = vec![f0];
    for restart in 0..=opts.restarts {
        let mut points = Vec::with_capacity(n + 1);
        points.push(best_x.clone());
        for j in 0..n {
            let mut p = best_x.clone();
            if restart == 0 {
                p[j] += INITIAL_STEP;
            } else {
                for v in p.iter_mut() {
                    *v += RESTART_SCALE * rng.standard_normal();
                }
            }
            points.push(p);
        }
        let (x, f) = search.descend(points, best_f, best_f, &mut trace);
        if f > best_f {
            best_f = f;
            best_x = x;
        }
    }
    Ok(SimplexResult { argmax: best_x, value: best_f, evaluations: search.evaluations, trace })
}

/// Cyclic block-coordinate Nelder-Mead: each sweep optimises consecutive
/// blocks of `opts.block_size` coordinates in turn. Runs at least two sweeps
/// and stops once a sweep improves the objective by less than 1e-6 relative.
pub fn block_coordinate_max(
    obj: &dyn BlockObjective,
    start: &[f64],
    opts: &SimplexOptions,
    rng: &mut RngStream,
) -> Result<SimplexResult> {
    let n = obj.arity();
    if start.len() != n || n == 0 {
        return Err(Error::param("start", format!("expected {n} coordinates, got {}", start.len())));
    }
    let mut x = start.to_vec();
    let mut current = finite_or_neg_inf(obj.evaluate(&x));
    if !current.is_finite() {
        return Err(Error::Initialization);
    }
    let mut trace = vec![current];
    let mut evaluations = 1;
    for sweep in 0..MAX_SWEEPS {
        let before = current;
        let mut lo = 0;
        while lo < n {
            let hi = (lo + opts.block_size).min(n);
            let (argmax, improved, evals) = {
                let sub = obj.restrict(&x, lo..hi);
                let r = nelder_mead_max(sub.as_ref(), &x[lo..hi], opts, rng)?;
                let start_value = sub.evaluate(&x[lo..hi]);
                (r.argmax, r.value > start_value, r.evaluations)
            };
            evaluations += evals;
            if improved {
                x[lo..hi].copy_from_slice(&argmax);
            }
            lo = hi;
        }
        let after = finite_or_neg_inf(obj.evaluate(&x));
        evaluations += 1;
        // rounding differences between block and full evaluation must not
        // let the recorded best go backwards
        current = after.max(current);
        trace.push(current);
        let gain = current - before;
        if sweep + 1 >= MIN_SWEEPS && gain <= SWEEP_REL_IMPROVEMENT * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let value = finite_or_neg_inf(obj.evaluate(&x));
    Ok(SimplexResult { argmax: x, value, evaluations, trace })
}

/// Plain Nelder-Mead for small problems, block-coordinate above
/// [`PLAIN_SIMPLEX_MAX_ARITY`] coordinates.
pub fn maximize(obj: &dyn BlockObjective, start: &[f64], opts: &SimplexOptions, rng: &mut RngStream) -> Result<SimplexResult> {
    if obj.arity() > PLAIN_SIMPLEX_MAX_ARITY {
        block_coordinate_max(obj, start, opts, rng)
    } else {
        nelder_mead_max(obj, start, opts, rng)
    }
}

/// Numerically careful logistic function.
#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Maps an unconstrained coordinate strictly inside `(lower, upper)`.
#[inline]
pub fn to_bounded(u: f64, lower: f64, upper: f64) -> f64 {
    let v = lower + (upper - lower) * logistic(u);
    if v <= lower {
        lower.next_up()
    } else if v >= upper {
        upper.next_down()
    } else {
        v
    }
}

/// Inverse of [`to_bounded`] for points strictly inside the bounds.
pub fn from_bounded(x: f64, lower: f64, upper: f64) -> f64 {
    let p = ((x - lower) / (upper - lower)).clamp(1e-15, 1.0 - 1e-15);
    (p / (1.0 - p)).ln()
}

pub fn bounded_transform(unconstrained: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    if unconstrained.len() != lower.len() || lower.len() != upper.len() {
        return Err(Error::param("bounds", "vectors must share one length"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::param("bounds", "lower must be < upper in every coordinate"));
    }
    Ok(unconstrained.iter().zip(lower.iter().zip(upper)).map(|(&u, (&l, &h))| to_bounded(u, l, h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::derive_stream;

    fn rng() -> RngStream {
        derive_stream(1, 0, 0, 1)
    }

    #[test]
    fn quadratic_1d() {
        let obj = FnObjective::new(1, |x: &[f64]| -(x[0] - 3.0).powi(2));
        // a value spread of 1e-8 only pins x to ~1e-4 on a unit quadratic
        let opts = SimplexOptions { tolerance: 1e-14, ..Default::default() };
        let r = nelder_mead_max(&obj, &[0.0], &opts, &mut rng()).unwrap();
        assert!((r.argmax[0] - 3.0).abs() < 1e-6, "{:?}", r.argmax);
    }

    #[test]
    fn rosenbrock() {
        let obj = FnObjective::new(2, |x: &[f64]| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)));
        let opts = SimplexOptions { tolerance: 1e-14, ..Default::default() };
        let r = nelder_mead_max(&obj, &[-1.2, 1.0], &opts, &mut rng()).unwrap();
        assert!((r.argmax[0] - 1.0).abs() < 1e-4 && (r.argmax[1] - 1.0).abs() < 1e-4, "{:?}", r.argmax);
    }

    #[test]
    fn trace_is_monotone() {
        let obj = FnObjective::new(3, |x: &[f64]| -x.iter().map(|v| (v - 1.0).abs()).sum::<f64>());
        let r = nelder_mead_max(&obj, &[5.0, -3.0, 0.0], &SimplexOptions::default(), &mut rng()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*r.trace.last().unwrap(), r.value);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let obj = FnObjective::new(1, |_: &[f64]| f64::NAN);
        assert!(matches!(
            nelder_mead_max(&obj, &[0.0], &SimplexOptions::default(), &mut rng()),
            Err(Error::Initialization)
        ));
    }

    #[test]
    fn non_finite_elsewhere_is_rejected() {
        let obj = FnObjective::new(1, |x: &[f64]| if x[0] > 1.0 { f64::NAN } else { x[0] });
        let r = nelder_mead_max(&obj, &[0.0], &SimplexOptions::default(), &mut rng()).unwrap();
        assert!(r.argmax[0] <= 1.0 && r.argmax[0] > 0.99);
    }

    #[test]
    fn deterministic_given_lineage() {
        let obj = FnObjective::new(2, |x: &[f64]| -(x[0].abs() + (x[1] - 2.0).abs()));
        let a = nelder_mead_max(&obj, &[1.0, 1.0], &SimplexOptions::default(), &mut rng()).unwrap();
        let b = nelder_mead_max(&obj, &[1.0, 1.0], &SimplexOptions::default(), &mut rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transform_examples() {
        assert_eq!(bounded_transform(&[0.0], &[0.0], &[24.0]).unwrap(), vec![12.0]);
        let v = bounded_transform(&[3f64.ln()], &[0.0], &[24.0]).unwrap()[0];
        assert!((v - 18.0).abs() < 1e-12);
        for u in [40.0, 1e3, f64::MAX] {
            let v = to_bounded(u, 0.0, 24.0);
            assert!(v < 24.0 && v > 23.9);
        }
        assert!(to_bounded(-1e3, 0.0, 24.0) > 0.0);
        assert!(bounded_transform(&[0.0], &[1.0], &[1.0]).is_err());
        assert!((to_bounded(from_bounded(7.5, 0.0, 24.0), 0.0, 24.0) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn options_admissibility() {
        assert!(SimplexOptions::default().validate().is_ok());
        assert!(SimplexOptions { expansion: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimplexOptions { contraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimplexOptions { shrink: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimplexOptions { reflection: 0.0, ..Default::default() }.validate().is_err());
    }

    struct Separable {
        targets: Vec<f64>,
    }

    impl Objective for Separable {
        fn arity(&self) -> usize {
            self.targets.len()
        }
        fn evaluate(&self, x: &[f64]) -> f64 {
            -x.iter().zip(&self.targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }
    }

    impl BlockObjective for Separable {
        fn restrict<'a>(&'a self, x: &'a [f64], block: Range<usize>) -> Box<dyn Objective + 'a> {
            let len = block.len();
            Box::new(FnObjective::new(len, move |b: &[f64]| {
                let mut full = x.to_vec();
                full[block.clone()].copy_from_slice(b);
                self.evaluate(&full)
            }))
        }
    }

    #[test]
    fn block_coordinate_solves_separable() {
        let targets: Vec<f64> = (0..57).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let obj = Separable { targets: targets.clone() };
        let r = maximize(&obj, &vec![0.0; 57], &SimplexOptions::default(), &mut rng()).unwrap();
        for (a, b) in r.argmax.iter().zip(&targets) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.trace.len() >= 3);
    }
}
