//! Unconstrained minimization: BFGS with a Wolfe line search, finished by
//! Newton steps on a finite-difference Hessian of the gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    /// Quasi-Newton (BFGS) iterations followed by Newton polishing.
    #[default]
    Bfgs,
    /// Damped Newton-Raphson with finite-difference Hessians throughout.
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Options {
    pub method: Method,
    pub max_iter: usize,
    /// Convergence when the largest gradient component is at most this.
    pub grad_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            method: Method::Bfgs,
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

/// Objective returning value and gradient; `Err` marks an inadmissible point.
pub trait Objective {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for F {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn try_eval(obj: &impl Objective, x: &[f64]) -> Option<(f64, Vec<f64>)> {
    match obj.eval(x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
        _ => None,
    }
}

fn axpy(x: &[f64], a: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(x, p)| x + a * p).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Line search for the strong Wolfe conditions. Inadmissible trial points
/// shrink the step.
fn wolfe_search(obj: &impl Objective, at: &Point, p: &[f64], first_step: f64) -> Option<(Point, f64)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let d0 = dot(&at.g, p);
    if d0 >= 0.0 {
        return None;
    }
    let trial = |a: f64| {
        let x = axpy(&at.x, a, p);
        try_eval(obj, &x).map(|(f, g)| {
            let d = dot(&g, p);
            (Point { x, f, g }, d)
        })
    };
    let mut lo = 0.0;
    let mut lo_f = at.f;
    let mut hi: Option<f64> = None;
    let mut a = first_step;
    let mut best: Option<(Point, f64)> = None;
    for _ in 0..60 {
        match trial(a) {
            None => {
                hi = Some(a);
            }
            Some((pt, d)) => {
                if pt.f > at.f + C1 * a * d0 || pt.f >= lo_f && lo > 0.0 {
                    hi = Some(a);
                } else {
                    if d.abs() <= -C2 * d0 {
                        return Some((pt, a));
                    }
                    if d >= 0.0 {
                        hi = Some(lo);
                    }
                    lo = a;
                    lo_f = pt.f;
                    best = Some((pt, a));
                }
            }
        }
        a = match hi {
            None => 2.0 * a,
            Some(h) => 0.5 * (lo + h),
        };
        if let Some(h) = hi {
            if (h - lo).abs() < 1e-16 * (1.0 + lo.abs()) {
                break;
            }
        }
    }
    // sufficient decrease without curvature is still progress
    best
}

/// Central-difference Hessian of the gradient, symmetrized.
pub fn fd_hessian(obj: &impl Objective, x: &[f64], step: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let s = step(x[j]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += s;
        xm[j] -= s;
        let (_, gp) = obj.eval(&xp)?;
        let (_, gm) = obj.eval(&xm)?;
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * s);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Newton direction with Levenberg damping until the matrix is positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut damping = 0.0;
    for _ in 0..40 {
        let m = h + DMatrix::identity(n, n) * damping;
        if let Some(c) = m.cholesky() {
            let p = c.solve(&DVector::from_column_slice(g));
            return Some(p.iter().map(|v| -v).collect());
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
    }
    None
}

fn newton_steps(obj: &impl Objective, pt: &mut Point, opts: &Options, budget: usize) -> (usize, bool) {
    let mut iters = 0;
    while iters < budget {
        if max_abs(&pt.g) <= opts.grad_tol {
            return (iters, true);
        }
        let Ok(h) = fd_hessian(obj, &pt.x, |v| 1e-5 * (1.0 + v.abs())) else {
            return (iters, false);
        };
        let Some(p) = newton_direction(&h, &pt.g) else {
            return (iters, false);
        };
        iters += 1;
        let mut a = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let x = axpy(&pt.x, a, &p);
            if let Some((f, g)) = try_eval(obj, &x) {
                // near the optimum f is flat to rounding; accept a smaller gradient too
                if f < pt.f || f <= pt.f + 1e-12 * pt.f.abs().max(1.0) && max_abs(&g) < max_abs(&pt.g) {
                    *pt = Point { x, f, g };
                    moved = true;
                    break;
                }
            }
            a *= 0.5;
        }
        if !moved {
            return (iters, max_abs(&pt.g) <= opts.grad_tol);
        }
    }
    (iters, max_abs(&pt.g) <= opts.grad_tol)
}

pub fn minimize(obj: &impl Objective, x0: &[f64], opts: &Options) -> Result<Outcome> {
    let (f0, g0) = obj.eval(x0)?;
    if !f0.is_finite() {
        return Err(Error::Optimization("objective is not finite at the start".into()));
    }
    let mut pt = Point {
        x: x0.to_vec(),
        f: f0,
        g: g0,
    };
    let n = x0.len();
    let mut iterations = 0;
    let mut message = String::new();
    if n == 0 {
        return Ok(Outcome {
            x: pt.x,
            f: pt.f,
            grad: pt.g,
            iterations: 0,
            converged: true,
            message: "no free parameters".into(),
        });
    }
    if opts.method == Method::Bfgs {
        let mut h_inv = DMatrix::<f64>::identity(n, n);
        let mut fresh = true;
        while iterations < opts.max_iter && max_abs(&pt.g) > opts.grad_tol {
            let g = DVector::from_column_slice(&pt.g);
            let mut p: Vec<f64> = (-(&h_inv * &g)).iter().copied().collect();
            if dot(&p, &pt.g) >= 0.0 {
                h_inv = DMatrix::identity(n, n);
                fresh = true;
                p = pt.g.iter().map(|v| -v).collect();
            }
            let first = if fresh { (1.0 / max_abs(&p)).min(1.0) } else { 1.0 };
            let Some((next, _)) = wolfe_search(obj, &pt, &p, first) else {
                if fresh {
                    message = "line search failed".into();
                    break;
                }
                h_inv = DMatrix::identity(n, n);
                fresh = true;
                continue;
            };
            iterations += 1;
            let s = DVector::from_iterator(n, next.x.iter().zip(&pt.x).map(|(a, b)| a - b));
            let y = DVector::from_iterator(n, next.g.iter().zip(&pt.g).map(|(a, b)| a - b));
            let sy = s.dot(&y);
            let small_change = (pt.f - next.f).abs() <= 1e-15 * pt.f.abs().max(1.0);
            pt = next;
            if sy > 1e-12 * s.norm() * y.norm() {
                if fresh {
                    h_inv = DMatrix::identity(n, n) * (sy / y.dot(&y));
                }
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(n, n);
                let left = &i - &s * y.transpose() * rho;
                let right = &i - &y * s.transpose() * rho;
                h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
                fresh = false;
            }
            if small_change && max_abs(&pt.g) <= 1e3 * opts.grad_tol {
                break;
            }
        }
    }
    let budget = match opts.method {
        Method::Bfgs => 50,
        Method::Newton => opts.max_iter,
    };
    let (polish, converged) = newton_steps(obj, &mut pt, opts, budget);
    iterations += polish;
    if !converged && message.is_empty() {
        message = format!(
            "gradient max-norm {:.3e} above tolerance {:.1e}",
            max_abs(&pt.g),
            opts.grad_tol
        );
    }
    Ok(Outcome {
        x: pt.x,
        f: pt.f,
        grad: pt.g,
        iterations,
        converged,
        message: if converged { "converged".into() } else { message },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        Ok((
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
        ))
    }

    #[test]
    fn solves_rosenbrock() {
        for method in [Method::Bfgs, Method::Newton] {
            let out = minimize(
                &rosenbrock,
                &[-1.2, 1.0],
                &Options {
                    method,
                    ..Options::default()
                },
            )
            .unwrap();
            assert!(out.converged, "{method:?}: {}", out.message);
            assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn backs_off_inadmissible_region() {
        // minimum of x - 2 ln x at x = 2, undefined for x <= 0
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] <= 0.0 {
                return Err(Error::domain("x <= 0"));
            }
            Ok((x[0] - 2.0 * x[0].ln(), vec![1.0 - 2.0 / x[0]]))
        };
        let out = minimize(&f, &[0.05], &Options::default()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((
                x[0] * x[0] + 3.0 * x[0] * x[1] + 5.0 * x[1] * x[1],
                vec![2.0 * x[0] + 3.0 * x[1], 3.0 * x[0] + 10.0 * x[1]],
            ))
        };
        let h = fd_hessian(&f, &[0.3, -2.0], |_| 1e-3).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-9);
        assert!((h[(1, 1)] - 10.0).abs() < 1e-9);
    }
}
