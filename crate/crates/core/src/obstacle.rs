//! Strictly convex quadratic programs with a uniform lower bound,
//!
//! ```text
//! minimize 1/2 v^T Q v - b^T v   subject to   v_i >= lower,
//! ```
//!
//! solved by a primal-dual active-set iteration. If the active set cycles or
//! the iteration cap is hit, a primal active-set method (one constraint
//! change per iteration, finite termination) takes over from the last
//! feasible iterate.

use thiserror::Error;

use crate::linalg::{BandedSpd, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("active-set iteration did not settle after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMethod {
    PrimalDual,
    PrimalFallback,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub v: Vec<f64>,
    /// `Q v - b`: non-negative on the active set, zero elsewhere.
    pub reaction: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub method: QpMethod,
}

pub struct BoundQp<'a> {
    pub q: &'a BandedSpd,
    pub b: &'a [f64],
    pub lower: f64,
}

const PDAS_SHIFT: f64 = 1.0;

impl BoundQp<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    /// Solves the equality-constrained problem with `v_i = lower` on `fixed`.
    fn solve_fixed(&self, fixed: &[bool]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        let bw = self.q.bandwidth();
        let mut a = BandedSpd::zeros(n, bw);
        let mut rhs = self.b.to_vec();
        for i in 0..n {
            if fixed[i] {
                a.add(i, i, 1.0);
                rhs[i] = self.lower;
                continue;
            }
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let qij = self.q.get(i, j);
                if fixed[j] {
                    rhs[i] -= qij * self.lower;
                } else if j <= i {
                    a.add(i, j, qij);
                }
            }
        }
        a.factor()?.solve(&rhs)
    }

    fn reaction(&self, v: &[f64], active: &[bool]) -> Vec<f64> {
        let qv = self.q.mul_vec(v);
        qv.iter()
            .zip(self.b)
            .zip(active)
            .map(|((a, b), &on)| if on { a - b } else { 0.0 })
            .collect()
    }

    pub fn solve(&self, warm: Option<&[bool]>, max_iter: usize) -> Result<QpSolution, QpError> {
        let n = self.dim();
        let mut active = warm.map_or_else(|| vec![false; n], |w| w.to_vec());
        let mut seen: Vec<Vec<bool>> = Vec::new();
        let mut last_feasible: Option<Vec<f64>> = None;
        for it in 1..=max_iter {
            let v = self.solve_fixed(&active)?;
            let qv = self.q.mul_vec(&v);
            let next: Vec<bool> = (0..n)
                .map(|i| {
                    let lam = if active[i] { qv[i] - self.b[i] } else { 0.0 };
                    lam - PDAS_SHIFT * (v[i] - self.lower) > 0.0
                })
                .collect();
            if v.iter().all(|&x| x >= self.lower) {
                last_feasible = Some(v.clone());
            }
            if next == active {
                let reaction = self.reaction(&v, &active);
                return Ok(QpSolution {
                    v,
                    reaction,
                    active,
                    iterations: it,
                    method: QpMethod::PrimalDual,
                });
            }
            if seen.contains(&next) {
                break;
            }
            seen.push(active);
            active = next;
        }
        let start = last_feasible.unwrap_or_else(|| vec![self.lower.max(0.0); n]);
        let mut sol = self.primal(start, 8 * n + max_iter)?;
        sol.iterations += seen.len() + 1;
        Ok(sol)
    }

    /// Primal active-set method started from a feasible point.
    fn primal(&self, mut x: Vec<f64>, max_iter: usize) -> Result<QpSolution, QpError> {
        let n = self.dim();
        for xi in x.iter_mut() {
            *xi = xi.max(self.lower);
        }
        let mut work: Vec<bool> = x.iter().map(|&xi| xi == self.lower).collect();
        for it in 1..=max_iter {
            let target = self.solve_fixed(&work)?;
            let p: Vec<f64> = target.iter().zip(&x).map(|(t, xi)| t - xi).collect();
            let scale = 1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if p.iter().all(|d| d.abs() <= 1e-14 * scale) {
                let reaction = self.reaction(&x, &work);
                let worst = (0..n)
                    .filter(|&i| work[i])
                    .min_by(|&a, &b| reaction[a].total_cmp(&reaction[b]));
                match worst {
                    Some(i) if reaction[i] < 0.0 => work[i] = false,
                    _ => {
                        return Ok(QpSolution {
                            v: x,
                            reaction,
                            active: work,
                            iterations: it,
                            method: QpMethod::PrimalFallback,
                        })
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..n {
                if !work[i] && p[i] < 0.0 {
                    let a = (self.lower - x[i]) / p[i];
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            if let Some(i) = blocking {
                x[i] = self.lower;
                work[i] = true;
            } else {
                x = target;
                for i in 0..n {
                    if work[i] {
                        x[i] = self.lower;
                    }
                }
            }
        }
        Err(QpError::NoConvergence(max_iter))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense brute-force reference: enumerate all active sets.
    fn brute_force(q: &BandedSpd, b: &[f64], lower: f64) -> Vec<f64> {
        let n = b.len();
        let qp = BoundQp { q, b, lower };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << n) {
            let fixed: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let v = qp.solve_fixed(&fixed).unwrap();
            if v.iter().any(|&x| x < lower - 1e-12) {
                continue;
            }
            let qv = q.mul_vec(&v);
            let obj: f64 = 0.5 * v.iter().zip(&qv).map(|(a, c)| a * c).sum::<f64>()
                - v.iter().zip(b).map(|(a, c)| a * c).sum::<f64>();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, v));
            }
        }
        best.unwrap().1
    }

    fn biharmonic(n: usize) -> BandedSpd {
        let mut q = BandedSpd::zeros(n, 2);
        for i in 0..n {
            q.add(i, i, 6.0 + 0.1);
            if i >= 1 {
                q.add(i, i - 1, -4.0);
            }
            if i >= 2 {
                q.add(i, i - 2, 1.0);
            }
        }
        q
    }

    #[test]
    fn matches_enumeration_on_small_biharmonic_problems() {
        let n = 9;
        let q = biharmonic(n);
        for load in [0.1, 0.5, 2.0, -0.3] {
            let b: Vec<f64> = (0..n)
                .map(|i| -load * (1.0 + (i as f64 * 0.7).sin()))
                .collect();
            let qp = BoundQp {
                q: &q,
                b: &b,
                lower: -1.0,
            };
            let sol = qp.solve(None, 50).unwrap();
            let reference = brute_force(&q, &b, -1.0);
            for (a, r) in sol.v.iter().zip(&reference) {
                assert!((a - r).abs() < 1e-9, "load {load}: {a} vs {r}");
            }
            assert!(sol.reaction.iter().all(|&l| l >= -1e-12));
            for i in 0..n {
                assert!(sol.v[i] >= -1.0);
                assert!((sol.reaction[i] * (sol.v[i] + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn primal_fallback_agrees_with_primal_dual() {
        let n = 9;
        let q = biharmonic(n);
        let b: Vec<f64> = (0..n).map(|i| -1.0 - 0.2 * i as f64).collect();
        let qp = BoundQp {
            q: &q,
            b: &b,
            lower: -1.0,
        };
        let pd = qp.solve(None, 50).unwrap();
        let pr = qp.primal(vec![0.0; n], 200).unwrap();
        assert_eq!(pr.method, QpMethod::PrimalFallback);
        assert_eq!(pd.active, pr.active);
        for (a, c) in pd.v.iter().zip(&pr.v) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn inactive_bound_gives_unconstrained_solution() {
        let q = biharmonic(5);
        let b = vec![0.01; 5];
        let sol = BoundQp {
            q: &q,
            b: &b,
            lower: -1.0,
        }
        .solve(None, 10)
        .unwrap();
        assert!(sol.active.iter().all(|a| !a));
        let back = q.mul_vec(&sol.v);
        assert!(back.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));
    }
}
