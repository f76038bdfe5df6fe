//! Accelerated projected gradient for weighted least squares over a convex set of
//! Hermitian matrices.

use crate::linalg::{fro, CMat, C64};
use crate::shots::MomentOperator;
use serde::{Deserialize, Serialize};

/// Stopping rules shared by the state and process solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once the objective falls by less than `tol · max(1, f)` in an iteration.
    pub tol: f64,
    /// Keep the per-iteration objective values.
    #[serde(default)]
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-10,
            record_history: false,
        }
    }
}

/// Sparse linear functional X ↦ Tr(A X), stored as the (row, column, value) entries of A.
#[derive(Debug, Clone)]
pub(crate) struct Functional(pub Vec<(usize, usize, C64)>);

impl Functional {
    pub fn dense(a: &CMat) -> Self {
        let mut e = Vec::with_capacity(a.len());
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != C64::new(0.0, 0.0) {
                    e.push((r, c, a[(r, c)]));
                }
            }
        }
        Self(e)
    }

    pub fn apply(&self, x: &CMat) -> C64 {
        self.0.iter().map(|&(r, c, v)| v * x[(c, r)]).sum()
    }
}

impl From<MomentOperator> for Functional {
    fn from(op: MomentOperator) -> Self {
        Self(op.entries)
    }
}

/// f(X) = Σ_j w_j |Tr(A_j X) − m_j|².
pub(crate) struct WeightedLs {
    pub ops: Vec<Functional>,
    pub data: Vec<C64>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl WeightedLs {
    /// Weights 1/v with v floored at 1e-12·max v (uniform when every variance is zero).
    pub fn new(ops: Vec<Functional>, data: Vec<C64>, variances: &[f64], dim: usize) -> Self {
        let vmax = variances.iter().copied().fold(0.0, f64::max);
        let weights = if vmax > 0.0 {
            variances
                .iter()
                .map(|&v| 1.0 / v.max(1e-12 * vmax))
                .collect()
        } else {
            vec![1.0; variances.len()]
        };
        Self {
            ops,
            data,
            weights,
            dim,
        }
    }

    fn residuals(&self, x: &CMat) -> Vec<C64> {
        self.ops
            .iter()
            .zip(&self.data)
            .map(|(a, m)| a.apply(x) - m)
            .collect()
    }

    pub fn value(&self, x: &CMat) -> f64 {
        self.residuals(x)
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r.norm_sqr())
            .sum()
    }

    /// Objective and its gradient G = Σ w (r̄ A + r A†).
    pub fn value_grad(&self, x: &CMat) -> (f64, CMat) {
        let r = self.residuals(x);
        let mut g = CMat::zeros(self.dim, self.dim);
        let mut f = 0.0;
        for ((a, rj), w) in self.ops.iter().zip(&r).zip(&self.weights) {
            f += w * rj.norm_sqr();
            scatter(&mut g, a, *rj, *w);
        }
        (f, g)
    }

    /// Gradient of the homogeneous part (data set to zero): the Hessian applied to X.
    fn hessian_apply(&self, x: &CMat) -> CMat {
        let mut g = CMat::zeros(self.dim, self.dim);
        for (a, w) in self.ops.iter().zip(&self.weights) {
            scatter(&mut g, a, a.apply(x), *w);
        }
        g
    }

    /// Largest Hessian eigenvalue by power iteration (with a 5% safety margin).
    pub fn lipschitz(&self) -> f64 {
        let n = self.dim;
        let mut x = CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(1.0 + 0.1 * i as f64, 0.0)
            } else {
                C64::new(0.01 * ((i * 7 + j * 3) % 5) as f64, 0.0)
            }
        });
        x = &x + x.adjoint();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y = self.hessian_apply(&x);
            let ny = fro(&y);
            if ny == 0.0 {
                return 1.0;
            }
            let next = ny / fro(&x);
            x = y / C64::new(ny, 0.0);
            if (next - lambda).abs() < 1e-9 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        1.05 * lambda
    }
}

fn scatter(g: &mut CMat, a: &Functional, r: C64, w: f64) {
    let rc = r.conj() * w;
    let rw = r * w;
    for &(row, col, v) in &a.0 {
        g[(row, col)] += rc * v;
        g[(col, row)] += rw * v.conj();
    }
}

pub(crate) struct Solution {
    pub x: CMat,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    /// L·‖X − P(X − ∇f/L)‖_F at the returned point.
    pub kkt_residual: f64,
}

/// Monotone FISTA with function-value restarts: the accepted objective never increases.
pub(crate) fn fista(
    problem: &WeightedLs,
    project: &dyn Fn(&CMat) -> CMat,
    x0: CMat,
    opts: &SolverOptions,
) -> Solution {
    let l = problem.lipschitz();
    let step = C64::new(1.0 / l, 0.0);
    let mut x = project(&x0);
    let mut fx = problem.value(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut history = Vec::new();
    if opts.record_history {
        history.push(fx);
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (_, g) = problem.value_grad(&y);
        let z = project(&(&y - g * step));
        let fz = problem.value(&z);
        if fz > fx {
            // Momentum overshot: restart from the last accepted point.
            if t == 1.0 {
                converged = true;
                break;
            }
            t = 1.0;
            y = x.clone();
            continue;
        }
        let drop = fx - fz;
        // Gradient restart: drop the momentum once it points uphill.
        let uphill = (&y - &z)
            .iter()
            .zip((&z - &x).iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            > 0.0;
        if uphill {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = C64::new((t - 1.0) / t_next, 0.0);
        y = &z + (&z - &x) * beta;
        x = z;
        fx = fz;
        t = t_next;
        if opts.record_history {
            history.push(fx);
        }
        if drop < opts.tol * fx.max(1.0) {
            converged = true;
            break;
        }
    }
    let (_, g) = problem.value_grad(&x);
    let kkt = l * fro(&(&x - project(&(&x - g * step))));
    Solution {
        x,
        objective: fx,
        iterations,
        converged,
        history,
        kkt_residual: kkt,
    }
}

/// Frobenius projection onto {X ⪰ 0, Tr X = trace}.
pub fn project_density(m: &CMat, trace: f64) -> CMat {
    let (vals, vecs) = crate::linalg::herm_eig(m);
    let clipped = crate::linalg::project_simplex(&vals, trace);
    crate::linalg::from_eig(&clipped, &vecs)
}

/// Frobenius projection onto {X ⪰ 0}.
pub fn project_psd(m: &CMat) -> CMat {
    let (vals, vecs) = crate::linalg::herm_eig(m);
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    crate::linalg::from_eig(&clipped, &vecs)
}
