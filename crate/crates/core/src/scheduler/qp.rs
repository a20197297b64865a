//! Interior-point solver for the quadratic subproblems of the scheduler.
//!
//! The subproblem has a diagonal Hessian, box bounds, at most one linear
//! equality and inequality rows that each couple two consecutive variables.
//! Inequality rows are elastic: a row may be exceeded by a nonnegative
//! amount `t_j` at cost `penalty · t_j`. With that structure every Newton
//! system reduces to a tridiagonal solve plus a rank-one correction for the
//! equality, so one interior-point iteration is O(N).
//!
//! ```text
//! minimize   ½ Σ h_i d_i² + g·d + penalty · Σ t_j
//! subject to a·d = a_rhs
//!            c0_j d_{k_j} + c1_j d_{k_j + 1} - t_j ≤ rhs_j,   t_j ≥ 0
//!            lower ≤ d ≤ upper
//! ```

/// Inequality row `c0 · d[first] + c1 · d[first + 1] ≤ rhs`.
#[derive(Debug, Clone, Copy)]
pub struct PairRow {
    pub first: usize,
    pub c0: f64,
    pub c1: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QpProblem<'a> {
    pub hessian: &'a [f64],
    pub gradient: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub equality: Option<(&'a [f64], f64)>,
    pub rows: &'a [PairRow],
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: Vec<f64>,
    /// Elastic excess of each row.
    pub excess: Vec<f64>,
    /// Multiplier of each row, in `[0, penalty]`.
    pub row_multipliers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl QpProblem<'_> {
    /// Objective value at `(d, excess)`.
    pub fn objective(&self, d: &[f64], excess: &[f64]) -> f64 {
        let quad: f64 = d
            .iter()
            .zip(self.hessian)
            .zip(self.gradient)
            .map(|((x, h), g)| 0.5 * h * x * x + g * x)
            .sum();
        quad + self.penalty * excess.iter().sum::<f64>()
    }
}

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i]` coupling `i, i+1`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    /// Solves `M x = rhs` by LDLᵀ elimination (the matrix is SPD).
    fn solve(&self, rhs: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        let n = self.diag.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut x = rhs.to_vec();
        // scratch holds pivots
        scratch[0] = self.diag[0];
        for i in 1..n {
            let l = self.off[i - 1] / scratch[i - 1];
            scratch[i] = self.diag[i] - l * self.off[i - 1];
            x[i] -= l * x[i - 1];
        }
        x[n - 1] /= scratch[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.off[i] * x[i + 1]) / scratch[i];
        }
        x
    }
}

/// Inequality blocks of the standard form `C z + s = c`, `s ≥ 0`.
struct Block {
    s: Vec<f64>,
    lambda: Vec<f64>,
}

impl Block {
    fn new(s: Vec<f64>) -> Self {
        let lambda = vec![1.0; s.len()];
        Block { s, lambda }
    }
}

struct Direction {
    d: Vec<f64>,
    t: Vec<f64>,
    y: f64,
    ds: [Vec<f64>; 4],
    dl: [Vec<f64>; 4],
}

const RATE: usize = 0;
const EXCESS: usize = 1;
const UPPER: usize = 2;
const LOWER: usize = 3;

fn apply_rows(rows: &[PairRow], d: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.c0 * d[r.first] + r.c1 * d[r.first + 1]).collect()
}

/// Accumulates `Gᵀ v` into `out`.
fn add_rows_transposed(rows: &[PairRow], v: &[f64], out: &mut [f64]) {
    for (r, &vj) in rows.iter().zip(v) {
        out[r.first] += r.c0 * vj;
        out[r.first + 1] += r.c1 * vj;
    }
}

/// Solves the QP by a Mehrotra predictor–corrector interior-point method.
pub fn solve(qp: &QpProblem) -> QpSolution {
    let n = qp.hessian.len();
    let m = qp.rows.len();
    debug_assert!(qp.rows.iter().all(|r| r.first + 1 < n));

    let scale_g = qp.gradient.iter().fold(1.0f64, |a, g| a.max(g.abs()));
    let scale_b = qp
        .rows
        .iter()
        .map(|r| r.rhs.abs())
        .chain(qp.lower.iter().chain(qp.upper).map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let tol = 1e-10;

    // infeasible start: d at the clamped origin, slacks at least 0.1
    let mut d: Vec<f64> = (0..n).map(|i| 0.0f64.clamp(qp.lower[i], qp.upper[i])).collect();
    let gd = apply_rows(qp.rows, &d);
    let mut t: Vec<f64> = gd
        .iter()
        .zip(qp.rows)
        .map(|(v, r)| (v - r.rhs).max(0.0) + 0.1)
        .collect();
    let floor = |v: f64| v.max(0.1);
    let mut blocks = [
        Block::new(
            gd.iter()
                .zip(qp.rows)
                .zip(&t)
                .map(|((v, r), t)| floor(r.rhs - v + t))
                .collect(),
        ),
        Block::new(t.iter().map(|&t| floor(t)).collect()),
        Block::new((0..n).map(|i| floor(qp.upper[i] - d[i])).collect()),
        Block::new((0..n).map(|i| floor(d[i] - qp.lower[i])).collect()),
    ];
    let mut y = 0.0;
    let total: usize = 2 * m + 2 * n;
    let mut scratch = Vec::with_capacity(n);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..200 {
        iterations = iter;
        // residuals
        let gd = apply_rows(qp.rows, &d);
        let mut r_d: Vec<f64> = (0..n).map(|i| qp.hessian[i] * d[i] + qp.gradient[i]).collect();
        add_rows_transposed(qp.rows, &blocks[RATE].lambda, &mut r_d);
        for ((r, up), lo) in r_d.iter_mut().zip(&blocks[UPPER].lambda).zip(&blocks[LOWER].lambda) {
            *r += up - lo;
        }
        let mut r_eq = 0.0;
        if let Some((a, rhs)) = qp.equality {
            for i in 0..n {
                r_d[i] += a[i] * y;
            }
            r_eq = a.iter().zip(&d).map(|(a, d)| a * d).sum::<f64>() - rhs;
        }
        let r_t: Vec<f64> = (0..m)
            .map(|j| qp.penalty - blocks[RATE].lambda[j] - blocks[EXCESS].lambda[j])
            .collect();
        let r_p: [Vec<f64>; 4] = [
            (0..m)
                .map(|j| gd[j] - t[j] + blocks[RATE].s[j] - qp.rows[j].rhs)
                .collect(),
            (0..m).map(|j| -t[j] + blocks[EXCESS].s[j]).collect(),
            (0..n).map(|i| d[i] + blocks[UPPER].s[i] - qp.upper[i]).collect(),
            (0..n).map(|i| -d[i] + blocks[LOWER].s[i] + qp.lower[i]).collect(),
        ];

        let mu = blocks
            .iter()
            .map(|b| b.s.iter().zip(&b.lambda).map(|(s, l)| s * l).sum::<f64>())
            .sum::<f64>()
            / total as f64;
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let dual_inf = inf(&r_d).max(inf(&r_t) / qp.penalty.max(1.0) * scale_g);
        let primal_inf = r_p.iter().map(|r| inf(r)).fold(r_eq.abs(), f64::max);
        if dual_inf <= tol * scale_g && primal_inf <= tol * scale_b && mu <= tol * scale_g * scale_b {
            converged = true;
            break;
        }

        let w: [Vec<f64>; 4] =
            std::array::from_fn(|k| blocks[k].lambda.iter().zip(&blocks[k].s).map(|(l, s)| l / s).collect());
        // normal matrix, shared by predictor and corrector
        let mut normal = Tridiagonal {
            diag: (0..n).map(|i| qp.hessian[i] + w[UPPER][i] + w[LOWER][i]).collect(),
            off: vec![0.0; n.saturating_sub(1)],
        };
        let omega: Vec<f64> = (0..m)
            .map(|j| w[RATE][j] * w[EXCESS][j] / (w[RATE][j] + w[EXCESS][j]))
            .collect();
        for (r, &om) in qp.rows.iter().zip(&omega) {
            normal.diag[r.first] += om * r.c0 * r.c0;
            normal.diag[r.first + 1] += om * r.c1 * r.c1;
            normal.off[r.first] += om * r.c0 * r.c1;
        }
        let x_eq = qp.equality.map(|(a, _)| normal.solve(a, &mut scratch));

        let direction = |r_c: &[Vec<f64>; 4], scratch: &mut Vec<f64>| -> Direction {
            let v: [Vec<f64>; 4] = std::array::from_fn(|k| {
                (0..blocks[k].s.len())
                    .map(|j| (blocks[k].lambda[j] * r_p[k][j] - r_c[k][j]) / blocks[k].s[j])
                    .collect()
            });
            let mut rho_d: Vec<f64> = (0..n).map(|i| -r_d[i] - v[UPPER][i] + v[LOWER][i]).collect();
            let mut gv = vec![0.0; n];
            add_rows_transposed(qp.rows, &v[RATE], &mut gv);
            let rho_t: Vec<f64> = (0..m).map(|j| -r_t[j] + v[RATE][j] + v[EXCESS][j]).collect();
            let frac: Vec<f64> = (0..m)
                .map(|j| w[RATE][j] / (w[RATE][j] + w[EXCESS][j]) * rho_t[j])
                .collect();
            add_rows_transposed(qp.rows, &frac, &mut rho_d);
            for i in 0..n {
                rho_d[i] -= gv[i];
            }
            let x1 = normal.solve(&rho_d, scratch);
            let (dd, dy) = match (qp.equality, &x_eq) {
                (Some((a, _)), Some(x2)) => {
                    let ax1: f64 = a.iter().zip(&x1).map(|(a, x)| a * x).sum();
                    let ax2: f64 = a.iter().zip(x2).map(|(a, x)| a * x).sum();
                    let dy = (ax1 + r_eq) / ax2;
                    ((0..n).map(|i| x1[i] - x2[i] * dy).collect::<Vec<_>>(), dy)
                }
                _ => (x1, 0.0),
            };
            let gdd = apply_rows(qp.rows, &dd);
            let dt: Vec<f64> = (0..m)
                .map(|j| (rho_t[j] + w[RATE][j] * gdd[j]) / (w[RATE][j] + w[EXCESS][j]))
                .collect();
            let cdz: [Vec<f64>; 4] = [
                (0..m).map(|j| gdd[j] - dt[j]).collect(),
                dt.iter().map(|x| -x).collect(),
                dd.clone(),
                dd.iter().map(|x| -x).collect(),
            ];
            let ds = std::array::from_fn(|k| (0..cdz[k].len()).map(|j| -r_p[k][j] - cdz[k][j]).collect());
            let dl = std::array::from_fn(|k| (0..cdz[k].len()).map(|j| w[k][j] * cdz[k][j] + v[k][j]).collect());
            Direction {
                d: dd,
                t: dt,
                y: dy,
                ds,
                dl,
            }
        };

        let max_step = |dir: &Direction| -> f64 {
            let mut alpha = 1.0f64;
            for (k, b) in blocks.iter().enumerate() {
                for j in 0..b.s.len() {
                    if dir.ds[k][j] < 0.0 {
                        alpha = alpha.min(-b.s[j] / dir.ds[k][j]);
                    }
                    if dir.dl[k][j] < 0.0 {
                        alpha = alpha.min(-b.lambda[j] / dir.dl[k][j]);
                    }
                }
            }
            alpha
        };

        // predictor
        let r_c_aff: [Vec<f64>; 4] =
            std::array::from_fn(|k| blocks[k].s.iter().zip(&blocks[k].lambda).map(|(s, l)| s * l).collect());
        let aff = direction(&r_c_aff, &mut scratch);
        let alpha_aff = max_step(&aff);
        let mu_aff = blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                (0..b.s.len())
                    .map(|j| (b.s[j] + alpha_aff * aff.ds[k][j]) * (b.lambda[j] + alpha_aff * aff.dl[k][j]))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / total as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector
        let r_c: [Vec<f64>; 4] = std::array::from_fn(|k| {
            (0..blocks[k].s.len())
                .map(|j| blocks[k].s[j] * blocks[k].lambda[j] + aff.ds[k][j] * aff.dl[k][j] - sigma * mu)
                .collect()
        });
        let dir = direction(&r_c, &mut scratch);
        let alpha = (0.995 * max_step(&dir)).min(1.0);

        for (x, dx) in d.iter_mut().zip(&dir.d) {
            *x += alpha * dx;
        }
        for (x, dx) in t.iter_mut().zip(&dir.t) {
            *x += alpha * dx;
        }
        y += alpha * dir.y;
        for (k, b) in blocks.iter_mut().enumerate() {
            for j in 0..b.s.len() {
                b.s[j] += alpha * dir.ds[k][j];
                b.lambda[j] += alpha * dir.dl[k][j];
            }
        }
    }

    let excess = t.iter().map(|&x| x.max(0.0)).collect();
    QpSolution {
        d,
        excess,
        row_multipliers: blocks[RATE].lambda.clone(),
        iterations,
        converged,
    }
}
