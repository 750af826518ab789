//! Chain-of-integrators canonical system and LQR feedback synthesis.
//!
//! The continuous algebraic Riccati equation is solved by Newton–Kleinman
//! iteration: starting from a stabilizing gain, each step solves one
//! Lyapunov equation (dense Kronecker form, fine for the small orders used
//! here) and the iterates converge quadratically to the stabilizing solution.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Brunovsky chain of order `n`: `A` is the upper shift matrix, `B` the last
/// unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BrunovskyChain {
    pub n: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

pub fn brunovsky_chain(n: usize) -> Result<BrunovskyChain> {
    if n == 0 {
        return Err(Error::domain("chain order must be at least 1"));
    }
    let a = DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    Ok(BrunovskyChain { n, a, b })
}

impl BrunovskyChain {
    /// `[B, AB, ..., A^(n-1) B]`
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n, self.n);
        let mut col = self.b.clone();
        for j in 0..self.n {
            c.set_column(j, &col);
            col = &self.a * col;
        }
        c
    }

    pub fn controllability_rank(&self) -> usize {
        self.controllability_matrix().rank(1e-12)
    }
}

/// Quadratic cost weights: state weight `q` and scalar input weight `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub alpha: f64,
}

impl LqrWeights {
    pub fn diagonal(q: &[f64], alpha: f64) -> Self {
        Self {
            q: DMatrix::from_diagonal(&DVector::from_row_slice(q)),
            alpha,
        }
    }

    /// Defaults: `diag(7, 1)` for the single-turbine chain, identity otherwise.
    pub fn default_for(n: usize) -> Self {
        if n == 2 {
            Self::diagonal(&[7.0, 1.0], 1.0)
        } else {
            Self {
                q: DMatrix::identity(n, n),
                alpha: 1.0,
            }
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(Error::Synthesis(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Synthesis(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > 1e-12 * self.q.amax().max(1.0) {
            return Err(Error::Synthesis("Q is not symmetric".into()));
        }
        if self.q.clone().cholesky().is_none() {
            return Err(Error::Synthesis("Q is not positive definite".into()));
        }
        Ok(())
    }
}

/// State-feedback coefficients `k_1 .. k_{N+1}` in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct OhftGains {
    pub k: Vec<f64>,
}

impl OhftGains {
    pub fn new(k: Vec<f64>) -> Self {
        Self { k }
    }

    pub fn order(&self) -> usize {
        self.k.len()
    }
}

/// Result of a synthesis: the gains, the Riccati solution, and its residual.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub gains: OhftGains,
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

const RESIDUAL_TOL: f64 = 1e-9;
const MAX_NEWTON_ITERS: usize = 100;

/// Frobenius norm of `A'P + PA - P B B' P / alpha + Q`.
pub fn riccati_residual(chain: &BrunovskyChain, w: &LqrWeights, p: &DMatrix<f64>) -> f64 {
    let pb = p * &chain.b;
    let r = chain.a.transpose() * p + p * &chain.a - (&pb * pb.transpose()) / w.alpha + &w.q;
    r.norm()
}

/// Solve `A_c' X + X A_c = -C` through the Kronecker-vectorized system.
fn solve_lyapunov(a_c: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_c.nrows();
    let at = a_c.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(At X) = (I ⊗ At) vec X, vec(X A) = (A' ⊗ I) vec X
    let op = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_iterator(n * n, c.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Synthesis("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn closed_loop(chain: &BrunovskyChain, k: &DVector<f64>) -> DMatrix<f64> {
    &chain.a - &chain.b * k.transpose()
}

pub fn lqr_gains(chain: &BrunovskyChain, w: &LqrWeights) -> Result<OhftGains> {
    Ok(lqr_solve(chain, w)?.gains)
}

/// Full synthesis with diagnostics.
pub fn lqr_solve(chain: &BrunovskyChain, w: &LqrWeights) -> Result<LqrSolution> {
    let n = chain.n;
    w.validate(n)?;

    // (s + 1)^n as the starting closed-loop polynomial
    let mut k = DVector::from_fn(n, |i, _| binomial(n, i));
    let mut p = DMatrix::zeros(n, n);
    let mut iterations = 0;
    for it in 1..=MAX_NEWTON_ITERS {
        iterations = it;
        let a_c = closed_loop(chain, &k);
        let c = &w.q + &k * k.transpose() * w.alpha;
        p = solve_lyapunov(&a_c, &c)?;
        let k_next = (chain.b.transpose() * &p).transpose() / w.alpha;
        let step = (&k_next - &k).amax();
        k = k_next;
        if step <= 1e-15 * k.amax().max(1.0) {
            break;
        }
    }

    let residual = riccati_residual(chain, w, &p);
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::Synthesis(format!(
            "Riccati iteration did not converge: residual {residual:.3e} after {iterations} iterations"
        )));
    }
    let gains = OhftGains::new(k.iter().copied().collect());
    let report = hurwitz_check(&gains);
    if !report.stable {
        return Err(Error::Synthesis(format!(
            "synthesized gains are not stabilizing (max real part {:.3e})",
            report.max_real_part()
        )));
    }
    Ok(LqrSolution {
        gains,
        p,
        residual,
        iterations,
    })
}

/// Stability verdict for the closed-loop chain together with its spectrum.
#[derive(Debug, Clone)]
pub struct HurwitzReport {
    pub stable: bool,
    pub eigenvalues: Vec<Complex<f64>>,
}

impl HurwitzReport {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const HURWITZ_MARGIN: f64 = 1e-12;

/// Eigenvalues of the companion matrix `A - BK` (characteristic polynomial
/// `s^n + k_n s^(n-1) + ... + k_1`); stable iff every real part is below
/// `-1e-12`.
pub fn hurwitz_check(gains: &OhftGains) -> HurwitzReport {
    let n = gains.order();
    if n == 0 || gains.k.iter().any(|v| !v.is_finite()) {
        return HurwitzReport {
            stable: false,
            eigenvalues: Vec::new(),
        };
    }
    let chain = brunovsky_chain(n).expect("n >= 1");
    let k = DVector::from_row_slice(&gains.k);
    let eig = closed_loop(&chain, &k).complex_eigenvalues();
    let eigenvalues: Vec<_> = eig.iter().copied().collect();
    let stable = eigenvalues.iter().all(|z| z.re < -HURWITZ_MARGIN);
    HurwitzReport {
        stable,
        eigenvalues,
    }
}
