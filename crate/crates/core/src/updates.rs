//! Majorization-minimization updates for the three factors.
//!
//! `W` and `U` use multiplicative rules obtained by minimizing an auxiliary
//! function built from the convex/concave split of the β-divergence. `H` is
//! updated per frequency band by solving a small symmetric tridiagonal system
//! that carries the temporal-smoothness penalty.

use log::{debug, warn};
use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::divergence::{divergence_entry, Beta};
use crate::error::{shape_err, Error, Result};
use crate::model::{convolve_rows, Activations, Dictionary, ModelState, ReverbKernel, EPSILON};

/// Per-frame activation penalties `λ_n^(u)` and per-band kernel smoothness
/// penalties `λ_k^(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    pub lambda_u: Array1<f64>,
    pub lambda_h: Array1<f64>,
}

impl PenaltyWeights {
    pub fn new(lambda_u: Array1<f64>, lambda_h: Array1<f64>) -> Result<Self> {
        if lambda_u.iter().chain(lambda_h.iter()).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("penalty weights must be >= 0".into()));
        }
        Ok(Self { lambda_u, lambda_h })
    }

    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            lambda_u: Array1::zeros(frames),
            lambda_h: Array1::zeros(bins),
        }
    }
}

/// First-difference operator `L` on `M` taps, `(Lh)_m = h_{m+1} - h_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceOperator {
    taps: usize,
}

impl DifferenceOperator {
    pub fn new(taps: usize) -> Self {
        Self { taps }
    }

    /// Diagonal of `LᵀL`: `(1, 2, …, 2, 1)`, or `(0)` for a single tap.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let m = self.taps;
        (0..m)
            .map(|i| {
                if m == 1 {
                    0.0
                } else if i == 0 || i == m - 1 {
                    1.0
                } else {
                    2.0
                }
            })
            .collect()
    }

    /// Off-diagonal of `LᵀL`, all `-1`.
    pub fn gram_off_diagonal(&self) -> Vec<f64> {
        vec![-1.0; self.taps.saturating_sub(1)]
    }

    /// `‖L h‖²`.
    pub fn penalty(&self, h: ArrayView1<f64>) -> f64 {
        h.windows(2).into_iter().map(|w| (w[1] - w[0]).powi(2)).sum()
    }
}

/// Solves `A x = b` for symmetric tridiagonal positive definite `A` by a
/// pivot-free `LDLᵀ` factorization.
pub fn solve_symmetric_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || rhs.len() != n || off.len() + 1 != n {
        return Err(Error::Shape(format!(
            "tridiagonal system: {} diagonal, {} off-diagonal, {} rhs entries",
            n,
            off.len(),
            rhs.len()
        )));
    }
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = diag[0];
    for i in 1..n {
        if !(d[i - 1] > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "matrix not positive definite (pivot {} = {})",
                i - 1,
                d[i - 1]
            )));
        }
        l[i - 1] = off[i - 1] / d[i - 1];
        d[i] = diag[i] - l[i - 1] * off[i - 1];
    }
    if !(d[n - 1] > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "matrix not positive definite (pivot {} = {})",
            n - 1,
            d[n - 1]
        )));
    }

    let mut x = rhs.to_vec();
    for i in 1..n {
        x[i] -= l[i - 1] * x[i - 1];
    }
    for i in 0..n {
        x[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        x[i] -= l[i] * x[i + 1];
    }
    Ok(x)
}

fn check_data(state: &ModelState, y: &Array2<f64>) -> Result<()> {
    if y.dim() != state.synthesis().dim() {
        return Err(shape_err("data", state.synthesis().dim(), y.dim()));
    }
    Ok(())
}

/// `(X^(β-2) ⊙ Y, X^(β-1))` with `X` floored at [`EPSILON`].
fn gradient_weights(x: &Array2<f64>, y: &Array2<f64>, beta: Beta) -> (Array2<f64>, Array2<f64>) {
    let b = beta.value();
    let mut data_term = Array2::zeros(x.dim());
    let mut model_term = Array2::zeros(x.dim());
    ndarray::Zip::from(&mut data_term)
        .and(&mut model_term)
        .and(x)
        .and(y)
        .for_each(|d, m, &xv, &yv| {
            let xv = xv.max(EPSILON);
            let p = xv.powf(b - 2.0);
            *d = p * yv;
            *m = p * xv;
        });
    (data_term, model_term)
}

/// `R[k,p] = Σ_m H[k,m] Z[k,p+m]`: correlation of each row of `Z` with the kernel.
fn correlate_rows(z: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (bins, frames) = z.dim();
    let mut r = Array2::zeros((bins, frames));
    for k in 0..bins {
        let zrow = z.row(k);
        let mut rrow = r.row_mut(k);
        for (m, &hm) in h.row(k).iter().enumerate() {
            if hm == 0.0 || m >= frames {
                continue;
            }
            rrow.slice_mut(s![..frames - m])
                .scaled_add(hm, &zrow.slice(s![m..]));
        }
    }
    r
}

/// `G[k,j] = Σ_m H[k,m] Σ_n Z[k,n] U[j,n-m]`.
fn dictionary_gradient_part(z: &Array2<f64>, u: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (bins, frames) = z.dim();
    let mut g = Array2::zeros((bins, u.nrows()));
    for (m, hcol) in h.axis_iter(Axis(1)).enumerate() {
        if m >= frames || hcol.iter().all(|&v| v == 0.0) {
            continue;
        }
        let p = z.slice(s![.., m..]).dot(&u.slice(s![.., ..frames - m]).t());
        for (mut grow, (prow, &hk)) in g.rows_mut().into_iter().zip(p.rows().into_iter().zip(hcol)) {
            grow.scaled_add(hk, &prow);
        }
    }
    g
}

#[inline]
fn mu_factor(numerator: f64, denominator: f64, eta: f64, eps: f64) -> f64 {
    let num = if numerator > 0.0 { numerator.powf(eta) } else { 0.0 };
    let num = num.max(eps);
    if denominator > 0.0 {
        num / denominator.powf(eta)
    } else {
        1.0
    }
}

/// Multiplicative dictionary update.
pub fn update_w(state: &ModelState, y: &Array2<f64>, beta: Beta, eps: f64) -> Result<Dictionary> {
    check_data(state, y)?;
    let (data_term, model_term) = gradient_weights(state.synthesis(), y, beta);
    let u = &state.activations.0;
    let h = &state.kernel.0;
    let num = dictionary_gradient_part(&data_term, u, h);
    let den = dictionary_gradient_part(&model_term, u, h);
    let eta = beta.eta();

    let mut w = state.dictionary.0.clone();
    ndarray::Zip::from(&mut w)
        .and(&num)
        .and(&den)
        .for_each(|w, &n, &d| *w *= mu_factor(n, d, eta, eps));
    Ok(Dictionary(w))
}

/// Multiplicative activation update with the per-frame sparsity penalty
/// subtracted from the numerator before the exponent and the ε floor.
pub fn update_u(
    state: &ModelState,
    y: &Array2<f64>,
    beta: Beta,
    lambda_u: &Array1<f64>,
    eps: f64,
) -> Result<Activations> {
    check_data(state, y)?;
    let frames = y.ncols();
    if lambda_u.len() != frames {
        return Err(Error::Shape(format!(
            "lambda_u has {} entries for {frames} frames",
            lambda_u.len()
        )));
    }
    let (data_term, model_term) = gradient_weights(state.synthesis(), y, beta);
    let h = &state.kernel.0;
    let wt = state.dictionary.0.t();
    let mut num = wt.dot(&correlate_rows(&data_term, h));
    let den = wt.dot(&correlate_rows(&model_term, h));
    for mut row in num.rows_mut() {
        row -= lambda_u;
    }
    let eta = beta.eta();

    let mut u = state.activations.0.clone();
    ndarray::Zip::from(&mut u)
        .and(&num)
        .and(&den)
        .for_each(|u, &n, &d| *u *= mu_factor(n, d, eta, eps));
    Ok(Activations(u))
}

/// Band-wise objective for one kernel row given the dry spectrum `v`.
fn row_cost(
    y: ArrayView1<f64>,
    v: ArrayView1<f64>,
    h: &[f64],
    lambda: f64,
    beta: Beta,
    op: &DifferenceOperator,
) -> f64 {
    let frames = y.len();
    let mut x = vec![0.0; frames];
    for (m, &hm) in h.iter().enumerate().take(frames) {
        if hm == 0.0 {
            continue;
        }
        for n in m..frames {
            x[n] += hm * v[n - m];
        }
    }
    let fit: f64 = y
        .iter()
        .zip(&x)
        .map(|(&yv, &xv)| divergence_entry(yv, xv.max(EPSILON), beta))
        .sum();
    fit + lambda * op.penalty(ArrayView1::from(h))
}

/// Kernel update: for every band `k`, solve
/// `(A_k + 2 λ_k LᵀL) h = b_k` with
/// `A_k = diag(Σ_n V[k,n-m] X[k,n]^(β-1) / H[k,m])` and
/// `b_k[m] = Σ_n V[k,n-m] Y[k,n] X[k,n]^(β-2)`, where `V = W U`.
///
/// The solution is the minimizer of the quadratic surrogate for β = 2. For
/// other β it is a preconditioned descent step on the band objective, so it
/// is shortened by halving until the band objective does not increase.
pub fn update_h(
    state: &ModelState,
    y: &Array2<f64>,
    beta: Beta,
    lambda_h: &Array1<f64>,
) -> Result<ReverbKernel> {
    check_data(state, y)?;
    let bins = y.nrows();
    if lambda_h.len() != bins {
        return Err(Error::Shape(format!(
            "lambda_h has {} entries for {bins} bins",
            lambda_h.len()
        )));
    }
    let taps = state.kernel.taps();
    let frames = y.ncols();
    let op = DifferenceOperator::new(taps);
    let gram_diag = op.gram_diagonal();
    let gram_off = op.gram_off_diagonal();

    let v = state.dry();
    let h_prev = state.kernel.0.mapv(|v| v.max(EPSILON));
    // X for the floored kernel; identical to the cached synthesis unless a
    // kernel entry sat below the floor
    let x = convolve_rows(&v, &h_prev);
    let (data_term, model_term) = gradient_weights(&x, y, beta);

    let mut h_new = h_prev.clone();
    let mut shortened = 0usize;
    for k in 0..bins {
        let vrow = v.row(k);
        let lambda = lambda_h[k];
        let mut diag = vec![0.0; taps];
        let mut rhs = vec![0.0; taps];
        for m in 0..taps.min(frames) {
            let lagged = vrow.slice(s![..frames - m]);
            let a: f64 = lagged.dot(&model_term.slice(s![k, m..]));
            let b: f64 = lagged.dot(&data_term.slice(s![k, m..]));
            diag[m] = a / h_prev[[k, m]];
            rhs[m] = b;
        }
        if diag.iter().all(|&a| a == 0.0) {
            warn!("kernel row {k}: data term vanishes, row left unchanged");
            continue;
        }
        let full_diag: Vec<f64> = diag
            .iter()
            .zip(&gram_diag)
            .map(|(a, g)| a + 2.0 * lambda * g)
            .collect();
        let full_off: Vec<f64> = gram_off.iter().map(|o| 2.0 * lambda * o).collect();
        let mut sol = match solve_symmetric_tridiagonal(&full_diag, &full_off, &rhs) {
            Ok(s) => s,
            Err(e) => {
                warn!("kernel row {k}: {e}; row left unchanged");
                continue;
            }
        };
        for s in sol.iter_mut() {
            if *s < 0.0 {
                if *s < -1e-12 {
                    warn!("kernel row {k}: solver returned {s}, clamped to 0");
                }
                *s = 0.0;
            }
        }

        let base: Vec<f64> = h_prev.row(k).to_vec();
        let yrow = y.row(k);
        let f0 = row_cost(yrow, vrow, &base, lambda, beta, &op);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = base
                .iter()
                .zip(&sol)
                .map(|(h0, h1)| h0 + step * (h1 - h0))
                .collect();
            if row_cost(yrow, vrow, &trial, lambda, beta, &op) <= f0 {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        if step < 1.0 {
            shortened += 1;
        }
        if let Some(row) = accepted {
            h_new.row_mut(k).assign(&Array1::from(row));
        }
    }
    if shortened > 0 {
        debug!("kernel update: {shortened}/{bins} bands took a shortened step");
    }
    Ok(ReverbKernel(h_new))
}

/// Penalized objective
/// `D_β(Y‖X) + Σ_{j,n} λ_n U[j,n] + Σ_k λ_k ‖L H_kᵀ‖²`,
/// with `X` floored at [`EPSILON`] as in the updates.
pub fn cost(state: &ModelState, y: &Array2<f64>, beta: Beta, weights: &PenaltyWeights) -> Result<f64> {
    check_data(state, y)?;
    let (bins, _, frames, taps) = state.dims();
    if weights.lambda_u.len() != frames || weights.lambda_h.len() != bins {
        return Err(Error::Shape("penalty weights do not match the model".into()));
    }
    let x = state.synthesis();
    let mut fit = 0.0;
    for ((k, n), &yv) in y.indexed_iter() {
        fit += divergence_entry(yv, x[[k, n]].max(EPSILON), beta);
    }
    let sparsity: f64 = state
        .activations
        .0
        .sum_axis(Axis(0))
        .iter()
        .zip(&weights.lambda_u)
        .map(|(s, l)| s * l)
        .sum();
    let op = DifferenceOperator::new(taps);
    let smooth: f64 = state
        .kernel
        .0
        .rows()
        .into_iter()
        .zip(&weights.lambda_h)
        .map(|(row, l)| l * op.penalty(row))
        .sum();
    Ok(fit + sparsity + smooth)
}
