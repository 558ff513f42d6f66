//! Joint estimation of the UT-HRIS channel and the symbols from the sensed tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coding::CodingSet;
use crate::error::{shape_mismatch, Error, Result};
use crate::identifiability::{ensure_identifiable, Dims, Entity, Receiver};
use crate::scenario::{gaussian_matrix, Scheme};
use crate::tensor::{
    frobenius_sqr, kron, pinv, pinv_with_rank, rank1_approx, unfold, unvec, vstack, CMatrix,
    Mode, Tensor3, C64,
};

/// Relative threshold for declaring a least-squares matrix rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Residual below this fraction of the data energy ends the iterations at once.
const EXACT_FIT: f64 = 1e-28;

/// Stopping rule and initialization for the alternating solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct BalsOptions {
    pub max_iterations: usize,
    /// Relative change of the residual below which iterations stop.
    pub convergence_tol: f64,
    /// Seed of the random symbol initialization.
    pub init_seed: u64,
}

impl Default for BalsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            convergence_tol: 1e-6,
            init_seed: 0,
        }
    }
}

impl BalsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "BALS needs max_iterations >= 1 and a positive tolerance".into(),
            ));
        }
        Ok(())
    }
}

/// Scaling factor taken out of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Ambiguity {
    Scalar(C64),
    /// One factor per stream.
    Diagonal(Vec<C64>),
}

/// Output of any receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// `G` (`N x L`) at the HRIS, `H` (`M x N`) at the BS.
    pub channel: CMatrix,
    /// `R x T` symbol estimate.
    pub x_hat: CMatrix,
    /// Zero for closed-form receivers.
    pub iterations: usize,
    /// Squared Frobenius residual after every iteration.
    pub residual_trace: Vec<f64>,
    pub converged: bool,
    /// Set once the anchor normalization has been applied.
    pub ambiguity: Option<Ambiguity>,
}

impl EstimateReport {
    fn closed_form(channel: CMatrix, x_hat: CMatrix) -> Self {
        Self {
            channel,
            x_hat,
            iterations: 0,
            residual_trace: Vec::new(),
            converged: true,
            ambiguity: None,
        }
    }
}

pub(crate) fn anchor_usable(anchor: C64, x: &CMatrix) -> bool {
    anchor.is_finite() && anchor.norm() > 1e-12 * x.norm() && anchor.norm() > 0.0
}

/// Normalizes the anchors of an HRIS estimate.
///
/// TSTC divides `X` by `X[0, 0]` and multiplies `G` by it; KRSTC does the
/// same per stream with the first column of `X`.
pub fn remove_ambiguity_hris(mut report: EstimateReport, scheme: Scheme) -> Result<EstimateReport> {
    match scheme {
        Scheme::Tstc => {
            let alpha = report.x_hat[(0, 0)];
            if !anchor_usable(alpha, &report.x_hat) {
                return Err(Error::ZeroAnchor);
            }
            report.x_hat /= alpha;
            report.channel *= alpha;
            report.ambiguity = Some(Ambiguity::Scalar(alpha));
        }
        Scheme::Krstc => {
            let delta: Vec<C64> = report.x_hat.column(0).iter().copied().collect();
            if delta.iter().any(|&d| !anchor_usable(d, &report.x_hat)) {
                return Err(Error::ZeroAnchor);
            }
            if report.channel.ncols() != delta.len() {
                return Err(shape_mismatch(
                    "remove_ambiguity_hris",
                    format!("{} channel columns", delta.len()),
                    format!("{}", report.channel.ncols()),
                ));
            }
            for (l, d) in delta.iter().enumerate() {
                report.x_hat.row_mut(l).iter_mut().for_each(|z| *z /= d);
                report.channel.column_mut(l).iter_mut().for_each(|z| *z *= d);
            }
            report.ambiguity = Some(Ambiguity::Diagonal(delta));
        }
    }
    Ok(report)
}

/// Stacked `C_k^T kron Phi_k`, `K R Nc x L N`.
pub fn build_fg(coding: &CodingSet) -> CMatrix {
    let blocks: Vec<CMatrix> = (0..coding.k())
        .map(|k| kron(&coding.c_k(k).transpose(), &coding.phi_k(k)))
        .collect();
    vstack(&blocks)
}

/// Stacked `Phi_k G C_k`, `K Nc x R`.
pub fn build_fx(coding: &CodingSet, g_hat: &CMatrix) -> CMatrix {
    let blocks: Vec<CMatrix> = (0..coding.k())
        .map(|k| coding.phi_k(k) * g_hat * coding.c_k(k))
        .collect();
    vstack(&blocks)
}

/// Stacked `vec(C_k^T)^T kron Phi_k`: `K Nc x L R N` (TSTC) or `K Nc x L N` (KRSTC).
pub fn build_fxg(coding: &CodingSet) -> CMatrix {
    let blocks: Vec<CMatrix> = (0..coding.k())
        .map(|k| {
            let row = match coding.lambda_k(k) {
                Some(lambda) => CMatrix::from_row_slice(1, lambda.len(), &lambda),
                None => {
                    let w_t = coding.c_k(k).transpose();
                    CMatrix::from_row_slice(1, w_t.len(), w_t.as_slice())
                }
            };
            kron(&row, &coding.phi_k(k))
        })
        .collect();
    vstack(&blocks)
}

fn hris_dims(y_rc: &Tensor3, coding: &CodingSet) -> Result<Dims> {
    let [nc, t, k] = y_rc.dims();
    if nc != coding.nc() || k != coding.k() {
        return Err(shape_mismatch(
            "HRIS receiver",
            format!("{}x_x{} sensed tensor", coding.nc(), coding.k()),
            format!("{nc}x{t}x{k}"),
        ));
    }
    Ok(Dims {
        m: 0,
        n: coding.n(),
        nc,
        l: coding.l(),
        r: coding.r(),
        t,
        k,
    })
}

/// Unit complex Gaussian starting point for the alternating solvers.
pub fn random_init(rows: usize, cols: usize, seed: u64) -> CMatrix {
    gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols, 1.0)
}

fn hris_residual(y_rc: &Tensor3, phis: &[CMatrix], cs: &[CMatrix], g: &CMatrix, x: &CMatrix) -> f64 {
    phis.iter()
        .zip(cs)
        .enumerate()
        .map(|(k, (phi, c))| frobenius_sqr(&(y_rc.slice(k) - phi * g * c * x)))
        .sum()
}

/// Alternating LS at the HRIS, randomly initialized, anchors normalized.
pub fn hris_bals(y_rc: &Tensor3, coding: &CodingSet, opts: &BalsOptions) -> Result<EstimateReport> {
    let d = hris_dims(y_rc, coding)?;
    let x0 = random_init(d.r, d.t, opts.init_seed);
    let raw = hris_bals_raw(y_rc, coding, opts, x0)?;
    remove_ambiguity_hris(raw, coding.scheme())
}

/// Alternating LS at the HRIS from a given symbol matrix, without normalization.
pub fn hris_bals_raw(
    y_rc: &Tensor3,
    coding: &CodingSet,
    opts: &BalsOptions,
    x0: CMatrix,
) -> Result<EstimateReport> {
    opts.validate()?;
    let d = hris_dims(y_rc, coding)?;
    ensure_identifiable(&d, Receiver::Bals, Entity::Hris, coding.scheme())?;
    if x0.shape() != (d.r, d.t) {
        return Err(shape_mismatch(
            "hris_bals",
            format!("{}x{} initial symbols", d.r, d.t),
            format!("{}x{}", x0.nrows(), x0.ncols()),
        ));
    }
    let phis: Vec<CMatrix> = (0..d.k).map(|k| coding.phi_k(k)).collect();
    let cs: Vec<CMatrix> = (0..d.k).map(|k| coding.c_k(k)).collect();
    // stacked vec(Y_k) is the raw buffer; stacked Y_k is the transposed mode-2 unfolding
    let y_vec = CMatrix::from_column_slice(y_rc.data().len(), 1, y_rc.data());
    let y_stack = unfold(y_rc, Mode::Two).transpose();
    let energy = y_rc.norm_sqr();

    let mut x = x0;
    let mut g = CMatrix::zeros(d.n, d.l);
    let mut trace = Vec::new();
    let mut converged = false;
    for it in 1..=opts.max_iterations {
        let blocks: Vec<CMatrix> = phis
            .iter()
            .zip(&cs)
            .map(|(phi, c)| kron(&(c * &x).transpose(), phi))
            .collect();
        g = unvec(&(pinv(&vstack(&blocks)) * &y_vec), d.n, d.l)?;

        let fx: Vec<CMatrix> = phis.iter().zip(&cs).map(|(phi, c)| phi * &g * c).collect();
        x = pinv(&vstack(&fx)) * &y_stack;

        let e = hris_residual(y_rc, &phis, &cs, &g, &x);
        let prev = trace.last().copied();
        trace.push(e);
        if e <= EXACT_FIT * energy {
            converged = true;
            break;
        }
        if let Some(p) = prev {
            if it > 1 && (p - e).abs() <= opts.convergence_tol * p {
                converged = true;
                break;
            }
        }
    }
    Ok(EstimateReport {
        channel: g,
        x_hat: x,
        iterations: trace.len(),
        residual_trace: trace,
        converged,
        ambiguity: None,
    })
}

/// LS estimate of the Kronecker/Khatri-Rao product matrix `Q`.
///
/// TSTC returns `G kron X^T` (`NT x LR`); KRSTC returns the `NT x L`
/// matrix whose column `l` is `g_l kron x_l`.
pub fn estimate_q(y_rc: &Tensor3, coding: &CodingSet) -> Result<CMatrix> {
    let d = hris_dims(y_rc, coding)?;
    let fxg = build_fxg(coding);
    let (fxg_pinv, rank) = pinv_with_rank(&fxg, RANK_TOL);
    if rank < fxg.ncols() {
        return Err(Error::RankDeficient {
            what: "F_xg",
            rank,
            needed: fxg.ncols(),
        });
    }
    let q = unfold(y_rc, Mode::Two) * fxg_pinv.transpose();
    let cols = fxg.ncols() / d.n;
    unvec(&crate::tensor::vec(&q), d.n * d.t, cols)
}

/// Closed-form Kronecker factorization at the HRIS (TSTC), anchors normalized.
pub fn hris_kronf(y_rc: &Tensor3, coding: &CodingSet) -> Result<EstimateReport> {
    remove_ambiguity_hris(hris_kronf_raw(y_rc, coding)?, Scheme::Tstc)
}

pub fn hris_kronf_raw(y_rc: &Tensor3, coding: &CodingSet) -> Result<EstimateReport> {
    if coding.scheme() != Scheme::Tstc {
        return Err(Error::UnknownCombination("KronF at the HRIS requires TSTC".into()));
    }
    let d = hris_dims(y_rc, coding)?;
    ensure_identifiable(&d, Receiver::KronF, Entity::Hris, Scheme::Tstc)?;
    let q = estimate_q(y_rc, coding)?;
    let q_bar = rearrange_q(&q, d.n, d.l, d.t, d.r);
    let r1 = rank1_approx(&q_bar)?;
    let s = C64::new(r1.sigma.sqrt(), 0.0);
    let x_vec = &r1.u * s;
    let g_vec = r1.v.map(|z| z.conj() * s);
    let x_hat = unvec(&x_vec, d.t, d.r)?.transpose();
    let g_hat = unvec(&g_vec, d.n, d.l)?;
    Ok(EstimateReport::closed_form(g_hat, x_hat))
}

/// Rearranges `G kron X^T` into the rank-one `vec(X^T) vec(G)^T`.
pub fn rearrange_q(q: &CMatrix, n: usize, l: usize, t: usize, r: usize) -> CMatrix {
    CMatrix::from_fn(t * r, n * l, |row, col| {
        let (nn, ll) = (col % n, col / n);
        let (tt, rr) = (row % t, row / t);
        q[(nn * t + tt, ll * r + rr)]
    })
}

/// Closed-form Khatri-Rao factorization at the HRIS (KRSTC), anchors normalized.
pub fn hris_krf(y_rc: &Tensor3, coding: &CodingSet) -> Result<EstimateReport> {
    remove_ambiguity_hris(hris_krf_raw(y_rc, coding)?, Scheme::Krstc)
}

pub fn hris_krf_raw(y_rc: &Tensor3, coding: &CodingSet) -> Result<EstimateReport> {
    if coding.scheme() != Scheme::Krstc {
        return Err(Error::UnknownCombination("KRF at the HRIS requires KRSTC".into()));
    }
    let d = hris_dims(y_rc, coding)?;
    ensure_identifiable(&d, Receiver::Krf, Entity::Hris, Scheme::Krstc)?;
    let q = estimate_q(y_rc, coding)?;
    let mut g_hat = CMatrix::zeros(d.n, d.l);
    let mut x_hat = CMatrix::zeros(d.l, d.t);
    for l in 0..d.l {
        // column l is vec(x_l g_l^T) with x_l of length T
        let q_l = unvec(&q.column(l), d.t, d.n)?;
        let r1 = rank1_approx(&q_l)?;
        let s = r1.sigma.sqrt();
        x_hat.row_mut(l).copy_from(&(&r1.u * C64::new(s, 0.0)).transpose());
        g_hat.column_mut(l).copy_from(&r1.v.map(|z| z.conj() * s));
    }
    Ok(EstimateReport::closed_form(g_hat, x_hat))
}

/// Reconstructed sensed slices `Phi_k G C_k X`.
pub fn reconstruct_yrc(coding: &CodingSet, g: &CMatrix, x: &CMatrix) -> Tensor3 {
    crate::signal::noiseless_yrc(g, coding, x)
}
