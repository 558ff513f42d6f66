//! Estimation of the HRIS-BS channel (and the symbols) at the base station,
//! given the UT-HRIS estimate fed back over the control link.

use crate::coding::CodingSet;
use crate::error::{shape_mismatch, Error, Result};
use crate::hris_rx::{anchor_usable, random_init, Ambiguity, BalsOptions, EstimateReport, RANK_TOL};
use crate::identifiability::{ensure_identifiable, Dims, Entity, Receiver};
use crate::tensor::{
    diag, frobenius_sqr, hstack, pinv, pinv_with_rank, rank1_approx, unfold, unvec, vec, vstack,
    CMatrix, Mode, Tensor3, C64,
};

const EXACT_FIT: f64 = 1e-28;

/// What the HRIS controller sends to the BS.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLinkPayload {
    pub g_hat: CMatrix,
    /// Present in scenario 2 only.
    pub x_hat: Option<CMatrix>,
}

impl ControlLinkPayload {
    /// Scenario 1: the channel estimate alone.
    pub fn channel_only(g_hat: CMatrix) -> Self {
        Self { g_hat, x_hat: None }
    }

    /// Scenario 2: channel and symbol estimates.
    pub fn with_symbols(g_hat: CMatrix, x_hat: CMatrix) -> Self {
        Self {
            g_hat,
            x_hat: Some(x_hat),
        }
    }

    pub fn scenario(&self) -> u8 {
        if self.x_hat.is_some() {
            2
        } else {
            1
        }
    }
}

/// Normalizes the BS estimate with `beta = X[0, 0]` (both schemes).
pub fn remove_ambiguity_bs(mut report: EstimateReport) -> Result<EstimateReport> {
    let beta = report.x_hat[(0, 0)];
    if !anchor_usable(beta, &report.x_hat) {
        return Err(Error::ZeroAnchor);
    }
    report.x_hat /= beta;
    report.channel *= beta;
    report.ambiguity = Some(Ambiguity::Scalar(beta));
    Ok(report)
}

/// `[diag(psi_k) G C_k]_k`, `N x K R`.
pub fn build_eh(coding: &CodingSet, g_hat: &CMatrix) -> CMatrix {
    hstack(&effective_blocks(coding, g_hat))
}

/// `[diag(psi_k) G C_k]_k` stacked vertically, `K N x R`.
pub fn build_ex(coding: &CodingSet, g_hat: &CMatrix) -> CMatrix {
    vstack(&effective_blocks(coding, g_hat))
}

/// TSTC: `[C_1^T kron diag(psi_1), ...]`, `R N x K L N`.
/// KRSTC: `Lambda^T khatri-rao Psi^T`, `L N x K`.
pub fn build_exh(coding: &CodingSet) -> CMatrix {
    match &coding.coding {
        crate::coding::Coding::Tstc(_) => {
            let blocks: Vec<CMatrix> = (0..coding.k())
                .map(|k| crate::tensor::kron(&coding.c_k(k).transpose(), &diag(&coding.psi_k(k))))
                .collect();
            hstack(&blocks)
        }
        crate::coding::Coding::Krstc(lambda) => {
            crate::tensor::khatri_rao(&lambda.transpose(), &coding.psi.transpose())
                .expect("both factors have K columns")
        }
    }
}

/// Right factor of the `Z` problem: column `k` is `vec(diag(psi_k) G C_k)`, `R N x K`.
pub fn build_z_factor(coding: &CodingSet, g_hat: &CMatrix) -> CMatrix {
    let cols: Vec<CMatrix> = effective_blocks(coding, g_hat).iter().map(vec).collect();
    hstack(&cols)
}

fn effective_blocks(coding: &CodingSet, g_hat: &CMatrix) -> Vec<CMatrix> {
    (0..coding.k())
        .map(|k| diag(&coding.psi_k(k)) * g_hat * coding.c_k(k))
        .collect()
}

fn bs_dims(y_bs: &Tensor3, payload: &ControlLinkPayload, coding: &CodingSet) -> Result<Dims> {
    let [m, t, k] = y_bs.dims();
    if k != coding.k() {
        return Err(shape_mismatch(
            "BS receiver",
            format!("{} sub-frames", coding.k()),
            format!("{k}"),
        ));
    }
    if payload.g_hat.shape() != (coding.n(), coding.l()) {
        return Err(shape_mismatch(
            "BS receiver",
            format!("{}x{} channel estimate", coding.n(), coding.l()),
            format!("{}x{}", payload.g_hat.nrows(), payload.g_hat.ncols()),
        ));
    }
    Ok(Dims {
        m,
        n: coding.n(),
        nc: coding.nc(),
        l: coding.l(),
        r: coding.r(),
        t,
        k,
    })
}

/// `[diag(psi_k) G C_k X]_k`, the right factor of the H-step, `N x K T`.
fn h_step_factor(blocks: &[CMatrix], x: &CMatrix) -> CMatrix {
    hstack(&blocks.iter().map(|b| b * x).collect::<Vec<_>>())
}

fn bs_residual(y_bs: &Tensor3, blocks: &[CMatrix], h: &CMatrix, x: &CMatrix) -> f64 {
    blocks
        .iter()
        .enumerate()
        .map(|(k, b)| frobenius_sqr(&(y_bs.slice(k) - h * b * x)))
        .sum()
}

/// Alternating LS at the BS, randomly initialized, anchor normalized.
pub fn bs_bals(
    y_bs: &Tensor3,
    payload: &ControlLinkPayload,
    coding: &CodingSet,
    opts: &BalsOptions,
) -> Result<EstimateReport> {
    let d = bs_dims(y_bs, payload, coding)?;
    let x0 = random_init(d.r, d.t, opts.init_seed);
    remove_ambiguity_bs(bs_bals_raw(y_bs, payload, coding, opts, x0)?)
}

/// Alternating LS at the BS from a given symbol matrix, without normalization.
pub fn bs_bals_raw(
    y_bs: &Tensor3,
    payload: &ControlLinkPayload,
    coding: &CodingSet,
    opts: &BalsOptions,
    x0: CMatrix,
) -> Result<EstimateReport> {
    opts.validate()?;
    let d = bs_dims(y_bs, payload, coding)?;
    ensure_identifiable(&d, Receiver::Bals, Entity::Bs, coding.scheme())?;
    if x0.shape() != (d.r, d.t) {
        return Err(shape_mismatch(
            "bs_bals",
            format!("{}x{} initial symbols", d.r, d.t),
            format!("{}x{}", x0.nrows(), x0.ncols()),
        ));
    }
    let blocks = effective_blocks(coding, &payload.g_hat);
    let y1 = unfold(y_bs, Mode::One);
    let y_stack = unfold(y_bs, Mode::Two).transpose();
    let energy = y_bs.norm_sqr();

    let mut x = x0;
    let mut h = CMatrix::zeros(d.m, d.n);
    let mut trace = Vec::new();
    let mut converged = false;
    for it in 1..=opts.max_iterations {
        h = &y1 * pinv(&h_step_factor(&blocks, &x));
        let ex: Vec<CMatrix> = blocks.iter().map(|b| &h * b).collect();
        x = pinv(&vstack(&ex)) * &y_stack;

        let e = bs_residual(y_bs, &blocks, &h, &x);
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
        channel: h,
        x_hat: x,
        iterations: trace.len(),
        residual_trace: trace,
        converged,
        ambiguity: None,
    })
}

/// LS estimate of `Z = X^T kron H` (`T M x R N`).
pub fn estimate_z(y_bs: &Tensor3, payload: &ControlLinkPayload, coding: &CodingSet) -> Result<CMatrix> {
    bs_dims(y_bs, payload, coding)?;
    let factor = build_z_factor(coding, &payload.g_hat);
    let (factor_pinv, rank) = pinv_with_rank(&factor, RANK_TOL);
    if rank < factor.nrows() {
        return Err(Error::RankDeficient {
            what: "Z right factor",
            rank,
            needed: factor.nrows(),
        });
    }
    Ok(unfold(y_bs, Mode::Three).transpose() * factor_pinv)
}

/// Rearranges `X^T kron H` into the rank-one `vec(H) vec(X^T)^T`.
pub fn rearrange_z(z: &CMatrix, m: usize, n: usize, t: usize, r: usize) -> CMatrix {
    CMatrix::from_fn(m * n, t * r, |row, col| {
        let (mm, nn) = (row % m, row / m);
        let (tt, rr) = (col % t, col / t);
        z[(tt * m + mm, rr * n + nn)]
    })
}

/// Closed-form Kronecker factorization at the BS, anchor normalized.
pub fn bs_kronf(y_bs: &Tensor3, payload: &ControlLinkPayload, coding: &CodingSet) -> Result<EstimateReport> {
    remove_ambiguity_bs(bs_kronf_raw(y_bs, payload, coding)?)
}

pub fn bs_kronf_raw(y_bs: &Tensor3, payload: &ControlLinkPayload, coding: &CodingSet) -> Result<EstimateReport> {
    let d = bs_dims(y_bs, payload, coding)?;
    ensure_identifiable(&d, Receiver::KronF, Entity::Bs, coding.scheme())?;
    let z = estimate_z(y_bs, payload, coding)?;
    let r1 = rank1_approx(&rearrange_z(&z, d.m, d.n, d.t, d.r))?;
    let s = r1.sigma.sqrt();
    let h_hat = unvec(&(&r1.u * C64::new(s, 0.0)), d.m, d.n)?;
    let x_hat = unvec(&r1.v.map(|z| z.conj() * s), d.t, d.r)?.transpose();
    Ok(EstimateReport {
        channel: h_hat,
        x_hat,
        iterations: 0,
        residual_trace: Vec::new(),
        converged: true,
        ambiguity: None,
    })
}

/// Single H-step with the symbols fed back by the HRIS (scenario 2).
///
/// The fed-back pair is already normalized, so no further scaling is applied.
pub fn bs_h(y_bs: &Tensor3, payload: &ControlLinkPayload, coding: &CodingSet) -> Result<EstimateReport> {
    let d = bs_dims(y_bs, payload, coding)?;
    ensure_identifiable(&d, Receiver::H, Entity::Bs, coding.scheme())?;
    let Some(x_hat) = payload.x_hat.as_ref() else {
        return Err(Error::InvalidConfig("the H-only receiver needs fed-back symbols".into()));
    };
    if x_hat.shape() != (d.r, d.t) {
        return Err(shape_mismatch(
            "bs_h",
            format!("{}x{} symbols", d.r, d.t),
            format!("{}x{}", x_hat.nrows(), x_hat.ncols()),
        ));
    }
    let factor = h_step_factor(&effective_blocks(coding, &payload.g_hat), x_hat);
    let (factor_pinv, rank) = pinv_with_rank(&factor, RANK_TOL);
    if rank < factor.nrows() {
        return Err(Error::RankDeficient {
            what: "H-step right factor",
            rank,
            needed: factor.nrows(),
        });
    }
    let h_hat = unfold(y_bs, Mode::One) * factor_pinv;
    Ok(EstimateReport {
        channel: h_hat,
        x_hat: x_hat.clone(),
        iterations: 0,
        residual_trace: Vec::new(),
        converged: true,
        ambiguity: None,
    })
}
