//! Phase-shift and space-time coding design, QAM symbols with ambiguity anchors.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, Scheme};
use crate::tensor::{diag, CMatrix, Tensor3, C64, ONE};

/// Per-sub-frame transmit coding.
#[derive(Debug, Clone, PartialEq)]
pub enum Coding {
    /// `L x R x K` tensor whose frontal slices are the coding matrices `W_k`.
    Tstc(Tensor3),
    /// `K x L` matrix whose row `k` holds the diagonal of the `k`-th coding matrix.
    Krstc(CMatrix),
}

/// Everything the transmitter and the surface apply across the `K` sub-frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingSet {
    /// Sensing phase shifts, `Nc x N x K`.
    pub phi: Tensor3,
    /// Reflecting phase shifts, `K x N`.
    pub psi: CMatrix,
    pub coding: Coding,
}

impl CodingSet {
    pub fn scheme(&self) -> Scheme {
        match self.coding {
            Coding::Tstc(_) => Scheme::Tstc,
            Coding::Krstc(_) => Scheme::Krstc,
        }
    }

    pub fn k(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n(&self) -> usize {
        self.psi.ncols()
    }

    pub fn nc(&self) -> usize {
        self.phi.dims()[0]
    }

    pub fn l(&self) -> usize {
        match &self.coding {
            Coding::Tstc(w) => w.dims()[0],
            Coding::Krstc(lambda) => lambda.ncols(),
        }
    }

    /// Number of coded streams (`R`, equal to `L` for KRSTC).
    pub fn r(&self) -> usize {
        match &self.coding {
            Coding::Tstc(w) => w.dims()[1],
            Coding::Krstc(lambda) => lambda.ncols(),
        }
    }

    /// `Phi_k`, `Nc x N`.
    pub fn phi_k(&self, k: usize) -> CMatrix {
        self.phi.slice(k)
    }

    /// `psi_k` as a slice-friendly vector.
    pub fn psi_k(&self, k: usize) -> Vec<C64> {
        self.psi.row(k).iter().copied().collect()
    }

    /// Effective coding matrix of sub-frame `k`: `W_k` or `diag(lambda_k)`.
    pub fn c_k(&self, k: usize) -> CMatrix {
        match &self.coding {
            Coding::Tstc(w) => w.slice(k),
            Coding::Krstc(lambda) => diag(&lambda.row(k).iter().copied().collect::<Vec<_>>()),
        }
    }

    /// Row `k` of the KRSTC coding matrix.
    pub fn lambda_k(&self, k: usize) -> Option<Vec<C64>> {
        match &self.coding {
            Coding::Krstc(lambda) => Some(lambda.row(k).iter().copied().collect()),
            Coding::Tstc(_) => None,
        }
    }
}

/// Sylvester Hadamard matrix of order `k`.
pub fn hadamard(k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::DesignConstraint(format!(
            "Hadamard order K = {k} is not a power of two"
        )));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// `KNc`-point DFT based sensing and reflecting phase shifts.
///
/// The `n`-th mode-3 fiber of the sensing tensor for chain `nc` is the
/// `nc`-th block of `K` rows of DFT column `n`. Reflecting column `n` is the
/// first `K` rows of DFT column `n Nc` taken modulo `K Nc`.
pub fn design_phase_shifts(cfg: &ScenarioConfig) -> Result<(Tensor3, CMatrix)> {
    let (n, nc, k) = (cfg.n, cfg.nc, cfg.k);
    let size = k * nc;
    if size < n {
        return Err(Error::DesignConstraint(format!(
            "K * Nc = {size} is smaller than N = {n}"
        )));
    }
    let dft = |row: usize, col: usize| C64::from_polar(1.0, -2.0 * PI * ((row * col) % size) as f64 / size as f64);
    let a_phi = ((1.0 - cfg.rho) / nc as f64).sqrt();
    let a_psi = cfg.rho.sqrt();
    let phi = Tensor3::from_fn([nc, n, k], |c, j, kk| dft(c * k + kk, j) * a_phi);
    let psi = CMatrix::from_fn(k, n, |kk, j| dft(kk, (j * nc) % size) * a_psi);
    Ok((phi, psi))
}

/// Truncated-Hadamard TSTC coding tensor, `L x R x K`.
///
/// Row `k` of the first `RL` Sylvester columns is separable in `(l, r)`, so a
/// plain reshape gives rank-one `W_k`. Each entry is therefore multiplied by
/// the sign pattern `S[l, r] = (-1)^popcount(l & r)`, which flips whole
/// columns of the truncated matrix (the result is still a Hadamard
/// truncation) and makes `W_k = diag(a_k) S diag(b_k)` full rank.
pub fn design_tstc(cfg: &ScenarioConfig) -> Result<Tensor3> {
    let (l, r, k) = (cfg.l, cfg.r, cfg.k);
    if k < r * l {
        return Err(Error::DesignConstraint(format!("K = {k} is smaller than R * L = {}", r * l)));
    }
    let had = hadamard(k)?;
    let scale = 1.0 / (l as f64).sqrt();
    let sign = |i: usize, j: usize| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Ok(Tensor3::from_fn([l, r, k], |i, j, kk| {
        C64::new(had[(kk, i + l * j)] * sign(i, j) * scale, 0.0)
    }))
}

/// Truncated-Hadamard KRSTC coding matrix, `K x L`.
pub fn design_krstc(cfg: &ScenarioConfig) -> Result<CMatrix> {
    let (l, k) = (cfg.l, cfg.k);
    if k < l {
        return Err(Error::DesignConstraint(format!("K = {k} is smaller than L = {l}")));
    }
    let had = hadamard(k)?;
    Ok(CMatrix::from_fn(k, l, |i, j| C64::new(had[(i, j)], 0.0)))
}

/// Builds the full coding set for the configured scheme.
pub fn design(cfg: &ScenarioConfig) -> Result<CodingSet> {
    let (phi, psi) = design_phase_shifts(cfg)?;
    let coding = match cfg.scheme {
        Scheme::Tstc => Coding::Tstc(design_tstc(cfg)?),
        Scheme::Krstc => {
            if cfg.r != cfg.l {
                return Err(Error::DesignConstraint("KRSTC requires R = L".into()));
            }
            Coding::Krstc(design_krstc(cfg)?)
        }
    };
    Ok(CodingSet { phi, psi, coding })
}

/// Unit average energy square QAM with Gray labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<C64>,
    /// Gray label of each point, in the same order as `points`.
    pub labels: Vec<u32>,
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if order < 4 || side * side != order || !side.is_power_of_two() {
            return Err(Error::UnsupportedConstellation(order));
        }
        let bits = side.trailing_zeros();
        let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) / norm;
        let gray = |i: usize| (i ^ (i >> 1)) as u32;
        let mut points = Vec::with_capacity(order);
        let mut labels = Vec::with_capacity(order);
        for i in 0..side {
            for q in 0..side {
                points.push(C64::new(level(i), level(q)));
                labels.push((gray(i) << bits) | gray(q));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Index of the nearest point; the first one wins ties.
    pub fn decide(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Transmitted symbols with the anchor pattern of the active scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix {
    /// `R x T` unit-energy symbols; anchored entries equal one.
    pub x: CMatrix,
    pub scheme: Scheme,
}

/// Draws uniform QAM symbols and overwrites the anchors.
///
/// TSTC anchors `X[0, 0]`; KRSTC anchors the whole first column.
pub fn gen_symbols<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    constellation: &Constellation,
    rng: &mut R,
) -> SymbolMatrix {
    let order = constellation.order();
    let mut x = CMatrix::from_fn(cfg.r, cfg.t, |_, _| constellation.points[rng.random_range(0..order)]);
    match cfg.scheme {
        Scheme::Tstc => x[(0, 0)] = ONE,
        Scheme::Krstc => x.column_mut(0).fill(ONE),
    }
    SymbolMatrix {
        x,
        scheme: cfg.scheme,
    }
}
