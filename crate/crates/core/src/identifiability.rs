//! Minimum sub-frame counts, rank bounds, complexity and feedback accounting
//! for every receiver.

use std::fmt;
use std::str::FromStr;

use crate::coding::CodingSet;
use crate::error::{Error, Result};
use crate::scenario::{ChannelRealization, ScenarioConfig, Scheme};
use crate::tensor::{diag, kron, numerical_rank, vstack, CMatrix};

/// Rank threshold relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Receiver {
    Bals,
    KronF,
    Krf,
    /// Channel-only LS at the BS with fed-back symbols.
    H,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Receiver::Bals => "BALS",
            Receiver::KronF => "KronF",
            Receiver::Krf => "KRF",
            Receiver::H => "H",
        })
    }
}

impl FromStr for Receiver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bals" => Ok(Receiver::Bals),
            "kronf" => Ok(Receiver::KronF),
            "krf" => Ok(Receiver::Krf),
            "h" => Ok(Receiver::H),
            other => Err(Error::UnknownCombination(format!("unknown receiver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Hris,
    Bs,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entity::Hris => "HRIS",
            Entity::Bs => "BS",
        })
    }
}

/// System dimensions the conditions depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub nc: usize,
    pub l: usize,
    pub r: usize,
    pub t: usize,
    pub k: usize,
}

impl From<&ScenarioConfig> for Dims {
    fn from(c: &ScenarioConfig) -> Self {
        Self {
            m: c.m,
            n: c.n,
            nc: c.nc,
            l: c.l,
            r: c.r,
            t: c.t,
            k: c.k,
        }
    }
}

/// The ten table rows in their published order.
pub const TABLE_ROWS: [(Receiver, Entity, Scheme); 10] = [
    (Receiver::Bals, Entity::Hris, Scheme::Tstc),
    (Receiver::KronF, Entity::Hris, Scheme::Tstc),
    (Receiver::Bals, Entity::Bs, Scheme::Tstc),
    (Receiver::KronF, Entity::Bs, Scheme::Tstc),
    (Receiver::Bals, Entity::Hris, Scheme::Krstc),
    (Receiver::Krf, Entity::Hris, Scheme::Krstc),
    (Receiver::Bals, Entity::Bs, Scheme::Krstc),
    (Receiver::KronF, Entity::Bs, Scheme::Krstc),
    (Receiver::H, Entity::Bs, Scheme::Tstc),
    (Receiver::H, Entity::Bs, Scheme::Krstc),
];

fn unknown(receiver: Receiver, entity: Entity, scheme: Scheme) -> Error {
    Error::UnknownCombination(format!("{receiver}/{entity}/{scheme}"))
}

/// A single least-squares matrix and the sub-frames it needs to have full rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixCondition {
    pub matrix: &'static str,
    pub min_k: usize,
}

/// Per-matrix conditions behind a table row.
pub fn matrix_conditions(d: &Dims, receiver: Receiver, entity: Entity, scheme: Scheme) -> Result<Vec<MatrixCondition>> {
    use Receiver::*;
    let c = |matrix, min_k| MatrixCondition { matrix, min_k };
    // KRSTC carries L streams
    let r = if scheme == Scheme::Krstc { d.l } else { d.r };
    Ok(match (receiver, entity, scheme) {
        (Bals, Entity::Hris, _) => vec![
            c("F_g (G-step)", (d.l * d.n).div_ceil(d.t * d.nc)),
            c("F_x (X-step)", (r * d.t).div_ceil(d.t * d.nc)),
        ],
        (KronF, Entity::Hris, Scheme::Tstc) => vec![c("F_xg", (d.l * d.r * d.n).div_ceil(d.nc))],
        (Krf, Entity::Hris, Scheme::Krstc) => vec![c("F_xg", (d.l * d.n).div_ceil(d.nc))],
        (Bals, Entity::Bs, _) => vec![
            c("E_h X (H-step)", d.n.div_ceil(d.t)),
            c("H E_x (X-step)", r.div_ceil(d.m)),
        ],
        (KronF, Entity::Bs, Scheme::Tstc) => vec![c("E_xh (I kron g)", d.r * d.n)],
        (KronF, Entity::Bs, Scheme::Krstc) => vec![c("diag(g) E_xh", d.l * d.n)],
        (H, Entity::Bs, _) => vec![c("E_h X", d.n.div_ceil(d.t))],
        _ => return Err(unknown(receiver, entity, scheme)),
    })
}

/// Minimum `K` of a table row, evaluated from the table expression.
pub fn min_subframes(d: &Dims, receiver: Receiver, entity: Entity, scheme: Scheme) -> Result<usize> {
    use Receiver::*;
    let ceil = |a: usize, b: usize| a.div_ceil(b);
    Ok(match (receiver, entity, scheme) {
        (Bals, Entity::Hris, Scheme::Tstc) => ceil((d.r * d.t).max(d.l * d.n), d.t * d.nc),
        (KronF, Entity::Hris, Scheme::Tstc) => ceil(d.l * d.r * d.n, d.nc),
        (Bals, Entity::Bs, Scheme::Tstc) => ceil(d.r, d.m).max(ceil(d.n, d.t)),
        (KronF, Entity::Bs, Scheme::Tstc) => d.r * d.n,
        (Bals, Entity::Hris, Scheme::Krstc) => ceil((d.l * d.t).max(d.l * d.n), d.t * d.nc),
        (Krf, Entity::Hris, Scheme::Krstc) => ceil(d.l * d.n, d.nc),
        (Bals, Entity::Bs, Scheme::Krstc) => ceil(d.l, d.m).max(ceil(d.n, d.t)),
        (KronF, Entity::Bs, Scheme::Krstc) => d.l * d.n,
        (H, Entity::Bs, _) => ceil(d.n, d.t),
        _ => return Err(unknown(receiver, entity, scheme)),
    })
}

/// Fails with [`Error::NotIdentifiable`] when `d.k` is below the row's minimum.
pub(crate) fn ensure_identifiable(d: &Dims, receiver: Receiver, entity: Entity, scheme: Scheme) -> Result<()> {
    let required = min_subframes(d, receiver, entity, scheme)?;
    if d.k < required {
        return Err(Error::NotIdentifiable {
            receiver: format!("{receiver}/{entity}/{scheme}"),
            required,
            available: d.k,
        });
    }
    Ok(())
}

/// Smallest `K` the phase-shift and Hadamard coding designs can be built for.
pub fn design_min_subframes(d: &Dims, scheme: Scheme) -> usize {
    let coding = match scheme {
        Scheme::Tstc => d.r * d.l,
        Scheme::Krstc => d.l,
    };
    coding.max(d.n.div_ceil(d.nc)).max(1).next_power_of_two()
}

/// Smallest `K` at which the alternating solvers can have a unique solution.
///
/// Any invertible `R x R` mixing `X -> A X` absorbed by the channel gives an
/// exact alternative fit unless the equations outnumber the unknowns, up to
/// the scalar ambiguity: `K Nc R >= L N + R^2 - 1` at the HRIS and
/// `K M R >= M N + R^2 - 1` at the BS. The table rows only guarantee that
/// each half-step is well posed, which can be weaker.
pub fn bals_counting_bound(d: &Dims, entity: Entity, scheme: Scheme) -> usize {
    let r = if scheme == Scheme::Krstc { d.l } else { d.r };
    let mixing = r * r - 1;
    match entity {
        Entity::Hris => (d.l * d.n + mixing).div_ceil(d.nc * r),
        Entity::Bs => (d.m * d.n + mixing).div_ceil(d.m * r),
    }
}

/// An HRIS receiver paired with a BS receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReceiverPair {
    pub hris: Receiver,
    pub bs: Receiver,
    pub scheme: Scheme,
}

impl ReceiverPair {
    /// Parses `<hris>-<bs>` and checks it against the catalog.
    pub fn parse(text: &str, scheme: Scheme) -> Result<Self> {
        let (a, b) = text
            .split_once('-')
            .ok_or_else(|| Error::UnknownCombination(format!("expected <hris>-<bs>, found '{text}'")))?;
        let pair = Self {
            hris: a.parse()?,
            bs: b.parse()?,
            scheme,
        };
        if !receiver_pairs().contains(&pair) {
            return Err(Error::UnknownCombination(format!("{pair} is not a supported pair")));
        }
        Ok(pair)
    }

    /// 1 when only the channel is fed back, 2 when the symbols are too.
    pub fn scenario(&self) -> u8 {
        if self.bs == Receiver::H {
            2
        } else {
            1
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.hris, self.bs).to_ascii_lowercase()
    }
}

impl fmt::Display for ReceiverPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{} ({})", self.hris, self.bs, self.scheme)
    }
}

/// The twelve supported pairs.
pub fn receiver_pairs() -> Vec<ReceiverPair> {
    use Receiver::*;
    let p = |hris, bs, scheme| ReceiverPair { hris, bs, scheme };
    vec![
        p(Bals, Bals, Scheme::Tstc),
        p(Bals, KronF, Scheme::Tstc),
        p(KronF, Bals, Scheme::Tstc),
        p(KronF, KronF, Scheme::Tstc),
        p(Bals, Bals, Scheme::Krstc),
        p(Bals, KronF, Scheme::Krstc),
        p(Krf, Bals, Scheme::Krstc),
        p(Krf, KronF, Scheme::Krstc),
        p(Bals, H, Scheme::Tstc),
        p(KronF, H, Scheme::Tstc),
        p(Bals, H, Scheme::Krstc),
        p(Krf, H, Scheme::Krstc),
    ]
}

/// One table row evaluated for a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCheck {
    pub receiver: Receiver,
    pub entity: Entity,
    pub scheme: Scheme,
    pub min_k: usize,
    pub satisfied: bool,
    pub conditions: Vec<MatrixCondition>,
}

/// Identifiability of a receiver pair for a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentReport {
    pub pair: ReceiverPair,
    pub k: usize,
    pub rows: Vec<RowCheck>,
    /// Largest row minimum; both receivers must hold at once.
    pub required_k: usize,
    pub satisfied: bool,
}

/// Evaluates both rows of a pair.
pub fn check_identifiability(cfg: &ScenarioConfig, pair: &ReceiverPair) -> Result<IdentReport> {
    let d = Dims::from(cfg);
    let mut rows = Vec::new();
    for (receiver, entity) in [(pair.hris, Entity::Hris), (pair.bs, Entity::Bs)] {
        let min_k = min_subframes(&d, receiver, entity, pair.scheme)?;
        rows.push(RowCheck {
            receiver,
            entity,
            scheme: pair.scheme,
            min_k,
            satisfied: d.k >= min_k,
            conditions: matrix_conditions(&d, receiver, entity, pair.scheme)?,
        });
    }
    let required_k = rows.iter().map(|r| r.min_k).max().unwrap_or(1);
    Ok(IdentReport {
        pair: *pair,
        k: d.k,
        satisfied: d.k >= required_k,
        required_k,
        rows,
    })
}

/// Observed rank next to its theoretical upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankBound {
    pub observed: usize,
    pub bound: usize,
}

impl RankBound {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound
    }
}

/// Numerical ranks of the factor matrices and of the per-sub-frame LS blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RankBoundReport {
    pub kappa_g: usize,
    pub kappa_h: usize,
    pub kappa_x: usize,
    /// Largest rank over `k` of `Phi_k G C_k`.
    pub zeta_x: RankBound,
    /// Largest rank over `k` of `H diag(psi_k) G C_k`.
    pub xi_x: RankBound,
    /// Largest rank over `k` of `diag(psi_k) G C_k X`.
    pub xi_h: RankBound,
    /// Rank of the stacked G-step matrix.
    pub fg_bar: RankBound,
}

impl RankBoundReport {
    pub fn all_hold(&self) -> bool {
        [self.zeta_x, self.xi_x, self.xi_h, self.fg_bar].iter().all(RankBound::holds)
    }
}

/// Compares observed ranks against the propositions' upper bounds.
pub fn rank_bounds(channels: &ChannelRealization, x: &CMatrix, coding: &CodingSet) -> RankBoundReport {
    let rank = |m: &CMatrix| numerical_rank(m, RANK_TOL);
    let (g, h) = (&channels.g, &channels.h);
    let (kappa_g, kappa_h, kappa_x) = (rank(g), rank(h), rank(x));
    let (nc, r, k) = (coding.nc(), coding.r(), coding.k());
    let (l, n) = (g.ncols(), g.nrows());
    let with_r = |b: usize| match coding.scheme() {
        Scheme::Tstc => b.min(r),
        Scheme::Krstc => b,
    };

    let mut zeta = 0;
    let mut xi_x = 0;
    let mut xi_h = 0;
    let mut fg_blocks = Vec::with_capacity(k);
    for kk in 0..k {
        let c = coding.c_k(kk);
        let dpsi = diag(&coding.psi_k(kk));
        zeta = zeta.max(rank(&(coding.phi_k(kk) * g * &c)));
        xi_x = xi_x.max(rank(&(h * &dpsi * g * &c)));
        xi_h = xi_h.max(rank(&(&dpsi * g * &c * x)));
        fg_blocks.push(kron(&(&c * x).transpose(), &coding.phi_k(kk)));
    }
    RankBoundReport {
        kappa_g,
        kappa_h,
        kappa_x,
        zeta_x: RankBound {
            observed: zeta,
            bound: with_r(nc.min(kappa_g)),
        },
        xi_x: RankBound {
            observed: xi_x,
            bound: with_r(kappa_h.min(kappa_g)),
        },
        xi_h: RankBound {
            observed: xi_h,
            bound: kappa_g.min(kappa_x),
        },
        fg_bar: RankBound {
            observed: rank(&vstack(&fg_blocks)),
            bound: (k * nc * kappa_x).min(l * n),
        },
    }
}

/// Order-of-magnitude operation count of a table row.
///
/// Iterative rows are per-iteration costs multiplied by `iterations`.
pub fn flops_estimate(d: &Dims, receiver: Receiver, entity: Entity, scheme: Scheme, iterations: usize) -> Result<f64> {
    use Receiver::*;
    let (m, n, nc, l, r, t, k) = (
        d.m as f64,
        d.n as f64,
        d.nc as f64,
        d.l as f64,
        d.r as f64,
        d.t as f64,
        d.k as f64,
    );
    let it = iterations as f64;
    Ok(match (receiver, entity, scheme) {
        (Bals, Entity::Hris, Scheme::Tstc) => it * k * nc * (r * r + l * l * n * n * t),
        (KronF, Entity::Hris, Scheme::Tstc) => l * r * n * (l * r * n * k * nc + t),
        (Bals, Entity::Bs, Scheme::Tstc) => it * k * (r * r * m + n * n * t),
        (KronF, Entity::Bs, Scheme::Tstc) => r * n * (r * n * k + t * m),
        (Bals, Entity::Hris, Scheme::Krstc) => it * l * l * k * nc * (1.0 + n * n * t),
        (Krf, Entity::Hris, Scheme::Krstc) => l * n * (l * n * k * nc + t),
        (Bals, Entity::Bs, Scheme::Krstc) => it * k * (l * l * m + n * n * t),
        (KronF, Entity::Bs, Scheme::Krstc) => l * n * (l * n * k + t * m),
        (H, Entity::Bs, _) => k * n * n * t,
        _ => return Err(unknown(receiver, entity, scheme)),
    })
}

/// Control-link payload size in bits.
///
/// Scenario 1 sends `G` only; scenario 2 adds the symbols, excluding anchors.
pub fn feedback_bits(cfg: &ScenarioConfig, scenario: u8, scheme: Scheme) -> Result<u64> {
    let channel = (cfg.l * cfg.n * cfg.eta) as u64;
    let bits_per_symbol = (cfg.constellation_order as u64).max(1).ilog2() as u64;
    match scenario {
        1 => Ok(channel),
        2 => {
            let symbols = match scheme {
                Scheme::Tstc => (cfg.r * cfg.t) as u64 - 1,
                Scheme::Krstc => (cfg.l * (cfg.t - 1)) as u64,
            };
            Ok(symbols * bits_per_symbol + channel)
        }
        other => Err(Error::InvalidConfig(format!("control-link scenario {other} is not 1 or 2"))),
    }
}
