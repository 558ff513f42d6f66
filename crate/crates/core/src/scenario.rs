//! System configuration, path loss, and channel/noise realizations.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, Tensor3, C64};

/// Transmit coding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Tensor space-time coding: one full `L x R` coding matrix per sub-frame.
    Tstc,
    /// Khatri-Rao space-time coding: diagonal coding matrices, `R = L`.
    Krstc,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Tstc => "tstc",
            Scheme::Krstc => "krstc",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tstc" => Ok(Scheme::Tstc),
            "krstc" => Ok(Scheme::Krstc),
            other => Err(Error::InvalidConfig(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every parameter of a simulated link.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// BS antennas.
    pub m: usize,
    /// HRIS meta-atoms.
    pub n: usize,
    /// HRIS receive RF chains.
    pub nc: usize,
    /// UT antennas.
    pub l: usize,
    /// Data streams.
    pub r: usize,
    /// Symbol periods per sub-frame.
    pub t: usize,
    /// Sub-frames.
    pub k: usize,
    /// Fraction of the impinging power reflected by each meta-atom.
    pub rho: f64,
    pub d_u: f64,
    pub d_h: f64,
    pub alpha_g: f64,
    pub alpha_h: f64,
    pub pl0_db: f64,
    pub d0: f64,
    pub noise_dbm: f64,
    pub pt_dbm: f64,
    pub constellation_order: usize,
    pub scheme: Scheme,
    /// Quantization bits per fed-back channel coefficient.
    pub eta: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n: 32,
            nc: 2,
            l: 2,
            r: 2,
            t: 4,
            k: 64,
            rho: 0.9,
            d_u: 40.0,
            d_h: 10.0,
            alpha_g: 2.5,
            alpha_h: 2.0,
            pl0_db: -20.0,
            d0: 1.0,
            noise_dbm: -90.0,
            pt_dbm: 30.0,
            constellation_order: 64,
            scheme: Scheme::Tstc,
            eta: 16,
        }
    }
}

const KEYS: [&str; 19] = [
    "m",
    "n",
    "nc",
    "l",
    "r",
    "t",
    "k",
    "rho",
    "d_u",
    "d_h",
    "alpha_g",
    "alpha_h",
    "pl0_db",
    "d0",
    "noise_dbm",
    "pt_dbm",
    "constellation_order",
    "scheme",
    "eta",
];

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    /// Switches the coding scheme; KRSTC ties the stream count to `L`.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        if scheme == Scheme::Krstc {
            self.r = self.l;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("m", self.m),
            ("n", self.n),
            ("nc", self.nc),
            ("l", self.l),
            ("r", self.r),
            ("t", self.t),
            ("k", self.k),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.scheme == Scheme::Krstc && self.r != self.l {
            return Err(Error::InvalidConfig(format!(
                "KRSTC requires R = L (R = {}, L = {})",
                self.r, self.l
            )));
        }
        for (name, d) in [("d_u", self.d_u), ("d_h", self.d_h), ("d0", self.d0)] {
            if !(d > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Transmit power in watts.
    pub fn pt_watts(&self) -> f64 {
        dbm_to_watts(self.pt_dbm)
    }

    /// Noise power per complex sample in watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Variance of the UT-HRIS channel entries.
    pub fn gamma(&self) -> Result<f64> {
        path_loss(self.d_u, self.alpha_g, self)
    }

    /// Variance of the HRIS-BS channel entries.
    pub fn beta(&self) -> Result<f64> {
        path_loss(self.d_h, self.alpha_h, self)
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut scheme = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 'key = value', found '{line}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse {
                line: line_no,
                msg: format!("invalid {what} '{value}' for key '{key}'"),
            };
            let int = || value.parse::<usize>().map_err(|_| bad("integer"));
            let real = || value.parse::<f64>().map_err(|_| bad("number"));
            match key {
                "m" => cfg.m = int()?,
                "n" => cfg.n = int()?,
                "nc" => cfg.nc = int()?,
                "l" => cfg.l = int()?,
                "r" => cfg.r = int()?,
                "t" => cfg.t = int()?,
                "k" => cfg.k = int()?,
                "rho" => cfg.rho = real()?,
                "d_u" => cfg.d_u = real()?,
                "d_h" => cfg.d_h = real()?,
                "alpha_g" => cfg.alpha_g = real()?,
                "alpha_h" => cfg.alpha_h = real()?,
                "pl0_db" => cfg.pl0_db = real()?,
                "d0" => cfg.d0 = real()?,
                "noise_dbm" => cfg.noise_dbm = real()?,
                "pt_dbm" => cfg.pt_dbm = real()?,
                "constellation_order" => cfg.constellation_order = int()?,
                "eta" => cfg.eta = int()?,
                "scheme" => scheme = Some(value.parse::<Scheme>().map_err(|_| bad("scheme"))?),
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        if let Some(s) = scheme {
            cfg = cfg.with_scheme(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Serializes every key in the format read by [`ScenarioConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "m" => self.m.to_string(),
                "n" => self.n.to_string(),
                "nc" => self.nc.to_string(),
                "l" => self.l.to_string(),
                "r" => self.r.to_string(),
                "t" => self.t.to_string(),
                "k" => self.k.to_string(),
                "rho" => self.rho.to_string(),
                "d_u" => self.d_u.to_string(),
                "d_h" => self.d_h.to_string(),
                "alpha_g" => self.alpha_g.to_string(),
                "alpha_h" => self.alpha_h.to_string(),
                "pl0_db" => self.pl0_db.to_string(),
                "d0" => self.d0.to_string(),
                "noise_dbm" => self.noise_dbm.to_string(),
                "pt_dbm" => self.pt_dbm.to_string(),
                "constellation_order" => self.constellation_order.to_string(),
                "scheme" => self.scheme.to_string(),
                "eta" => self.eta.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// Large-scale gain `PL0 * (d / d0)^-alpha` in linear units.
pub fn path_loss(d: f64, alpha: f64, cfg: &ScenarioConfig) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidConfig(format!("distance {d} must be positive")));
    }
    Ok(10f64.powf(cfg.pl0_db / 10.0) * (d / cfg.d0).powf(-alpha))
}

/// One coherence-block channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// UT-HRIS channel, `N x L`.
    pub g: CMatrix,
    /// HRIS-BS channel, `M x N`.
    pub h: CMatrix,
}

/// Circularly symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, variance))
}

/// Rayleigh-faded `G` and `H` with path-loss variances.
pub fn draw_channels<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ChannelRealization> {
    let (gamma, beta) = (cfg.gamma()?, cfg.beta()?);
    let g = gaussian_matrix(rng, cfg.n, cfg.l, gamma);
    let h = gaussian_matrix(rng, cfg.m, cfg.n, beta);
    Ok(ChannelRealization { g, h })
}

/// Adds i.i.d. complex Gaussian noise of power `noise_power` to every entry.
pub fn add_noise<R: Rng + ?Sized>(signal: &Tensor3, noise_power: f64, rng: &mut R) -> Tensor3 {
    let mut out = signal.clone();
    if noise_power > 0.0 {
        for z in out.data_mut() {
            *z += complex_gaussian(rng, noise_power);
        }
    }
    out
}
