//! Monte Carlo trials, metrics and sweeps.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bs_rx::{bs_bals, bs_h, bs_kronf, ControlLinkPayload};
use crate::coding::{design, gen_symbols, Constellation};
use crate::error::{shape_mismatch, Error, Result};
use crate::hris_rx::{hris_bals, hris_kronf, hris_krf, BalsOptions, EstimateReport};
use crate::identifiability::{check_identifiability, Receiver, ReceiverPair};
use crate::scenario::{draw_channels, ScenarioConfig};
use crate::signal::{normalize_received, synthesize};
use crate::tensor::{frobenius_sqr, khatri_rao, CMatrix};

/// `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(est: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(shape_mismatch(
            "nmse",
            format!("{}x{}", truth.nrows(), truth.ncols()),
            format!("{}x{}", est.nrows(), est.ncols()),
        ));
    }
    let denom = frobenius_sqr(truth);
    if denom == 0.0 {
        return Err(Error::ZeroMatrix("nmse truth"));
    }
    Ok(frobenius_sqr(&(est - truth)) / denom)
}

/// Combined channel `G^T khatri-rao H`, `L M x N`.
pub fn combined_channel(g: &CMatrix, h: &CMatrix) -> Result<CMatrix> {
    khatri_rao(&g.transpose(), h)
}

/// Symbol error rate over every column but the first.
pub fn ser(x_hat: &CMatrix, x_true: &CMatrix, constellation: &Constellation) -> Result<f64> {
    if x_hat.shape() != x_true.shape() {
        return Err(shape_mismatch(
            "ser",
            format!("{}x{}", x_true.nrows(), x_true.ncols()),
            format!("{}x{}", x_hat.nrows(), x_hat.ncols()),
        ));
    }
    let (rows, cols) = x_true.shape();
    if cols <= 1 {
        return Ok(0.0);
    }
    let mut errors = 0usize;
    for t in 1..cols {
        for r in 0..rows {
            if constellation.decide(x_hat[(r, t)]) != constellation.decide(x_true[(r, t)]) {
                errors += 1;
            }
        }
    }
    Ok(errors as f64 / (rows * (cols - 1)) as f64)
}

/// Metrics of one successful trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub nmse_g: f64,
    pub nmse_h: f64,
    pub nmse_theta: f64,
    pub ser_hris: f64,
    pub ser_bs: f64,
    pub iters_hris: usize,
    pub iters_bs: usize,
}

/// SplitMix64 finalizer, used to derive per-trial seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `i`; the same stream is reused at every sweep point.
pub fn trial_seed(base_seed: u64, i: u64) -> u64 {
    splitmix64(base_seed ^ i)
}

fn run_hris(
    receiver: Receiver,
    y_rc: &crate::tensor::Tensor3,
    coding: &crate::coding::CodingSet,
    opts: &BalsOptions,
) -> Result<EstimateReport> {
    match receiver {
        Receiver::Bals => hris_bals(y_rc, coding, opts),
        Receiver::KronF => hris_kronf(y_rc, coding),
        Receiver::Krf => hris_krf(y_rc, coding),
        Receiver::H => Err(Error::UnknownCombination("H is a BS receiver".into())),
    }
}

fn run_bs(
    receiver: Receiver,
    y_bs: &crate::tensor::Tensor3,
    payload: &ControlLinkPayload,
    coding: &crate::coding::CodingSet,
    opts: &BalsOptions,
) -> Result<EstimateReport> {
    match receiver {
        Receiver::Bals => bs_bals(y_bs, payload, coding, opts),
        Receiver::KronF => bs_kronf(y_bs, payload, coding),
        Receiver::H => bs_h(y_bs, payload, coding),
        Receiver::Krf => Err(Error::UnknownCombination("KRF is an HRIS receiver".into())),
    }
}

/// One full link realization: draw, synthesize, estimate at both ends, score.
///
/// Errors are trial failures (for instance a zero anchor) except for
/// configuration problems, which [`run_sweep`] rejects up front.
pub fn run_trial(cfg: &ScenarioConfig, pair: &ReceiverPair, seed: u64, opts: &BalsOptions) -> Result<TrialMetrics> {
    let cfg = cfg.clone().with_scheme(pair.scheme);
    let coding = design(&cfg)?;
    let constellation = Constellation::qam(cfg.constellation_order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = draw_channels(&cfg, &mut rng)?;
    let symbols = gen_symbols(&cfg, &constellation, &mut rng);
    let signals = synthesize(&cfg, &channels, &coding, &symbols.x, &mut rng)?;
    let opts = BalsOptions {
        init_seed: rng.next_u64(),
        ..opts.clone()
    };

    let y_rc = normalize_received(&cfg, &signals.y_rc);
    let y_bs = normalize_received(&cfg, &signals.y_bs);
    let hris = run_hris(pair.hris, &y_rc, &coding, &opts)?;
    let payload = match pair.scenario() {
        1 => ControlLinkPayload::channel_only(hris.channel.clone()),
        _ => ControlLinkPayload::with_symbols(hris.channel.clone(), hris.x_hat.clone()),
    };
    let bs = run_bs(pair.bs, &y_bs, &payload, &coding, &opts)?;

    let theta = combined_channel(&channels.g, &channels.h)?;
    let theta_hat = combined_channel(&hris.channel, &bs.channel)?;
    Ok(TrialMetrics {
        nmse_g: nmse(&hris.channel, &channels.g)?,
        nmse_h: nmse(&bs.channel, &channels.h)?,
        nmse_theta: nmse(&theta_hat, &theta)?,
        ser_hris: ser(&hris.x_hat, &symbols.x, &constellation)?,
        ser_bs: ser(&bs.x_hat, &symbols.x, &constellation)?,
        iters_hris: hris.iterations,
        iters_bs: bs.iterations,
    })
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Transmit power in dBm.
    Pt,
    /// Reflected power fraction.
    Rho,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::Pt => "pt",
            SweepVar::Rho => "rho",
        }
    }

    /// Configuration with the swept parameter set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self {
            SweepVar::Pt => out.pt_dbm = value,
            SweepVar::Rho => out.rho = value,
        }
        out
    }
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Averages at one sweep point; failed trials are counted, not averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub sweep_var: SweepVar,
    pub value: f64,
    pub nmse_g: Stat,
    pub nmse_h: Stat,
    pub nmse_theta: Stat,
    pub ser_hris: Stat,
    pub ser_bs: Stat,
    pub mean_iterations_hris: f64,
    pub mean_iterations_bs: f64,
    /// Trials attempted.
    pub trials: usize,
    pub failures: usize,
}

/// Reduces trial outcomes in the given order.
pub fn aggregate(sweep_var: SweepVar, value: f64, outcomes: &[Result<TrialMetrics>]) -> MetricsRecord {
    let ok: Vec<&TrialMetrics> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let stat = |f: fn(&TrialMetrics) -> f64| Stat::of(ok.iter().map(|m| f(m)));
    MetricsRecord {
        sweep_var,
        value,
        nmse_g: stat(|m| m.nmse_g),
        nmse_h: stat(|m| m.nmse_h),
        nmse_theta: stat(|m| m.nmse_theta),
        ser_hris: stat(|m| m.ser_hris),
        ser_bs: stat(|m| m.ser_bs),
        mean_iterations_hris: stat(|m| m.iters_hris as f64).mean,
        mean_iterations_bs: stat(|m| m.iters_bs as f64).mean,
        trials: outcomes.len(),
        failures: outcomes.len() - ok.len(),
    }
}

/// Runs trials `start..start + count` of a point in parallel, keeping their order.
pub fn run_batch(
    cfg: &ScenarioConfig,
    pair: &ReceiverPair,
    base_seed: u64,
    start: u64,
    count: u64,
    opts: &BalsOptions,
) -> Vec<Result<TrialMetrics>> {
    (start..start + count)
        .into_par_iter()
        .map(|i| run_trial(cfg, pair, trial_seed(base_seed, i), opts))
        .collect()
}

/// One aggregated record per sweep value.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    pair: &ReceiverPair,
    sweep_var: SweepVar,
    values: &[f64],
    trials: usize,
    base_seed: u64,
    opts: &BalsOptions,
) -> Result<Vec<MetricsRecord>> {
    if values.is_empty() || trials == 0 {
        return Err(Error::InvalidConfig("a sweep needs at least one point and one trial".into()));
    }
    let cfg = cfg.clone().with_scheme(pair.scheme);
    let report = check_identifiability(&cfg, pair)?;
    if !report.satisfied {
        return Err(Error::NotIdentifiable {
            receiver: pair.to_string(),
            required: report.required_k,
            available: cfg.k,
        });
    }
    values
        .iter()
        .map(|&v| {
            let point = sweep_var.apply(&cfg, v);
            point.validate()?;
            design(&point)?;
            Constellation::qam(point.constellation_order)?;
            let outcomes = run_batch(&point, pair, base_seed, 0, trials as u64, opts);
            Ok(aggregate(sweep_var, v, &outcomes))
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "sweep_var,value,nmse_g,nmse_h,nmse_theta,ser_hris,ser_bs,iters_hris,iters_bs,trials,failures";

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes the records as CSV with nine significant digits.
pub fn write_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_var.as_str(),
            sci(r.value),
            sci(r.nmse_g.mean),
            sci(r.nmse_h.mean),
            sci(r.nmse_theta.mean),
            sci(r.ser_hris.mean),
            sci(r.ser_bs.mean),
            sci(r.mean_iterations_hris),
            sci(r.mean_iterations_bs),
            r.trials,
            r.failures
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scheme;
    use crate::tensor::testutil::{random_matrix, rng};
    use crate::tensor::C64;

    #[test]
    fn nmse_examples() {
        let t = random_matrix(&mut rng(1), 3, 2);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert!((nmse(&CMatrix::zeros(3, 2), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&t.map(|z| z * 2.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&t, &CMatrix::zeros(3, 2)).is_err());
        assert!(nmse(&CMatrix::zeros(2, 2), &t).is_err());
    }

    #[test]
    fn combined_channel_examples() {
        let g = CMatrix::from_element(1, 1, C64::new(2.0, 1.0));
        let h = CMatrix::from_element(1, 1, C64::new(0.5, -1.0));
        assert_eq!(combined_channel(&g, &h).unwrap()[(0, 0)], g[(0, 0)] * h[(0, 0)]);
        let mut r = rng(2);
        let g = random_matrix(&mut r, 32, 2);
        let h = random_matrix(&mut r, 8, 32);
        let theta = combined_channel(&g, &h).unwrap();
        assert_eq!(theta.shape(), (16, 32));
        let a = C64::new(0.3, 0.8);
        let other = combined_channel(&g.map(|z| z / a), &h.map(|z| z * a)).unwrap();
        assert!(crate::tensor::max_abs_diff(&theta, &other) < 1e-12);
    }

    #[test]
    fn ser_examples() {
        let q = Constellation::qam(64).unwrap();
        let mut r = rand::rngs::StdRng::seed_from_u64(3);
        let cfg = ScenarioConfig::default();
        let x = gen_symbols(&cfg, &q, &mut r).x;
        assert_eq!(ser(&x, &x, &q).unwrap(), 0.0);

        let mut wrong = x.clone();
        let far = q.points.iter().copied().find(|p| (p - x[(1, 2)]).norm() > 0.5).unwrap();
        wrong[(1, 2)] = far;
        assert!((ser(&wrong, &x, &q).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        // first column is excluded entirely
        let mut first = x.clone();
        first[(1, 0)] = far;
        assert_eq!(ser(&first, &x, &q).unwrap(), 0.0);

        // an all-zero estimate decides every entry as the tie winner
        let winner = q.decide(C64::new(0.0, 0.0));
        let expected = (1..4)
            .flat_map(|t| (0..2).map(move |r| (r, t)))
            .filter(|&(r, t)| q.decide(x[(r, t)]) != winner)
            .count() as f64
            / 6.0;
        assert_eq!(ser(&CMatrix::zeros(2, 4), &x, &q).unwrap(), expected);
    }

    fn noiseless(cfg: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            noise_dbm: f64::NEG_INFINITY,
            ..cfg
        }
    }

    #[test]
    fn noiseless_trial_is_exact() {
        let cfg = noiseless(ScenarioConfig { k: 64, ..Default::default() });
        let pair = ReceiverPair::parse("kronf-h", Scheme::Tstc).unwrap();
        let m = run_trial(&cfg, &pair, 7, &BalsOptions::default()).unwrap();
        assert!(m.nmse_g < 1e-10 && m.nmse_h < 1e-10 && m.nmse_theta < 1e-10);
        assert_eq!(m.ser_hris, 0.0);
        assert_eq!(m.ser_bs, 0.0);
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = ScenarioConfig { n: 8, m: 4, k: 16, ..Default::default() };
        let pair = ReceiverPair::parse("bals-bals", Scheme::Tstc).unwrap();
        let a = run_trial(&cfg, &pair, 11, &BalsOptions::default()).unwrap();
        let b = run_trial(&cfg, &pair, 11, &BalsOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_reflection_fails_at_the_hris() {
        let cfg = ScenarioConfig { rho: 1.0, ..Default::default() };
        for pair in ["kronf-kronf", "bals-bals"] {
            let pair = ReceiverPair::parse(pair, Scheme::Tstc).unwrap();
            assert!(run_trial(&cfg, &pair, 1, &BalsOptions::default()).is_err());
        }
        let recs = run_sweep(
            &cfg,
            &ReceiverPair::parse("kronf-h", Scheme::Tstc).unwrap(),
            SweepVar::Rho,
            &[1.0],
            3,
            0,
            &BalsOptions::default(),
        )
        .unwrap();
        assert_eq!(recs[0].failures, 3);
        assert!(recs[0].nmse_g.mean.is_nan());
    }

    #[test]
    fn single_point_single_trial_matches_run_trial() {
        let cfg = ScenarioConfig { n: 8, m: 4, k: 16, ..Default::default() };
        let pair = ReceiverPair::parse("kronf-kronf", Scheme::Tstc).unwrap();
        let opts = BalsOptions::default();
        let rec = run_sweep(&cfg, &pair, SweepVar::Pt, &[cfg.pt_dbm], 1, 5, &opts).unwrap();
        let m = run_trial(&cfg, &pair, trial_seed(5, 0), &opts).unwrap();
        assert_eq!(rec[0].nmse_g.mean, m.nmse_g);
        assert_eq!(rec[0].ser_bs.mean, m.ser_bs);
        assert_eq!(rec[0].trials, 1);
    }

    #[test]
    fn batches_concatenate() {
        let cfg = ScenarioConfig { n: 8, m: 4, k: 16, ..Default::default() };
        let pair = ReceiverPair::parse("krf-kronf", Scheme::Krstc).unwrap();
        let cfg = cfg.with_scheme(Scheme::Krstc);
        let opts = BalsOptions::default();
        let mut first = run_batch(&cfg, &pair, 9, 0, 4, &opts);
        let second = run_batch(&cfg, &pair, 9, 4, 3, &opts);
        let whole = run_batch(&cfg, &pair, 9, 0, 7, &opts);
        first.extend(second);
        let a = aggregate(SweepVar::Pt, 0.0, &first);
        let b = aggregate(SweepVar::Pt, 0.0, &whole);
        assert!((a.nmse_h.mean - b.nmse_h.mean).abs() <= 1e-12 * b.nmse_h.mean);
        assert!((a.nmse_g.mean - b.nmse_g.mean).abs() <= 1e-12 * b.nmse_g.mean);
    }

    #[test]
    fn sweep_rejects_unidentifiable_configs() {
        let cfg = ScenarioConfig { k: 32, ..Default::default() };
        let pair = ReceiverPair::parse("kronf-kronf", Scheme::Tstc).unwrap();
        assert!(matches!(
            run_sweep(&cfg, &pair, SweepVar::Pt, &[30.0], 1, 0, &BalsOptions::default()),
            Err(Error::NotIdentifiable { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let rec = aggregate(
            SweepVar::Rho,
            0.5,
            &[Ok(TrialMetrics {
                nmse_g: 0.125,
                nmse_h: 1.0,
                nmse_theta: 2.0,
                ser_hris: 0.0,
                ser_bs: 1.0 / 3.0,
                iters_hris: 3,
                iters_bs: 0,
            })],
        );
        let mut buf = Vec::new();
        write_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "rho,5.00000000e-1,1.25000000e-1,1.00000000e0,2.00000000e0,0.00000000e0,3.33333333e-1,3.00000000e0,0.00000000e0,1,0"
        );
    }

    #[test]
    fn seeds_differ_per_trial() {
        let s: Vec<u64> = (0..100).map(|i| trial_seed(42, i)).collect();
        let mut dedup = s.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 100);
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
