//! Sensed (HRIS) and reflected (BS) signal tensors.

use rand::Rng;

use crate::coding::CodingSet;
use crate::error::{shape_mismatch, Result};
use crate::scenario::{add_noise, ChannelRealization, ScenarioConfig};
use crate::tensor::{diag, CMatrix, Tensor3, C64};

/// Signals observed over one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignals {
    /// `Nc x T x K`.
    pub y_rc: Tensor3,
    /// `M x T x K`.
    pub y_bs: Tensor3,
}

fn check_dims(channels: &ChannelRealization, coding: &CodingSet, x: &CMatrix) -> Result<()> {
    let (n, l) = channels.g.shape();
    if channels.h.ncols() != n || coding.n() != n {
        return Err(shape_mismatch(
            "signal synthesis",
            format!("N = {n} across G, H and the phase shifts"),
            format!("H has {} columns, phase shifts cover {}", channels.h.ncols(), coding.n()),
        ));
    }
    if coding.l() != l || coding.r() != x.nrows() {
        return Err(shape_mismatch(
            "signal synthesis",
            format!("coding {l}x{}", x.nrows()),
            format!("coding {}x{}", coding.l(), coding.r()),
        ));
    }
    Ok(())
}

/// Noiseless sensed tensor, slice `k` equal to `Phi_k G C_k X`.
pub fn noiseless_yrc(g: &CMatrix, coding: &CodingSet, x: &CMatrix) -> Tensor3 {
    let slices: Vec<CMatrix> = (0..coding.k())
        .map(|k| coding.phi_k(k) * g * coding.c_k(k) * x)
        .collect();
    Tensor3::from_slices(&slices).expect("K >= 1")
}

/// Noiseless reflected tensor, slice `k` equal to `H diag(psi_k) G C_k X`.
pub fn noiseless_ybs(channels: &ChannelRealization, coding: &CodingSet, x: &CMatrix) -> Tensor3 {
    let slices: Vec<CMatrix> = (0..coding.k())
        .map(|k| &channels.h * diag(&coding.psi_k(k)) * &channels.g * coding.c_k(k) * x)
        .collect();
    Tensor3::from_slices(&slices).expect("K >= 1")
}

/// Transmitted symbol matrix `sqrt(Pt) X`.
pub fn transmit(cfg: &ScenarioConfig, x: &CMatrix) -> CMatrix {
    x.map(|z| z * cfg.pt_watts().sqrt())
}

/// HRIS observation for unit-energy symbols `x`.
pub fn synth_yrc<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    coding: &CodingSet,
    x: &CMatrix,
    rng: &mut R,
) -> Result<Tensor3> {
    check_dims(channels, coding, x)?;
    let clean = noiseless_yrc(&channels.g, coding, &transmit(cfg, x));
    Ok(add_noise(&clean, cfg.noise_power(), rng))
}

/// BS observation for unit-energy symbols `x`.
pub fn synth_ybs<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    coding: &CodingSet,
    x: &CMatrix,
    rng: &mut R,
) -> Result<Tensor3> {
    check_dims(channels, coding, x)?;
    let clean = noiseless_ybs(channels, coding, &transmit(cfg, x));
    Ok(add_noise(&clean, cfg.noise_power(), rng))
}

/// Both observations; the HRIS noise is drawn before the BS noise.
pub fn synthesize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    coding: &CodingSet,
    x: &CMatrix,
    rng: &mut R,
) -> Result<ReceivedSignals> {
    let y_rc = synth_yrc(cfg, channels, coding, x, rng)?;
    let y_bs = synth_ybs(cfg, channels, coding, x, rng)?;
    Ok(ReceivedSignals { y_rc, y_bs })
}

/// Receiver front end: removes the known transmit amplitude so the
/// estimators work against unit-energy symbols.
pub fn normalize_received(cfg: &ScenarioConfig, y: &Tensor3) -> Tensor3 {
    y.scaled(C64::new(1.0 / cfg.pt_watts().sqrt(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{design, Constellation, gen_symbols, Coding};
    use crate::scenario::{draw_channels, Scheme};
    use crate::tensor::testutil::{random_matrix, rng};
    use crate::tensor::{identity_tensor, mode_n_product, modewise_contraction, Mode};

    fn small(rho: f64, scheme: Scheme) -> ScenarioConfig {
        ScenarioConfig {
            m: 3,
            n: 4,
            nc: 2,
            l: 2,
            r: 2,
            t: 3,
            k: 4,
            rho,
            noise_dbm: f64::NEG_INFINITY,
            ..Default::default()
        }
        .with_scheme(scheme)
    }

    fn setup(cfg: &ScenarioConfig, seed: u64) -> (ChannelRealization, CodingSet, CMatrix) {
        let mut r = rng(seed);
        let ch = ChannelRealization {
            g: random_matrix(&mut r, cfg.n, cfg.l),
            h: random_matrix(&mut r, cfg.m, cfg.n),
        };
        let coding = design(cfg).unwrap();
        let q = Constellation::qam(16).unwrap();
        let x = gen_symbols(cfg, &q, &mut r).x;
        (ch, coding, x)
    }

    fn coding_tensor(coding: &CodingSet) -> Tensor3 {
        Tensor3::from_slices(&(0..coding.k()).map(|k| coding.c_k(k)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn extremes_of_the_power_split_silence_one_path() {
        let cfg = small(1.0, Scheme::Tstc);
        let (ch, coding, x) = setup(&cfg, 1);
        let y = synth_yrc(&cfg, &ch, &coding, &x, &mut rng(2)).unwrap();
        assert!(y.data().iter().all(|z| z.norm() == 0.0));

        let cfg = small(0.0, Scheme::Tstc);
        let (ch, coding, x) = setup(&cfg, 1);
        let y = synth_ybs(&cfg, &ch, &coding, &x, &mut rng(2)).unwrap();
        assert!(y.data().iter().all(|z| z.norm() < 1e-300));
    }

    #[test]
    fn sensed_tensor_matches_double_tucker_form() {
        for scheme in [Scheme::Tstc, Scheme::Krstc] {
            let cfg = small(0.4, scheme);
            let (ch, coding, x) = setup(&cfg, 3);
            let slices = noiseless_yrc(&ch.g, &coding, &x);
            let c = mode_n_product(&coding.phi, &ch.g.transpose(), Mode::Two).unwrap();
            let s = mode_n_product(&coding_tensor(&coding), &x.transpose(), Mode::Two).unwrap();
            let tensor_form = modewise_contraction(&c, &s).unwrap();
            assert!(slices.max_abs_diff(&tensor_form).unwrap() < 1e-12);
        }
    }

    #[test]
    fn reflected_tensor_matches_parafac_tucker_form() {
        for scheme in [Scheme::Tstc, Scheme::Krstc] {
            let cfg = small(0.6, scheme);
            let (ch, coding, x) = setup(&cfg, 4);
            let slices = noiseless_ybs(&ch, &coding, &x);
            let omega = mode_n_product(
                &mode_n_product(
                    &mode_n_product(&identity_tensor(cfg.n), &ch.h, Mode::One).unwrap(),
                    &ch.g.transpose(),
                    Mode::Two,
                )
                .unwrap(),
                &coding.psi,
                Mode::Three,
            )
            .unwrap();
            let s = mode_n_product(&coding_tensor(&coding), &x.transpose(), Mode::Two).unwrap();
            let tensor_form = modewise_contraction(&omega, &s).unwrap();
            assert!(slices.max_abs_diff(&tensor_form).unwrap() < 1e-12);
        }
    }

    #[test]
    fn scalar_case() {
        let cfg = ScenarioConfig {
            m: 1,
            n: 1,
            nc: 1,
            l: 1,
            r: 1,
            t: 1,
            k: 1,
            rho: 0.5,
            ..Default::default()
        };
        let (ch, coding, x) = setup(&cfg, 5);
        let y = noiseless_yrc(&ch.g, &coding, &x);
        let expect = coding.phi[(0, 0, 0)] * ch.g[(0, 0)] * coding.c_k(0)[(0, 0)] * x[(0, 0)];
        assert!((y[(0, 0, 0)] - expect).norm() < 1e-15);
    }

    #[test]
    fn krstc_is_tstc_with_diagonal_coding() {
        let cfg = small(0.5, Scheme::Krstc);
        let (ch, coding, x) = setup(&cfg, 6);
        let as_tstc = CodingSet {
            coding: Coding::Tstc(coding_tensor(&coding)),
            ..coding.clone()
        };
        assert_eq!(noiseless_ybs(&ch, &coding, &x), noiseless_ybs(&ch, &as_tstc, &x));
        assert_eq!(noiseless_yrc(&ch.g, &coding, &x), noiseless_yrc(&ch.g, &as_tstc, &x));
    }

    #[test]
    fn energy_moves_with_power_split() {
        let mut prev: Option<(f64, f64)> = None;
        for rho in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let cfg = small(rho, Scheme::Tstc);
            let (ch, coding, x) = setup(&cfg, 7);
            let e_rc = noiseless_yrc(&ch.g, &coding, &x).norm_sqr();
            let e_bs = noiseless_ybs(&ch, &coding, &x).norm_sqr();
            if let Some((p_rc, p_bs)) = prev {
                assert!(e_rc <= p_rc + 1e-12);
                assert!(e_bs + 1e-12 >= p_bs);
            }
            prev = Some((e_rc, e_bs));
        }
    }

    #[test]
    fn noise_and_power_scaling() {
        let cfg = ScenarioConfig {
            pt_dbm: 20.0,
            ..small(0.5, Scheme::Tstc)
        };
        let (ch, coding, x) = setup(&cfg, 8);
        let y = synth_yrc(&cfg, &ch, &coding, &x, &mut rng(9)).unwrap();
        let back = normalize_received(&cfg, &y);
        assert!(back.max_abs_diff(&noiseless_yrc(&ch.g, &coding, &x)).unwrap() < 1e-12);

        let noisy_cfg = ScenarioConfig {
            noise_dbm: -90.0,
            ..cfg.clone()
        };
        let a = synthesize(&noisy_cfg, &ch, &coding, &x, &mut rng(10)).unwrap();
        let b = synthesize(&noisy_cfg, &ch, &coding, &x, &mut rng(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y_rc, y);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = small(0.5, Scheme::Tstc);
        let (ch, coding, _) = setup(&cfg, 11);
        let x = CMatrix::zeros(3, cfg.t);
        assert!(synth_yrc(&cfg, &ch, &coding, &x, &mut rng(1)).is_err());
        let bad = ChannelRealization {
            g: ch.g.clone(),
            h: CMatrix::zeros(cfg.m, cfg.n + 1),
        };
        assert!(synth_ybs(&cfg, &bad, &coding, &CMatrix::zeros(2, 3), &mut rng(1)).is_err());
    }

    #[test]
    fn realistic_draws_have_expected_shapes() {
        let cfg = ScenarioConfig::default();
        let mut r = rng(12);
        let ch = draw_channels(&cfg, &mut r).unwrap();
        let coding = design(&cfg).unwrap();
        let x = gen_symbols(&cfg, &Constellation::qam(64).unwrap(), &mut r).x;
        let sig = synthesize(&cfg, &ch, &coding, &x, &mut r).unwrap();
        assert_eq!(sig.y_rc.dims(), [2, 4, 64]);
        assert_eq!(sig.y_bs.dims(), [8, 4, 64]);
    }
}
