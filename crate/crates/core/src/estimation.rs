//! Least-squares CSI estimation: an additive-noise shortcut with the
//! closed-form error variances, and a pilot-level simulation of the two-step
//! procedure (RIS off for the direct path, then a codebook sweep).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::{complex_normal, ChannelMatrices, ChannelRealization, Codebooks, C64};
use crate::scenario::{CeMode, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub matrices: ChannelMatrices,
    /// Per-entry error variance of d̂_k.
    pub lambda: Vec<f64>,
    /// Per-entry error variance of Ĝ_k.
    pub gamma: Vec<f64>,
    /// False when the CE could not run this slot.
    pub valid: bool,
}

impl CsiEstimate {
    pub fn perfect(chan: &ChannelRealization) -> Self {
        let k = chan.matrices.num_ues();
        Self {
            matrices: chan.matrices.clone(),
            lambda: vec![0.0; k],
            gamma: vec![0.0; k],
            valid: true,
        }
    }

    pub fn invalid(cfg: &ScenarioConfig) -> Self {
        Self {
            matrices: ChannelMatrices::zeros(cfg.num_ues, cfg.num_antennas, cfg.num_elements),
            lambda: vec![0.0; cfg.num_ues],
            gamma: vec![0.0; cfg.num_ues],
            valid: false,
        }
    }
}

/// (λ_k, γ_k) for every UE: λ = N0·B_k/(N_p·P_ctl), γ = 2λ·N/C_ce².
pub fn analytic_variances(cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    let lambda = cfg.noise_density * cfg.bandwidth_per_ue() / (cfg.pilot_len as f64 * cfg.p_ctl_ue);
    let c = cfg.ce_codebook_size as f64;
    let gamma = 2.0 * lambda * cfg.num_elements as f64 / (c * c);
    (vec![lambda; cfg.num_ues], vec![gamma; cfg.num_ues])
}

/// d̂ = d + CN(0, λI), Ĝ = G + CN(0, γI).
pub fn estimate_analytic<R: Rng + ?Sized>(
    rng: &mut R,
    chan: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> CsiEstimate {
    let (lambda, gamma) = analytic_variances(cfg);
    let direct = chan
        .matrices
        .direct
        .iter()
        .zip(&lambda)
        .map(|(d, &l)| d.map(|v| v + complex_normal(rng, l)))
        .collect();
    let reflected = chan
        .matrices
        .reflected
        .iter()
        .zip(&gamma)
        .map(|(g, &v)| g.map(|x| x + complex_normal(rng, v)))
        .collect();
    CsiEstimate {
        matrices: ChannelMatrices { direct, reflected },
        lambda,
        gamma,
        valid: true,
    }
}

/// Pilot-level LS estimator. The right pseudo-inverse of the N×C_ce sweep
/// matrix is computed once per codebook.
#[derive(Debug, Clone)]
pub struct PilotEstimator {
    /// C_ce×N.
    pinv: DMatrix<C64>,
    pub rank: usize,
    pub num_elements: usize,
}

impl PilotEstimator {
    pub fn new(codebooks: &Codebooks) -> Self {
        let n = codebooks.ctl_config.len();
        let c = codebooks.ce_configs.len();
        let mut phi = DMatrix::<C64>::zeros(n, c);
        for (j, cfg) in codebooks.ce_configs.iter().enumerate() {
            phi.set_column(j, &cfg.phi());
        }
        let svd = phi.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let tol = smax * (n.max(c) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        let pinv = svd
            .pseudo_inverse(tol)
            .expect("SVD computed with both factors");
        Self {
            pinv,
            rank,
            num_elements: n,
        }
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank < self.num_elements
    }

    pub fn diagnostic(&self) -> Option<String> {
        self.rank_deficient().then(|| {
            format!(
                "CE sweep matrix has rank {} < N = {}; reflected channel estimated via pseudo-inverse",
                self.rank, self.num_elements
            )
        })
    }

    /// Simulate the pilots and run the two-step LS with thermal noise
    /// N0·B_k per antenna.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        chan: &ChannelRealization,
        codebooks: &Codebooks,
        cfg: &ScenarioConfig,
    ) -> CsiEstimate {
        let noise = cfg.noise_density * cfg.bandwidth_per_ue();
        self.estimate_with_noise(rng, chan, codebooks, cfg, noise)
    }

    /// As [`estimate`](Self::estimate) with an explicit per-antenna noise
    /// variance; zero gives noiseless recovery.
    pub fn estimate_with_noise<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        chan: &ChannelRealization,
        codebooks: &Codebooks,
        cfg: &ScenarioConfig,
        noise_var: f64,
    ) -> CsiEstimate {
        let m = cfg.num_antennas;
        let np = cfg.pilot_len;
        let amp = cfg.p_ctl_ue.sqrt();
        let phis: Vec<DVector<C64>> = codebooks.ce_configs.iter().map(|c| c.phi()).collect();

        // Correlate N_p unit pilots and normalise by the pilot amplitude.
        let mut correlate = |h: &DVector<C64>| -> DVector<C64> {
            let mut acc = DVector::<C64>::zeros(m);
            for _ in 0..np {
                for i in 0..m {
                    acc[i] += h[i] * amp + complex_normal(rng, noise_var);
                }
            }
            acc / C64::new(np as f64 * amp, 0.0)
        };

        let mut direct = Vec::with_capacity(cfg.num_ues);
        let mut reflected = Vec::with_capacity(cfg.num_ues);
        for k in 0..cfg.num_ues {
            let d = &chan.matrices.direct[k];
            let g = &chan.matrices.reflected[k];
            let d_hat = correlate(d);
            let mut z = DMatrix::<C64>::zeros(m, phis.len());
            for (j, phi) in phis.iter().enumerate() {
                let h = d + g * phi;
                z.set_column(j, &(correlate(&h) - &d_hat));
            }
            reflected.push(z * &self.pinv);
            direct.push(d_hat);
        }
        let (lambda, gamma) = analytic_variances(cfg);
        CsiEstimate {
            matrices: ChannelMatrices { direct, reflected },
            lambda,
            gamma,
            valid: true,
        }
    }
}

/// Dispatch on the configured mode.
pub fn estimate<R: Rng + ?Sized>(
    rng: &mut R,
    chan: &ChannelRealization,
    codebooks: &Codebooks,
    pilot: &PilotEstimator,
    cfg: &ScenarioConfig,
) -> CsiEstimate {
    match cfg.ce_mode {
        CeMode::Perfect => CsiEstimate::perfect(chan),
        CeMode::AnalyticNoise => estimate_analytic(rng, chan, cfg),
        CeMode::PilotLevel => pilot.estimate(rng, chan, codebooks, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_codebooks, draw_channels};
    use crate::scenario::{stream_rng, Geometry, Stream};

    fn setup(cfg: &ScenarioConfig, seed: u64) -> ChannelRealization {
        let geo = Geometry::for_config(&mut stream_rng(seed, Stream::Positions), cfg);
        draw_channels(&mut stream_rng(seed, Stream::Channels), cfg, &geo, 0).unwrap()
    }

    #[test]
    fn variances_hand_values() {
        let cfg = ScenarioConfig::baseline();
        let (l, g) = analytic_variances(&cfg);
        assert!((l[0] - 1.25e-11).abs() / 1.25e-11 < 1e-12);
        assert!((g[0] - 3.90625e-13).abs() / 3.90625e-13 < 1e-12);
        let doubled = ScenarioConfig {
            pilot_len: 2,
            ..cfg
        };
        let (l2, g2) = analytic_variances(&doubled);
        assert!((l2[0] * 2.0 - l[0]).abs() < 1e-24);
        assert!((g2[0] * 2.0 - g[0]).abs() < 1e-26);
    }

    #[test]
    fn perfect_mode_is_exact() {
        let cfg = ScenarioConfig {
            ce_mode: CeMode::Perfect,
            ..ScenarioConfig::baseline()
        };
        let ch = setup(&cfg, 1);
        let cb = build_codebooks(&cfg);
        let pe = PilotEstimator::new(&cb);
        let est = estimate(&mut stream_rng(1, Stream::CeNoise), &ch, &cb, &pe, &cfg);
        assert_eq!(est.matrices, ch.matrices);
        assert!(est.lambda.iter().chain(&est.gamma).all(|v| *v == 0.0));
        assert!(est.valid);
    }

    #[test]
    fn analytic_error_statistics() {
        let cfg = ScenarioConfig {
            num_ues: 1,
            ..ScenarioConfig::baseline()
        };
        let ch = setup(&cfg, 2);
        let (l, g) = analytic_variances(&cfg);
        let mut rng = stream_rng(2, Stream::CeNoise);
        let trials = 10_000;
        let (mut sd, mut sg, mut mean_d) = (0.0, 0.0, C64::new(0.0, 0.0));
        for _ in 0..trials {
            let est = estimate_analytic(&mut rng, &ch, &cfg);
            let e = &est.matrices.direct[0] - &ch.matrices.direct[0];
            sd += e.norm_squared() / 8.0;
            mean_d += e[0];
            let eg = &est.matrices.reflected[0] - &ch.matrices.reflected[0];
            sg += eg.norm_squared() / (8.0 * 64.0);
        }
        let n = trials as f64;
        assert!((sd / n / l[0] - 1.0).abs() < 0.05);
        assert!((sg / n / g[0] - 1.0).abs() < 0.05);
        let sigma = (l[0] / 2.0 / n).sqrt();
        assert!((mean_d.re / n).abs() < 3.0 * sigma);
        assert!((mean_d.im / n).abs() < 3.0 * sigma);
    }

    #[test]
    fn noiseless_pilots_recover_channel() {
        let cfg = ScenarioConfig::baseline();
        let ch = setup(&cfg, 3);
        let cb = build_codebooks(&cfg);
        let pe = PilotEstimator::new(&cb);
        assert_eq!(pe.rank, 64);
        assert!(pe.diagnostic().is_none());
        let est = pe.estimate_with_noise(&mut stream_rng(3, Stream::CeNoise), &ch, &cb, &cfg, 0.0);
        for k in 0..cfg.num_ues {
            let scale = ch.matrices.reflected[k]
                .camax()
                .max(ch.matrices.direct[k].camax());
            let ed = (&est.matrices.direct[k] - &ch.matrices.direct[k]).camax();
            let eg = (&est.matrices.reflected[k] - &ch.matrices.reflected[k]).camax();
            assert!(ed <= 1e-9 * scale, "{ed}");
            assert!(eg <= 1e-9 * scale, "{eg}");
        }
    }

    #[test]
    fn short_codebook_is_rank_deficient() {
        let cfg = ScenarioConfig {
            ce_codebook_size: 32,
            ..ScenarioConfig::baseline()
        };
        let pe = PilotEstimator::new(&build_codebooks(&cfg));
        assert_eq!(pe.rank, 32);
        assert!(pe.diagnostic().unwrap().contains("rank 32"));
    }

    #[test]
    fn pilot_direct_error_matches_lambda() {
        let cfg = ScenarioConfig {
            num_ues: 1,
            ..ScenarioConfig::baseline()
        };
        let ch = setup(&cfg, 4);
        let cb = build_codebooks(&cfg);
        let pe = PilotEstimator::new(&cb);
        let (l, g) = analytic_variances(&cfg);
        let mut rng = stream_rng(4, Stream::CeNoise);
        let trials = 2_000;
        let (mut sd, mut sg) = (0.0, 0.0);
        for _ in 0..trials {
            let est = pe.estimate(&mut rng, &ch, &cb, &cfg);
            sd += (&est.matrices.direct[0] - &ch.matrices.direct[0]).norm_squared() / 8.0;
            sg += (&est.matrices.reflected[0] - &ch.matrices.reflected[0]).norm_squared()
                / (8.0 * 64.0);
        }
        let n = trials as f64;
        assert!((sd / n / l[0] - 1.0).abs() < 0.1, "{}", sd / n / l[0]);
        assert!((sg / n / g[0] - 1.0).abs() < 0.1, "{}", sg / n / g[0]);
    }
}
