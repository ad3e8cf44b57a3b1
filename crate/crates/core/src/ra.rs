//! Per-slot resource allocation: greedy joint beam/RIS search, closed-form
//! UE power, max-weight CPU scheduling, and the latency virtual queues.
//!
//! The per-slot objective is a drift-plus-penalty surrogate
//!
//! J(w, φ) = Σ_k [σVτ_pay·P_k − W_k·τ_pay·R_k] + (1−σ)Vτ_pay·P_r·Σ_n α_n,
//!
//! with W_k = Q̂_k^u + Z_k and (P_k, R_k) from [`allocate_power`].

use nalgebra::DVector;

use crate::channel::{Codebooks, RisConfiguration, C64};
use crate::estimation::CsiEstimate;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RaDecision {
    pub beam: usize,
    pub ris: RisConfiguration,
    /// P_k [W].
    pub power: Vec<f64>,
    /// Nominal R_k [bit/s].
    pub rate: Vec<f64>,
    /// f_k [cycles/s].
    pub cpu: Vec<f64>,
    /// |wᴴĥ_k|² for the chosen pair.
    pub est_gain: Vec<f64>,
    pub n_ra: f64,
    pub tau_ra: f64,
    pub objective: f64,
    /// Set when no CSI was available and the control configuration was kept.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueues {
    /// Z_k [bits].
    pub z: Vec<f64>,
}

impl VirtualQueues {
    pub fn new(k: usize) -> Self {
        Self { z: vec![0.0; k] }
    }
}

/// Multiplications per objective evaluation, 2·[K(3N/N_g + M + 4) + 3].
pub fn multiplications_per_eval(cfg: &ScenarioConfig) -> f64 {
    let k = cfg.num_ues as f64;
    let groups = cfg.num_groups() as f64;
    2.0 * (k * (3.0 * groups + cfg.num_antennas as f64 + 4.0) + 3.0)
}

/// (n_ra, τ_ra): C_ap·(2^b+1)·(N/N_g)·μ cycles at speed f_ra.
pub fn ra_overhead(cfg: &ScenarioConfig) -> (f64, f64) {
    let n_ra = cfg.ap_codebook_size as f64
        * (cfg.phase_levels() + 1) as f64
        * cfg.num_groups() as f64
        * multiplications_per_eval(cfg);
    (n_ra, n_ra / cfg.f_ra)
}

/// Scalars the power step needs, gathered once per slot.
#[derive(Debug, Clone, Copy)]
pub struct PowerParams {
    pub bandwidth: f64,
    pub noise_density: f64,
    pub sigma_v: f64,
    pub p_max: f64,
    pub rate_backoff: f64,
    pub tau_pay: f64,
}

impl PowerParams {
    pub fn new(cfg: &ScenarioConfig, tau_pay: f64) -> Self {
        Self {
            bandwidth: cfg.bandwidth_per_ue(),
            noise_density: cfg.noise_density,
            sigma_v: cfg.energy_weight * cfg.lyapunov_v,
            p_max: cfg.p_max_ue,
            rate_backoff: cfg.rate_backoff,
            tau_pay,
        }
    }

    fn rate(&self, gain: f64, power: f64) -> f64 {
        crate::channel::nominal_rate(
            gain,
            power,
            self.bandwidth,
            self.noise_density,
            self.rate_backoff,
        )
    }

    /// Unconstrained optimum level W·B/(σV·ln2), before subtracting N0·B/g.
    fn water_level(&self, weight: f64) -> f64 {
        weight * self.bandwidth / (self.sigma_v * std::f64::consts::LN_2)
    }

    /// SNR at which τ_pay·R reaches `buffered` bits.
    fn snr_cap(&self, buffered: f64) -> f64 {
        let target = buffered.max(0.0) / self.tau_pay;
        (target / (self.rate_backoff * self.bandwidth) * std::f64::consts::LN_2).exp_m1()
    }

    /// Core of the power step. Returns (P, R); in the capped branch R is
    /// `capped_rate` when given, otherwise recomputed from P.
    fn solve(&self, gain: f64, water: f64, snr_cap: f64, capped_rate: Option<f64>) -> (f64, f64) {
        if gain <= 0.0 || !gain.is_finite() {
            return (0.0, 0.0);
        }
        let nbg = self.noise_density * self.bandwidth / gain;
        let mut p = if self.sigma_v <= 0.0 {
            self.p_max
        } else {
            (water - nbg).clamp(0.0, self.p_max)
        };
        if p / nbg > snr_cap {
            p = (snr_cap * nbg).clamp(0.0, p);
            let r = capped_rate.unwrap_or_else(|| self.rate(gain, p));
            return (p, r);
        }
        (p, self.rate(gain, p))
    }

    /// Water-filling power for one UE, then capped so that at most
    /// `buffered` bits are scheduled.
    pub fn power_for(&self, gain: f64, weight: f64, buffered: f64) -> (f64, f64) {
        self.solve(gain, self.water_level(weight), self.snr_cap(buffered), None)
    }
}

/// Per-UE (P_k, R_k) for the given beamformed gains.
pub fn allocate_power(
    gains: &[f64],
    weights: &[f64],
    buffered: &[f64],
    params: &PowerParams,
) -> (Vec<f64>, Vec<f64>) {
    gains
        .iter()
        .zip(weights)
        .zip(buffered)
        .map(|((&g, &w), &q)| params.power_for(g, w, q))
        .unzip()
}

/// Max-weight CPU split: serve UEs by decreasing (Q_e + Z)·J until f_max runs out.
pub fn allocate_cpu(
    remote: &[f64],
    vq: &VirtualQueues,
    tau_pay: f64,
    cfg: &ScenarioConfig,
) -> Vec<f64> {
    let j = cfg.bits_per_cycle;
    let mut order: Vec<usize> = (0..remote.len()).collect();
    order.sort_by(|&a, &b| {
        let wa = (remote[a] + vq.z[a]) * j;
        let wb = (remote[b] + vq.z[b]) * j;
        wb.total_cmp(&wa)
    });
    let mut left = cfg.f_max;
    let mut cpu = vec![0.0; remote.len()];
    for k in order {
        let need = remote[k] / (tau_pay * j);
        cpu[k] = need.min(left).max(0.0);
        left -= cpu[k];
    }
    cpu
}

/// Z_k ← max(0, Z_k + Q_k(t+1) − Ā_k·L̄).
pub fn update_virtual_queues(
    vq: &VirtualQueues,
    totals: &[f64],
    cfg: &ScenarioConfig,
) -> VirtualQueues {
    let bound = cfg.arrival_rate * cfg.latency_bound;
    VirtualQueues {
        z: vq
            .z
            .iter()
            .zip(totals)
            .map(|(z, q)| (z + q - bound).max(0.0))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy)]
struct UeTerms {
    weight: f64,
    water: f64,
    snr_cap: f64,
    rate_cap: f64,
}

/// Inputs of the surrogate objective that do not depend on (w, φ).
pub struct Objective {
    pub params: PowerParams,
    /// (1−σ)·V·τ_pay·P_r, cost per active element.
    pub element_cost: f64,
    ues: Vec<UeTerms>,
}

impl Objective {
    pub fn new(cfg: &ScenarioConfig, weights: &[f64], buffered: &[f64], tau_pay: f64) -> Self {
        let params = PowerParams::new(cfg, tau_pay);
        let ues = weights
            .iter()
            .zip(buffered)
            .map(|(&w, &q)| UeTerms {
                weight: w,
                water: params.water_level(w),
                snr_cap: params.snr_cap(q),
                rate_cap: q.max(0.0) / tau_pay,
            })
            .collect();
        Self {
            params,
            element_cost: (1.0 - cfg.energy_weight)
                * cfg.lyapunov_v
                * tau_pay
                * cfg.ris_element_power,
            ues,
        }
    }

    /// σVτ_pay·P_k − W_k·τ_pay·R_k for one UE.
    pub fn ue_cost(&self, k: usize, gain: f64) -> f64 {
        let u = &self.ues[k];
        let (p, r) = self
            .params
            .solve(gain, u.water, u.snr_cap, Some(u.rate_cap));
        let t = self.params.tau_pay;
        self.params.sigma_v * t * p - u.weight * t * r
    }

    /// J for the given per-UE gains and number of active elements.
    pub fn eval<I: IntoIterator<Item = f64>>(&self, gains: I, active: usize) -> f64 {
        let mut j = self.element_cost * active as f64;
        for (k, g) in gains.into_iter().enumerate() {
            j += self.ue_cost(k, g);
        }
        j
    }
}

/// Best configuration found for one beam.
#[derive(Debug, Clone)]
pub struct BeamSearch {
    pub ris: RisConfiguration,
    pub objective: f64,
}

/// Group-wise coordinate descent over RIS states for a fixed beam. Starts
/// all-on at phase 0, visits groups in order, and per group tries off then
/// each phase, replacing the incumbent only on strict improvement.
pub fn search_beam(
    csi: &CsiEstimate,
    w: &DVector<C64>,
    objective: &Objective,
    cfg: &ScenarioConfig,
) -> BeamSearch {
    let k_n = cfg.num_ues;
    let n_g = cfg.group_size;
    let groups = cfg.num_groups();
    let levels = cfg.phase_levels();
    let phases: Vec<C64> = (0..levels)
        .map(|i| RisConfiguration::phase_value(i as u16, cfg.phase_bits))
        .collect();

    // s_k = wᴴd̂_k + Σ_g c_g·(Σ_{n∈g} [wᴴĜ_k]_n); track per-group sums.
    let mut group_sum = vec![vec![C64::new(0.0, 0.0); groups]; k_n];
    let mut s = vec![C64::new(0.0, 0.0); k_n];
    for k in 0..k_n {
        let row = w.adjoint() * &csi.matrices.reflected[k];
        for (n, v) in row.iter().enumerate() {
            group_sum[k][n / n_g] += v;
        }
        s[k] = w.dotc(&csi.matrices.direct[k]) + group_sum[k].iter().sum::<C64>();
    }

    // None = off, Some(i) = phase index i.
    let mut state: Vec<Option<usize>> = vec![Some(0); groups];
    let mut active = cfg.num_elements;
    let coef = |st: Option<usize>| st.map_or(C64::new(0.0, 0.0), |i| phases[i]);
    let mut best_obj = f64::INFINITY;
    // Objective of the incumbent; unchanged state reproduces it exactly.
    let mut incumbent: Option<f64> = None;
    let mut trial = vec![C64::new(0.0, 0.0); k_n];

    for g in 0..groups {
        let cur = coef(state[g]);
        let base_active = active - if state[g].is_some() { n_g } else { 0 };
        let mut best_state = None;
        best_obj = f64::INFINITY;
        for st in std::iter::once(None).chain((0..levels).map(Some)) {
            let obj = match incumbent {
                Some(j) if st == state[g] => j,
                _ => {
                    let c = coef(st);
                    for k in 0..k_n {
                        trial[k] = s[k] + group_sum[k][g] * (c - cur);
                    }
                    let act = base_active + if st.is_some() { n_g } else { 0 };
                    objective.eval(trial.iter().map(|v| v.norm_sqr()), act)
                }
            };
            if obj < best_obj {
                best_obj = obj;
                best_state = st;
            }
        }
        let c = coef(best_state);
        for k in 0..k_n {
            s[k] += group_sum[k][g] * (c - cur);
        }
        state[g] = best_state;
        active = base_active + if best_state.is_some() { n_g } else { 0 };
        incumbent = Some(best_obj);
    }
    if groups == 0 {
        best_obj = objective.eval(s.iter().map(|v| v.norm_sqr()), active);
    }

    let mut ris = RisConfiguration::all_off(cfg.num_elements, cfg.phase_bits);
    for (g, st) in state.iter().enumerate() {
        if let Some(i) = st {
            for n in g * n_g..(g + 1) * n_g {
                ris.active[n] = true;
                ris.phase[n] = *i as u16;
            }
        }
    }
    BeamSearch {
        ris,
        objective: best_obj,
    }
}

/// Best (beam, RIS configuration) over the AP codebook; ties go to the
/// lowest beam index.
pub fn greedy_joint_search(
    csi: &CsiEstimate,
    codebooks: &Codebooks,
    objective: &Objective,
    cfg: &ScenarioConfig,
) -> (usize, RisConfiguration, f64) {
    let mut best: Option<(usize, BeamSearch)> = None;
    for (b, w) in codebooks.ap_beams.iter().enumerate() {
        let found = search_beam(csi, w, objective, cfg);
        if best
            .as_ref()
            .is_none_or(|(_, cur)| found.objective < cur.objective)
        {
            best = Some((b, found));
        }
    }
    let (b, found) = best.expect("AP codebook is non-empty");
    (b, found.ris, found.objective)
}

/// Full RA for one slot. `es_view` is the ES's picture of the local queues,
/// `remote` the (exactly known) ES queues.
pub fn allocate(
    csi: &CsiEstimate,
    es_view: &[f64],
    remote: &[f64],
    vq: &VirtualQueues,
    codebooks: &Codebooks,
    tau_pay: f64,
    cfg: &ScenarioConfig,
) -> RaDecision {
    let (n_ra, tau_ra) = ra_overhead(cfg);
    let cpu = allocate_cpu(remote, vq, tau_pay, cfg);
    let k_n = cfg.num_ues;
    if !csi.valid {
        return RaDecision {
            beam: 0,
            ris: codebooks.ctl_config.clone(),
            power: vec![0.0; k_n],
            rate: vec![0.0; k_n],
            cpu,
            est_gain: vec![0.0; k_n],
            n_ra,
            tau_ra,
            objective: 0.0,
            fallback: true,
        };
    }
    let weights: Vec<f64> = es_view.iter().zip(&vq.z).map(|(q, z)| q + z).collect();
    let objective = Objective::new(cfg, &weights, es_view, tau_pay);
    let (beam, ris, _) = greedy_joint_search(csi, codebooks, &objective, cfg);

    // Recompute gains directly so they match the payload-phase evaluation.
    let w = &codebooks.ap_beams[beam];
    let phi = ris.phi();
    let est_gain: Vec<f64> = (0..k_n)
        .map(|k| csi.matrices.effective(k, w, &phi).norm_sqr())
        .collect();
    let (power, rate) = allocate_power(&est_gain, &weights, es_view, &objective.params);
    let obj = objective.eval(est_gain.iter().copied(), ris.num_active());
    RaDecision {
        beam,
        ris,
        power,
        rate,
        cpu,
        est_gain,
        n_ra,
        tau_ra,
        objective: obj,
        fallback: false,
    }
}

/// Outcome of [`calibrate_v`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub v: f64,
    /// Seed-averaged max-UE latency at the returned V.
    pub latency: f64,
    /// False when even the lower end of the range violates L̄.
    pub feasible: bool,
    /// True when the upper end of the range still meets L̄.
    pub saturated: bool,
    /// Every (V, latency) evaluated, in evaluation order.
    pub probes: Vec<(f64, f64)>,
    /// Pairs of probes (sorted by V) where latency decreased as V grew.
    pub monotonicity_violations: Vec<((f64, f64), (f64, f64))>,
}

/// Seed-averaged max-UE final latency in error-free mode.
pub fn error_free_latency(cfg: &ScenarioConfig, v: f64, seeds: usize) -> crate::Result<f64> {
    use rayon::prelude::*;
    let sim = crate::engine::Simulator::new(ScenarioConfig {
        lyapunov_v: v,
        ..cfg.error_free()
    })?;
    let lat: crate::Result<Vec<f64>> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            sim.run(cfg.seed + s)
                .map(|o| o.summary.max_final_latency.unwrap_or(0.0))
        })
        .collect();
    Ok(lat?.iter().sum::<f64>() / seeds.max(1) as f64)
}

/// Search settings for [`calibrate_v`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSearch {
    pub seeds: usize,
    pub lo: f64,
    pub hi: f64,
    pub max_steps: usize,
    /// Stop once the bracket is narrower than this ratio minus one.
    pub rel_tol: f64,
}

impl Default for CalibrationSearch {
    fn default() -> Self {
        Self {
            seeds: 20,
            lo: 1.0,
            hi: 1e18,
            max_steps: 30,
            rel_tol: 0.02,
        }
    }
}

/// Largest V in `[lo, hi]` whose error-free max-UE latency stays within L̄,
/// by bisection on log V.
pub fn calibrate_v(cfg: &ScenarioConfig, search: &CalibrationSearch) -> crate::Result<Calibration> {
    let CalibrationSearch {
        seeds,
        lo,
        hi,
        max_steps,
        rel_tol,
    } = *search;
    let bound = cfg.latency_bound;
    let mut probes = Vec::new();
    let mut probe = |v: f64| -> crate::Result<f64> {
        let l = error_free_latency(cfg, v, seeds)?;
        probes.push((v, l));
        Ok(l)
    };
    let l_lo = probe(lo)?;
    let l_hi = probe(hi)?;
    let (v, latency, feasible, saturated) = if l_lo > bound {
        (lo, l_lo, false, false)
    } else if l_hi <= bound {
        (hi, l_hi, true, true)
    } else {
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let mut best = (lo, l_lo);
        for _ in 0..max_steps {
            if b - a <= rel_tol.ln_1p() {
                break;
            }
            let mid = 0.5 * (a + b);
            let l = probe(mid.exp())?;
            if l <= bound {
                a = mid;
                best = (mid.exp(), l);
            } else {
                b = mid;
            }
        }
        (best.0, best.1, true, false)
    };
    let mut sorted = probes.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotonicity_violations = sorted
        .windows(2)
        .filter(|w| w[1].1 < w[0].1)
        .map(|w| (w[0], w[1]))
        .collect();
    Ok(Calibration {
        v,
        latency,
        feasible,
        saturated,
        probes,
        monotonicity_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_codebooks, complex_normal, ChannelMatrices};
    use crate::scenario::{stream_rng, Stream};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn zero_v_uses_full_power() {
        let p = PowerParams {
            sigma_v: 0.0,
            ..params(1.0)
        };
        assert_eq!(p.power_for(1e-9, 0.0, f64::INFINITY).0, 0.1);
    }

    #[test]
    fn calibration_budget_and_flags() {
        let cfg = ScenarioConfig {
            num_slots: 10,
            ..ScenarioConfig::baseline()
        };
        let search = CalibrationSearch {
            seeds: 2,
            max_steps: 6,
            ..CalibrationSearch::default()
        };
        let c = calibrate_v(&cfg, &search).unwrap();
        assert!(c.probes.len() <= 2 + 6);
        assert!(c.feasible);
        assert!(c.latency <= cfg.latency_bound);
        let tight = ScenarioConfig {
            latency_bound: 1e-3,
            ..cfg
        };
        let c = calibrate_v(&tight, &search).unwrap();
        assert!(!c.feasible);
        assert_eq!(c.v, 1.0);
        assert_eq!(c.probes.len(), 2);
    }

    #[test]
    fn overhead_hand_values() {
        let cfg = ScenarioConfig::baseline();
        assert_eq!(multiplications_per_eval(&cfg), 870.0);
        let (n, t) = ra_overhead(&cfg);
        assert_eq!(n, 3_480_000.0);
        assert!((t - 6.96e-3).abs() < 1e-12);
        let single = ScenarioConfig {
            group_size: 64,
            ..cfg.clone()
        };
        let mu = multiplications_per_eval(&single);
        assert_eq!(ra_overhead(&single).0, 25.0 * 5.0 * mu);
    }

    fn params(sigma_v: f64) -> PowerParams {
        PowerParams {
            bandwidth: 1.25e8,
            noise_density: 1e-20,
            sigma_v,
            p_max: 0.1,
            rate_backoff: 1.0,
            tau_pay: 0.05,
        }
    }

    #[test]
    fn power_limits() {
        let p = params(1e4);
        assert_eq!(p.power_for(1e-10, 0.0, 1e9), (0.0, 0.0));
        assert_eq!(p.power_for(1e-10, 1e30, 1e30).0, 0.1);
        assert_eq!(p.power_for(0.0, 1e6, 1e6), (0.0, 0.0));
        assert_eq!(params(0.0).power_for(1e-10, 1.0, 1e30).0, 0.1);
    }

    #[test]
    fn rate_capped_by_buffer() {
        let p = params(1e4);
        let (pw, r) = p.power_for(1e-10, 1e30, 5000.0);
        assert!(pw < 0.1);
        assert!((p.tau_pay * r - 5000.0).abs() < 1e-6 * 5000.0);
    }

    #[test]
    fn interior_power_maximizes_grid() {
        // Interior solution with a large buffer so the cap is inactive.
        let p = params(1e14);
        let gain = 1e-9;
        let weight = 1e4;
        let (pw, _) = p.power_for(gain, weight, f64::INFINITY);
        assert!(pw > 0.0 && pw < p.p_max, "{pw}");
        let util = |x: f64| weight * p.tau_pay * p.rate(gain, x) - p.sigma_v * p.tau_pay * x;
        let best = util(pw);
        let step = p.p_max / 1e4;
        for i in 0..=10_000 {
            let x = i as f64 * step;
            assert!(util(x) <= best + 1e-9 * best.abs().max(1.0), "{x}");
        }
    }

    proptest! {
        #[test]
        fn power_monotone_in_weight(g in 1e-14f64..1e-8, w1 in 0.0f64..1e8, w2 in 0.0f64..1e8, v in 0.0f64..1e10) {
            let p = params(v);
            let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            let (p_lo, _) = p.power_for(g, lo, f64::INFINITY);
            let (p_hi, _) = p.power_for(g, hi, f64::INFINITY);
            prop_assert!(p_lo <= p_hi);
            prop_assert!((0.0..=0.1).contains(&p_hi));
        }

        #[test]
        fn cpu_within_budget(q in prop::collection::vec(0.0f64..1e10, 4), z in prop::collection::vec(0.0f64..1e6, 4)) {
            let cfg = ScenarioConfig::baseline();
            let f = allocate_cpu(&q, &VirtualQueues { z }, 0.05, &cfg);
            prop_assert!(f.iter().sum::<f64>() <= cfg.f_max * (1.0 + 1e-12));
            prop_assert!(f.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn cpu_cases() {
        let cfg = ScenarioConfig::baseline();
        let vq = VirtualQueues::new(4);
        assert_eq!(allocate_cpu(&[0.0; 4], &vq, 0.05, &cfg), vec![0.0; 4]);
        let f = allocate_cpu(&[0.0, 1e5, 0.0, 0.0], &vq, 0.05, &cfg);
        assert!((0.05 * f[1] * cfg.bits_per_cycle - 1e5).abs() < 1e-6);
    }

    #[test]
    fn cpu_matches_two_ue_grid_search() {
        // Max-weight serves the heavier queue first; the grid confirms no
        // split on the budget line processes more weighted bits.
        let cfg = ScenarioConfig {
            num_ues: 2,
            f_max: 1e6,
            ..ScenarioConfig::baseline()
        };
        let tau = 0.1;
        let mut rng = stream_rng(3, Stream::Arrivals);
        for _ in 0..200 {
            let q: Vec<f64> = (0..2)
                .map(|_| rand::Rng::random::<f64>(&mut rng) * 2e4)
                .collect();
            let vq = VirtualQueues::new(2);
            let f = allocate_cpu(&q, &vq, tau, &cfg);
            let served = |f: &[f64]| -> f64 {
                (0..2)
                    .map(|k| q[k] * q[k].min(tau * f[k] * cfg.bits_per_cycle))
                    .sum()
            };
            let got = served(&f);
            for i in 0..=100 {
                let f0 = cfg.f_max * i as f64 / 100.0;
                let alt = [f0, cfg.f_max - f0];
                assert!(served(&alt) <= got * (1.0 + 1e-9) + 1e-9);
            }
        }
    }

    #[test]
    fn virtual_queue_cases() {
        let cfg = ScenarioConfig::baseline();
        let eq = VirtualQueues { z: vec![7.0; 4] };
        assert_eq!(
            update_virtual_queues(&eq, &[1.5e4; 4], &cfg).z,
            vec![7.0; 4]
        );
        let zero = VirtualQueues::new(4);
        assert_eq!(
            update_virtual_queues(&zero, &[1e3; 4], &cfg).z,
            vec![0.0; 4]
        );
        let z = update_virtual_queues(&zero, &[2e4; 4], &cfg).z;
        assert!((z[0] - 5e3).abs() < 1e-9);
    }

    fn tiny_cfg(k: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_ues: k,
            num_antennas: 2,
            num_elements: 4,
            group_size: 2,
            ap_codebook_size: 3,
            ..ScenarioConfig::baseline()
        }
    }

    fn random_csi(cfg: &ScenarioConfig, seed: u64, scale: f64) -> CsiEstimate {
        let mut rng = stream_rng(seed, Stream::Channels);
        let (m, n) = (cfg.num_antennas, cfg.num_elements);
        CsiEstimate {
            matrices: ChannelMatrices {
                direct: (0..cfg.num_ues)
                    .map(|_| DVector::from_fn(m, |_, _| complex_normal(&mut rng, scale)))
                    .collect(),
                reflected: (0..cfg.num_ues)
                    .map(|_| DMatrix::from_fn(m, n, |_, _| complex_normal(&mut rng, scale)))
                    .collect(),
            },
            lambda: vec![0.0; cfg.num_ues],
            gamma: vec![0.0; cfg.num_ues],
            valid: true,
        }
    }

    #[test]
    fn zero_csi_picks_first_beam_all_off() {
        let cfg = ScenarioConfig::baseline();
        let cb = build_codebooks(&cfg);
        let csi = CsiEstimate {
            valid: true,
            ..CsiEstimate::invalid(&cfg)
        };
        let d = allocate(
            &csi,
            &[1e4; 4],
            &[0.0; 4],
            &VirtualQueues::new(4),
            &cb,
            0.05,
            &cfg,
        );
        assert_eq!(d.beam, 0);
        assert_eq!(d.ris.num_active(), 0);
        assert!(d.power.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn invalid_csi_falls_back() {
        let cfg = ScenarioConfig::baseline();
        let cb = build_codebooks(&cfg);
        let d = allocate(
            &CsiEstimate::invalid(&cfg),
            &[1e4; 4],
            &[1e4; 4],
            &VirtualQueues::new(4),
            &cb,
            0.05,
            &cfg,
        );
        assert!(d.fallback);
        assert_eq!(d.ris, cb.ctl_config);
        assert!(d.rate.iter().all(|r| *r == 0.0));
        assert!(d.cpu.iter().any(|f| *f > 0.0));
    }

    #[test]
    fn greedy_never_worse_than_start() {
        let cfg = tiny_cfg(2);
        let cb = build_codebooks(&cfg);
        for seed in 0..100 {
            let csi = random_csi(&cfg, seed, 1e-9);
            let weights = [3e5, 1e5];
            let buffered = [1e9, 1e9];
            let obj = Objective::new(&cfg, &weights, &buffered, 0.05);
            let (_, _, best) = greedy_joint_search(&csi, &cb, &obj, &cfg);
            let start = RisConfiguration::all_on(4, cfg.phase_bits).phi();
            for w in &cb.ap_beams {
                let gains = (0..2).map(|k| csi.matrices.effective(k, w, &start).norm_sqr());
                assert!(best <= obj.eval(gains, 4) + 1e-9 * best.abs());
            }
        }
    }

    #[test]
    fn reported_objective_matches_direct_evaluation() {
        let cfg = tiny_cfg(3);
        let cb = build_codebooks(&cfg);
        let csi = random_csi(&cfg, 9, 1e-9);
        let weights = [2e5, 1e5, 4e5];
        let buffered = [1e9; 3];
        let obj = Objective::new(&cfg, &weights, &buffered, 0.05);
        let (b, ris, j) = greedy_joint_search(&csi, &cb, &obj, &cfg);
        let phi = ris.phi();
        let gains = (0..3).map(|k| csi.matrices.effective(k, &cb.ap_beams[b], &phi).norm_sqr());
        let direct = obj.eval(gains, ris.num_active());
        assert!((j - direct).abs() <= 1e-9 * j.abs());
    }
}
