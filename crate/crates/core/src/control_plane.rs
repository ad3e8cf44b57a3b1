//! Slot protocol timing, control-packet losses and their effect on what is
//! actually applied during the payload phase.

use rand::Rng;

use crate::channel::RisConfiguration;
use crate::dynamics::QueueState;
use crate::error::{Result, SimError};
use crate::ra::{ra_overhead, RaDecision};
use crate::scenario::ScenarioConfig;

/// Split of one slot into control phases and payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTiming {
    pub tau: f64,
    pub tau_ini: f64,
    pub tau_ce: f64,
    pub tau_ra: f64,
    pub tau_set: f64,
    pub tau_ctl: f64,
    pub tau_pay: f64,
}

pub fn compute_timing(cfg: &ScenarioConfig) -> Result<SlotTiming> {
    let t = cfg.tti;
    let ts = cfg.ris_switch;
    let tau_ini = ts + 3.0 * t;
    let tau_ce = (ts + cfg.pilot_len as f64 * t) * (cfg.ce_codebook_size as f64 + 1.0);
    let (_, tau_ra) = ra_overhead(cfg);
    let tau_set = 2.0 * ts + 2.0 * t;
    let tau_ctl = tau_ini + tau_ce + tau_ra + tau_set;
    if cfg.slot <= tau_ctl {
        return Err(SimError::InfeasibleSlot {
            tau: cfg.slot,
            tau_ctl,
        });
    }
    Ok(SlotTiming {
        tau: cfg.slot,
        tau_ini,
        tau_ce,
        tau_ra,
        tau_set,
        tau_ctl,
        tau_pay: cfg.slot - tau_ctl,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketOutcomes {
    pub ini_u_lost: Vec<bool>,
    pub ini_r_lost: bool,
    pub set_u_lost: Vec<bool>,
    pub set_r_lost: bool,
}

impl PacketOutcomes {
    pub fn none_lost(k: usize) -> Self {
        Self {
            ini_u_lost: vec![false; k],
            ini_r_lost: false,
            set_u_lost: vec![false; k],
            set_r_lost: false,
        }
    }
}

/// Independent Bernoulli draws. The same number of uniforms is consumed
/// whatever the probabilities, so changing one does not shift the others.
pub fn sample_outcomes<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> PacketOutcomes {
    let p = &cfg.packet_loss;
    let k = cfg.num_ues;
    let ini_u_lost = (0..k).map(|_| rng.random::<f64>() < p.ini_u).collect();
    let ini_r_lost = rng.random::<f64>() < p.ini_r;
    let set_u_lost = (0..k).map(|_| rng.random::<f64>() < p.set_u).collect();
    let set_r_lost = rng.random::<f64>() < p.set_r;
    PacketOutcomes {
        ini_u_lost,
        ini_r_lost,
        set_u_lost,
        set_r_lost,
    }
}

/// Initialization phase: refresh the ES view of the local queues. A UE whose
/// INI-U is lost is seen with only what the ES can infer from the data it
/// received last slot.
pub fn update_es_view(queues: &mut QueueState, outcomes: &PacketOutcomes) {
    for k in 0..queues.local.len() {
        queues.es_view[k] = if outcomes.ini_u_lost[k] {
            queues.inferred_local[k]
        } else {
            queues.local[k]
        };
    }
}

/// What the UEs and the RIS actually applied in the previous slot.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub power: Vec<f64>,
    pub rate: Vec<f64>,
    pub ris: RisConfiguration,
}

impl History {
    /// Before the first slot: silent UEs, RIS in its control configuration.
    pub fn initial(k: usize, ctl: &RisConfiguration) -> Self {
        Self {
            power: vec![0.0; k],
            rate: vec![0.0; k],
            ris: ctl.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDecision {
    pub power: Vec<f64>,
    pub rate: Vec<f64>,
    pub ris: RisConfiguration,
}

impl EffectiveDecision {
    pub fn to_history(&self) -> History {
        History {
            power: self.power.clone(),
            rate: self.rate.clone(),
            ris: self.ris.clone(),
        }
    }
}

/// INI-R loss silences every UE and overrides SET-U; SET-U loss replays the
/// UE's previous power and rate; SET-R loss keeps the previous RIS state.
pub fn apply_loss_effects(
    outcomes: &PacketOutcomes,
    decision: &RaDecision,
    history: &History,
) -> EffectiveDecision {
    let k_n = decision.power.len();
    let mut power = decision.power.clone();
    let mut rate = decision.rate.clone();
    if outcomes.ini_r_lost {
        power = vec![0.0; k_n];
        rate = vec![0.0; k_n];
    } else {
        for k in 0..k_n {
            if outcomes.set_u_lost[k] {
                power[k] = history.power[k];
                rate[k] = history.rate[k];
            }
        }
    }
    let ris = if outcomes.set_r_lost {
        history.ris.clone()
    } else {
        decision.ris.clone()
    };
    EffectiveDecision { power, rate, ris }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{stream_rng, PacketLossProbs, PacketType, Stream};

    #[test]
    fn long_tti_overheads() {
        let cfg = ScenarioConfig::long_tti();
        let t = compute_timing(&cfg).unwrap();
        assert!((t.tau_ce - 65.0 * 10.0 / 14.0 * 1e-3).abs() < 1e-15);
        assert!((t.tau_ce - 46.4e-3).abs() < 0.1e-3);
        assert!((t.tau_ini + t.tau_set - 3.6e-3).abs() < 0.1e-3);
        assert_eq!(t.tau_ctl, t.tau_ini + t.tau_ce + t.tau_ra + t.tau_set);
    }

    #[test]
    fn table_tti_initialization() {
        let t = compute_timing(&ScenarioConfig::baseline()).unwrap();
        assert!((t.tau_ini - 3.0 / 14.0 * 1e-3).abs() < 1e-15);
        assert!((t.tau_ini + t.tau_ce + t.tau_ra + t.tau_set + t.tau_pay - t.tau).abs() < 1e-12);
    }

    #[test]
    fn short_slot_is_infeasible() {
        let cfg = ScenarioConfig {
            slot: 5e-3,
            ..ScenarioConfig::baseline()
        };
        match compute_timing(&cfg) {
            Err(SimError::InfeasibleSlot { tau, tau_ctl }) => {
                assert_eq!(tau, 5e-3);
                assert!(tau_ctl > tau);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loss_probabilities_extremes() {
        let mut rng = stream_rng(0, Stream::Losses);
        let cfg = ScenarioConfig::baseline();
        for _ in 0..1000 {
            assert_eq!(
                sample_outcomes(&mut rng, &cfg),
                PacketOutcomes::none_lost(4)
            );
        }
        let sure = ScenarioConfig {
            packet_loss: PacketLossProbs::only(PacketType::SetR, 1.0),
            ..cfg
        };
        for _ in 0..1000 {
            assert!(sample_outcomes(&mut rng, &sure).set_r_lost);
        }
    }

    #[test]
    fn ini_u_loss_count_is_binomial() {
        let cfg = ScenarioConfig {
            packet_loss: PacketLossProbs::only(PacketType::IniU, 0.5),
            ..ScenarioConfig::baseline()
        };
        let mut rng = stream_rng(1, Stream::Losses);
        let n = 10_000;
        let lost: usize = (0..n)
            .map(|_| {
                sample_outcomes(&mut rng, &cfg)
                    .ini_u_lost
                    .iter()
                    .filter(|l| **l)
                    .count()
            })
            .sum();
        let mean = lost as f64 / n as f64;
        let sd = (4.0 * 0.25 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sd, "{mean}");
    }

    fn decision() -> RaDecision {
        let mut ris = RisConfiguration::all_on(4, 2);
        ris.phase = vec![1, 2, 3, 0];
        RaDecision {
            beam: 2,
            ris,
            power: vec![0.01, 0.02],
            rate: vec![1e5, 2e5],
            cpu: vec![0.0, 0.0],
            est_gain: vec![1e-10, 1e-10],
            n_ra: 0.0,
            tau_ra: 0.0,
            objective: 0.0,
            fallback: false,
        }
    }

    #[test]
    fn no_loss_is_identity() {
        let d = decision();
        let h = History::initial(2, &RisConfiguration::all_on(4, 2));
        let e = apply_loss_effects(&PacketOutcomes::none_lost(2), &d, &h);
        assert_eq!(e.power, d.power);
        assert_eq!(e.rate, d.rate);
        assert_eq!(e.ris, d.ris);
    }

    #[test]
    fn ini_r_loss_silences_everyone() {
        let d = decision();
        let h = History {
            power: vec![0.5, 0.5],
            rate: vec![9.0, 9.0],
            ris: RisConfiguration::all_off(4, 2),
        };
        let mut o = PacketOutcomes::none_lost(2);
        o.ini_r_lost = true;
        o.set_u_lost = vec![true, true];
        let e = apply_loss_effects(&o, &d, &h);
        assert_eq!(e.rate, vec![0.0, 0.0]);
        assert_eq!(e.power, vec![0.0, 0.0]);
    }

    #[test]
    fn set_u_loss_in_first_slot_is_silent() {
        let d = decision();
        let h = History::initial(2, &RisConfiguration::all_on(4, 2));
        let mut o = PacketOutcomes::none_lost(2);
        o.set_u_lost[1] = true;
        let e = apply_loss_effects(&o, &d, &h);
        assert_eq!(e.power, vec![0.01, 0.0]);
        assert_eq!(e.rate, vec![1e5, 0.0]);
    }

    #[test]
    fn set_r_loss_keeps_previous_configuration() {
        let d = decision();
        let ctl = RisConfiguration::all_on(4, 2);
        let h = History::initial(2, &ctl);
        let mut o = PacketOutcomes::none_lost(2);
        o.set_r_lost = true;
        assert_eq!(apply_loss_effects(&o, &d, &h).ris, ctl);
    }

    #[test]
    fn es_view_resynchronizes() {
        let mut q = QueueState::empty(2);
        q.local = vec![100.0, 200.0];
        q.inferred_local = vec![40.0, 50.0];
        let mut o = PacketOutcomes::none_lost(2);
        o.ini_u_lost[0] = true;
        update_es_view(&mut q, &o);
        assert_eq!(q.es_view, vec![40.0, 200.0]);
        update_es_view(&mut q, &PacketOutcomes::none_lost(2));
        assert_eq!(q.es_view, q.local);
    }
}
