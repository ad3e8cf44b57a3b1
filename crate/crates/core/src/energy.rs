//! Per-slot energy bookkeeping for UEs, AP, RIS and ES.

use crate::channel::RisConfiguration;
use crate::control_plane::SlotTiming;
use crate::scenario::ScenarioConfig;

/// All values in joules. Each `*_ctl` field is the control share already
/// included in the corresponding total.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    pub ue: Vec<f64>,
    pub ue_ctl: Vec<f64>,
    pub es: f64,
    pub es_ctl: f64,
    pub ap: f64,
    pub ap_ctl: f64,
    pub ris: f64,
    pub ris_ctl: f64,
    /// σ·ΣE_k + (1−σ)·(E_e + E_a + E_r).
    pub total: f64,
}

impl EnergyLedger {
    pub fn weighted_total(&self, sigma: f64) -> f64 {
        sigma * self.ue.iter().sum::<f64>() + (1.0 - sigma) * (self.es + self.ap + self.ris)
    }
}

pub fn slot_energy(
    timing: &SlotTiming,
    power: &[f64],
    ris: &RisConfiguration,
    cfg: &ScenarioConfig,
) -> EnergyLedger {
    let t = cfg.tti;
    let np = cfg.pilot_len as f64;
    let c_ce = cfg.ce_codebook_size as f64;
    let pay = timing.tau_pay;

    let es_ctl = cfg.switching_capacitance * cfg.f_ra.powi(3) * timing.tau_ra;
    let es = pay * cfg.switching_capacitance * cfg.f_max.powi(3) + es_ctl;

    let ue_ctl_each = cfg.p_ctl_ue * t * (1.0 + np * (c_ce + 1.0));
    let ue_ctl = vec![ue_ctl_each; power.len()];
    let ue = power.iter().map(|p| pay * p + ue_ctl_each).collect();

    let ap = 2.0 * cfg.p_ctl_ap * t * (cfg.num_ues as f64 + 1.0);

    let ris_ctl = (timing.tau_ini + timing.tau_set + c_ce * np * t)
        * cfg.num_elements as f64
        * cfg.ris_element_power;
    let ris_e = pay * cfg.ris_element_power * ris.num_active() as f64 + ris_ctl;

    let mut ledger = EnergyLedger {
        ue,
        ue_ctl,
        es,
        es_ctl,
        ap,
        ap_ctl: ap,
        ris: ris_e,
        ris_ctl,
        total: 0.0,
    };
    ledger.total = ledger.weighted_total(cfg.energy_weight);
    ledger
}
