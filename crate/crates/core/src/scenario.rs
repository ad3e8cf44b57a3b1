//! Scenario configuration, geometry and random-stream seeding.
//!
//! A [`ScenarioConfig`] is loaded once from a plain `key = value` document
//! (`#` starts a comment), validated, and then shared read-only. All stored
//! quantities are linear SI; keys carrying a `_dbm`, `_db`, `_ms`, `_mhz`,
//! `_ghz` or `_kbps` suffix are converted exactly once while loading.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::units::{db_to_linear, dbm_to_watts};

pub type Vec3 = [f64; 3];

/// How the AP obtains CSI each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeMode {
    Perfect,
    AnalyticNoise,
    PilotLevel,
}

impl FromStr for CeMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "perfect" => Ok(CeMode::Perfect),
            "analytic_noise" | "analytic" => Ok(CeMode::AnalyticNoise),
            "pilot_level" | "pilot" => Ok(CeMode::PilotLevel),
            other => Err(format!(
                "expected perfect, analytic_noise or pilot_level, got `{other}`"
            )),
        }
    }
}

impl fmt::Display for CeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CeMode::Perfect => "perfect",
            CeMode::AnalyticNoise => "analytic_noise",
            CeMode::PilotLevel => "pilot_level",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalModel {
    Poisson,
    /// Exactly `Ā·τ` bits every slot, for debugging.
    Deterministic,
}

impl FromStr for ArrivalModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "poisson" => Ok(ArrivalModel::Poisson),
            "deterministic" => Ok(ArrivalModel::Deterministic),
            other => Err(format!("expected poisson or deterministic, got `{other}`")),
        }
    }
}

impl fmt::Display for ArrivalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrivalModel::Poisson => "poisson",
            ArrivalModel::Deterministic => "deterministic",
        })
    }
}

/// The four control packets whose loss is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketType {
    IniU,
    IniR,
    SetU,
    SetR,
}

impl PacketType {
    pub const ALL: [PacketType; 4] = [
        PacketType::IniU,
        PacketType::IniR,
        PacketType::SetU,
        PacketType::SetR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PacketType::IniU => "INI-U",
            PacketType::IniR => "INI-R",
            PacketType::SetU => "SET-U",
            PacketType::SetR => "SET-R",
        }
    }
}

impl FromStr for PacketType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "INI-U" => Ok(PacketType::IniU),
            "INI-R" => Ok(PacketType::IniR),
            "SET-U" => Ok(PacketType::SetU),
            "SET-R" => Ok(PacketType::SetR),
            other => Err(format!("unknown packet type `{other}`")),
        }
    }
}

impl fmt::Display for PacketType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-packet loss probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PacketLossProbs {
    pub ini_u: f64,
    pub ini_r: f64,
    pub set_u: f64,
    pub set_r: f64,
}

impl PacketLossProbs {
    pub fn get(&self, p: PacketType) -> f64 {
        match p {
            PacketType::IniU => self.ini_u,
            PacketType::IniR => self.ini_r,
            PacketType::SetU => self.set_u,
            PacketType::SetR => self.set_r,
        }
    }

    pub fn set(&mut self, p: PacketType, value: f64) {
        match p {
            PacketType::IniU => self.ini_u = value,
            PacketType::IniR => self.ini_r = value,
            PacketType::SetU => self.set_u = value,
            PacketType::SetR => self.set_r = value,
        }
    }

    /// Only `p` is lossy, with probability `prob`.
    pub fn only(p: PacketType, prob: f64) -> Self {
        let mut out = Self::default();
        out.set(p, prob);
        out
    }
}

/// TTI of the `long_tti` preset: 10/14 ms.
pub const LONG_TTI_S: f64 = 10.0 / 14.0 * 1e-3;
/// Default TTI: 1/14 ms.
pub const BASELINE_TTI_S: f64 = 1.0 / 14.0 * 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_ues: usize,
    pub num_antennas: usize,
    pub num_elements: usize,
    /// Total bandwidth B [Hz], split equally among UEs.
    pub bandwidth: f64,
    /// N0 [W/Hz].
    pub noise_density: f64,
    /// σ0², linear power gain at 1 m.
    pub ref_gain: f64,
    pub radius: f64,
    pub ap_position: Vec3,
    /// Fixed UE positions; sampled per seed when `None`.
    pub ue_positions: Option<Vec<Vec3>>,
    /// Slot duration τ [s].
    pub slot: f64,
    /// TTI T [s].
    pub tti: f64,
    /// RIS configuration load time τ_s [s].
    pub ris_switch: f64,
    /// Pilot length N_p in TTIs.
    pub pilot_len: usize,
    pub ce_codebook_size: usize,
    pub ap_codebook_size: usize,
    pub phase_bits: u32,
    pub group_size: usize,
    /// ES CPU budget f_max [cycles/s].
    pub f_max: f64,
    /// CPU speed used for the RA [cycles/s].
    pub f_ra: f64,
    /// γ_c [J·s²/cycle³].
    pub switching_capacitance: f64,
    /// J_k [bits/cycle].
    pub bits_per_cycle: f64,
    /// Ā_k [bit/s], identical for all UEs.
    pub arrival_rate: f64,
    /// L̄ [s].
    pub latency_bound: f64,
    /// σ ∈ [0,1].
    pub energy_weight: f64,
    pub p_ctl_ue: f64,
    pub p_ctl_ap: f64,
    pub p_max_ue: f64,
    /// P_r(b) [W per active element].
    pub ris_element_power: f64,
    pub lyapunov_v: f64,
    /// μ_d ∈ (0,1].
    pub rate_backoff: f64,
    pub packet_loss: PacketLossProbs,
    pub ce_mode: CeMode,
    pub arrivals: ArrivalModel,
    pub num_slots: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ScenarioConfig {
    /// Default scenario (T = 1/14 ms).
    pub fn baseline() -> Self {
        let half = 50.0 * 2f64.sqrt();
        Self {
            num_ues: 4,
            num_antennas: 8,
            num_elements: 64,
            bandwidth: 500e6,
            noise_density: dbm_to_watts(-170.0),
            ref_gain: db_to_linear(-38.0),
            radius: 100.0,
            ap_position: [half, half, 0.0],
            ue_positions: None,
            slot: 0.1,
            tti: BASELINE_TTI_S,
            ris_switch: 0.0,
            pilot_len: 1,
            ce_codebook_size: 64,
            ap_codebook_size: 25,
            phase_bits: 2,
            group_size: 2,
            f_max: 4.5e9,
            f_ra: 0.5e9,
            switching_capacitance: 1e-31,
            bits_per_cycle: 0.1,
            arrival_rate: 50e3,
            latency_bound: 0.3,
            energy_weight: 0.5,
            p_ctl_ue: dbm_to_watts(20.0),
            p_ctl_ap: dbm_to_watts(24.0),
            p_max_ue: 0.1,
            ris_element_power: 5e-3,
            lyapunov_v: 1e4,
            rate_backoff: 1.0,
            packet_loss: PacketLossProbs::default(),
            ce_mode: CeMode::AnalyticNoise,
            arrivals: ArrivalModel::Poisson,
            num_slots: 100,
            seed: 0,
        }
    }

    /// Same as [`baseline`](Self::baseline) with T = 10/14 ms, the TTI under
    /// which the reported 46.4 ms CE overhead is reproduced.
    pub fn long_tti() -> Self {
        Self {
            tti: LONG_TTI_S,
            ..Self::baseline()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "baseline" | "default" => Some(Self::baseline()),
            "long_tti" => Some(Self::long_tti()),
            _ => None,
        }
    }

    /// B_k under equal split.
    pub fn bandwidth_per_ue(&self) -> f64 {
        self.bandwidth / self.num_ues as f64
    }

    pub fn num_groups(&self) -> usize {
        self.num_elements / self.group_size
    }

    /// Number of quantized phase levels, 2^b.
    pub fn phase_levels(&self) -> usize {
        1usize << self.phase_bits
    }

    /// Error-free variant: perfect CSI, reliable control, no rate backoff.
    pub fn error_free(&self) -> Self {
        Self {
            ce_mode: CeMode::Perfect,
            packet_loss: PacketLossProbs::default(),
            rate_backoff: 1.0,
            ..self.clone()
        }
    }

    /// Parse a `key = value` document on top of the defaults.
    pub fn load(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(SimError::Parse {
                    line: idx + 1,
                    text: raw.to_string(),
                    reason: "expected `key = value`".into(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(SimError::Parse {
                    line: idx + 1,
                    text: raw.to_string(),
                    reason: "empty key or value".into(),
                });
            }
            entries.push((k.to_string(), v.to_string()));
        }

        // A preset replaces the base regardless of where it appears.
        let mut cfg = Self::baseline();
        for (k, v) in entries.iter().filter(|(k, _)| k == "preset") {
            cfg = Self::preset(v).ok_or_else(|| {
                SimError::invalid(k, format!("unknown preset `{v}` (baseline, long_tti)"))
            })?;
        }
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self> {
        Self::load(&std::fs::read_to_string(path)?)
    }

    /// Apply one `key = value` override. Does not validate.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>()
                .map_err(|_| SimError::invalid(key, format!("cannot parse `{v}` as a number")))
        }
        fn vec3(key: &str, v: &str) -> Result<Vec3> {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(SimError::invalid(key, "expected `x, y, z`"));
            }
            Ok([
                num(key, parts[0])?,
                num(key, parts[1])?,
                num(key, parts[2])?,
            ])
        }

        match key {
            "preset" => {
                *self = Self::preset(value)
                    .ok_or_else(|| SimError::invalid(key, format!("unknown preset `{value}`")))?;
            }
            "num_ues" => self.num_ues = num(key, value)?,
            "num_antennas" => self.num_antennas = num(key, value)?,
            "num_elements" => self.num_elements = num(key, value)?,
            "bandwidth_hz" => self.bandwidth = num(key, value)?,
            "bandwidth_mhz" => self.bandwidth = num::<f64>(key, value)? * 1e6,
            "noise_density_dbm_hz" => self.noise_density = dbm_to_watts(num(key, value)?),
            "noise_density_w_hz" => self.noise_density = num(key, value)?,
            "ref_gain_db" => self.ref_gain = db_to_linear(num(key, value)?),
            "ref_gain" => self.ref_gain = num(key, value)?,
            "radius_m" => self.radius = num(key, value)?,
            "ap_position_m" => self.ap_position = vec3(key, value)?,
            "ue_positions_m" => {
                self.ue_positions = if value == "random" {
                    None
                } else {
                    Some(
                        value
                            .split(';')
                            .map(|p| vec3(key, p))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
            }
            "slot_s" => self.slot = num(key, value)?,
            "slot_ms" => self.slot = num::<f64>(key, value)? * 1e-3,
            "tti_s" => self.tti = num(key, value)?,
            "tti_ms" => self.tti = num::<f64>(key, value)? * 1e-3,
            "ris_switch_s" => self.ris_switch = num(key, value)?,
            "ris_switch_ms" => self.ris_switch = num::<f64>(key, value)? * 1e-3,
            "pilot_len" => self.pilot_len = num(key, value)?,
            "ce_codebook_size" => self.ce_codebook_size = num(key, value)?,
            "ap_codebook_size" => self.ap_codebook_size = num(key, value)?,
            "phase_bits" => self.phase_bits = num(key, value)?,
            "group_size" => self.group_size = num(key, value)?,
            "f_max_hz" => self.f_max = num(key, value)?,
            "f_max_ghz" => self.f_max = num::<f64>(key, value)? * 1e9,
            "f_ra_hz" => self.f_ra = num(key, value)?,
            "f_ra_ghz" => self.f_ra = num::<f64>(key, value)? * 1e9,
            "switching_capacitance" => self.switching_capacitance = num(key, value)?,
            "bits_per_cycle" => self.bits_per_cycle = num(key, value)?,
            "arrival_rate_bps" => self.arrival_rate = num(key, value)?,
            "arrival_rate_kbps" => self.arrival_rate = num::<f64>(key, value)? * 1e3,
            "latency_bound_s" => self.latency_bound = num(key, value)?,
            "latency_bound_ms" => self.latency_bound = num::<f64>(key, value)? * 1e-3,
            "energy_weight" => self.energy_weight = num(key, value)?,
            "p_ctl_ue_dbm" => self.p_ctl_ue = dbm_to_watts(num(key, value)?),
            "p_ctl_ue_w" => self.p_ctl_ue = num(key, value)?,
            "p_ctl_ap_dbm" => self.p_ctl_ap = dbm_to_watts(num(key, value)?),
            "p_ctl_ap_w" => self.p_ctl_ap = num(key, value)?,
            "p_max_ue_dbm" => self.p_max_ue = dbm_to_watts(num(key, value)?),
            "p_max_ue_w" => self.p_max_ue = num(key, value)?,
            "ris_element_power_w" => self.ris_element_power = num(key, value)?,
            "lyapunov_v" => self.lyapunov_v = num(key, value)?,
            "rate_backoff" => self.rate_backoff = num(key, value)?,
            "loss_ini_u" => self.packet_loss.ini_u = num(key, value)?,
            "loss_ini_r" => self.packet_loss.ini_r = num(key, value)?,
            "loss_set_u" => self.packet_loss.set_u = num(key, value)?,
            "loss_set_r" => self.packet_loss.set_r = num(key, value)?,
            "ce_mode" => self.ce_mode = value.parse().map_err(|e| SimError::invalid(key, e))?,
            "arrivals" => self.arrivals = value.parse().map_err(|e| SimError::invalid(key, e))?,
            "num_slots" => self.num_slots = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(SimError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::invalid(key, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SimError::invalid(key, format!("must be >= 0, got {v}")))
            }
        }
        fn unit(key: &str, v: f64) -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::invalid(
                    key,
                    format!("must lie in [0, 1], got {v}"),
                ))
            }
        }
        fn count(key: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(SimError::invalid(key, "must be at least 1"))
            }
        }

        count("num_ues", self.num_ues)?;
        count("num_antennas", self.num_antennas)?;
        count("num_elements", self.num_elements)?;
        count("pilot_len", self.pilot_len)?;
        count("ce_codebook_size", self.ce_codebook_size)?;
        count("ap_codebook_size", self.ap_codebook_size)?;
        count("group_size", self.group_size)?;
        if !self.num_elements.is_multiple_of(self.group_size) {
            return Err(SimError::invalid(
                "group_size",
                format!(
                    "{} elements are not divisible into groups of {}",
                    self.num_elements, self.group_size
                ),
            ));
        }
        if !(1..=8).contains(&self.phase_bits) {
            return Err(SimError::invalid("phase_bits", "must lie in 1..=8"));
        }
        positive("bandwidth_hz", self.bandwidth)?;
        positive("noise_density_w_hz", self.noise_density)?;
        non_negative("ref_gain", self.ref_gain)?;
        non_negative("radius_m", self.radius)?;
        positive("slot_s", self.slot)?;
        positive("tti_s", self.tti)?;
        non_negative("ris_switch_s", self.ris_switch)?;
        positive("f_max_hz", self.f_max)?;
        positive("f_ra_hz", self.f_ra)?;
        positive("switching_capacitance", self.switching_capacitance)?;
        positive("bits_per_cycle", self.bits_per_cycle)?;
        non_negative("arrival_rate_bps", self.arrival_rate)?;
        positive("latency_bound_s", self.latency_bound)?;
        unit("energy_weight", self.energy_weight)?;
        positive("p_ctl_ue_w", self.p_ctl_ue)?;
        positive("p_ctl_ap_w", self.p_ctl_ap)?;
        positive("p_max_ue_w", self.p_max_ue)?;
        non_negative("ris_element_power_w", self.ris_element_power)?;
        non_negative("lyapunov_v", self.lyapunov_v)?;
        if !(self.rate_backoff > 0.0 && self.rate_backoff <= 1.0) {
            return Err(SimError::invalid(
                "rate_backoff",
                format!("must lie in (0, 1], got {}", self.rate_backoff),
            ));
        }
        for p in PacketType::ALL {
            let key = match p {
                PacketType::IniU => "loss_ini_u",
                PacketType::IniR => "loss_ini_r",
                PacketType::SetU => "loss_set_u",
                PacketType::SetR => "loss_set_r",
            };
            unit(key, self.packet_loss.get(p))?;
        }
        if self.ap_position.iter().any(|c| !c.is_finite()) {
            return Err(SimError::invalid("ap_position_m", "must be finite"));
        }
        if let Some(ues) = &self.ue_positions {
            if ues.len() != self.num_ues {
                return Err(SimError::invalid(
                    "ue_positions_m",
                    format!("{} positions given for {} UEs", ues.len(), self.num_ues),
                ));
            }
            for p in ues {
                if norm(p) > self.radius * (1.0 + 1e-12) || !in_ap_half_plane(p, &self.ap_position)
                {
                    return Err(SimError::invalid(
                        "ue_positions_m",
                        format!(
                            "{p:?} lies outside the semicircle of radius {}",
                            self.radius
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `key = value` lines describing every knob, for CSV metadata headers.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("num_ues", self.num_ues.to_string()),
            ("num_antennas", self.num_antennas.to_string()),
            ("num_elements", self.num_elements.to_string()),
            ("bandwidth_hz", self.bandwidth.to_string()),
            ("noise_density_w_hz", format!("{:e}", self.noise_density)),
            ("ref_gain", format!("{:e}", self.ref_gain)),
            ("radius_m", self.radius.to_string()),
            (
                "ap_position_m",
                format!(
                    "{}, {}, {}",
                    self.ap_position[0], self.ap_position[1], self.ap_position[2]
                ),
            ),
            ("slot_s", self.slot.to_string()),
            ("tti_s", format!("{:e}", self.tti)),
            ("ris_switch_s", self.ris_switch.to_string()),
            ("pilot_len", self.pilot_len.to_string()),
            ("ce_codebook_size", self.ce_codebook_size.to_string()),
            ("ap_codebook_size", self.ap_codebook_size.to_string()),
            ("phase_bits", self.phase_bits.to_string()),
            ("group_size", self.group_size.to_string()),
            ("f_max_hz", format!("{:e}", self.f_max)),
            ("f_ra_hz", format!("{:e}", self.f_ra)),
            (
                "switching_capacitance",
                format!("{:e}", self.switching_capacitance),
            ),
            ("bits_per_cycle", self.bits_per_cycle.to_string()),
            ("arrival_rate_bps", self.arrival_rate.to_string()),
            ("latency_bound_s", self.latency_bound.to_string()),
            ("energy_weight", self.energy_weight.to_string()),
            ("p_ctl_ue_w", self.p_ctl_ue.to_string()),
            ("p_ctl_ap_w", self.p_ctl_ap.to_string()),
            ("p_max_ue_w", self.p_max_ue.to_string()),
            (
                "ris_element_power_w",
                format!("{:e}", self.ris_element_power),
            ),
            ("lyapunov_v", format!("{:e}", self.lyapunov_v)),
            ("rate_backoff", self.rate_backoff.to_string()),
            ("loss_ini_u", self.packet_loss.ini_u.to_string()),
            ("loss_ini_r", self.packet_loss.ini_r.to_string()),
            ("loss_set_u", self.packet_loss.set_u.to_string()),
            ("loss_set_r", self.packet_loss.set_r.to_string()),
            ("ce_mode", self.ce_mode.to_string()),
            ("arrivals", self.arrivals.to_string()),
            ("num_slots", self.num_slots.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if let Some(ues) = &self.ue_positions {
            let s = ues
                .iter()
                .map(|p| format!("{}, {}, {}", p[0], p[1], p[2]))
                .collect::<Vec<_>>()
                .join("; ");
            m.push(("ue_positions_m", s));
        }
        m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

pub(crate) fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn in_ap_half_plane(p: &Vec3, ap: &Vec3) -> bool {
    p[0] * ap[0] + p[1] * ap[1] >= -1e-9 * norm(ap).max(1.0)
}

/// UE positions plus the cached link distances (RIS at the origin).
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub ue_positions: Vec<Vec3>,
    pub ue_ap_dist: Vec<f64>,
    pub ue_ris_dist: Vec<f64>,
    pub ris_ap_dist: f64,
}

impl Geometry {
    pub fn new(ue_positions: Vec<Vec3>, ap: &Vec3) -> Self {
        let ue_ap_dist = ue_positions.iter().map(|p| dist(p, ap)).collect();
        let ue_ris_dist = ue_positions.iter().map(norm).collect();
        Self {
            ue_positions,
            ue_ap_dist,
            ue_ris_dist,
            ris_ap_dist: norm(ap),
        }
    }

    /// Fixed positions from the config, or a fresh uniform draw.
    pub fn for_config<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> Self {
        let pos = match &cfg.ue_positions {
            Some(p) => p.clone(),
            None => sample_ue_positions(rng, cfg),
        };
        Self::new(pos, &cfg.ap_position)
    }

    pub fn check_non_degenerate(&self) -> Result<()> {
        if self.ris_ap_dist <= 0.0 {
            return Err(SimError::Geometry("AP coincides with the RIS".into()));
        }
        for (k, (&a, &r)) in self.ue_ap_dist.iter().zip(&self.ue_ris_dist).enumerate() {
            if a <= 0.0 || r <= 0.0 {
                return Err(SimError::Geometry(format!(
                    "UE {k} has zero distance to the AP or RIS"
                )));
            }
        }
        Ok(())
    }
}

/// K points uniform over the half-disc of radius r (z = 0) that faces the AP.
pub fn sample_ue_positions<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> Vec<Vec3> {
    let facing = cfg.ap_position[1].atan2(cfg.ap_position[0]);
    (0..cfg.num_ues)
        .map(|_| {
            let rho = cfg.radius * rng.random::<f64>().sqrt();
            let theta = facing + PI * (rng.random::<f64>() - 0.5);
            [rho * theta.cos(), rho * theta.sin(), 0.0]
        })
        .collect()
}

/// Independent random streams derived from one master seed, so toggling one
/// noise source does not perturb the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Positions = 1,
    Channels = 2,
    Arrivals = 3,
    CeNoise = 4,
    Losses = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
