//! Rayleigh block-fading channels, RIS configurations, codebooks, and the
//! rate/capacity maps.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};
use crate::scenario::{Geometry, ScenarioConfig};

pub type C64 = Complex64;

/// Direct and reflected channel coefficients of every UE. Shared by the true
/// channel and by CSI estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrices {
    /// d_k, length M.
    pub direct: Vec<DVector<C64>>,
    /// G_k, M×N.
    pub reflected: Vec<DMatrix<C64>>,
}

impl ChannelMatrices {
    pub fn num_ues(&self) -> usize {
        self.direct.len()
    }

    /// g = wᴴ(d_k + G_k φ).
    pub fn effective(&self, k: usize, w: &DVector<C64>, phi: &DVector<C64>) -> C64 {
        effective_channel(&self.direct[k], &self.reflected[k], w, phi)
    }

    pub fn zeros(k: usize, m: usize, n: usize) -> Self {
        Self {
            direct: vec![DVector::zeros(m); k],
            reflected: vec![DMatrix::zeros(m, n); k],
        }
    }
}

/// One slot's true channel, with the link factors it was composed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub slot: usize,
    pub matrices: ChannelMatrices,
    /// r_k: UE→RIS links, length N per UE.
    pub ue_ris: Vec<DVector<C64>>,
    /// Row m holds g_m, the RIS→antenna-m link (M×N), common to all UEs.
    pub ris_ap: DMatrix<C64>,
}

impl ChannelRealization {
    pub fn effective(&self, k: usize, w: &DVector<C64>, phi: &DVector<C64>) -> C64 {
        self.matrices.effective(k, w, phi)
    }
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Fresh independent realization for one slot.
pub fn draw_channels<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ScenarioConfig,
    geo: &Geometry,
    slot: usize,
) -> Result<ChannelRealization> {
    geo.check_non_degenerate()?;
    let (k_n, m_n, n_n) = (cfg.num_ues, cfg.num_antennas, cfg.num_elements);
    if geo.ue_positions.len() != k_n {
        return Err(SimError::Geometry(format!(
            "{} UE positions for {k_n} UEs",
            geo.ue_positions.len()
        )));
    }
    let s0 = cfg.ref_gain;

    let var_ra = s0 / geo.ris_ap_dist.powi(2);
    let ris_ap = DMatrix::from_fn(m_n, n_n, |_, _| complex_normal(rng, var_ra));

    let mut direct = Vec::with_capacity(k_n);
    let mut ue_ris = Vec::with_capacity(k_n);
    let mut reflected = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let var_d = s0 * geo.ue_ap_dist[k].powi(-3);
        direct.push(DVector::from_fn(m_n, |_, _| complex_normal(rng, var_d)));
        let var_r = s0 / geo.ue_ris_dist[k].powi(2);
        let r = DVector::from_fn(n_n, |_, _| complex_normal(rng, var_r));
        reflected.push(DMatrix::from_fn(m_n, n_n, |m, n| r[n] * ris_ap[(m, n)]));
        ue_ris.push(r);
    }
    Ok(ChannelRealization {
        slot,
        matrices: ChannelMatrices { direct, reflected },
        ue_ris,
        ris_ap,
    })
}

/// g = wᴴ(d + Gφ).
pub fn effective_channel(
    d: &DVector<C64>,
    g: &DMatrix<C64>,
    w: &DVector<C64>,
    phi: &DVector<C64>,
) -> C64 {
    w.dotc(&(d + g * phi))
}

/// Shannon capacity B_k·log2(1 + P|g|²/(N0·B_k)).
pub fn capacity(gain: f64, power: f64, bw: f64, n0: f64) -> f64 {
    if power <= 0.0 || gain <= 0.0 {
        return 0.0;
    }
    bw * (power * gain / (n0 * bw)).ln_1p() / std::f64::consts::LN_2
}

/// Nominal throughput on estimated CSI, discounted by μ_d.
pub fn nominal_rate(gain_est: f64, power: f64, bw: f64, n0: f64, mu_d: f64) -> f64 {
    mu_d * capacity(gain_est, power, bw, n0)
}

/// Activation and b-bit phase index per element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RisConfiguration {
    pub active: Vec<bool>,
    pub phase: Vec<u16>,
    pub phase_bits: u32,
}

impl RisConfiguration {
    pub fn all_on(n: usize, phase_bits: u32) -> Self {
        Self {
            active: vec![true; n],
            phase: vec![0; n],
            phase_bits,
        }
    }

    pub fn all_off(n: usize, phase_bits: u32) -> Self {
        Self {
            active: vec![false; n],
            phase: vec![0; n],
            phase_bits,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// e^{j2πi/2^b}.
    pub fn phase_value(phase: u16, phase_bits: u32) -> C64 {
        let levels = (1u32 << phase_bits) as f64;
        C64::from_polar(1.0, 2.0 * PI * phase as f64 / levels)
    }

    /// φ_n = α_n·e^{j2πi_n/2^b}.
    pub fn phi(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.len(),
            self.active.iter().zip(&self.phase).map(|(&a, &p)| {
                if a {
                    Self::phase_value(p, self.phase_bits)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        )
    }

    /// Compact text form: `-` for off, otherwise the phase index in hex.
    pub fn encode(&self) -> String {
        self.active
            .iter()
            .zip(&self.phase)
            .map(|(&a, &p)| {
                if a {
                    char::from_digit(u32::from(p) % 36, 36).unwrap_or('?')
                } else {
                    '-'
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    /// C_ap unit-norm beams of length M.
    pub ap_beams: Vec<DVector<C64>>,
    /// C_ce all-active configurations swept during CE.
    pub ce_configs: Vec<RisConfiguration>,
    /// Configuration held during control signalling.
    pub ctl_config: RisConfiguration,
    /// Construction caveats, echoed into run metadata.
    pub warnings: Vec<String>,
}

/// Sylvester construction, `order` must be a power of two.
fn hadamard(order: usize) -> Vec<Vec<i8>> {
    let mut h = vec![vec![1i8]];
    while h.len() < order {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

pub fn build_codebooks(cfg: &ScenarioConfig) -> Codebooks {
    let mut warnings = Vec::new();
    let (m_n, n_n, b) = (cfg.num_antennas, cfg.num_elements, cfg.phase_bits);

    // Steering beams of a half-wavelength ULA, evenly spread over the
    // azimuth sector facing the UEs.
    let c_ap = cfg.ap_codebook_size;
    let scale = 1.0 / (m_n as f64).sqrt();
    let ap_beams = (0..c_ap)
        .map(|c| {
            let theta = if c_ap == 1 {
                0.0
            } else {
                -PI / 2.0 + PI * (c as f64 + 0.5) / c_ap as f64
            };
            DVector::from_fn(m_n, |m, _| {
                C64::from_polar(scale, PI * m as f64 * theta.sin())
            })
        })
        .collect();

    let order = n_n.next_power_of_two();
    if order != n_n {
        warnings.push(format!(
            "N = {n_n} is not a power of two; CE codebook uses the first {n_n} rows of a \
             {order}-order Hadamard design and is not orthogonal"
        ));
    }
    if cfg.ce_codebook_size > n_n {
        warnings.push(format!(
            "C_ce = {} exceeds N = {n_n}; CE codebook repeats Hadamard columns cyclically",
            cfg.ce_codebook_size
        ));
    }
    let h = hadamard(order);
    let half = 1u16 << (b - 1);
    let ce_configs = (0..cfg.ce_codebook_size)
        .map(|c| {
            let col = c % order;
            RisConfiguration {
                active: vec![true; n_n],
                phase: (0..n_n)
                    .map(|n| if h[n][col] > 0 { 0 } else { half })
                    .collect(),
                phase_bits: b,
            }
        })
        .collect();

    Codebooks {
        ap_beams,
        ce_configs,
        ctl_config: RisConfiguration::all_on(n_n, b),
        warnings,
    }
}

/// Write one realization as long-format CSV rows
/// `slot,ue,path,antenna,element,re,im`; the direct path leaves `element` empty.
pub fn dump_channels<W: Write>(out: &mut csv::Writer<W>, chan: &ChannelRealization) -> Result<()> {
    let slot = chan.slot.to_string();
    for (k, (d, g)) in chan
        .matrices
        .direct
        .iter()
        .zip(&chan.matrices.reflected)
        .enumerate()
    {
        let ue = k.to_string();
        for (m, v) in d.iter().enumerate() {
            out.write_record([
                slot.as_str(),
                &ue,
                "direct",
                &m.to_string(),
                "",
                &format!("{:e}", v.re),
                &format!("{:e}", v.im),
            ])?;
        }
        for n in 0..g.ncols() {
            for m in 0..g.nrows() {
                let v = g[(m, n)];
                out.write_record([
                    slot.as_str(),
                    &ue,
                    "reflected",
                    &m.to_string(),
                    &n.to_string(),
                    &format!("{:e}", v.re),
                    &format!("{:e}", v.im),
                ])?;
            }
        }
    }
    Ok(())
}

pub const CHANNEL_DUMP_HEADER: [&str; 7] = ["slot", "ue", "path", "antenna", "element", "re", "im"];
