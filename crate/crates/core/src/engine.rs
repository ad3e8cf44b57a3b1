//! Slot loop, run summaries, parameter sweeps and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{
    build_codebooks, capacity, draw_channels, dump_channels, Codebooks, CHANNEL_DUMP_HEADER,
};
use crate::control_plane::{
    apply_loss_effects, compute_timing, sample_outcomes, update_es_view, History, PacketOutcomes,
    SlotTiming,
};
use crate::dynamics::{actual_throughput, draw_arrivals, latency, step_queues, QueueState};
use crate::energy::{slot_energy, EnergyLedger};
use crate::error::{Result, SimError};
use crate::estimation::{estimate, CsiEstimate, PilotEstimator};
use crate::ra::{allocate, update_virtual_queues, VirtualQueues};
use crate::scenario::{stream_rng, Geometry, PacketLossProbs, PacketType, ScenarioConfig, Stream};

/// Per-UE quantities of one slot. Queues are post-step, i.e. Q(t+1).
#[derive(Debug, Clone, PartialEq)]
pub struct UeSlot {
    pub local: f64,
    pub remote: f64,
    pub total: f64,
    pub latency: Option<f64>,
    pub es_view: f64,
    pub virtual_queue: f64,
    /// Nominal rate actually used.
    pub rate: f64,
    pub actual_rate: f64,
    pub capacity: f64,
    pub power: f64,
    pub cpu: f64,
    pub arrivals: f64,
    pub transferred: f64,
    pub processed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotLedger {
    pub slot: usize,
    pub timing: SlotTiming,
    pub outcomes: PacketOutcomes,
    pub beam: usize,
    pub ris_active_planned: usize,
    pub ris_active_applied: usize,
    pub ris_applied: String,
    pub ra_objective: f64,
    pub ra_fallback: bool,
    pub ues: Vec<UeSlot>,
    pub energy: EnergyLedger,
}

impl SlotLedger {
    /// True if any UE lost its payload to rate/capacity mismatch.
    pub fn gated(&self) -> bool {
        self.ues.iter().any(|u| u.actual_rate != u.rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub num_slots: usize,
    /// Mean of E_σ^tot over slots [J].
    pub mean_energy: f64,
    /// mean_energy / τ [W].
    pub mean_power: f64,
    /// max_k L_k after the last slot [s].
    pub max_final_latency: Option<f64>,
    /// max_k of the time-averaged L_k [s].
    pub max_mean_latency: Option<f64>,
    /// Per UE, L_k after every slot.
    pub latency_trajectories: Vec<Vec<Option<f64>>>,
    /// max_final_latency > L̄.
    pub violation: bool,
    pub gated_slots: usize,
    /// Largest relative mismatch of arrived vs queued + processed bits.
    pub conservation_error: f64,
    pub metadata: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<SlotLedger>,
}

/// Codebooks and estimator precomputed for one configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: ScenarioConfig,
    pub codebooks: Codebooks,
    pub pilot: PilotEstimator,
    pub timing: SlotTiming,
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let timing = compute_timing(&cfg)?;
        let codebooks = build_codebooks(&cfg);
        let pilot = PilotEstimator::new(&codebooks);
        Ok(Self {
            cfg,
            codebooks,
            pilot,
            timing,
        })
    }

    pub fn metadata(&self, seed: u64) -> Vec<(String, String)> {
        let mut m = self.cfg.metadata();
        if let Some(entry) = m.iter_mut().find(|(k, _)| k == "seed") {
            entry.1 = seed.to_string();
        }
        m.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
        m.push(("ap_codebook".into(), "dft_steering".into()));
        m.push(("ce_codebook".into(), "hadamard".into()));
        m.push(("ctl_config".into(), "all_on_phase0".into()));
        m.push(("tau_ctl_s".into(), format!("{:e}", self.timing.tau_ctl)));
        m.push(("tau_ra_s".into(), format!("{:e}", self.timing.tau_ra)));
        for w in &self.codebooks.warnings {
            m.push(("warning".into(), w.clone()));
        }
        if let Some(d) = self.pilot.diagnostic() {
            if self.cfg.ce_mode == crate::scenario::CeMode::PilotLevel {
                m.push(("warning".into(), d));
            }
        }
        m
    }

    pub fn run(&self, seed: u64) -> Result<RunOutput> {
        self.run_with_dump(seed, None::<&mut csv::Writer<File>>)
    }

    /// Run one seed, optionally dumping every channel realization.
    pub fn run_with_dump<W: Write>(
        &self,
        seed: u64,
        mut dump: Option<&mut csv::Writer<W>>,
    ) -> Result<RunOutput> {
        let cfg = &self.cfg;
        let cb = &self.codebooks;
        let timing = self.timing;
        let k_n = cfg.num_ues;
        let bw = cfg.bandwidth_per_ue();

        let geo = Geometry::for_config(&mut stream_rng(seed, Stream::Positions), cfg);
        geo.check_non_degenerate()?;
        let mut rng_ch = stream_rng(seed, Stream::Channels);
        let mut rng_arr = stream_rng(seed, Stream::Arrivals);
        let mut rng_ce = stream_rng(seed, Stream::CeNoise);
        let mut rng_loss = stream_rng(seed, Stream::Losses);

        let mut queues = QueueState::empty(k_n);
        let mut vq = VirtualQueues::new(k_n);
        let mut history = History::initial(k_n, &cb.ctl_config);
        let mut trace = Vec::with_capacity(cfg.num_slots);

        for t in 0..cfg.num_slots {
            let wrap = |e: SimError| SimError::Slot {
                slot: t,
                source: Box::new(e),
            };
            let chan = draw_channels(&mut rng_ch, cfg, &geo, t).map_err(wrap)?;
            if let Some(w) = dump.as_mut() {
                dump_channels(w, &chan).map_err(wrap)?;
            }

            // Initialization: INI-U carries queue state, INI-R starts the CE.
            let outcomes = sample_outcomes(&mut rng_loss, cfg);
            update_es_view(&mut queues, &outcomes);

            let csi = if outcomes.ini_r_lost {
                CsiEstimate::invalid(cfg)
            } else {
                estimate(&mut rng_ce, &chan, cb, &self.pilot, cfg)
            };

            let decision = allocate(
                &csi,
                &queues.es_view,
                &queues.remote,
                &vq,
                cb,
                timing.tau_pay,
                cfg,
            );

            // Setup: SET-U / SET-R may fail.
            let eff = apply_loss_effects(&outcomes, &decision, &history);

            // Payload on the true channel.
            let w = &cb.ap_beams[decision.beam];
            let phi = eff.ris.phi();
            let mut caps = vec![0.0; k_n];
            let mut actual = vec![0.0; k_n];
            for k in 0..k_n {
                let gain = chan.effective(k, w, &phi).norm_sqr();
                caps[k] = capacity(gain, eff.power[k], bw, cfg.noise_density);
                actual[k] = actual_throughput(eff.rate[k], caps[k]);
            }

            let arrivals = draw_arrivals(&mut rng_arr, cfg, cfg.slot);
            let (next, flows) = step_queues(
                &queues,
                &actual,
                &decision.cpu,
                &arrivals,
                timing.tau_pay,
                cfg,
            );
            vq = update_virtual_queues(&vq, &next.totals(), cfg);
            let energy = slot_energy(&timing, &eff.power, &eff.ris, cfg);

            let ues = (0..k_n)
                .map(|k| UeSlot {
                    local: next.local[k],
                    remote: next.remote[k],
                    total: next.total(k),
                    latency: latency(next.total(k), cfg.arrival_rate),
                    es_view: queues.es_view[k],
                    virtual_queue: vq.z[k],
                    rate: eff.rate[k],
                    actual_rate: actual[k],
                    capacity: caps[k],
                    power: eff.power[k],
                    cpu: decision.cpu[k],
                    arrivals: arrivals[k],
                    transferred: flows.transferred[k],
                    processed: flows.processed[k],
                })
                .collect();
            trace.push(SlotLedger {
                slot: t,
                timing,
                outcomes,
                beam: decision.beam,
                ris_active_planned: decision.ris.num_active(),
                ris_active_applied: eff.ris.num_active(),
                ris_applied: eff.ris.encode(),
                ra_objective: decision.objective,
                ra_fallback: decision.fallback,
                ues,
                energy,
            });
            history = eff.to_history();
            queues = next;
        }

        let summary = summarize(seed, cfg, &trace, self.metadata(seed));
        Ok(RunOutput { summary, trace })
    }
}

/// Build a summary from a trace.
pub fn summarize(
    seed: u64,
    cfg: &ScenarioConfig,
    trace: &[SlotLedger],
    metadata: Vec<(String, String)>,
) -> RunSummary {
    let n = trace.len();
    let k_n = cfg.num_ues;
    let mean_energy = if n == 0 {
        0.0
    } else {
        trace.iter().map(|s| s.energy.total).sum::<f64>() / n as f64
    };
    let latency_trajectories: Vec<Vec<Option<f64>>> = (0..k_n)
        .map(|k| trace.iter().map(|s| s.ues[k].latency).collect())
        .collect();
    let max_opt = |it: &mut dyn Iterator<Item = Option<f64>>| -> Option<f64> {
        it.flatten().fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
    };
    let max_final_latency = trace
        .last()
        .and_then(|s| max_opt(&mut s.ues.iter().map(|u| u.latency)));
    let max_mean_latency = if n == 0 {
        None
    } else {
        max_opt(&mut latency_trajectories.iter().map(|traj| {
            let vals: Vec<f64> = traj.iter().flatten().copied().collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        }))
    };
    RunSummary {
        seed,
        num_slots: n,
        mean_energy,
        mean_power: mean_energy / cfg.slot,
        max_final_latency,
        max_mean_latency,
        latency_trajectories,
        violation: max_final_latency.is_some_and(|l| l > cfg.latency_bound),
        gated_slots: trace.iter().filter(|s| s.gated()).count(),
        conservation_error: conservation_error(trace),
        metadata,
    }
}

/// Convenience: build a simulator and run with the configured seed.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Simulator::new(cfg.clone())?.run(cfg.seed)
}

/// Largest relative violation of "arrived = queued + processed" over every
/// UE and slot of a trace.
pub fn conservation_error(trace: &[SlotLedger]) -> f64 {
    let Some(first) = trace.first() else {
        return 0.0;
    };
    let k_n = first.ues.len();
    let mut worst: f64 = 0.0;
    for k in 0..k_n {
        let (mut arrived, mut processed) = (0.0, 0.0);
        for s in trace {
            let u = &s.ues[k];
            arrived += u.arrivals;
            processed += u.processed;
            let err = (u.total + processed - arrived).abs() / arrived.max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    /// Slot duration τ [s].
    Tau,
    /// Loss probability of one packet type, all others reliable.
    PacketLoss(PacketType),
    /// CE codebook size C_ce, crossed with rate backoff values.
    Ce,
}

impl SweepAxis {
    pub fn name(&self) -> String {
        match self {
            SweepAxis::Tau => "tau".into(),
            SweepAxis::PacketLoss(p) => format!("perr:{p}"),
            SweepAxis::Ce => "ce".into(),
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tau" => Ok(SweepAxis::Tau),
            "ce" => Ok(SweepAxis::Ce),
            _ => match s.strip_prefix("perr:") {
                Some(p) => Ok(SweepAxis::PacketLoss(p.parse()?)),
                None => Err(format!("unknown axis `{s}` (tau, perr:TYPE, ce)")),
            },
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Axis value; slot duration in seconds for `tau`.
    pub value: f64,
    /// Rate backoff applied at this point.
    pub mu: f64,
    pub cfg: ScenarioConfig,
}

/// Expand axis values (and μ values for the CE axis) into configurations.
pub fn sweep_points(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    mu_values: &[f64],
) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &v in values {
        match axis {
            SweepAxis::Tau => out.push(SweepPoint {
                value: v,
                mu: base.rate_backoff,
                cfg: ScenarioConfig {
                    slot: v,
                    ..base.clone()
                },
            }),
            SweepAxis::PacketLoss(p) => out.push(SweepPoint {
                value: v,
                mu: base.rate_backoff,
                cfg: ScenarioConfig {
                    packet_loss: PacketLossProbs::only(p, v),
                    ..base.clone()
                },
            }),
            SweepAxis::Ce => {
                let mus = if mu_values.is_empty() {
                    vec![base.rate_backoff]
                } else {
                    mu_values.to_vec()
                };
                for mu in mus {
                    out.push(SweepPoint {
                        value: v,
                        mu,
                        cfg: ScenarioConfig {
                            ce_codebook_size: v.round() as usize,
                            rate_backoff: mu,
                            ..base.clone()
                        },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: usize,
    pub value: f64,
    pub mu: f64,
    pub seed: u64,
    pub result: std::result::Result<RunSummary, String>,
}

/// Run every point for seeds `base.seed .. base.seed + seeds` in parallel;
/// rows come back in (point, seed) order. Failed points keep their error.
pub fn sweep(points: &[SweepPoint], seeds: usize) -> Vec<SweepRow> {
    let sims: Vec<std::result::Result<Simulator, String>> = points
        .par_iter()
        .map(|p| Simulator::new(p.cfg.clone()).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..seeds as u64).map(move |s| (i, p.cfg.seed + s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, seed)| SweepRow {
            point: i,
            value: points[i].value,
            mu: points[i].mu,
            seed,
            result: match &sims[i] {
                Ok(sim) => sim.run(seed).map(|o| o.summary).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            },
        })
        .collect()
}

/// Seed-averaged view of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub value: f64,
    pub mu: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_energy: f64,
    pub mean_power: f64,
    pub max_final_latency: Option<f64>,
    pub max_mean_latency: Option<f64>,
    pub violation_rate: f64,
    pub error: Option<String>,
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let point = rows[i].point;
        let group: Vec<&SweepRow> = rows[i..].iter().take_while(|r| r.point == point).collect();
        i += group.len();
        let ok: Vec<&RunSummary> = group
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        let mean = |f: &dyn Fn(&RunSummary) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
            }
        };
        let mean_opt = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
            let v: Vec<f64> = ok.iter().filter_map(|s| f(s)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        out.push(AggregateRow {
            point,
            value: group[0].value,
            mu: group[0].mu,
            runs: ok.len(),
            failed: group.len() - ok.len(),
            mean_energy: mean(&|s| s.mean_energy),
            mean_power: mean(&|s| s.mean_power),
            max_final_latency: mean_opt(&|s| s.max_final_latency),
            max_mean_latency: mean_opt(&|s| s.max_mean_latency),
            violation_rate: mean(&|s| if s.violation { 1.0 } else { 0.0 }),
            error: group.iter().find_map(|r| r.result.as_ref().err().cloned()),
        });
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create_with_metadata(path: &Path, metadata: &[(String, String)]) -> Result<BufWriter<File>> {
    let mut f = BufWriter::new(File::create(path)?);
    for (k, v) in metadata {
        writeln!(f, "# {k} = {v}")?;
    }
    Ok(f)
}

pub fn write_trace(path: &Path, metadata: &[(String, String)], trace: &[SlotLedger]) -> Result<()> {
    let f = create_with_metadata(path, metadata)?;
    let mut w = csv::Writer::from_writer(f);
    let k_n = trace.first().map_or(0, |s| s.ues.len());
    let mut header: Vec<String> = [
        "slot",
        "tau_ini",
        "tau_ce",
        "tau_ra",
        "tau_set",
        "tau_pay",
        "beam",
        "ris_active_planned",
        "ris_active_applied",
        "ris_applied",
        "ra_objective",
        "ra_fallback",
        "ini_r_lost",
        "set_r_lost",
        "e_es",
        "e_es_ctl",
        "e_ap",
        "e_ris",
        "e_ris_ctl",
        "e_total",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let per_ue = [
        "q_u",
        "q_e",
        "q",
        "latency",
        "es_view",
        "z",
        "rate",
        "actual_rate",
        "capacity",
        "power",
        "cpu",
        "arrivals",
        "transferred",
        "processed",
        "ini_u_lost",
        "set_u_lost",
        "e_ue",
        "e_ue_ctl",
    ];
    for k in 0..k_n {
        for c in per_ue {
            header.push(format!("{c}_{k}"));
        }
    }
    w.write_record(&header)?;
    for s in trace {
        let mut rec = vec![
            s.slot.to_string(),
            s.timing.tau_ini.to_string(),
            s.timing.tau_ce.to_string(),
            s.timing.tau_ra.to_string(),
            s.timing.tau_set.to_string(),
            s.timing.tau_pay.to_string(),
            s.beam.to_string(),
            s.ris_active_planned.to_string(),
            s.ris_active_applied.to_string(),
            s.ris_applied.clone(),
            s.ra_objective.to_string(),
            s.ra_fallback.to_string(),
            s.outcomes.ini_r_lost.to_string(),
            s.outcomes.set_r_lost.to_string(),
            s.energy.es.to_string(),
            s.energy.es_ctl.to_string(),
            s.energy.ap.to_string(),
            s.energy.ris.to_string(),
            s.energy.ris_ctl.to_string(),
            s.energy.total.to_string(),
        ];
        for (k, u) in s.ues.iter().enumerate() {
            rec.extend([
                u.local.to_string(),
                u.remote.to_string(),
                u.total.to_string(),
                opt(u.latency),
                u.es_view.to_string(),
                u.virtual_queue.to_string(),
                u.rate.to_string(),
                u.actual_rate.to_string(),
                u.capacity.to_string(),
                u.power.to_string(),
                u.cpu.to_string(),
                u.arrivals.to_string(),
                u.transferred.to_string(),
                u.processed.to_string(),
                s.outcomes.ini_u_lost[k].to_string(),
                s.outcomes.set_u_lost[k].to_string(),
                s.energy.ue[k].to_string(),
                s.energy.ue_ctl[k].to_string(),
            ]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const SUMMARY_HEADER: [&str; 10] = [
    "point",
    "value",
    "mu",
    "seed",
    "mean_energy_j",
    "mean_power_w",
    "max_final_latency_s",
    "max_mean_latency_s",
    "violation",
    "error",
];

fn summary_record(
    point: usize,
    value: f64,
    mu: f64,
    seed: u64,
    r: &std::result::Result<RunSummary, String>,
) -> Vec<String> {
    match r {
        Ok(s) => vec![
            point.to_string(),
            value.to_string(),
            mu.to_string(),
            seed.to_string(),
            s.mean_energy.to_string(),
            s.mean_power.to_string(),
            opt(s.max_final_latency),
            opt(s.max_mean_latency),
            s.violation.to_string(),
            String::new(),
        ],
        Err(e) => vec![
            point.to_string(),
            value.to_string(),
            mu.to_string(),
            seed.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            e.clone(),
        ],
    }
}

/// Long-format per-run table.
pub fn write_summary(path: &Path, metadata: &[(String, String)], rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_with_metadata(path, metadata)?);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(summary_record(r.point, r.value, r.mu, r.seed, &r.result))?;
    }
    w.flush()?;
    Ok(())
}

/// Single-run summary in the same layout as a sweep table.
pub fn write_run_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_with_metadata(path, &summary.metadata)?);
    w.write_record(SUMMARY_HEADER)?;
    let mu = summary
        .metadata
        .iter()
        .find(|(k, _)| k == "rate_backoff")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(1.0);
    w.write_record(summary_record(
        0,
        f64::NAN,
        mu,
        summary.seed,
        &Ok(summary.clone()),
    ))?;
    w.flush()?;
    Ok(())
}

pub fn write_aggregate(
    path: &Path,
    metadata: &[(String, String)],
    rows: &[AggregateRow],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_with_metadata(path, metadata)?);
    w.write_record([
        "point",
        "value",
        "mu",
        "runs",
        "failed",
        "mean_energy_j",
        "mean_power_w",
        "max_final_latency_s",
        "max_mean_latency_s",
        "violation_rate",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.point.to_string(),
            r.value.to_string(),
            r.mu.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.mean_energy.to_string(),
            r.mean_power.to_string(),
            opt(r.max_final_latency),
            opt(r.max_mean_latency),
            r.violation_rate.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run one seed and write `trace.csv`, `summary.csv` and optionally
/// `channels.csv` into `dir`.
pub fn run_to_dir(sim: &Simulator, seed: u64, dir: &Path, dump: bool) -> Result<RunOutput> {
    std::fs::create_dir_all(dir)?;
    let out = if dump {
        let f = File::create(dir.join("channels.csv"))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        w.write_record(CHANNEL_DUMP_HEADER)?;
        let out = sim.run_with_dump(seed, Some(&mut w))?;
        w.flush()?;
        out
    } else {
        sim.run(seed)?
    };
    write_trace(&dir.join("trace.csv"), &out.summary.metadata, &out.trace)?;
    write_run_summary(&dir.join("summary.csv"), &out.summary)?;
    Ok(out)
}
