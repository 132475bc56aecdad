//! FLOPs counting and 45nm energy estimates for spiking conv/FC stacks.
//!
//! Synaptic layers fed by float inputs cost `E_MAC` per FLOP. Layers fed by
//! spikes cost `E_AC * T * R * FLOPs`, where `R` is the input firing rate.
//! Neuron-internal updates are priced at `E_AC` per FLOP, except sigmoids,
//! which cost two shifts and one addition.
//!
//! All counts are per sample and per timestep as written. Published totals
//! are aggregated over more than one sample, so [`EnergyConfig::scale`]
//! multiplies the per-sample figure before conversion to millijoules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeuronKind {
    Lif,
    Psn,
    SlidingPsn,
    /// Dynamic decay with a `k`-tap conv.
    Dsn { k: usize },
}

impl NeuronKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lif" => Ok(NeuronKind::Lif),
            "psn" => Ok(NeuronKind::Psn),
            "sliding-psn" | "spsn" => Ok(NeuronKind::SlidingPsn),
            "dsn" => Ok(NeuronKind::Dsn { k: 4 }),
            other => Err(Error::InvalidParameter(format!("unknown neuron kind {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NeuronKind::Lif => "lif",
            NeuronKind::Psn => "psn",
            NeuronKind::SlidingPsn => "sliding-psn",
            NeuronKind::Dsn { .. } => "dsn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv1d {
        name: String,
        k: usize,
        d: usize,
        c_in: usize,
        c_out: usize,
        input_is_spike: bool,
    },
    FullyConnected {
        name: String,
        i: usize,
        o: usize,
        input_is_spike: bool,
    },
    Neuron {
        name: String,
        kind: NeuronKind,
        /// Neuron count of the layer.
        c: usize,
        t: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv1d { name, .. } | LayerSpec::FullyConnected { name, .. } | LayerSpec::Neuron { name, .. } => {
                name
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let dims: &[usize] = match self {
            LayerSpec::Conv1d { k, d, c_in, c_out, .. } => &[*k, *d, *c_in, *c_out],
            LayerSpec::FullyConnected { i, o, .. } => &[*i, *o],
            LayerSpec::Neuron { c, t, kind, .. } => match kind {
                NeuronKind::Dsn { k } => &[*c, *t, *k],
                _ => &[*c, *t],
            },
        };
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("layer {}: extents must be positive", self.name())));
        }
        Ok(())
    }

    /// Synaptic layers fed by spikes need a firing rate.
    pub fn spike_driven(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv1d { input_is_spike: true, .. } | LayerSpec::FullyConnected { input_is_spike: true, .. }
        )
    }
}

/// FLOPs of a neuron layer split by how they are priced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuronFlops {
    pub additions: f64,
    pub sigmoids: f64,
}

impl NeuronFlops {
    pub fn total(&self) -> f64 {
        self.additions + self.sigmoids
    }
}

pub fn neuron_flops(kind: NeuronKind, c: usize, t: usize) -> NeuronFlops {
    let (c, t) = (c as f64, t as f64);
    match kind {
        NeuronKind::Lif => NeuronFlops {
            additions: c * t,
            sigmoids: 0.0,
        },
        NeuronKind::Psn => NeuronFlops {
            additions: c * t * t,
            sigmoids: 0.0,
        },
        NeuronKind::SlidingPsn => NeuronFlops {
            additions: 0.5 * c * t * t,
            sigmoids: 0.0,
        },
        // conv k*c*T, membrane update c*T, sigmoid c*T
        NeuronKind::Dsn { k } => NeuronFlops {
            additions: (k as f64 + 1.0) * c * t,
            sigmoids: c * t,
        },
    }
}

pub fn count_flops(layer: &LayerSpec) -> Result<f64> {
    layer.validate()?;
    Ok(match *layer {
        LayerSpec::Conv1d { k, d, c_in, c_out, .. } => (k * d * c_in * c_out) as f64,
        LayerSpec::FullyConnected { i, o, .. } => (i * o) as f64,
        LayerSpec::Neuron { kind, c, t, .. } => neuron_flops(kind, c, t).total(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub e_mac: f64,
    pub e_ac: f64,
    pub e_shift: f64,
    /// Multiplier applied to per-sample energy before reporting totals.
    pub scale: f64,
}

/// Samples aggregated in the reference totals (128 samples x 32 steps).
pub const REFERENCE_SCALE: f64 = 4096.0;

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            e_mac: 4.6,
            e_ac: 0.9,
            e_shift: 0.72,
            scale: 1.0,
        }
    }
}

impl EnergyConfig {
    /// Two shifts and one addition.
    pub fn sigmoid_pj(&self) -> f64 {
        2.0 * self.e_shift + self.e_ac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub name: String,
    pub flops: f64,
    pub firing_rate: Option<f64>,
    pub mac_energy_pj: f64,
    pub ac_energy_pj: f64,
    pub sigmoid_energy_pj: f64,
}

impl LayerEnergy {
    pub fn total_pj(&self) -> f64 {
        self.mac_energy_pj + self.ac_energy_pj + self.sigmoid_energy_pj
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub layers: Vec<LayerEnergy>,
    pub t: usize,
    pub config: EnergyConfig,
    /// Per-sample total in picojoules.
    pub total_pj: f64,
    /// `total_pj * scale`, in millijoules.
    pub total_mj: f64,
}

/// Prices every layer. `firing_rates` holds one rate per spike-driven
/// synaptic layer, in layer order.
pub fn estimate_energy(layers: &[LayerSpec], firing_rates: &[f64], t: usize, cfg: EnergyConfig) -> Result<EnergyReport> {
    let needed = layers.iter().filter(|l| l.spike_driven()).count();
    if firing_rates.len() < needed {
        return Err(Error::InvalidParameter(format!(
            "missing firing rate: {needed} spike-driven layers, {} rates",
            firing_rates.len()
        )));
    }
    if firing_rates.len() > needed {
        return Err(Error::InvalidParameter(format!(
            "{} firing rates for {needed} spike-driven layers",
            firing_rates.len()
        )));
    }
    if let Some(r) = firing_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParameter(format!("firing rate {r} must be finite and >= 0")));
    }
    let mut rates = firing_rates.iter();
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let flops = count_flops(layer)?;
        let mut e = LayerEnergy {
            name: layer.name().to_string(),
            flops,
            firing_rate: None,
            mac_energy_pj: 0.0,
            ac_energy_pj: 0.0,
            sigmoid_energy_pj: 0.0,
        };
        match layer {
            LayerSpec::Neuron { kind, c, t: tn, .. } => {
                let nf = neuron_flops(*kind, *c, *tn);
                e.ac_energy_pj = cfg.e_ac * nf.additions;
                e.sigmoid_energy_pj = cfg.sigmoid_pj() * nf.sigmoids;
            }
            _ if layer.spike_driven() => {
                let r = *rates.next().expect("counted above");
                e.firing_rate = Some(r);
                e.ac_energy_pj = cfg.e_ac * t as f64 * r * flops;
            }
            _ => e.mac_energy_pj = cfg.e_mac * flops,
        }
        out.push(e);
    }
    let total_pj: f64 = out.iter().map(LayerEnergy::total_pj).sum();
    Ok(EnergyReport {
        layers: out,
        t,
        config: cfg,
        total_pj,
        total_mj: total_pj * cfg.scale * 1e-9,
    })
}

/// Rate of one layer under both integer-spike conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiringRate {
    /// Mean spike count per neuron per timestep.
    pub mean_count: f64,
    /// `mean_count / n_max`.
    pub normalized: f64,
}

/// `spikes` is one tensor per layer, each holding spike counts.
pub fn measure_firing_rate(spikes: &[Tensor], n_max: u32) -> Result<Vec<FiringRate>> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    Ok(spikes
        .iter()
        .map(|s| {
            let mean_count = if s.is_empty() { 0.0 } else { s.mean() };
            FiringRate {
                mean_count,
                normalized: mean_count / f64::from(n_max),
            }
        })
        .collect())
}

/// Six-conv, two-FC classifier on 32-step sequences of 3 channels.
pub fn reference_architecture(kind: NeuronKind) -> Vec<LayerSpec> {
    const T: usize = 32;
    let conv = |n: usize, d: usize, c_in: usize| LayerSpec::Conv1d {
        name: format!("conv{n}"),
        k: 3,
        d,
        c_in,
        c_out: 128,
        input_is_spike: n > 1,
    };
    let neuron = |name: String, c: usize| LayerSpec::Neuron { name, kind, c, t: T };
    let mut layers = Vec::new();
    for n in 1..=6 {
        let d = if n <= 3 { 32 } else { 16 };
        layers.push(conv(n, d, if n == 1 { 3 } else { 128 }));
        layers.push(neuron(format!("neuron{n}"), 128 * d));
    }
    layers.push(LayerSpec::FullyConnected {
        name: "fc1".into(),
        i: 1024,
        o: 256,
        input_is_spike: true,
    });
    layers.push(neuron("neuron7".into(), 256));
    layers.push(LayerSpec::FullyConnected {
        name: "fc2".into(),
        i: 256,
        o: 10,
        input_is_spike: true,
    });
    layers
}

/// Published per-layer input firing rates (conv2..fc2) and total energy in
/// mJ for the reference architecture.
pub fn reference_rates(kind: NeuronKind) -> ([f64; 7], f64) {
    match kind {
        NeuronKind::Lif => ([0.1511, 0.1422, 0.1811, 0.1553, 0.1457, 0.0926, 0.0647], 107.80),
        NeuronKind::Psn => ([0.2200, 0.3101, 0.1575, 0.1542, 0.1516, 0.1439, 0.1239], 235.87),
        NeuronKind::SlidingPsn => ([0.1792, 0.1875, 0.1297, 0.2538, 0.1923, 0.0764, 0.1172], 170.39),
        NeuronKind::Dsn { .. } => ([0.1349, 0.1337, 0.1301, 0.1301, 0.0982, 0.0380, 0.0484], 102.89),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub neuron: String,
    pub estimated_mj: f64,
    pub reference_mj: f64,
    pub relative_error: f64,
    pub report: EnergyReport,
}

/// Recomputes the reference totals for all four neuron kinds.
pub fn reconcile_reference(cfg: EnergyConfig) -> Result<Vec<Reconciliation>> {
    [NeuronKind::Lif, NeuronKind::Psn, NeuronKind::SlidingPsn, NeuronKind::Dsn { k: 4 }]
        .into_iter()
        .map(|kind| {
            let (rates, reference_mj) = reference_rates(kind);
            let report = estimate_energy(&reference_architecture(kind), &rates, 32, cfg)?;
            Ok(Reconciliation {
                neuron: kind.label().into(),
                estimated_mj: report.total_mj,
                reference_mj,
                relative_error: report.total_mj / reference_mj - 1.0,
                report,
            })
        })
        .collect()
}

pub fn report_csv(report: &EnergyReport) -> String {
    let mut s = String::from("layer,flops,firing_rate,mac_pj,ac_pj,sigmoid_pj,total_pj\n");
    for l in &report.layers {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.name,
            l.flops,
            l.firing_rate.map(|r| r.to_string()).unwrap_or_default(),
            l.mac_energy_pj,
            l.ac_energy_pj,
            l.sigmoid_energy_pj,
            l.total_pj()
        ));
    }
    s
}

pub fn reconciliation_csv(rows: &[Reconciliation]) -> String {
    let mut s = String::from("neuron,sfr_mean,estimated_mj,reference_mj,relative_error\n");
    for r in rows {
        let rates: Vec<f64> = r.report.layers.iter().filter_map(|l| l.firing_rate).collect();
        let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
        s.push_str(&format!(
            "{},{:.4},{:.4},{:.2},{:.4}\n",
            r.neuron, mean, r.estimated_mj, r.reference_mj, r.relative_error
        ));
    }
    s
}
