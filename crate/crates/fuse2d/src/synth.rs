//! Deterministic synthetic recordings for tests and benchmarks.
//!
//! Each synthetic subject carries one no-stress condition followed by one
//! stress condition of equal length. The stress condition differs from the
//! no-stress baseline by a raised PPG pulse frequency, an upward EDA drift
//! with more frequent phasic bumps, and injected ACC motion bursts. Every
//! stress-specific delta scales with [`SynthConfig::class_separation`], so a
//! separation of zero yields identical generators for both conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{
    ChannelSpec, IntervalLabel, LabelInterval, Recording, SignalKind,
};

/// Parameters of the synthetic cohort.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Number of subjects to generate.
    pub subjects: u32,
    /// Length of each of the two conditions, in seconds.
    pub seconds_per_condition: u32,
    /// Scale of every stress-vs-baseline difference; 0 removes them all.
    pub class_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 2,
            seconds_per_condition: 60,
            class_separation: 1.0,
        }
    }
}

/// Per-condition generator parameters. All deltas scale with the separation.
#[derive(Debug, Clone, PartialEq)]
struct ConditionParams {
    /// Fundamental PPG pulse frequency in Hz.
    pulse_hz: f64,
    /// Total EDA level rise over the condition.
    eda_drift: f64,
    /// Phasic EDA bump starts per second.
    eda_bump_rate: f64,
    /// Amplitude of one phasic bump.
    eda_bump_amp: f64,
    /// ACC motion burst starts per second.
    acc_burst_rate: f64,
    /// Oscillation amplitude inside a burst.
    acc_burst_amp: f64,
}

fn condition_params(pulse_base_hz: f64, separation: f64, stress: bool) -> ConditionParams {
    let sep = if stress { separation } else { 0.0 };
    ConditionParams {
        pulse_hz: pulse_base_hz + 0.75 * sep,
        eda_drift: 0.8 * sep,
        eda_bump_rate: (1.0 + 5.0 * sep) / 60.0,
        eda_bump_amp: 0.15 + 0.35 * sep,
        acc_burst_rate: (0.5 + 2.5 * sep) / 60.0,
        acc_burst_amp: 0.1 + 0.4 * sep,
    }
}

/// Standard normal draw via Box-Muller.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a deterministic cohort of synthetic recordings.
///
/// The output is a pure function of `(config, seed)`: the same arguments give
/// byte-identical recordings, and different seeds give different samples.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Vec<Recording>> {
    if config.subjects == 0 {
        return Err(Error::InvalidConfig("subject count must be positive".into()));
    }
    if config.seconds_per_condition == 0 {
        return Err(Error::InvalidConfig(
            "per-condition duration must be positive".into(),
        ));
    }
    if !config.class_separation.is_finite() || config.class_separation < 0.0 {
        return Err(Error::InvalidConfig(
            "class separation must be finite and non-negative".into(),
        ));
    }

    (0..config.subjects)
        .map(|i| generate_subject(config, seed, i))
        .collect()
}

fn generate_subject(config: &SynthConfig, seed: u64, index: u32) -> Result<Recording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);

    let subject_id = format!("S{:02}", index + 1);
    let dur = config.seconds_per_condition;

    // Subject-level baselines.
    let pulse_base_hz = 1.0 + rng.gen_range(-0.08..0.08);
    let eda_base = 2.0 + rng.gen_range(0.0..1.0);

    let conditions = [
        (IntervalLabel::NoStress, condition_params(pulse_base_hz, config.class_separation, false)),
        (IntervalLabel::Stress, condition_params(pulse_base_hz, config.class_separation, true)),
    ];

    let mut ppg = Vec::with_capacity(2 * dur as usize * 64);
    let mut eda = Vec::with_capacity(2 * dur as usize * 4);
    let mut acc = Vec::with_capacity(2 * dur as usize * 32);
    let mut labels = Vec::with_capacity(2);

    let mut ppg_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut start_s = 0u32;
    for (label, params) in conditions {
        labels.push(LabelInterval::new(start_s, start_s + dur, label)?);
        synth_ppg(&mut rng, &params, dur, &mut ppg_phase, &mut ppg);
        synth_eda(&mut rng, &params, dur, eda_base, &mut eda);
        synth_acc(&mut rng, &params, dur, &mut acc);
        start_s += dur;
    }

    Recording::new(
        subject_id,
        ppg,
        eda,
        acc,
        labels,
        [
            ChannelSpec::default_for(SignalKind::Ppg),
            ChannelSpec::default_for(SignalKind::Eda),
            ChannelSpec::default_for(SignalKind::Acc),
        ],
    )
}

/// Pulse wave with a dicrotic harmonic, respiratory wobble and noise. The
/// instantaneous frequency jitters a little from second to second.
fn synth_ppg(
    rng: &mut ChaCha8Rng,
    params: &ConditionParams,
    seconds: u32,
    phase: &mut f64,
    out: &mut Vec<f64>,
) {
    const RATE: usize = 64;
    for s in 0..seconds {
        let jitter = 1.0 + 0.02 * gauss(rng);
        let hz = params.pulse_hz * jitter;
        for k in 0..RATE {
            let t = (s as usize * RATE + k) as f64 / RATE as f64;
            *phase += std::f64::consts::TAU * hz / RATE as f64;
            let pulse = phase.sin() + 0.3 * (2.0 * *phase + 1.0).sin();
            let resp = 0.15 * (std::f64::consts::TAU * 0.25 * t).sin();
            out.push(pulse + resp + 0.03 * gauss(rng));
        }
    }
}

/// Tonic level plus drift and exponentially decaying phasic bumps.
fn synth_eda(
    rng: &mut ChaCha8Rng,
    params: &ConditionParams,
    seconds: u32,
    base: f64,
    out: &mut Vec<f64>,
) {
    const RATE: usize = 4;
    const BUMP_TAU_S: f64 = 2.5;
    let decay = (-1.0 / (RATE as f64 * BUMP_TAU_S)).exp();
    let total = seconds as usize * RATE;
    let mut bump = 0.0f64;
    for k in 0..total {
        let frac = k as f64 / total as f64;
        bump *= decay;
        if rng.gen::<f64>() < params.eda_bump_rate / RATE as f64 {
            bump += params.eda_bump_amp * (0.7 + 0.6 * rng.gen::<f64>());
        }
        let slow = 0.1 * (std::f64::consts::TAU * 0.01 * (k as f64 / RATE as f64)).sin();
        out.push(base + slow + params.eda_drift * frac + bump + 0.01 * gauss(rng));
    }
}

/// Gravity-dominated baseline with occasional oscillatory motion bursts.
fn synth_acc(
    rng: &mut ChaCha8Rng,
    params: &ConditionParams,
    seconds: u32,
    out: &mut Vec<[f64; 3]>,
) {
    const RATE: usize = 32;
    const BURST_HZ: f64 = 8.0;
    let total = seconds as usize * RATE;
    let mut burst_left = 0usize;
    let mut burst_phase = [0.0f64; 3];
    for k in 0..total {
        if burst_left == 0 && rng.gen::<f64>() < params.acc_burst_rate / RATE as f64 {
            burst_left = (RATE as f64 * rng.gen_range(1.0..2.0)) as usize;
            for p in burst_phase.iter_mut() {
                *p = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
        let t = k as f64 / RATE as f64;
        let mut sample = [0.0f64; 3];
        for (axis, slot) in sample.iter_mut().enumerate() {
            let mut v = 0.02 * gauss(rng);
            if axis == 2 {
                v += 1.0; // gravity
            }
            if burst_left > 0 {
                v += params.acc_burst_amp
                    * (std::f64::consts::TAU * BURST_HZ * t + burst_phase[axis]).sin()
                    + 0.3 * params.acc_burst_amp * gauss(rng);
            }
            *slot = v;
        }
        burst_left = burst_left.saturating_sub(1);
        out.push(sample);
    }
}
