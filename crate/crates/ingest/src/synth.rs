//! Deterministic synthetic event datasets in the Provider-1 file layout.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IngestError, Result};
use crate::labels::LabelTaxonomy;
use crate::record::{ChannelSchema, PROVIDER1_CHANNELS};

pub const RECORDS_DIR: &str = "records";
pub const TAXONOMY_FILE: &str = "taxonomy.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const CLASSES_FILE: &str = "classes.tsv";
pub const SPEC_FILE: &str = "synth.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    AmplitudeSag,
    AmplitudeSwell,
    OscillationBurst,
    ImpulseTrain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub codes: Vec<String>,
    /// `None` leaves the record undisturbed.
    pub disturbance: Option<DisturbanceKind>,
    /// relative to the channel amplitude
    pub magnitude: f64,
    /// `[min, max]` event duration in seconds
    pub duration_s: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// total records, assigned to classes round-robin
    pub n_records: usize,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub base_freq_hz: f64,
    pub record_duration_s: f64,
    pub classes: Vec<ClassSpec>,
    /// `[min, max]` disturbance onset in seconds from the trigger at
    /// record start
    #[serde(default = "default_onset")]
    pub onset_s: [f64; 2],
    /// Gaussian noise standard deviation relative to the channel amplitude
    pub noise_std: f64,
    pub seed: u64,
}

fn default_onset() -> [f64; 2] {
    [0.2, 0.2]
}

impl Default for SyntheticSpec {
    /// Three event classes, 150 one-second records of six channels at 2 kHz.
    fn default() -> Self {
        Self {
            n_records: 150,
            channels: 6,
            sample_rate_hz: 2000.0,
            base_freq_hz: 60.0,
            record_duration_s: 1.0,
            classes: vec![
                ClassSpec {
                    name: "arcing".into(),
                    codes: vec!["EA".into(), "OU".into()],
                    disturbance: Some(DisturbanceKind::ImpulseTrain),
                    magnitude: 0.6,
                    duration_s: [0.25, 0.4],
                },
                ClassSpec {
                    name: "sag".into(),
                    codes: vec!["SG".into(), "DE".into()],
                    disturbance: Some(DisturbanceKind::AmplitudeSag),
                    magnitude: 0.5,
                    duration_s: [0.25, 0.4],
                },
                ClassSpec {
                    name: "transformer".into(),
                    codes: vec!["TN".into()],
                    disturbance: Some(DisturbanceKind::OscillationBurst),
                    magnitude: 0.4,
                    duration_s: [0.25, 0.4],
                },
            ],
            onset_s: default_onset(),
            noise_std: 0.01,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, taxonomy: &LabelTaxonomy) -> Result<()> {
        let bad = |m: String| Err(IngestError::InvalidSpec(m));
        if self.n_records == 0 {
            return bad("n_records must be positive".into());
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if !(self.sample_rate_hz > 0.0 && self.base_freq_hz > 0.0 && self.record_duration_s > 0.0) {
            return bad("rates and duration must be positive".into());
        }
        if self.base_freq_hz * 2.0 >= self.sample_rate_hz {
            return bad("base frequency above Nyquist".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be nonnegative".into());
        }
        let [on_lo, on_hi] = self.onset_s;
        if !(on_lo >= 0.0 && on_hi >= on_lo) {
            return bad("invalid onset window".into());
        }
        for c in &self.classes {
            if c.disturbance.is_some() && on_hi + c.duration_s[1] > self.record_duration_s {
                return bad(format!("class `{}`: latest onset plus longest duration exceeds the record", c.name));
            }
            if c.disturbance.is_some() && !(c.magnitude > 0.0) {
                return bad(format!("class `{}`: magnitude must be positive", c.name));
            }
            let [lo, hi] = c.duration_s;
            if c.disturbance.is_some() && !(lo > 0.0 && hi >= lo && hi < self.record_duration_s) {
                return bad(format!("class `{}`: invalid duration range", c.name));
            }
            if let Some(code) = c.codes.iter().find(|code| taxonomy.index_of(code).is_none()) {
                return bad(format!("class `{}`: code `{code}` not in taxonomy", c.name));
            }
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.channels == PROVIDER1_CHANNELS.len() {
            PROVIDER1_CHANNELS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.channels).map(|i| format!("Channel.{i}")).collect()
        }
    }

    pub fn schema(&self) -> ChannelSchema {
        ChannelSchema {
            time_column_name: "Time µs".into(),
            channel_names: self.channel_names(),
            sample_rate_hz: None,
        }
    }
}

/// One generated record before it is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRecord {
    pub record_id: String,
    pub class_name: Option<String>,
    pub tag_string: String,
    pub samples: Vec<Vec<f64>>,
    /// `[start, end)` of the injected disturbance, in samples
    pub event: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub record_id: String,
    pub class_name: Option<String>,
    pub tag_string: String,
}

fn channel_amplitude(spec: &SyntheticSpec, ch: usize) -> f64 {
    if spec.channels == PROVIDER1_CHANNELS.len() {
        if ch < 3 {
            50.0
        } else {
            170.0
        }
    } else {
        1.0 + 0.25 * ch as f64
    }
}

fn channel_phase(spec: &SyntheticSpec, ch: usize) -> f64 {
    let phase = -2.0 * PI / 3.0 * (ch % 3) as f64;
    // currents lag their voltages
    if spec.channels == PROVIDER1_CHANNELS.len() && ch < 3 {
        phase - 0.3
    } else {
        phase
    }
}

/// Generates every record in memory.
pub fn generate_records(spec: &SyntheticSpec) -> Result<Vec<SyntheticRecord>> {
    let taxonomy = LabelTaxonomy::default_events();
    spec.validate(&taxonomy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = (spec.record_duration_s * spec.sample_rate_hz).round() as usize;
    let rate = spec.sample_rate_hz;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let width = spec.n_records.saturating_sub(1).to_string().len().max(4);

    let mut out = Vec::with_capacity(spec.n_records);
    for i in 0..spec.n_records {
        let class = (!spec.classes.is_empty()).then(|| &spec.classes[i % spec.classes.len()]);
        let mut event = None;
        let mut plan = None;
        if let Some(c) = class {
            if let Some(kind) = c.disturbance {
                let dur = rng.random_range(c.duration_s[0]..=c.duration_s[1]);
                let dur_n = ((dur * rate).round() as usize).max(1);
                let start = (rng.random_range(spec.onset_s[0]..=spec.onset_s[1]) * rate).round() as usize;
                let end = (start + dur_n).min(len);
                let mag = c.magnitude;
                event = Some((start, end));
                plan = Some((kind, start, end, mag));
            }
        }
        let mut samples = Vec::with_capacity(spec.channels);
        for ch in 0..spec.channels {
            let amp = channel_amplitude(spec, ch);
            let phi = channel_phase(spec, ch);
            let mut x: Vec<f64> = (0..len)
                .map(|j| amp * (2.0 * PI * spec.base_freq_hz * j as f64 / rate + phi).sin())
                .collect();
            if let Some((kind, start, end, mag)) = plan {
                inject(&mut x, kind, start, end, mag, amp, phi, spec);
            }
            if spec.noise_std > 0.0 {
                for v in &mut x {
                    *v += spec.noise_std * amp * noise.sample(&mut rng);
                }
            }
            samples.push(x);
        }
        out.push(SyntheticRecord {
            record_id: format!("rec_{i:0width$}"),
            class_name: class.map(|c| c.name.clone()),
            tag_string: class.map(|c| c.codes.join("|")).unwrap_or_default(),
            samples,
            event,
        });
    }
    Ok(out)
}

/// Raised-cosine edges of `ramp` samples at both ends of `[start, end)`.
fn envelope(j: usize, start: usize, end: usize, ramp: f64) -> f64 {
    let edge = |d: f64| if d >= ramp { 1.0 } else { 0.5 - 0.5 * (PI * d / ramp).cos() };
    edge((j - start) as f64 + 0.5).min(edge((end - j) as f64 - 0.5))
}

#[allow(clippy::too_many_arguments)]
fn inject(
    x: &mut [f64],
    kind: DisturbanceKind,
    start: usize,
    end: usize,
    mag: f64,
    amp: f64,
    phi: f64,
    spec: &SyntheticSpec,
) {
    let rate = spec.sample_rate_hz;
    let f0 = spec.base_freq_hz;
    match kind {
        DisturbanceKind::AmplitudeSag => {
            let depth = mag.min(1.0);
            for (j, v) in x.iter_mut().enumerate().take(end).skip(start) {
                *v *= 1.0 - depth * envelope(j, start, end, rate / f0);
            }
        }
        DisturbanceKind::AmplitudeSwell => {
            for (j, v) in x.iter_mut().enumerate().take(end).skip(start) {
                *v *= 1.0 + mag * envelope(j, start, end, rate / f0);
            }
        }
        DisturbanceKind::OscillationBurst => {
            // phase-locked to the record clock
            let f_osc = (5.5 * f0).min(0.4 * rate);
            for (j, v) in x.iter_mut().enumerate().take(end).skip(start) {
                let t = j as f64 / rate;
                let env = envelope(j, start, end, rate / (4.0 * f0));
                *v += mag * amp * env * (2.0 * PI * f_osc * t + phi).sin();
            }
        }
        DisturbanceKind::ImpulseTrain => {
            // a decaying spike at every waveform peak inside the event,
            // following the waveform sign
            let half = rate / (2.0 * f0);
            let tau = (rate / 2000.0).max(0.5);
            let first_peak = ((PI / 2.0 - phi) / PI * half).rem_euclid(half);
            let mut k = ((start as f64 - first_peak) / half).ceil().max(0.0);
            loop {
                let s = (first_peak + k * half).round() as usize;
                if s >= end {
                    break;
                }
                let sign = if x[s] >= 0.0 { 1.0 } else { -1.0 };
                for (i, v) in x[s..end.min(s + (6.0 * tau) as usize + 1)].iter_mut().enumerate() {
                    *v += sign * mag * amp * (-(i as f64) / tau).exp();
                }
                k += 1.0;
            }
        }
    }
}

fn format_record(rec: &SyntheticRecord, spec: &SyntheticSpec) -> String {
    let names = spec.channel_names();
    let mut out = String::new();
    out.push_str("Time µs");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let us = 1e6 / spec.sample_rate_hz;
    let integral = us.fract() == 0.0;
    for j in 0..rec.samples[0].len() {
        if integral {
            write!(out, "{}", j as u64 * us as u64).unwrap();
        } else {
            write!(out, "{:.3}", j as f64 * us).unwrap();
        }
        for ch in &rec.samples {
            write!(out, ",{:.6}", ch[j]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes records, taxonomy, label manifest, class manifest and the spec.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<Vec<GroundTruth>> {
    let records = generate_records(spec)?;
    let rec_dir = out_dir.join(RECORDS_DIR);
    fs::create_dir_all(&rec_dir).map_err(io_err(&rec_dir))?;
    let mut labels = String::new();
    let mut classes = String::new();
    let mut truth = Vec::with_capacity(records.len());
    for rec in &records {
        let path = rec_dir.join(format!("{}.csv", rec.record_id));
        fs::write(&path, format_record(rec, spec)).map_err(io_err(&path))?;
        writeln!(labels, "{}\t{}", rec.record_id, rec.tag_string).unwrap();
        writeln!(
            classes,
            "{}\t{}",
            rec.record_id,
            rec.class_name.as_deref().unwrap_or("")
        )
        .unwrap();
        truth.push(GroundTruth {
            record_id: rec.record_id.clone(),
            class_name: rec.class_name.clone(),
            tag_string: rec.tag_string.clone(),
        });
    }
    let write = |name: &str, body: &[u8]| {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write(TAXONOMY_FILE, LabelTaxonomy::default_events().render().as_bytes())?;
    write(LABELS_FILE, labels.as_bytes())?;
    write(CLASSES_FILE, classes.as_bytes())?;
    write(SPEC_FILE, &serde_json::to_vec_pretty(spec)?)?;
    Ok(truth)
}

/// Reads `record_id<TAB>class_name` lines written by the generator.
pub fn read_classes(dir: &Path) -> Result<Vec<(String, String)>> {
    let p = dir.join(CLASSES_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, class) = l.split_once('\t').unwrap_or((l, ""));
            (id.to_string(), class.to_string())
        })
        .collect())
}
