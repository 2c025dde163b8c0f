use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};

/// Column layout of a delimited event file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSchema {
    pub time_column_name: String,
    pub channel_names: Vec<String>,
    /// When absent, the rate is inferred from the time column.
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
}

impl ChannelSchema {
    pub fn new(time_column_name: impl Into<String>, channel_names: Vec<String>) -> Result<Self> {
        let schema = Self {
            time_column_name: time_column_name.into(),
            channel_names,
            sample_rate_hz: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Three phase currents and three phase voltages with a microsecond
    /// time column.
    pub fn provider1() -> Self {
        Self {
            time_column_name: "Time µs".into(),
            channel_names: PROVIDER1_CHANNELS.iter().map(|s| s.to_string()).collect(),
            sample_rate_hz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_names.is_empty() {
            return Err(IngestError::InvalidSchema("no channels".into()));
        }
        for (i, c) in self.channel_names.iter().enumerate() {
            if self.channel_names[..i].contains(c) {
                return Err(IngestError::InvalidSchema(format!("duplicate channel `{c}`")));
            }
        }
        if let Some(r) = self.sample_rate_hz {
            if !(r > 0.0 && r.is_finite()) {
                return Err(IngestError::InvalidSchema(format!("sample rate {r} must be positive")));
            }
        }
        Ok(())
    }

    fn time_in_microseconds(&self) -> bool {
        self.time_column_name.contains("µs")
    }
}

pub const PROVIDER1_CHANNELS: [&str; 6] = [
    "Current.Ia",
    "Current.Ib",
    "Current.Ic",
    "Voltage.Va",
    "Voltage.Vb",
    "Voltage.Vc",
];

/// One multichannel recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub record_id: String,
    pub channel_names: Vec<String>,
    /// `samples[channel][t]`
    pub samples: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub tag_string: String,
}

impl RawRecord {
    pub fn new(
        record_id: impl Into<String>,
        channel_names: Vec<String>,
        samples: Vec<Vec<f64>>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if samples.is_empty() || samples.len() != channel_names.len() {
            return Err(IngestError::InvalidParameter(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                samples.len()
            )));
        }
        let len = samples[0].len();
        if samples.iter().any(|c| c.len() != len) {
            return Err(IngestError::InvalidParameter("channels differ in length".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(IngestError::InvalidParameter(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        Ok(Self {
            record_id: record_id.into(),
            channel_names,
            samples,
            sample_rate_hz,
            tag_string: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }
}

/// Parses a comma-separated event table with a header row.
///
/// Channels are returned in schema order. Without an explicit rate the
/// rate is `1 / median(Δt)`, reading the time column as microseconds when
/// its name contains `µs` and as seconds otherwise.
pub fn parse_event_file(record_id: &str, bytes: &[u8], schema: &ChannelSchema) -> Result<RawRecord> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let channel_cols = schema
        .channel_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let time_col = if schema.sample_rate_hz.is_none() {
        Some(find(&schema.time_column_name)?)
    } else {
        headers.iter().position(|h| h == schema.time_column_name)
    };

    let mut samples = vec![Vec::new(); channel_cols.len()];
    let mut times = Vec::new();
    let parse = |row: usize, rec: &csv::StringRecord, col: usize| -> Result<f64> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse::<f64>().map_err(|_| IngestError::BadNumber {
            row,
            column: headers.get(col).unwrap_or("").to_string(),
            value: raw.to_string(),
        })
    };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (ch, &col) in channel_cols.iter().enumerate() {
            samples[ch].push(parse(row, &rec, col)?);
        }
        if let Some(tc) = time_col {
            let t = parse(row, &rec, tc)?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(IngestError::NonMonotonicTime { row });
                }
            }
            times.push(t);
        }
    }
    let rows = samples[0].len();
    if rows < 2 {
        return Err(IngestError::TooFewRows(rows));
    }
    let rate = match schema.sample_rate_hz {
        Some(r) => r,
        None => {
            let mut dt: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            dt.sort_by(f64::total_cmp);
            let mid = dt.len() / 2;
            let median = if dt.len() % 2 == 0 {
                0.5 * (dt[mid - 1] + dt[mid])
            } else {
                dt[mid]
            };
            let seconds = if schema.time_in_microseconds() {
                median * 1e-6
            } else {
                median
            };
            1.0 / seconds
        }
    };
    RawRecord::new(record_id, schema.channel_names.clone(), samples, rate)
}
