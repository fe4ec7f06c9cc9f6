//! Event-history ingestion: the compact one-row-per-unit CSV format, period
//! binning, subgroup filtering and life-table risk-set accounting.
//!
//! A unit censored at `c` is at risk in periods `1..=c` and records no event.
//! A unit with an event at `d` is at risk in `1..=d` and records one event at
//! `d`. At most one transition per unit is encoded.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column names of the compact format, in order.
pub const HEADER: [&str; 4] = ["id", "arm", "duration", "event"];
pub const TREAT_START_COLUMN: &str = "treat_start";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("header must be `id,arm,duration,event[,treat_start]`, found `{0}`")]
    BadHeader(String),
    #[error("no units in the {0} arm")]
    EmptyArm(Arm),
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Treatment indicator `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_indicator(d: u8) -> Option<Arm> {
        match d {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    pub arm: Arm,
    /// Last observed period, `>= 1`.
    pub duration: u32,
    /// `true`: transition in `duration`; `false`: right-censored at `duration`.
    pub event: bool,
    /// Period in which treatment began. `None` on a treated unit means period 1;
    /// on a control unit it means never treated. May exceed `duration` when the
    /// unit left before its treatment would have started.
    pub treat_start: Option<u32>,
}

impl UnitRecord {
    /// Effective start of treatment, `None` for never-treated units.
    pub fn treatment_start(&self) -> Option<u32> {
        match self.arm {
            Arm::Treated => Some(self.treat_start.unwrap_or(1)),
            Arm::Control => None,
        }
    }
}

/// Per-period life-table counts for one arm; `at_risk[t - 1]` is period `t`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct RiskTable {
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub censored: Vec<usize>,
}

/// Immutable collection of unit records plus the analysis horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelDataset {
    records: Vec<UnitRecord>,
    t_max: u32,
    bin_width: u32,
}

impl PanelDataset {
    /// Builds a dataset, truncating every duration beyond `t_max` to a
    /// censoring at `t_max`. Requires both arms to be non-empty.
    pub fn new(records: Vec<UnitRecord>, t_max: u32) -> Result<Self, DataError> {
        Self::with_bin_width(records, t_max, 1)
    }

    fn with_bin_width(
        mut records: Vec<UnitRecord>,
        t_max: u32,
        bin_width: u32,
    ) -> Result<Self, DataError> {
        if t_max == 0 {
            return Err(DataError::NonPositive("t_max"));
        }
        for (i, r) in records.iter_mut().enumerate() {
            if r.arm == Arm::Control && r.treat_start.is_some() {
                return Err(malformed(i + 2, "control units cannot carry a treat_start"));
            }
            if r.duration > t_max {
                r.duration = t_max;
                r.event = false;
            }
        }
        let ds = PanelDataset {
            records,
            t_max,
            bin_width,
        };
        ds.check_arms()?;
        Ok(ds)
    }

    fn check_arms(&self) -> Result<(), DataError> {
        for arm in Arm::BOTH {
            if self.arm_size(arm) == 0 {
                return Err(DataError::EmptyArm(arm));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    /// Raw periods per analysis period.
    pub fn bin_width(&self) -> u32 {
        self.bin_width
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        self.records.iter().filter(|r| r.arm == arm).count()
    }

    /// Whether any unit carries an explicit treatment start.
    pub fn has_treat_start(&self) -> bool {
        self.records.iter().any(|r| r.treat_start.is_some())
    }

    /// Returns the same records under a different analysis horizon.
    pub fn with_horizon(&self, t_max: u32) -> Result<Self, DataError> {
        Self::with_bin_width(self.records.clone(), t_max, self.bin_width)
    }

    /// Coarsens time: every duration (and treatment start) becomes
    /// `ceil(value / width)`.
    pub fn bin_periods(&self, width: u32) -> Result<Self, DataError> {
        if width == 0 {
            return Err(DataError::NonPositive("bin width"));
        }
        let ceil = |v: u32| v.div_ceil(width);
        let records = self
            .records
            .iter()
            .map(|r| UnitRecord {
                duration: ceil(r.duration),
                treat_start: r.treat_start.map(ceil),
                ..r.clone()
            })
            .collect();
        Ok(PanelDataset {
            records,
            t_max: ceil(self.t_max),
            bin_width: self.bin_width * width,
        })
    }

    /// Keeps only units whose id satisfies `keep`. The horizon is unchanged.
    pub fn filter_subgroup<F>(&self, keep: F) -> Result<Self, DataError>
    where
        F: Fn(&str) -> bool,
    {
        let ds = PanelDataset {
            records: self
                .records
                .iter()
                .filter(|r| keep(&r.id))
                .cloned()
                .collect(),
            t_max: self.t_max,
            bin_width: self.bin_width,
        };
        ds.check_arms()?;
        Ok(ds)
    }

    /// Life-table counts for periods `1..=t_max`.
    pub fn risk_table(&self, arm: Arm) -> RiskTable {
        let t_max = self.t_max as usize;
        let mut exits = vec![0usize; t_max];
        let mut table = RiskTable {
            at_risk: vec![0; t_max],
            events: vec![0; t_max],
            censored: vec![0; t_max],
        };
        for r in self.records.iter().filter(|r| r.arm == arm) {
            let t = r.duration as usize - 1;
            exits[t] += 1;
            if r.event {
                table.events[t] += 1;
            } else {
                table.censored[t] += 1;
            }
        }
        let mut remaining = self.arm_size(arm);
        for t in 0..t_max {
            table.at_risk[t] = remaining;
            remaining -= exits[t];
        }
        table
    }

    /// Serializes to the compact CSV format. The `treat_start` column is only
    /// written when some unit carries one.
    pub fn to_csv(&self) -> String {
        let with_start = self.has_treat_start();
        let mut out = HEADER.join(",");
        if with_start {
            out.push(',');
            out.push_str(TREAT_START_COLUMN);
        }
        out.push('\n');
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for r in &self.records {
            let mut row = vec![
                r.id.clone(),
                r.arm.index().to_string(),
                r.duration.to_string(),
                u8::from(r.event).to_string(),
            ];
            if with_start {
                row.push(r.treat_start.map(|k| k.to_string()).unwrap_or_default());
            }
            w.write_record(&row).expect("in-memory write");
        }
        let body = w.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&body).expect("utf-8 csv"));
        out
    }
}

/// Parses the compact CSV format. The horizon is the largest duration.
pub fn parse_compact_csv<R: Read>(input: R) -> Result<PanelDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);

    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(DataError::BadHeader(String::new())),
    };
    let cols: Vec<&str> = header.iter().collect();
    let with_start = match cols.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == HEADER => false,
        [a, b, c, d, e] if [*a, *b, *c, *d] == HEADER && *e == TREAT_START_COLUMN => true,
        _ => return Err(DataError::BadHeader(cols.join(","))),
    };
    let width = if with_start { 5 } else { 4 };

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != width {
            return Err(malformed(
                line,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(malformed(line, "empty id"));
        }
        let arm = row[1]
            .parse::<u8>()
            .ok()
            .and_then(Arm::from_indicator)
            .ok_or_else(|| malformed(line, format!("arm must be 0 or 1, found `{}`", &row[1])))?;
        let duration = parse_positive(&row[2])
            .ok_or_else(|| malformed(line, format!("duration must be an integer >= 1, found `{}`", &row[2])))?;
        let event = match &row[3] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(line, format!("event must be 0 or 1, found `{other}`"))),
        };
        let treat_start = if with_start && !row[4].is_empty() {
            if arm == Arm::Control {
                return Err(malformed(line, "control units cannot carry a treat_start"));
            }
            Some(parse_positive(&row[4]).ok_or_else(|| {
                malformed(line, format!("treat_start must be an integer >= 1, found `{}`", &row[4]))
            })?)
        } else {
            None
        };
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { id, line });
        }
        records.push(UnitRecord {
            id,
            arm,
            duration,
            event,
            treat_start,
        });
    }
    let t_max = records.iter().map(|r| r.duration).max().unwrap_or(1);
    PanelDataset::new(records, t_max)
}

/// Reads a subgroup file: one id per line, blank lines and `#` comments ignored.
pub fn parse_id_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn parse_positive(s: &str) -> Option<u32> {
    s.parse::<u32>().ok().filter(|&v| v >= 1)
}

fn malformed(line: usize, reason: impl Into<String>) -> DataError {
    DataError::MalformedRow {
        line,
        reason: reason.into(),
    }
}
