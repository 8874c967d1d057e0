//! Metric event rows.
//!
//! Both the server and the client emit one CSV row per event with the fixed
//! columns `time_ms,kind,entity_id,group_id,value`. Cells that do not apply
//! to a kind stay empty. Per-second packet counters use the `group_id`
//! column to split server-sent state updates by group (blank group = other
//! traffic: probes, init, acks, inputs), which keeps per-group traffic
//! extractable without extra columns.

use std::fmt;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Client applied an entity update. `value` = tick.
    UpdateApplied,
    /// Periodic client-side staleness probe. `value` = ms since last update.
    StalenessSample,
    /// Server moved an entity between groups. `group_id` = new group,
    /// `value` = old group.
    Reassignment,
    /// Measured loss at a maintenance boundary. `value` = percent.
    LossPercent,
    /// Datagrams sent in a one-second bucket. `value` = count.
    PktsOut,
    /// Datagrams received in a one-second bucket. `value` = count.
    PktsIn,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::UpdateApplied => "update_applied",
            Kind::StalenessSample => "staleness_sample",
            Kind::Reassignment => "reassignment",
            Kind::LossPercent => "loss_percent",
            Kind::PktsOut => "pkts_out",
            Kind::PktsIn => "pkts_in",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "update_applied" => Kind::UpdateApplied,
            "staleness_sample" => Kind::StalenessSample,
            "reassignment" => Kind::Reassignment,
            "loss_percent" => Kind::LossPercent,
            "pkts_out" => Kind::PktsOut,
            "pkts_in" => Kind::PktsIn,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRow {
    pub time_ms: u64,
    pub kind: Kind,
    pub entity_id: Option<u32>,
    pub group_id: Option<u8>,
    pub value: f64,
}

/// Formats a value without a trailing `.0` for whole numbers, so counters
/// read as integers and the output stays byte-stable.
pub fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl fmt::Display for EventRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.time_ms,
            self.kind.label(),
            self.entity_id.map(|e| e.to_string()).unwrap_or_default(),
            self.group_id.map(|g| g.to_string()).unwrap_or_default(),
            fmt_value(self.value)
        )
    }
}

pub const CSV_HEADER: &str = "time_ms,kind,entity_id,group_id,value";

/// An in-memory event log; the simulated harness keeps one per side and the
/// real-socket processes flush one incrementally.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    pub rows: Vec<EventRow>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: EventRow) {
        self.rows.push(row);
    }

    pub fn record(&mut self, time_ms: u64, kind: Kind, entity_id: Option<u32>, group_id: Option<u8>, value: f64) {
        self.push(EventRow { time_ms, kind, entity_id, group_id, value });
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{file}:{line}: {msg}")]
    Line { file: String, line: usize, msg: String },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn parse_csv(text: &str, file: &str) -> Result<Vec<EventRow>, CsvError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if n == 1 && line == CSV_HEADER {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CsvError::Line { file: file.to_string(), line: n, msg };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, got {}", cols.len())));
        }
        let time_ms: u64 = cols[0].parse().map_err(|_| err(format!("bad time '{}'", cols[0])))?;
        let kind = Kind::from_label(cols[1]).ok_or_else(|| err(format!("unknown kind '{}'", cols[1])))?;
        let entity_id = if cols[2].is_empty() {
            None
        } else {
            Some(cols[2].parse().map_err(|_| err(format!("bad entity '{}'", cols[2])))?)
        };
        let group_id = if cols[3].is_empty() {
            None
        } else {
            Some(cols[3].parse().map_err(|_| err(format!("bad group '{}'", cols[3])))?)
        };
        let value: f64 = cols[4].parse().map_err(|_| err(format!("bad value '{}'", cols[4])))?;
        rows.push(EventRow { time_ms, kind, entity_id, group_id, value });
    }
    Ok(rows)
}

pub fn load_csv(path: &std::path::Path) -> Result<Vec<EventRow>, CsvError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CsvError::Io { file: file.clone(), source })?;
    parse_csv(&text, &file)
}

/// Buckets datagram counts into one-second rows, split by group for sent
/// state updates. Responsible for the "no gaps" guarantee: every second in
/// `[0, duration]` gets its rows even when nothing moved.
#[derive(Debug, Default)]
pub struct PacketCounter {
    current_s: u64,
    out_by_group: Vec<(Option<u8>, u32)>,
    in_count: u32,
}

impl PacketCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn flush_bucket(&mut self, log: &mut EventLog) {
        let t = self.current_s * 1000;
        if self.out_by_group.is_empty() {
            log.record(t, Kind::PktsOut, None, None, 0.0);
        } else {
            self.out_by_group.sort_by_key(|(g, _)| g.map(|g| g as i16).unwrap_or(-1));
            for (g, c) in self.out_by_group.drain(..) {
                log.record(t, Kind::PktsOut, None, g, c as f64);
            }
        }
        log.record(t, Kind::PktsIn, None, None, self.in_count as f64);
        self.in_count = 0;
    }

    fn roll_to(&mut self, now_ms: u64, log: &mut EventLog) {
        let bucket = now_ms / 1000;
        while self.current_s < bucket {
            self.flush_bucket(log);
            self.current_s += 1;
        }
    }

    pub fn count_out(&mut self, now_ms: u64, group: Option<u8>, log: &mut EventLog) {
        self.roll_to(now_ms, log);
        match self.out_by_group.iter_mut().find(|(g, _)| *g == group) {
            Some((_, c)) => *c += 1,
            None => self.out_by_group.push((group, 1)),
        }
    }

    pub fn count_in(&mut self, now_ms: u64, log: &mut EventLog) {
        self.roll_to(now_ms, log);
        self.in_count += 1;
    }

    /// Flushes every bucket up to and including the one containing `end_ms`.
    pub fn finish(&mut self, end_ms: u64, log: &mut EventLog) {
        self.roll_to(end_ms, log);
        self.flush_bucket(log);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_format_and_parse_back() {
        let mut log = EventLog::new();
        log.record(1500, Kind::UpdateApplied, Some(7), Some(2), 42.0);
        log.record(2000, Kind::LossPercent, None, None, 12.5);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("1500,update_applied,7,2,42\n"), "{text}");
        assert!(text.contains("2000,loss_percent,,,12.5\n"), "{text}");
        let rows = parse_csv(&text, "t").unwrap();
        assert_eq!(rows, log.rows);
    }

    #[test]
    fn packet_counter_has_no_gaps() {
        let mut log = EventLog::new();
        let mut pc = PacketCounter::new();
        pc.count_out(100, Some(0), &mut log);
        pc.count_out(200, Some(0), &mut log);
        pc.count_out(300, None, &mut log);
        // nothing in seconds 1..3
        pc.count_in(3500, &mut log);
        pc.finish(4000, &mut log);

        let out_rows: Vec<&EventRow> = log.rows.iter().filter(|r| r.kind == Kind::PktsOut).collect();
        let seconds: Vec<u64> = out_rows.iter().map(|r| r.time_ms / 1000).collect();
        assert!([0u64, 1, 2, 3, 4].iter().all(|s| seconds.contains(s)), "{seconds:?}");
        assert_eq!(out_rows.iter().filter(|r| r.time_ms == 0).map(|r| r.value).sum::<f64>(), 3.0);
        assert_eq!(log.rows.iter().filter(|r| r.kind == Kind::PktsIn && r.time_ms == 3000).count(), 1);
    }

    #[test]
    fn malformed_rows_are_line_errors() {
        assert!(parse_csv("1,nope,,,0\n", "f").is_err());
        assert!(parse_csv("x,loss_percent,,,0\n", "f").is_err());
        assert!(parse_csv("1,loss_percent,,0\n", "f").is_err());
    }
}
