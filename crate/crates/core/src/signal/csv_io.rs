//! CSV ingestion and export.
//!
//! Format: header `timestamp,green1,green2,red,infrared,subject,activity`,
//! decimal values, UTF-8, LF line endings, no quoting. One record is emitted
//! per (subject, activity, contiguous session); a session breaks where the
//! timestamp gap exceeds twice the group's median sampling interval.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Activity, SignalError, SignalRecord, CHANNEL_COUNT};

pub const CSV_HEADER: &str = "timestamp,green1,green2,red,infrared,subject,activity";

struct Row {
    line: usize,
    timestamp: f64,
    values: [f64; CHANNEL_COUNT],
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<SignalRecord>, SignalError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(SignalError::MissingColumn("timestamp".into())),
    };
    validate_header(&header)?;

    // group rows by (subject, activity) in first-seen order
    let mut order: Vec<(String, Activity)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<Row>> = HashMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2; // 1-based, after the header
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CHANNEL_COUNT + 3 {
            return Err(SignalError::ChannelCountMismatch {
                expected: CHANNEL_COUNT,
                found: fields.len().saturating_sub(3),
            });
        }
        let parse = |s: &str| -> Result<f64, SignalError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(SignalError::NumericParse { line: line_no })
        };
        let timestamp = parse(fields[0])?;
        let mut values = [0.0; CHANNEL_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse(fields[1 + k])?;
        }
        let subject = fields[CHANNEL_COUNT + 1].trim().to_string();
        let activity = fields[CHANNEL_COUNT + 2].trim().to_string();
        let key = (subject, activity);
        if !groups.contains_key(&key) {
            order.push((key.0.clone(), Activity::from(key.1.clone())));
        }
        groups.entry(key).or_default().push(Row { line: line_no, timestamp, values });
    }

    let mut records = Vec::new();
    for (subject, activity) in order {
        let rows = &groups[&(subject.clone(), String::from(activity.clone()))];
        for (t0, rate, session) in split_sessions(rows)? {
            let mut channels = vec![Vec::with_capacity(session.len()); CHANNEL_COUNT];
            for row in &session {
                for (k, ch) in channels.iter_mut().enumerate() {
                    ch.push(row.values[k]);
                }
            }
            records.push(SignalRecord::new(subject.clone(), activity.clone(), rate, channels, Some(t0))?);
        }
    }
    Ok(records)
}

/// Split one (subject, activity) row group into contiguous sessions.
fn split_sessions(rows: &[Row]) -> Result<Vec<(f64, f64, Vec<&Row>)>, SignalError> {
    let mut diffs: Vec<f64> = Vec::with_capacity(rows.len().saturating_sub(1));
    for pair in rows.windows(2) {
        let dt = pair[1].timestamp - pair[0].timestamp;
        if dt <= 0.0 {
            return Err(SignalError::NonMonotonicTimestamp { line: pair[1].line });
        }
        diffs.push(dt);
    }
    let rate = if diffs.is_empty() {
        25.0 // single-row group, no interval to infer from
    } else {
        let mut sorted = diffs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        1.0 / sorted[sorted.len() / 2]
    };
    let gap = 2.0 / rate;

    let mut sessions = Vec::new();
    let mut current: Vec<&Row> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if i > 0 && row.timestamp - rows[i - 1].timestamp > gap {
            sessions.push((current[0].timestamp, rate, std::mem::take(&mut current)));
        }
        current.push(row);
    }
    if !current.is_empty() {
        sessions.push((current[0].timestamp, rate, current));
    }
    Ok(sessions)
}

fn validate_header(header: &str) -> Result<(), SignalError> {
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if fields == expected {
        return Ok(());
    }
    for name in ["timestamp", "subject", "activity"] {
        if !fields.contains(&name) {
            return Err(SignalError::MissingColumn(name.into()));
        }
    }
    // structural columns present: the channel block in between is wrong
    Err(SignalError::ChannelCountMismatch { expected: CHANNEL_COUNT, found: fields.len() - 3 })
}

pub fn write_csv(records: &[SignalRecord], path: impl AsRef<Path>) -> Result<(), SignalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for record in records {
        let activity = record.activity.as_str();
        if activity.contains(',') || record.subject_id.contains(',') {
            return Err(SignalError::InvalidRecord("comma in subject or activity label".into()));
        }
        let t0 = record.t0.unwrap_or(0.0);
        for i in 0..record.len() {
            let t = t0 + i as f64 / record.rate_hz;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t,
                record.channels[0][i],
                record.channels[1][i],
                record.channels[2][i],
                record.channels[3][i],
                record.subject_id,
                activity
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
