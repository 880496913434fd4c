//! Recording CSV: `timestamp_s,sensor,gx,gy,gz[,state[,activity]]`.
//!
//! Rows for different sensors may interleave. Within a sensor, timestamps
//! must increase at exactly `1 / sample_rate_hz` (±1e-6 s).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Activity, MedState, Recording, SensorId, SensorStream, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

const REQUIRED_COLUMNS: [&str; 5] = ["timestamp_s", "sensor", "gx", "gy", "gz"];
const TIMESTAMP_TOL_S: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvFormat {
    pub sample_rate_hz: f64,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

#[derive(Default)]
struct StreamRows {
    first_row: u64,
    t: Vec<f64>,
    axes: [Vec<f64>; 3],
    state: Vec<Option<MedState>>,
    activity: Vec<Option<Activity>>,
}

pub fn read_recording(path: impl AsRef<Path>, format: &CsvFormat) -> Result<Recording> {
    let path = path.as_ref();
    let parse_err = |row: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < REQUIRED_COLUMNS.len() || names[..5] != REQUIRED_COLUMNS {
        return Err(parse_err(
            1,
            format!("header must start with {}", REQUIRED_COLUMNS.join(",")),
        ));
    }
    let state_col = names.iter().position(|&n| n == "state");
    let activity_col = names.iter().position(|&n| n == "activity");

    let mut rows: [Option<StreamRows>; 2] = [None, None];
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() < REQUIRED_COLUMNS.len() {
            return Err(parse_err(row, format!("expected at least 5 fields, got {}", record.len())));
        }
        let number = |i: usize| -> Result<f64> {
            let field = &record[i];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, format!("column {}: not a finite number: {field:?}", names[i])))
        };
        let t = number(0)?;
        let sensor: SensorId = record[1]
            .parse()
            .map_err(|e: Error| parse_err(row, e.to_string()))?;
        let g = [number(2)?, number(3)?, number(4)?];
        let state = match state_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<MedState>().map_err(|e| parse_err(row, e.to_string()))?),
            None => None,
        };
        let activity = match activity_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<Activity>().map_err(|e| parse_err(row, e.to_string()))?),
            None => None,
        };

        let slot = rows[sensor as usize].get_or_insert_with(|| StreamRows {
            first_row: row,
            ..Default::default()
        });
        if let Some(&prev) = slot.t.last() {
            let dt = t - prev;
            if dt <= 0.0 {
                return Err(parse_err(row, format!("{sensor}: non-monotonic timestamp {t} after {prev}")));
            }
            let expected = 1.0 / format.sample_rate_hz;
            if (dt - expected).abs() > TIMESTAMP_TOL_S {
                return Err(parse_err(
                    row,
                    format!("{sensor}: timestamp step {dt} s, expected {expected} s"),
                ));
            }
        }
        slot.t.push(t);
        for (axis, v) in slot.axes.iter_mut().zip(g) {
            axis.push(v);
        }
        slot.state.push(state);
        slot.activity.push(activity);
    }

    let present: Vec<(SensorId, StreamRows)> = SensorId::ALL
        .into_iter()
        .zip(rows)
        .filter_map(|(id, r)| r.map(|r| (id, r)))
        .collect();
    let Some((first_id, first)) = present.first() else {
        return Err(parse_err(1, "no data rows".into()));
    };
    let start = first.t[0];
    for (id, r) in &present[1..] {
        if r.t.len() != first.t.len() {
            return Err(parse_err(
                r.first_row,
                format!(
                    "mismatched stream lengths: {id} has {} rows, {first_id} has {}",
                    r.t.len(),
                    first.t.len()
                ),
            ));
        }
        if (r.t[0] - start).abs() > TIMESTAMP_TOL_S {
            return Err(parse_err(
                r.first_row,
                format!("{id} starts at {} s but {first_id} starts at {start} s", r.t[0]),
            ));
        }
    }

    let truth = merge_labels(&present, |r| &r.state, "state").map_err(|m| parse_err(0, m))?;
    let activities = merge_labels(&present, |r| &r.activity, "activity").map_err(|m| parse_err(0, m))?;
    let streams = present
        .into_iter()
        .map(|(id, r)| {
            let [x, y, z] = r.axes;
            SensorStream::new(id, x, y, z)
        })
        .collect::<Result<Vec<_>>>()?;
    Recording::new(format.sample_rate_hz, start, streams, truth, activities)
}

/// Labels must be either absent everywhere or present everywhere, and agree
/// across sensors.
fn merge_labels<T: Copy + PartialEq>(
    present: &[(SensorId, StreamRows)],
    get: impl Fn(&StreamRows) -> &Vec<Option<T>>,
    what: &str,
) -> std::result::Result<Option<Vec<T>>, String> {
    let reference = get(&present[0].1);
    let filled = reference.iter().filter(|v| v.is_some()).count();
    for (id, r) in &present[1..] {
        if get(r) != reference {
            return Err(format!("{what} labels of {id} disagree with {}", present[0].0));
        }
    }
    if filled == 0 {
        Ok(None)
    } else if filled == reference.len() {
        Ok(Some(reference.iter().map(|v| v.unwrap()).collect()))
    } else {
        Err(format!("{what} labels present on only {filled} of {} samples", reference.len()))
    }
}

pub fn write_recording(recording: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let truth = recording.truth();
    let activities = recording.activities();
    write!(out, "timestamp_s,sensor,gx,gy,gz")?;
    if truth.is_some() || activities.is_some() {
        write!(out, ",state,activity")?;
    }
    writeln!(out)?;
    let fs = recording.sample_rate_hz();
    let t0 = recording.start_time_s();
    for stream in recording.streams() {
        let [x, y, z] = stream.axes();
        for i in 0..stream.len() {
            write!(out, "{},{},{},{},{}", t0 + i as f64 / fs, stream.sensor(), x[i], y[i], z[i])?;
            if truth.is_some() || activities.is_some() {
                let s = truth.map_or("", |t| t[i].as_str());
                let a = activities.map_or("", |a| a[i].as_str());
                write!(out, ",{s},{a}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn two_sensor_csv(n: usize) -> String {
        let mut s = String::from("timestamp_s,sensor,gx,gy,gz,state,activity\n");
        for sensor in ["wrist", "ankle"] {
            for i in 0..n {
                let state = if i < n / 2 { "OFF" } else { "ON" };
                writeln!(s, "{},{sensor},{},{},{},{state},walking", i as f64 / 128.0, i, -(i as f64), 0.5).unwrap();
            }
        }
        s
    }

    #[test]
    fn reads_two_sensor_recording() {
        let f = write_tmp(&two_sensor_csv(1280));
        let r = read_recording(f.path(), &CsvFormat::default()).unwrap();
        assert_eq!(r.len_samples(), 1280);
        assert_eq!(r.sensors(), vec![SensorId::Wrist, SensorId::Ankle]);
        assert_eq!(r.truth().unwrap()[0], MedState::Off);
        assert_eq!(r.truth().unwrap()[1279], MedState::On);
        assert_eq!(r.activities().unwrap()[5], Activity::Walking);
    }

    #[test]
    fn wrist_only_file_is_single_sensor() {
        let mut s = String::from("timestamp_s,sensor,gx,gy,gz\n");
        for i in 0..256 {
            writeln!(s, "{},wrist,1,2,3", i as f64 / 128.0).unwrap();
        }
        let f = write_tmp(&s);
        let r = read_recording(f.path(), &CsvFormat::default()).unwrap();
        assert_eq!(r.sensors(), vec![SensorId::Wrist]);
        assert!(r.truth().is_none());
    }

    #[test]
    fn non_numeric_cell_names_row() {
        let s = "timestamp_s,sensor,gx,gy,gz\n0,wrist,1,2,3\n0.0078125,wrist,abc,2,3\n";
        let f = write_tmp(s);
        match read_recording(f.path(), &CsvFormat::default()) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("gx"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_sensor_and_bad_timestamps() {
        let f = write_tmp("timestamp_s,sensor,gx,gy,gz\n0,elbow,1,2,3\n");
        assert!(matches!(read_recording(f.path(), &CsvFormat::default()), Err(Error::Parse { .. })));

        let f = write_tmp("timestamp_s,sensor,gx,gy,gz\n0.1,wrist,1,2,3\n0.05,wrist,1,2,3\n");
        let err = read_recording(f.path(), &CsvFormat::default()).unwrap_err();
        assert!(err.to_string().contains("non-monotonic"), "{err}");

        let f = write_tmp("timestamp_s,sensor,gx,gy,gz\n0,wrist,1,2,3\n0.5,wrist,1,2,3\n");
        assert!(read_recording(f.path(), &CsvFormat::default()).is_err());
    }

    #[test]
    fn rejects_mismatched_stream_lengths() {
        let mut s = String::from("timestamp_s,sensor,gx,gy,gz\n");
        for i in 0..10 {
            writeln!(s, "{},wrist,1,2,3", i as f64 / 128.0).unwrap();
        }
        for i in 0..9 {
            writeln!(s, "{},ankle,1,2,3", i as f64 / 128.0).unwrap();
        }
        let f = write_tmp(&s);
        let err = read_recording(f.path(), &CsvFormat::default()).unwrap_err();
        assert!(err.to_string().contains("mismatched stream lengths"), "{err}");
    }

    #[test]
    fn write_then_read_is_identity() {
        let f = write_tmp(&two_sensor_csv(300));
        let r = read_recording(f.path(), &CsvFormat::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_recording(&r, out.path()).unwrap();
        let back = read_recording(out.path(), &CsvFormat::default()).unwrap();
        assert_eq!(r, back);
    }
}
