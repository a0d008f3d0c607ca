use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::analytics::PairFrame;
use crate::radar::LatencyTrace;
use crate::scenesim::{Arm, RouteRecord};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRUTH_LOG: &str = "truth.csv";
pub const ROUTES_LOG: &str = "routes.csv";
pub const DETECTION_LOG: &str = "detections.csv";
pub const TRACK_LOG: &str = "tracks.csv";
pub const FLAGS_LOG: &str = "violations_raw.csv";
pub const TRACES_LOG: &str = "latency_traces.csv";
pub const CAPTURE_FILE: &str = "radar.cap";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, thiserror::Error)]
#[error("{file} line {line}: {message}")]
pub struct LogParseError {
    pub file: &'static str,
    pub line: usize,
    pub message: String,
}

fn rows(
    r: impl BufRead,
    file: &'static str,
    fields: usize,
) -> impl Iterator<Item = Result<(usize, Vec<String>), LogParseError>> {
    r.lines().enumerate().filter_map(move |(i, line)| {
        let err = |message: String| LogParseError {
            file,
            line: i + 1,
            message,
        };
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(err(e.to_string()))),
        };
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("frame_seq") {
            return None;
        }
        let f: Vec<String> = t.split(',').map(str::to_string).collect();
        if f.len() != fields {
            return Some(Err(err(format!("expected {fields} fields, got {}", f.len()))));
        }
        Some(Ok((i + 1, f)))
    })
}

fn parse<T: std::str::FromStr>(file: &'static str, line: usize, s: &str) -> Result<T, LogParseError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| LogParseError {
        file,
        line,
        message: format!("`{s}`: {e}"),
    })
}

pub const ROUTES_HEADER: &str = "# id,class,entry,planned_exit,spawn_frame,exit_frame";

pub fn write_routes(mut w: impl Write, routes: &BTreeMap<u64, RouteRecord>) -> std::io::Result<()> {
    writeln!(w, "{ROUTES_HEADER}")?;
    for (id, r) in routes {
        let exit = r.exit_frame.map_or_else(|| "-".to_string(), |f| f.to_string());
        writeln!(w, "{id},{},{},{},{},{exit}", r.class, r.entry, r.planned_exit, r.spawn_frame)?;
    }
    Ok(())
}

pub fn read_routes(r: impl BufRead) -> Result<BTreeMap<u64, RouteRecord>, LogParseError> {
    let mut out = BTreeMap::new();
    for row in rows(r, ROUTES_LOG, 6) {
        let (line, f) = row?;
        let p = |s: &str| parse::<u64>(ROUTES_LOG, line, s);
        let exit_frame = if f[5] == "-" { None } else { Some(p(&f[5])?) };
        out.insert(
            p(&f[0])?,
            RouteRecord {
                class: parse(ROUTES_LOG, line, &f[1])?,
                entry: parse::<Arm>(ROUTES_LOG, line, &f[2])?,
                planned_exit: parse::<Arm>(ROUTES_LOG, line, &f[3])?,
                spawn_frame: p(&f[4])?,
                exit_frame,
            },
        );
    }
    Ok(out)
}

pub const FLAGS_HEADER: &str = "# frame_index,track_a,track_b,distance_m";

pub fn write_flags(mut w: impl Write, flags: &[PairFrame]) -> std::io::Result<()> {
    for p in flags {
        writeln!(w, "{},{},{},{}", p.frame_index, p.pair.0, p.pair.1, p.distance)?;
    }
    Ok(())
}

pub fn read_flags(r: impl BufRead) -> Result<Vec<PairFrame>, LogParseError> {
    rows(r, FLAGS_LOG, 4)
        .map(|row| {
            let (line, f) = row?;
            Ok(PairFrame {
                frame_index: parse(FLAGS_LOG, line, &f[0])?,
                pair: (parse(FLAGS_LOG, line, &f[1])?, parse(FLAGS_LOG, line, &f[2])?),
                distance: parse(FLAGS_LOG, line, &f[3])?,
            })
        })
        .collect()
}

pub fn read_traces(r: impl BufRead) -> Result<Vec<LatencyTrace>, LogParseError> {
    rows(r, TRACES_LOG, 7)
        .map(|row| {
            let (line, f) = row?;
            let v: Vec<u64> = f
                .iter()
                .map(|s| parse(TRACES_LOG, line, s))
                .collect::<Result<_, _>>()?;
            Ok(LatencyTrace {
                frame_seq: v[0],
                t_acquire: v[1],
                t_detect_done: v[2],
                t_track_done: v[3],
                t_analyze_done: v[4],
                t_encode_done: v[5],
                t_broadcast_done: v[6],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::write_traces_csv;
    use crate::types::ObjectClass;

    #[test]
    fn routes_round_trip() {
        let mut routes = BTreeMap::new();
        routes.insert(
            3,
            RouteRecord {
                class: ObjectClass::Vehicle,
                entry: Arm::North,
                planned_exit: Arm::West,
                spawn_frame: 10,
                exit_frame: Some(400),
            },
        );
        routes.insert(
            5,
            RouteRecord {
                class: ObjectClass::Pedestrian,
                entry: Arm::East,
                planned_exit: Arm::East,
                spawn_frame: 12,
                exit_frame: None,
            },
        );
        let mut buf = Vec::new();
        write_routes(&mut buf, &routes).unwrap();
        assert_eq!(read_routes(&buf[..]).unwrap(), routes);
    }

    #[test]
    fn flags_and_traces_round_trip() {
        let flags = vec![PairFrame {
            frame_index: 4,
            pair: (1, 9),
            distance: 1.2345678901234,
        }];
        let mut buf = Vec::new();
        writeln!(buf, "{FLAGS_HEADER}").unwrap();
        write_flags(&mut buf, &flags).unwrap();
        assert_eq!(read_flags(&buf[..]).unwrap(), flags);
        let traces = vec![LatencyTrace {
            frame_seq: 1,
            t_acquire: 2,
            t_detect_done: 3,
            t_track_done: 4,
            t_analyze_done: 5,
            t_encode_done: 6,
            t_broadcast_done: 7,
        }];
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &traces).unwrap();
        assert_eq!(read_traces(&buf[..]).unwrap(), traces);
    }

    #[test]
    fn bad_field_count() {
        assert!(read_flags(&b"1,2,3\n"[..]).is_err());
    }
}
