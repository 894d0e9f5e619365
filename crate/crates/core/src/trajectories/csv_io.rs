//! Sample logs as CSV: a `# n=<dof> dt=<period>` line, a column-name row
//! `t,q_1..q_n,qd_1..qd_n,qdd_1..qdd_n,tau_1..tau_n`, then one row per sample.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::state::{DynSample, JointState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvHeader {
    pub n: usize,
    pub dt: f64,
}

fn column_names(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "qd", "qdd", "tau"] {
        cols.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    cols
}

pub fn write_csv<W: Write>(out: W, samples: &[DynSample], dt: f64) -> Result<()> {
    let n = samples.first().map_or(0, DynSample::dof);
    let mut out = out;
    writeln!(out, "# n={n} dt={dt}")?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(column_names(n)).map_err(io)?;
    for (k, s) in samples.iter().enumerate() {
        if s.dof() != n {
            return Err(Error::Shape(format!("sample {k} has {} dof, log has {n}", s.dof())));
        }
        let row = std::iter::once(s.t)
            .chain(s.state.q.iter().copied())
            .chain(s.state.qdot.iter().copied())
            .chain(s.state.qddot.iter().copied())
            .chain(s.tau.iter().copied())
            .map(|v| v.to_string());
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(path: &Path, samples: &[DynSample], dt: f64) -> Result<()> {
    write_csv(fs::File::create(path)?, samples, dt)
}

fn parse_header(line: &str) -> Result<CsvHeader> {
    let bad = |m: String| Error::Parse { line: 1, message: m };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| bad("expected a '# n=<dof> dt=<period>' header".into()))?;
    let (mut n, mut dt) = (None, None);
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|e| bad(format!("n: {e}")))?),
            Some(("dt", v)) => dt = Some(v.parse::<f64>().map_err(|e| bad(format!("dt: {e}")))?),
            _ => return Err(bad(format!("unknown header field '{field}'"))),
        }
    }
    match (n, dt) {
        (Some(n), Some(dt)) if dt > 0.0 => Ok(CsvHeader { n, dt }),
        _ => Err(bad("header needs n and a positive dt".into())),
    }
}

/// Parses a log. An empty input yields no header and no samples.
pub fn read_csv<R: Read>(mut input: R) -> Result<(Option<CsvHeader>, Vec<DynSample>)> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok((None, Vec::new()));
    }
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let header = parse_header(first.trim_end_matches('\r'))?;
    let n = header.n;
    let expected = column_names(n);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let line_of = |pos: Option<&csv::Position>| pos.map_or(2, |p| p.line() + 1);
    let names = reader.headers().map_err(|e| Error::Parse {
        line: line_of(e.position()),
        message: e.to_string(),
    })?;
    if names.len() != expected.len() {
        return Err(Error::Parse {
            line: 2,
            message: format!("{} columns for n = {n}, expected {}", names.len(), expected.len()),
        });
    }
    if let Some((got, want)) = names.iter().zip(&expected).find(|(a, b)| a.trim() != b.as_str()) {
        return Err(Error::Parse {
            line: 2,
            message: format!("column '{got}' where '{want}' was expected"),
        });
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: line_of(e.position()),
            message: e.to_string(),
        })?;
        let line = line_of(record.position());
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let part = |k: usize| values[1 + k * n..1 + (k + 1) * n].to_vec();
        let sample = JointState::new(part(0), part(1), part(2))
            .and_then(|st| DynSample::new(values[0], st, part(3)))
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        samples.push(sample);
    }
    Ok((Some(header), samples))
}

pub fn import_csv(path: &Path) -> Result<(Option<CsvHeader>, Vec<DynSample>)> {
    read_csv(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<DynSample> {
        (0..5)
            .map(|k| {
                let x = k as f64 * 0.1 + 1.0 / 3.0;
                let st = JointState::new(vec![x, -x], vec![x * x, 0.1], vec![1e-300, -2.5e7]).unwrap();
                DynSample::new(k as f64 * 0.005, st, vec![x.sin(), x.cos()]).unwrap()
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_lossless() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples(), 0.005).unwrap();
        let (h, back) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(h, Some(CsvHeader { n: 2, dt: 0.005 }));
        assert_eq!(back, samples());
    }

    #[test]
    fn empty_input_is_empty() {
        assert_eq!(read_csv("".as_bytes()).unwrap(), (None, vec![]));
    }

    #[test]
    fn wrong_column_count_is_rejected() {
        let text = "# n=2 dt=0.01\nt,q_1,q_2\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn malformed_row_names_its_line() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples(), 0.005).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text = text.replacen("0.015,", "zero,", 1);
        match read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }
}
