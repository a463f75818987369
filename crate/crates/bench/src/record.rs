use std::io;
use std::path::Path;

use statefarm::PatternKind;

pub const HEADER: [&str; 10] = [
    "pattern",
    "n_w",
    "flush_freq",
    "t_f_us",
    "t_s_us",
    "measured_us",
    "ideal_us",
    "speedup",
    "predicted_speedup",
    "bound",
];

/// One cell of an experiment sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub pattern: PatternKind,
    pub n_w: usize,
    pub flush_freq: usize,
    pub t_f: f64,
    pub t_s: f64,
    /// Median completion time over the repetitions.
    pub measured_us: f64,
    pub ideal_us: f64,
    /// Against the measured single-worker run of the same cell.
    pub speedup: f64,
    pub predicted_speedup: f64,
    /// `inf` when the model puts no limit on the speedup.
    pub bound: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("nothing to write")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}, column {column}: cannot parse {text:?}")]
    Field { row: usize, column: &'static str, text: String },
}

impl MetricsRecord {
    fn fields(&self) -> [String; 10] {
        [
            self.pattern.to_string(),
            self.n_w.to_string(),
            self.flush_freq.to_string(),
            self.t_f.to_string(),
            self.t_s.to_string(),
            self.measured_us.to_string(),
            self.ideal_us.to_string(),
            self.speedup.to_string(),
            self.predicted_speedup.to_string(),
            self.bound.to_string(),
        ]
    }
}

pub fn write_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> Result<(), CsvError> {
    if records.is_empty() {
        return Err(CsvError::Empty);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<(), CsvError> {
    if records.is_empty() {
        return Err(CsvError::Empty);
    }
    write_csv(records, std::fs::File::create(path)?)
}

pub fn parse_csv<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != HEADER {
        return Err(CsvError::Header(header));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("");
        fn parse<T: std::str::FromStr>(row: usize, c: usize, text: &str) -> Result<T, CsvError> {
            text.parse().map_err(|_| CsvError::Field { row, column: HEADER[c], text: text.to_string() })
        }
        let n = i + 1;
        out.push(MetricsRecord {
            pattern: parse(n, 0, field(0))?,
            n_w: parse(n, 1, field(1))?,
            flush_freq: parse(n, 2, field(2))?,
            t_f: parse(n, 3, field(3))?,
            t_s: parse(n, 4, field(4))?,
            measured_us: parse(n, 5, field(5))?,
            ideal_us: parse(n, 6, field(6))?,
            speedup: parse(n, 7, field(7))?,
            predicted_speedup: parse(n, 8, field(8))?,
            bound: parse(n, 9, field(9))?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, CsvError> {
    parse_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n_w: usize) -> MetricsRecord {
        MetricsRecord {
            pattern: PatternKind::Separate,
            n_w,
            flush_freq: 1,
            t_f: 100.0,
            t_s: 20.0,
            measured_us: 1234.5678 / n_w as f64,
            ideal_us: 1000.0 / 3.0,
            speedup: n_w as f64 * 0.9,
            predicted_speedup: 1.0 + 1e-9,
            bound: 6.0,
        }
    }

    #[test]
    fn header_and_plain_decimals() {
        let mut buf = Vec::new();
        let mut r = record(1);
        r.bound = f64::INFINITY;
        r.ideal_us = 1e-7;
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "pattern,n_w,flush_freq,t_f_us,t_s_us,measured_us,ideal_us,speedup,predicted_speedup,bound");
        assert!(lines[1].starts_with("separate,1,1,100,20,1234.5678,0.0000001,"));
        assert!(lines[1].ends_with(",inf"));
        assert!(!lines[1].split(',').skip(1).any(|f| f.contains('e')));
    }

    #[test]
    fn round_trip() {
        let records: Vec<_> = [1, 2, 4, 8, 16].into_iter().map(record).collect();
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 6);
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn refuses_empty_and_foreign_files() {
        assert!(matches!(write_csv(&[], Vec::new()), Err(CsvError::Empty)));
        assert!(matches!(parse_csv("a,b\n1,2\n".as_bytes()), Err(CsvError::Header(_))));
    }
}
