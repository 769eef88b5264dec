use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Column-oriented time series with a fixed set of named channels. The time
/// column is implicit and always first on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    columns: Vec<String>,
    times: Vec<f64>,
    data: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Nine significant digits in scientific notation.
pub(crate) fn fmt_sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

impl Trace {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        let data = vec![Vec::new(); columns.len()];
        Self {
            columns,
            times: Vec::new(),
            data,
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                left: self.columns.len(),
                right: row.len(),
            });
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Parse(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        for (c, v) in self.data.iter_mut().zip(row) {
            c.push(*v);
        }
        Ok(())
    }

    /// Appends a column; `values` must cover every row.
    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: values.len(),
            });
        }
        self.columns.push(name.into());
        self.data.push(values);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::config("channel", format!("trace has no column `{name}`")))
    }

    /// Mean sample spacing.
    pub fn sample_period(&self) -> Option<f64> {
        (self.len() >= 2).then(|| (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t"];
        header.extend(self.columns.iter().map(String::as_str));
        w.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![fmt_sig9(*t)];
            rec.extend(self.data.iter().map(|c| fmt_sig9(c[i])));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Parse("first column must be `t`".into()));
        }
        let mut trace = Trace::new(header.iter().skip(1));
        let mut row = Vec::with_capacity(trace.columns.len());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: `{s}` is not a number", line + 2)))
            };
            let t = parse(rec.get(0).unwrap_or(""))?;
            row.clear();
            for f in rec.iter().skip(1) {
                row.push(parse(f)?);
            }
            trace.push(t, &row)?;
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_at_nine_digits() {
        let mut tr = Trace::new(["x", "yaw"]);
        tr.push(0.0, &[1.0 / 3.0, -2.5e-7]).unwrap();
        tr.push(0.02, &[std::f64::consts::PI, 0.0]).unwrap();
        let s = tr.to_csv_string();
        assert!(s.starts_with("t,x,yaw\n"));
        assert!(s.contains("3.33333333e-1"));
        let back = Trace::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string(), s);
        assert!((back.column("x").unwrap()[1] - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut tr = Trace::new(["x"]);
        tr.push(1.0, &[0.0]).unwrap();
        assert!(tr.push(1.0, &[0.0]).is_err());
        assert!(tr.push(2.0, &[0.0, 1.0]).is_err());
        assert!(tr.column("nope").is_err());
        assert!(Trace::read_csv("x,t\n1,2\n".as_bytes()).is_err());
        assert!(Trace::read_csv("t,x\n1,abc\n".as_bytes()).is_err());
    }
}
