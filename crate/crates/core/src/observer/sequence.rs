use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    /// `None` for a dropped frame.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: f64,
    value: Option<f64>,
    valid: u8,
}

impl ObservationSequence {
    pub fn valid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.frames.iter().filter_map(|f| f.value.map(|v| (f.t, v)))
    }

    pub fn valid_count(&self) -> usize {
        self.frames.iter().filter(|f| f.value.is_some()).count()
    }

    /// Subtracts `c` from every valid value.
    pub fn offset(&self, c: f64) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| Frame {
                    t: f.t,
                    value: f.value.map(|v| v - c),
                })
                .collect(),
        }
    }

    /// CSV with columns `t,value,valid`; dropped frames leave `value` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for f in &self.frames {
            w.serialize(Row {
                t: f.t,
                value: f.value,
                valid: f.value.is_some() as u8,
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut frames: Vec<Frame> = Vec::new();
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse(format!("observation row {}: {e}", i + 2)))?;
            let value = match (row.valid, row.value) {
                (0, _) => None,
                (_, Some(v)) => Some(v),
                (_, None) => {
                    return Err(Error::Parse(format!(
                        "observation row {}: valid frame without value",
                        i + 2
                    )))
                }
            };
            if let Some(last) = frames.last() {
                if !(row.t > last.t) {
                    return Err(Error::Parse(format!("observation row {}: time not increasing", i + 2)));
                }
            }
            frames.push(Frame { t: row.t, value });
        }
        Ok(Self { frames })
    }
}
