use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DistillError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    /// Where the pair came from, e.g. `rollout:12` or `grid`.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillDataset {
    pub state_dim: usize,
    pub input_dim: usize,
    pub samples: Vec<Sample>,
}

impl DistillDataset {
    pub fn new(state_dim: usize, input_dim: usize) -> Self {
        Self {
            state_dim,
            input_dim,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: Sample) {
        debug_assert_eq!(sample.state.len(), self.state_dim);
        debug_assert_eq!(sample.control.len(), self.input_dim);
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Header `s0,..,u0,..,provenance`; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (0..self.state_dim)
            .map(|i| format!("s{i}"))
            .chain((0..self.input_dim).map(|i| format!("u{i}")))
            .chain(std::iter::once("provenance".to_string()))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for s in &self.samples {
            for v in s.state.iter().chain(&s.control) {
                let _ = write!(out, "{v:?},");
            }
            out.push_str(&s.provenance);
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(DistillError::Csv {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        let state_dim = cols.iter().filter(|c| c.starts_with('s')).count();
        let input_dim = cols.iter().filter(|c| c.starts_with('u')).count();
        if cols.last() != Some(&"provenance") || state_dim + input_dim + 1 != cols.len() {
            return Err(DistillError::Csv {
                line: 1,
                message: format!("unexpected header `{header}`"),
            });
        }
        let mut data = Self::new(state_dim, input_dim);
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(DistillError::Csv {
                    line: i + 2,
                    message: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            let nums = fields[..state_dim + input_dim]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| DistillError::Csv {
                        line: i + 2,
                        message: format!("`{f}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            data.push(Sample {
                state: nums[..state_dim].to_vec(),
                control: nums[state_dim..].to_vec(),
                provenance: fields[cols.len() - 1].to_string(),
            });
        }
        Ok(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut d = DistillDataset::new(2, 1);
        d.push(Sample {
            state: vec![0.1, -1.0 / 3.0],
            control: vec![19.999999999999996],
            provenance: "rollout:0".into(),
        });
        d.push(Sample {
            state: vec![1e-300, 2.0],
            control: vec![-20.0],
            provenance: "grid".into(),
        });
        let text = d.to_csv();
        assert!(text.starts_with("s0,s1,u0,provenance\n"));
        assert_eq!(DistillDataset::from_csv(&text).unwrap(), d);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = DistillDataset::from_csv("s0,u0,provenance\n1,2,grid\n1,x,grid\n").unwrap_err();
        assert!(matches!(err, DistillError::Csv { line: 3, .. }));
    }
}
