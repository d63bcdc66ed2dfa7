use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circmath::Angle;
use crate::error::{Error, Result};
use crate::neuralnet::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One angle per row, or an (azimuth, elevation, tilt) triple per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Single(Vec<Angle>),
    Triple(Vec<[Angle; 3]>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Single(v) => v.len(),
            Targets::Triple(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Features (`n × d`) with their target angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    targets: Targets,
    split: Split,
}

const TRIPLE_COLUMNS: [&str; 3] = ["az", "el", "tilt"];

impl Dataset {
    pub fn new(features: Tensor, targets: Targets, split: Split) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Dataset(format!("features must be a matrix, got shape {:?}", features.shape())));
        }
        if features.rows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: targets.len(),
            });
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Dataset {
            features,
            targets,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// Target angles of a single-angle dataset.
    pub fn angles(&self) -> Result<&[Angle]> {
        match &self.targets {
            Targets::Single(v) => Ok(v),
            Targets::Triple(_) => Err(Error::Dataset("dataset holds angle triples, not single angles".into())),
        }
    }

    pub fn triples(&self) -> Result<&[[Angle; 3]]> {
        match &self.targets {
            Targets::Triple(v) => Ok(v),
            Targets::Single(_) => Err(Error::Dataset("dataset holds single angles, not triples".into())),
        }
    }

    /// The single-angle dataset formed by one column of a triple dataset.
    pub fn triple_column(&self, column: usize) -> Result<Dataset> {
        let t = self.triples()?;
        if column >= 3 {
            return Err(Error::InvalidParameter(format!("triple column {column} out of range")));
        }
        Dataset::new(
            self.features.clone(),
            Targets::Single(t.iter().map(|a| a[column]).collect()),
            self.split,
        )
    }

    /// Rows `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let targets = match &self.targets {
            Targets::Single(v) => Targets::Single(idx.iter().map(|&i| v[i]).collect()),
            Targets::Triple(v) => Targets::Triple(idx.iter().map(|&i| v[i]).collect()),
        };
        Dataset::new(self.features.select_rows(idx), targets, self.split)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Header `f0..f{d-1}` then `phi` or `az,el,tilt`; angles in radians.
    /// Floats are written in shortest round-trip form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        match &self.targets {
            Targets::Single(_) => header.push("phi".into()),
            Targets::Triple(_) => header.extend(TRIPLE_COLUMNS.iter().map(|s| s.to_string())),
        }
        out.write_record(&header).map_err(csv_error)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(r).iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Single(v) => rec.push(v[r].radians().to_string()),
                Targets::Triple(v) => rec.extend(v[r].iter().map(|a| a.radians().to_string())),
            }
            out.write_record(&rec).map_err(csv_error)?;
        }
        let bytes = out.into_inner().map_err(|e| Error::Dataset(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    pub fn read_csv(path: &Path, split: Split) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_error)?;
        let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        let triple = header.len() >= 3 && header[header.len() - 3..] == TRIPLE_COLUMNS;
        let n_targets = if triple { 3 } else { 1 };
        if header.len() <= n_targets || (!triple && header.last().map(String::as_str) != Some("phi")) {
            return Err(Error::Dataset(format!("unrecognized header {header:?}")));
        }
        let d = header.len() - n_targets;
        if header[..d].iter().enumerate().any(|(i, h)| *h != format!("f{i}")) {
            return Err(Error::Dataset(format!("feature columns must be f0..f{}", d - 1)));
        }
        let mut features = Vec::new();
        let mut single = Vec::new();
        let mut triples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Dataset(format!("row {}: {e}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != header.len() {
                return Err(Error::Dataset(format!("row {} has {} fields", line + 1, vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("row {} has a non-finite value", line + 1)));
            }
            features.extend_from_slice(&vals[..d]);
            if triple {
                triples.push([Angle::new(vals[d]), Angle::new(vals[d + 1]), Angle::new(vals[d + 2])]);
            } else {
                single.push(Angle::new(vals[d]));
            }
        }
        let n = if triple { triples.len() } else { single.len() };
        let targets = if triple {
            Targets::Triple(triples)
        } else {
            Targets::Single(single)
        };
        Dataset::new(Tensor::matrix(n, d, features)?, targets, split)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

/// Writes via a temporary file in the target directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
