use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use numkit::Matrix;

use crate::{Result, ScmError};

/// Observations with labels, environment indices and optional true latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub e: Vec<usize>,
    /// Ground-truth `(c, b)` per row when the generator produced the data.
    pub latents: Option<(Matrix, Matrix)>,
}

impl LabeledDataset {
    /// Assemble, checking that every column agrees on the row count.
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        e: Vec<usize>,
        latents: Option<(Matrix, Matrix)>,
    ) -> Result<Self> {
        let n = x.rows();
        if y.len() != n || e.len() != n {
            return Err(ScmError::Config(format!(
                "{n} observations but {} labels and {} environment indices",
                y.len(),
                e.len()
            )));
        }
        if let Some((c, b)) = &latents {
            if c.rows() != n || b.rows() != n {
                return Err(ScmError::Config("latent rows do not match observations".into()));
            }
        }
        Ok(LabeledDataset { x, y, e, latents })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.x.cols()
    }

    /// Number of classes, taken as one more than the largest label.
    pub fn n_classes(&self) -> usize {
        self.y.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Number of environments, taken as one more than the largest index.
    pub fn n_envs(&self) -> usize {
        self.e.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Rows at the listed indices, in order.
    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            e: idx.iter().map(|&i| self.e[i]).collect(),
            latents: self.latents.as_ref().map(|(c, b)| (c.select_rows(idx), b.select_rows(idx))),
        }
    }

    /// First `k` rows and the remainder.
    pub fn split_at(&self, k: usize) -> (LabeledDataset, LabeledDataset) {
        let k = k.min(self.len());
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Write the `bagset v1` text format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (nc, nb) = self.latents.as_ref().map_or((0, 0), |(c, b)| (c.cols(), b.cols()));
        writeln!(w, "bagset v1 n={} nx={} nc={nc} nb={nb}", self.len(), self.n_x())?;
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let mut rec: Vec<String> = Vec::with_capacity(self.n_x() + 2 + nc + nb);
        for i in 0..self.len() {
            rec.clear();
            rec.extend(self.x.row(i).iter().map(|v| fmt17(*v)));
            rec.push(self.y[i].to_string());
            rec.push(self.e[i].to_string());
            if let Some((c, b)) = &self.latents {
                rec.extend(c.row(i).iter().chain(b.row(i)).map(|v| fmt17(*v)));
            }
            out.write_record(&rec).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parse the `bagset v1` text format.
    pub fn read_from<R: Read>(r: R) -> Result<LabeledDataset> {
        let mut reader = BufReader::new(r);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let (n, nx, nc, nb) = parse_header(header.trim_end())?;
        let width = nx + 2 + nc + nb;
        let mut rows = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut x = Vec::with_capacity(n * nx);
        let mut lat_c = Vec::with_capacity(n * nc);
        let mut lat_b = Vec::with_capacity(n * nb);
        let (mut y, mut e) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (k, rec) in rows.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|err| ScmError::Format { line, msg: err.to_string() })?;
            if rec.len() != width {
                return Err(ScmError::Format {
                    line,
                    msg: format!("{} fields, expected {width}", rec.len()),
                });
            }
            let float = |j: usize| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|err| ScmError::Format {
                    line,
                    msg: format!("field {j}: {err}"),
                })
            };
            let index = |j: usize| -> Result<usize> {
                rec[j].parse::<usize>().map_err(|err| ScmError::Format {
                    line,
                    msg: format!("field {j}: {err}"),
                })
            };
            for j in 0..nx {
                x.push(float(j)?);
            }
            y.push(index(nx)?);
            e.push(index(nx + 1)?);
            for j in 0..nc {
                lat_c.push(float(nx + 2 + j)?);
            }
            for j in 0..nb {
                lat_b.push(float(nx + 2 + nc + j)?);
            }
        }
        if y.len() != n {
            return Err(ScmError::Format {
                line: y.len() + 2,
                msg: format!("header promises {n} rows, file has {}", y.len()),
            });
        }
        let latents = if nc + nb > 0 {
            Some((Matrix::from_vec(n, nc, lat_c)?, Matrix::from_vec(n, nb, lat_b)?))
        } else {
            None
        };
        LabeledDataset::new(Matrix::from_vec(n, nx, x)?, y, e, latents)
    }

    /// Write to a file path.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    /// Read from a file path.
    pub fn load(path: impl AsRef<Path>) -> Result<LabeledDataset> {
        LabeledDataset::read_from(std::fs::File::open(path)?)
    }
}

/// 17 significant digits: enough for an exact `f64` round trip.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_io(err: csv::Error) -> ScmError {
    ScmError::Io(std::io::Error::other(err.to_string()))
}

fn parse_header(line: &str) -> Result<(usize, usize, usize, usize)> {
    let bad = |msg: String| ScmError::Format { line: 1, msg };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("bagset") {
        return Err(bad(format!("expected a `bagset` header, found {line:?}")));
    }
    match parts.next() {
        Some("v1") => {}
        other => return Err(bad(format!("unsupported format version {other:?}"))),
    }
    let mut field = |key: &str| -> Result<usize> {
        let tok = parts.next().ok_or_else(|| bad(format!("missing `{key}=`")))?;
        let val = tok
            .strip_prefix(key)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| bad(format!("expected `{key}=`, found {tok:?}")))?;
        val.parse().map_err(|err| bad(format!("{key}: {err}")))
    };
    Ok((field("n")?, field("nx")?, field("nc")?, field("nb")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = Matrix::from_vec(3, 2, vec![0.1, -2.5, 1.0 / 3.0, 7.0, -0.0, 1e-300]).unwrap();
        LabeledDataset::new(x, vec![0, 1, 1], vec![0, 2, 1], None).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bagset v1 n=3 nx=2 nc=0 nb=0\n"));
        let back = LabeledDataset::read_from(&buf[..]).unwrap();
        assert_eq!(back.y, ds.y);
        assert_eq!(back.e, ds.e);
        for (a, b) in back.x.data().iter().zip(ds.x.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(LabeledDataset::read_from(&b"bagset v2 n=0 nx=1 nc=0 nb=0\n"[..]).is_err());
        assert!(LabeledDataset::read_from(&b"bagset v1 n=2 nx=1 nc=0 nb=0\n1.0,0,0\n"[..]).is_err());
        assert!(LabeledDataset::read_from(&b"bagset v1 n=1 nx=2 nc=0 nb=0\n1.0,0,0\n"[..]).is_err());
        assert!(LabeledDataset::read_from(&b"bagset v1 n=1 nx=1 nc=0 nb=0\nabc,0,0\n"[..]).is_err());
        assert!(LabeledDataset::read_from(&b"hello\n"[..]).is_err());
    }

    #[test]
    fn split_keeps_order() {
        let (a, b) = tiny().split_at(1);
        assert_eq!(a.y, vec![0]);
        assert_eq!(b.y, vec![1, 1]);
        assert_eq!(b.e, vec![2, 1]);
    }
}
