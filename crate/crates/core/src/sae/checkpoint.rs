//! Text checkpoints of layer parameters. Values use Rust's shortest
//! round-trip float formatting, so reading back is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::LayerParams;
use crate::error::{CdneError, Result};

const MAGIC: &str = "# cdne layer checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: LayerParams,
    pub seed: u64,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "shape\t{}\t{}", p.input_dim(), p.hidden_dim());
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(out, "config_hash\t{}", self.config_hash);
        for (name, m) in [("w1", &p.w1), ("w2", &p.w2)] {
            let _ = writeln!(out, "{name}");
            for row in m.rows() {
                push_row(&mut out, row.iter());
            }
        }
        for (name, v) in [("b1", &p.b1), ("b2", &p.b2)] {
            let _ = writeln!(out, "{name}");
            push_row(&mut out, v.iter());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| CdneError::invalid(format!("checkpoint truncated before {what}")))
        };
        if next("header")? != MAGIC {
            return Err(CdneError::invalid("not a cdne layer checkpoint"));
        }
        let shape = keyed(next("shape")?, "shape")?;
        let dims: Vec<usize> = shape
            .split('\t')
            .map(|s| s.parse().map_err(|_| CdneError::invalid("bad checkpoint shape")))
            .collect::<Result<_>>()?;
        let [d_in, d_out] = dims[..] else {
            return Err(CdneError::invalid("bad checkpoint shape"));
        };
        let seed = keyed(next("seed")?, "seed")?
            .parse()
            .map_err(|_| CdneError::invalid("bad checkpoint seed"))?;
        let config_hash = keyed(next("config_hash")?, "config_hash")?.to_string();

        let mut read_matrix = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
            if next(name)? != name {
                return Err(CdneError::invalid(format!("expected section {name}")));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                data.extend(parse_row(next(name)?, cols)?);
            }
            Ok(Array2::from_shape_vec((rows, cols), data).expect("row count checked"))
        };
        let w1 = read_matrix("w1", d_out, d_in)?;
        let w2 = read_matrix("w2", d_in, d_out)?;
        let b1 = Array1::from(read_matrix("b1", 1, d_out)?.into_raw_vec_and_offset().0);
        let b2 = Array1::from(read_matrix("b2", 1, d_in)?.into_raw_vec_and_offset().0);
        Ok(Self {
            params: LayerParams { w1, b1, w2, b2 },
            seed,
            config_hash,
        })
    }
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('\t'))
        .ok_or_else(|| CdneError::invalid(format!("expected checkpoint field {key}")))
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push('\t');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_row(line: &str, cols: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = if cols == 0 {
        Vec::new()
    } else {
        line.split('\t')
            .map(|s| s.parse().map_err(|_| CdneError::invalid(format!("bad checkpoint value {s:?}"))))
            .collect::<Result<_>>()?
    };
    if values.len() != cols {
        return Err(CdneError::invalid(format!("checkpoint row has {} values, expected {cols}", values.len())));
    }
    Ok(values)
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_text()).map_err(|e| CdneError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CdneError::io(path, e))?;
    Checkpoint::from_text(&text)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(seed in any::<u64>(), d_in in 1usize..6, d_out in 1usize..6, scale in -1e6f64..1e6) {
            let mut params = LayerParams::init(d_in, d_out, seed);
            params.w1 *= scale;
            params.b1.fill(scale / 3.0);
            params.b2.fill(-1.0 / 7.0);
            let ck = Checkpoint { params, seed, config_hash: "abc123".into() };
            let back = Checkpoint::from_text(&ck.to_text()).unwrap();
            prop_assert_eq!(&back, &ck);
            for (a, b) in back.params.blocks().iter().zip(ck.params.blocks().iter()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_text("hello").is_err());
        let ck = Checkpoint { params: LayerParams::zeros(2, 1), seed: 1, config_hash: "x".into() };
        let text = ck.to_text().replace("shape\t2\t1", "shape\t3\t1");
        assert!(Checkpoint::from_text(&text).is_err());
    }
}
