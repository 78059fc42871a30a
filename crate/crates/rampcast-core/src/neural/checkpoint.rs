//! Self-describing text checkpoints.
//!
//! A checkpoint stores everything needed to reproduce a trained network's
//! predictions bit-exactly: schema version, target kind, training seed, the
//! architecture, the fitted scalers, and every weight. Floats are written
//! with Rust's shortest-round-trip formatting, so parsing restores the exact
//! 64-bit values and a reloaded model's forward outputs are identical to the
//! original's.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{CellKind, LayerParams, LayerSpec, ModelParams, NetworkSpec};
use crate::error::{Error, Result};
use crate::features::{ScalerParams, ScalerSet, TargetKind};

const MAGIC: &str = "rampcast-checkpoint";
const SCHEMA_VERSION: u32 = 1;

/// A trained network plus the context needed to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub target: TargetKind,
    pub seed: u64,
    pub scalers: ScalerSet,
    pub params: ModelParams,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = String::new();
    let spec = &ckpt.params.spec;
    let w = &mut out;
    let _ = writeln!(w, "{MAGIC} {SCHEMA_VERSION}");
    let _ = writeln!(w, "target {}", ckpt.target.name());
    let _ = writeln!(w, "seed {}", ckpt.seed);
    let _ = writeln!(w, "input_size {}", spec.input_size);
    let _ = writeln!(w, "num_layers {}", spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let _ = writeln!(
            w,
            "layer {l} {} {} {}",
            layer.kind.name(),
            layer.hidden,
            layer.dropout
        );
    }
    let _ = writeln!(w, "channels {}", ckpt.scalers.channels.len());
    for (k, ch) in ckpt.scalers.channels.iter().enumerate() {
        let _ = writeln!(w, "channel {k} {} {} {}", ch.min, ch.max, ch.feature);
    }
    write_target_scaler(w, "magnitude", &ckpt.scalers.magnitude_gw);
    write_target_scaler(w, "start", &ckpt.scalers.start_period);
    for (l, layer) in ckpt.params.layers.iter().enumerate() {
        write_matrix(w, &format!("layer{l}.w"), &layer.w);
        write_matrix(w, &format!("layer{l}.u"), &layer.u);
        write_vector(w, &format!("layer{l}.b"), &layer.b);
    }
    write_vector(w, "head_w", &ckpt.params.head_w);
    write_vector(w, "head_b", &ckpt.params.head_b);
    let _ = writeln!(w, "end");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_target_scaler(w: &mut String, which: &str, s: &ScalerParams) {
    let _ = writeln!(w, "target_scaler {which} {} {} {}", s.min, s.max, s.feature);
}

fn write_matrix(w: &mut String, name: &str, m: &Array2<f64>) {
    let _ = writeln!(w, "tensor {name} {} {}", m.nrows(), m.ncols());
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.push(' ');
            }
            let _ = write!(w, "{v}");
            first = false;
        }
        w.push('\n');
    }
}

fn write_vector(w: &mut String, name: &str, v: &Array1<f64>) {
    let _ = writeln!(w, "tensor {name} 1 {}", v.len());
    let mut first = true;
    for x in v {
        if !first {
            w.push(' ');
        }
        let _ = write!(w, "{x}");
        first = false;
    }
    w.push('\n');
}

/// Line cursor with contextual parse errors.
struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.iter
            .next()
            .ok_or_else(|| Error::Checkpoint("file truncated".into()))
    }

    fn err(&self, what: impl std::fmt::Display) -> Error {
        Error::Checkpoint(format!("line {}: {what}", self.line_no))
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(format_args!("bad {what} '{tok}'")))
    }

    /// Consume a line expected to read `header` followed by `n` fields;
    /// returns the fields. The last field may contain spaces only when it is
    /// parsed as a name (callers slice positionally).
    fn expect_fields(&mut self, header: &str, n: usize) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.splitn(n + 1, ' ');
        if parts.next() != Some(header) {
            return Err(self.err(format_args!("expected '{header}' line, got '{line}'")));
        }
        let rest: Vec<&str> = parts.collect();
        if rest.len() != n {
            return Err(self.err(format_args!(
                "'{header}' line needs {n} fields, got {}",
                rest.len()
            )));
        }
        Ok(rest)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        iter: text.lines(),
        line_no: 0,
    };

    let magic = lines.expect_fields(MAGIC, 1)?;
    let version: u32 = lines.parse(magic[0], "schema version")?;
    if version != SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "schema version {version} not supported (this build reads {SCHEMA_VERSION})"
        )));
    }
    let f = lines.expect_fields("target", 1)?;
    let target = TargetKind::parse(f[0])?;
    let f = lines.expect_fields("seed", 1)?;
    let seed: u64 = lines.parse(f[0], "seed")?;
    let f = lines.expect_fields("input_size", 1)?;
    let input_size: usize = lines.parse(f[0], "input size")?;
    let f = lines.expect_fields("num_layers", 1)?;
    let num_layers: usize = lines.parse(f[0], "layer count")?;

    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let f = lines.expect_fields("layer", 4)?;
        let idx: usize = lines.parse(f[0], "layer index")?;
        if idx != l {
            return Err(lines.err(format_args!("expected layer {l}, found {idx}")));
        }
        layers.push(LayerSpec {
            kind: CellKind::parse(f[1])?,
            hidden: lines.parse(f[2], "hidden size")?,
            dropout: lines.parse(f[3], "dropout")?,
        });
    }
    let spec = NetworkSpec { input_size, layers };
    spec.validate()?;

    let f = lines.expect_fields("channels", 1)?;
    let n_channels: usize = lines.parse(f[0], "channel count")?;
    let mut channels = Vec::with_capacity(n_channels);
    for k in 0..n_channels {
        let f = lines.expect_fields("channel", 4)?;
        let idx: usize = lines.parse(f[0], "channel index")?;
        if idx != k {
            return Err(lines.err(format_args!("expected channel {k}, found {idx}")));
        }
        channels.push(ScalerParams {
            feature: f[3].to_string(),
            min: lines.parse(f[1], "min")?,
            max: lines.parse(f[2], "max")?,
        });
    }
    let magnitude_gw = read_target_scaler(&mut lines, "magnitude")?;
    let start_period = read_target_scaler(&mut lines, "start")?;
    let scalers = ScalerSet {
        channels,
        magnitude_gw,
        start_period,
    };

    let mut param_layers = Vec::with_capacity(num_layers);
    for (l, layer) in spec.layers.iter().enumerate() {
        let input = spec.layer_input(l);
        let gh = layer.kind.gates() * layer.hidden;
        let w = read_matrix(&mut lines, &format!("layer{l}.w"), gh, input)?;
        let u = read_matrix(&mut lines, &format!("layer{l}.u"), gh, layer.hidden)?;
        let b = read_vector(&mut lines, &format!("layer{l}.b"), gh)?;
        param_layers.push(LayerParams {
            spec: layer.clone(),
            input_size: input,
            w,
            u,
            b,
        });
    }
    let last_hidden = spec.layers.last().expect("validated nonempty").hidden;
    let head_w = read_vector(&mut lines, "head_w", last_hidden)?;
    let head_b = read_vector(&mut lines, "head_b", 1)?;
    if lines.next()? != "end" {
        return Err(lines.err("expected 'end'"));
    }

    let params = ModelParams {
        spec,
        layers: param_layers,
        head_w,
        head_b,
    };
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite weight in checkpoint".into()));
    }
    Ok(Checkpoint {
        target,
        seed,
        scalers,
        params,
    })
}

fn read_target_scaler(lines: &mut Lines<'_>, which: &str) -> Result<ScalerParams> {
    let f = lines.expect_fields("target_scaler", 4)?;
    if f[0] != which {
        return Err(lines.err(format_args!(
            "expected target_scaler {which}, found {}",
            f[0]
        )));
    }
    Ok(ScalerParams {
        feature: f[3].to_string(),
        min: lines.parse(f[1], "min")?,
        max: lines.parse(f[2], "max")?,
    })
}

fn read_tensor_header(lines: &mut Lines<'_>, name: &str, rows: usize, cols: usize) -> Result<()> {
    let f = lines.expect_fields("tensor", 3)?;
    if f[0] != name {
        return Err(lines.err(format_args!("expected tensor {name}, found {}", f[0])));
    }
    let r: usize = lines.parse(f[1], "row count")?;
    let c: usize = lines.parse(f[2], "column count")?;
    if (r, c) != (rows, cols) {
        return Err(lines.err(format_args!(
            "tensor {name} is {r}×{c}, architecture requires {rows}×{cols}"
        )));
    }
    Ok(())
}

fn read_row(lines: &mut Lines<'_>, cols: usize, out: &mut Vec<f64>) -> Result<()> {
    let line = lines.next()?;
    let mut read = 0;
    for tok in line.split(' ') {
        let v: f64 = lines.parse(tok, "weight")?;
        out.push(v);
        read += 1;
    }
    if read != cols {
        return Err(lines.err(format_args!("row has {read} values, expected {cols}")));
    }
    Ok(())
}

fn read_matrix(lines: &mut Lines<'_>, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    read_tensor_header(lines, name, rows, cols)?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        read_row(lines, cols, &mut data)?;
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))
}

fn read_vector(lines: &mut Lines<'_>, name: &str, len: usize) -> Result<Array1<f64>> {
    read_tensor_header(lines, name, 1, len)?;
    let mut data = Vec::with_capacity(len);
    read_row(lines, len, &mut data)?;
    Ok(Array1::from_vec(data))
}
