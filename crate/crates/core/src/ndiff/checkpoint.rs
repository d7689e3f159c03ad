//! Binary parameter checkpoints.
//!
//! Layout: one UTF-8 header line
//! `equiscore-net <version> widths=<w0,w1,...> activation=<tag> spectral=<0|1>`
//! followed by every parameter as a little-endian `f64`, then (when
//! `spectral=1`) the concatenated power-iteration vectors.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::net::{Activation, DenseNet};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "equiscore-net";

pub fn write_checkpoint<W: Write>(net: &DenseNet, mut out: W) -> Result<()> {
    let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
    writeln!(
        out,
        "{MAGIC} {FORMAT_VERSION} widths={} activation={} spectral={}",
        widths.join(","),
        net.activation().tag(),
        u8::from(net.spectral_norm_enabled())
    )?;
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    if let Some(state) = net.power_iter_state() {
        for v in state.iter().flatten() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input
        .read_exact(&mut buf)
        .map_err(|_| bad(format!("truncated payload, expected {n} floats")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<DenseNet> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let mut fields = header.trim_end().split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(bad("missing magic"));
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version"))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (mut widths, mut activation, mut spectral) = (None, None, None);
    for field in fields {
        let (key, value) = field.split_once('=').ok_or_else(|| bad(format!("bad field `{field}`")))?;
        match key {
            "widths" => {
                widths = Some(
                    value
                        .split(',')
                        .map(|w| w.parse::<usize>().map_err(|_| bad("bad width")))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "activation" => activation = Some(Activation::from_tag(value)?),
            "spectral" => spectral = Some(value == "1"),
            _ => return Err(bad(format!("unknown header key `{key}`"))),
        }
    }
    let widths = widths.ok_or_else(|| bad("missing widths"))?;
    let activation = activation.ok_or_else(|| bad("missing activation"))?;
    let template = DenseNet::zeros(&widths, activation)?;
    let params = read_f64s(&mut reader, template.n_params())?;
    let mut net = DenseNet::from_params(&widths, activation, params)?;
    if spectral.unwrap_or(false) {
        let state = template
            .layers()
            .iter()
            .map(|slot| read_f64s(&mut reader, slot.rows))
            .collect::<Result<Vec<_>>>()?;
        net.set_power_iter_state(Some(state));
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(net)
}

pub fn save(net: &DenseNet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DenseNet> {
    read_checkpoint(std::fs::File::open(path)?)
}
