//! Text checkpoints for [`Mlp`].
//!
//! ```text
//! udp-mlp 1
//! placement middle
//! embed_tap 1
//! layer 784 128 relu
//! <128 weights per line, 784 lines>
//! <128 biases>
//! ...
//! aux 128 10
//! <aux weights>
//! <aux biases>
//! ```
//!
//! Floats use the shortest decimal form that parses back exactly.

use std::fmt::Write as _;
use std::path::Path;

use udp_core::nn::{Activation, Layer, Mlp, Placement};
use udp_core::Matrix;

use crate::error::{io_err, Error, Result};

const MAGIC: &str = "udp-mlp 1";

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
        Activation::Softmax => "softmax",
    }
}

pub fn encode(m: &Mlp) -> String {
    let mut s = String::new();
    let row = |s: &mut String, v: &[f64]| {
        let parts: Vec<String> = v.iter().map(f64::to_string).collect();
        s.push_str(&parts.join(" "));
        s.push('\n');
    };
    let layer = |s: &mut String, l: &Layer| {
        for r in l.weights.row_iter() {
            row(s, r);
        }
        row(s, &l.bias);
    };
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "placement {}", m.placement().name()).unwrap();
    writeln!(s, "embed_tap {}", m.embed_tap()).unwrap();
    for l in m.layers() {
        writeln!(
            s,
            "layer {} {} {}",
            l.fan_in(),
            l.fan_out(),
            activation_name(l.activation)
        )
        .unwrap();
        layer(&mut s, l);
    }
    if let Some(h) = m.aux_head() {
        writeln!(s, "aux {} {}", h.fan_in(), h.fan_out()).unwrap();
        layer(&mut s, h);
    }
    s
}

pub fn decode(text: &str, path: &Path) -> Result<Mlp> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("file ends before {what}")));
    let (n, l) = next("header")?;
    if l != MAGIC {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("line {n}: expected '{MAGIC}'"),
        });
    }
    let (n, l) = next("placement")?;
    let placement: Placement = l
        .strip_prefix("placement ")
        .ok_or_else(|| err(n, "expected 'placement'".into()))?
        .parse()
        .map_err(|e: udp_core::Error| err(n, e.to_string()))?;
    let (n, l) = next("embed_tap")?;
    let embed_tap: usize = l
        .strip_prefix("embed_tap ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(n, "expected 'embed_tap <index>'".into()))?;

    let floats = |n: usize, l: &str, want: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(n, format!("'{t}' is not a number"))))
            .collect::<Result<_>>()?;
        if v.len() != want {
            return Err(err(n, format!("{} values, expected {}", v.len(), want)));
        }
        Ok(v)
    };
    let mut layers = Vec::new();
    let mut aux = None;
    while let Some((n, l)) = lines.next() {
        let f: Vec<&str> = l.split_whitespace().collect();
        let (fan_in, fan_out, activation, is_aux) = match f.as_slice() {
            ["layer", a, b, act] => (*a, *b, *act, false),
            ["aux", a, b] => (*a, *b, "identity", true),
            _ => return Err(err(n, format!("expected a 'layer' or 'aux' line, got '{l}'"))),
        };
        let dim = |s: &str| s.parse::<usize>().map_err(|_| err(n, format!("'{s}' is not a size")));
        let (fan_in, fan_out) = (dim(fan_in)?, dim(fan_out)?);
        let activation = match activation {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            "softmax" => Activation::Softmax,
            other => return Err(err(n, format!("unknown activation '{other}'"))),
        };
        let mut w = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            let (n, l) = lines.next().ok_or_else(|| err(n, "weights truncated".into()))?;
            w.extend(floats(n, l, fan_out)?);
        }
        let (bn, bl) = lines.next().ok_or_else(|| err(n, "bias missing".into()))?;
        let layer = Layer {
            weights: Matrix::from_vec(fan_in, fan_out, w)?,
            bias: floats(bn, bl, fan_out)?,
            activation,
        };
        if is_aux {
            aux = Some(layer);
        } else {
            layers.push(layer);
        }
    }
    Ok(Mlp::from_parts(layers, placement, embed_tap, aux)?)
}

pub fn save(path: &Path, m: &Mlp) -> Result<()> {
    std::fs::write(path, encode(m)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    decode(&text, path)
}
